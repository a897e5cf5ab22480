"""Verification trials, cosine scoring and equal error rate."""
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .aux_losses import normalize_rows
from .exceptions import InvalidParameterError, ShapeError

__all__ = ["TrialScoreSet", "build_trials", "compute_eer", "roc_points", "write_score_file", "evaluate_eer"]


@dataclass(frozen=True, eq=False)
class TrialScoreSet:
    target_scores: np.ndarray
    nontarget_scores: np.ndarray
    target_pairs: np.ndarray = field(default=None, repr=False)
    nontarget_pairs: np.ndarray = field(default=None, repr=False)
    skipped_classes: int = 0


def _sample_pairs(candidates, k, rng):
    if len(candidates) <= k:
        return candidates
    pick = np.sort(rng.choice(len(candidates), size=k, replace=False))
    return candidates[pick]


def build_trials(embeddings, labels, pairs_per_class=100, seed=0):
    """Sample same-class and different-class pairs and score them by cosine.

    Each class with at least two examples gets up to ``pairs_per_class``
    target pairs and as many different-class pairs anchored on it. Unordered
    duplicates across classes are removed. Classes with a single example are
    skipped and counted in ``skipped_classes``.
    """
    E = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if E.ndim != 2 or labels.shape != (E.shape[0],):
        raise ShapeError("need an (N, d) embedding matrix and N labels")
    if pairs_per_class < 1:
        raise InvalidParameterError("pairs_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    unit = normalize_rows(E)
    tgt, non = [], []
    seen = set()
    skipped = 0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        if members.size < 2:
            skipped += 1
            continue
        same = np.array(list(combinations(members, 2)), dtype=np.int64)
        chosen = _sample_pairs(same, pairs_per_class, rng)
        tgt.append(chosen)
        others = np.flatnonzero(labels != c)
        if others.size == 0:
            continue
        n_cross = members.size * others.size
        want = min(len(chosen), n_cross)
        flat = np.sort(rng.choice(n_cross, size=want, replace=False))
        cross = np.stack([members[flat // others.size], others[flat % others.size]], axis=1)
        for a, b in cross:
            key = (min(a, b), max(a, b))
            if key not in seen:
                seen.add(key)
                non.append(key)
    tgt = np.concatenate(tgt) if tgt else np.empty((0, 2), dtype=np.int64)
    non = np.array(non, dtype=np.int64).reshape(-1, 2)
    score = lambda pairs: np.sum(unit[pairs[:, 0]] * unit[pairs[:, 1]], axis=1)
    return TrialScoreSet(score(tgt), score(non), tgt, non, skipped)


def roc_points(target_scores, nontarget_scores):
    """Thresholds with their (FAR, FRR): FAR counts nontargets >= t,
    FRR counts targets < t. A final ``+inf`` threshold closes the curve."""
    tgt = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    if tgt.size == 0 or non.size == 0:
        raise InvalidParameterError("EER needs non-empty target and nontarget score lists")
    if not (np.all(np.isfinite(tgt)) and np.all(np.isfinite(non))):
        raise InvalidParameterError("scores must be finite")
    thr = np.append(np.unique(np.concatenate([tgt, non])), np.inf)
    frr = np.searchsorted(tgt, thr, side="left") / tgt.size
    far = (non.size - np.searchsorted(non, thr, side="left")) / non.size
    return thr, far, frr


def compute_eer(scores, nontarget_scores=None):
    """Equal error rate as a fraction in [0, 1].

    Accepts a :class:`TrialScoreSet` or two score arrays. Where FAR - FRR
    changes sign between adjacent thresholds the two ROC points are joined
    linearly and the crossing is returned.
    """
    if nontarget_scores is None:
        scores, nontarget_scores = scores.target_scores, scores.nontarget_scores
    _, far, frr = roc_points(scores, nontarget_scores)
    diff = far - frr
    i = int(np.argmax(diff <= 0))  # diff[0] = 1 > 0 and diff[-1] = -1
    if diff[i] == 0:
        return float(far[i])
    lam = diff[i - 1] / (diff[i - 1] - diff[i])
    return float(frr[i - 1] + lam * (frr[i] - frr[i - 1]))


def write_score_file(path, trials):
    """One ``label score`` line per trial, label ``tgt`` or ``non``."""
    with open(path, "w") as fh:
        for s in trials.target_scores:
            fh.write(f"tgt {s:.17g}\n")
        for s in trials.nontarget_scores:
            fh.write(f"non {s:.17g}\n")


def evaluate_eer(estimator, X, y, pairs_per_class=100, seed=0):
    trials = build_trials(estimator.transform(X), y, pairs_per_class, seed)
    return compute_eer(trials), trials
