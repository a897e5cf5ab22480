"""Confusion/background triage of a teacher posterior.

Non-target classes are ranked by descending teacher probability (ties by
ascending class index). The confusion-set is the shortest prefix of that
ranking whose cumulative probability reaches ``tau``; the rest is the
background-set. If all non-targets together stay below ``tau`` (always the
case at ``tau == 1``) every non-target goes to the confusion-set.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ClassIndexError,
    DegenerateMassError,
    EmptySetError,
    InvalidParameterError,
    ShapeError,
)
from .prob import ProbVector, logsumexp

__all__ = [
    "TAU_SLACK",
    "TriagePartition",
    "PartitionBatch",
    "build_partition",
    "partition_batch",
    "conditional_over_set",
    "three_mass_vector",
]

# Absorbs summation rounding when a prefix mass lands exactly on tau.
TAU_SLACK = 1e-12


@dataclass(frozen=True)
class TriagePartition:
    target: int
    confusion_set: tuple
    background_set: tuple
    teacher_mass_target: float
    teacher_mass_confusion: float
    teacher_mass_background: float
    num_classes: int

    def masks(self):
        """Boolean ``(target, confusion, background)`` masks of length C."""
        t = np.zeros(self.num_classes, dtype=bool)
        f = np.zeros(self.num_classes, dtype=bool)
        b = np.zeros(self.num_classes, dtype=bool)
        t[self.target] = True
        f[list(self.confusion_set)] = True
        b[list(self.background_set)] = True
        return t, f, b

    def to_batch(self):
        t, f, b = self.masks()
        return PartitionBatch(
            target=np.array([self.target]),
            target_mask=t[None],
            confusion_mask=f[None],
            background_mask=b[None],
            mass_target=np.array([self.teacher_mass_target]),
            mass_confusion=np.array([self.teacher_mass_confusion]),
            mass_background=np.array([self.teacher_mass_background]),
            order=None,
            confusion_size=np.array([len(self.confusion_set)]),
        )


@dataclass(frozen=True, eq=False)
class PartitionBatch:
    """Row-wise partitions of an ``(N, C)`` teacher posterior batch."""

    target: np.ndarray
    target_mask: np.ndarray
    confusion_mask: np.ndarray
    background_mask: np.ndarray
    mass_target: np.ndarray
    mass_confusion: np.ndarray
    mass_background: np.ndarray
    order: np.ndarray | None
    confusion_size: np.ndarray

    @property
    def shape(self):
        return self.confusion_mask.shape

    def __len__(self):
        return self.confusion_mask.shape[0]

    def row(self, i):
        n_conf = int(self.confusion_size[i])
        if self.order is not None:
            ranked = self.order[i]
            conf = tuple(int(c) for c in ranked[:n_conf])
            bg = tuple(int(c) for c in ranked[n_conf:])
        else:
            conf = tuple(int(c) for c in np.flatnonzero(self.confusion_mask[i]))
            bg = tuple(int(c) for c in np.flatnonzero(self.background_mask[i]))
        return TriagePartition(
            target=int(self.target[i]),
            confusion_set=conf,
            background_set=bg,
            teacher_mass_target=float(self.mass_target[i]),
            teacher_mass_confusion=float(self.mass_confusion[i]),
            teacher_mass_background=float(self.mass_background[i]),
            num_classes=self.confusion_mask.shape[1],
        )


def _check_tau(tau):
    if not (np.isfinite(tau) and 0.0 < tau <= 1.0):
        raise InvalidParameterError(f"tau must lie in (0, 1], got {tau!r}")


def _check_targets(y, n, C):
    y = np.asarray(y)
    if y.ndim == 0:
        y = np.full(n, int(y))
    if y.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.floor(y)):
            raise ClassIndexError("class indices must be integers")
        y = y.astype(np.int64)
    if np.any((y < 0) | (y >= C)):
        raise ClassIndexError(f"class index out of range [0, {C})")
    return y


def partition_batch(teacher_probs, y, tau):
    """Vectorised :func:`build_partition` over the rows of ``teacher_probs``."""
    _check_tau(tau)
    P = np.atleast_2d(np.asarray(teacher_probs, dtype=np.float64))
    N, C = P.shape
    if C < 2:
        raise ShapeError("need at least 2 classes")
    y = _check_targets(y, N, C)
    rows = np.arange(N)

    # stable sort of -p keeps ascending index among ties; target sorts last
    key = -P
    key[rows, y] = np.inf
    order = np.argsort(key, axis=1, kind="stable")[:, : C - 1]
    ranked = np.take_along_axis(P, order, axis=1)
    reached = np.cumsum(ranked, axis=1) >= tau - TAU_SLACK
    count = np.where(reached.any(axis=1), reached.argmax(axis=1) + 1, C - 1)
    if tau >= 1.0:
        count[:] = C - 1

    in_conf = np.arange(C - 1)[None, :] < count[:, None]
    conf = np.zeros((N, C), dtype=bool)
    bg = np.zeros((N, C), dtype=bool)
    np.put_along_axis(conf, order, in_conf, axis=1)
    np.put_along_axis(bg, order, ~in_conf, axis=1)
    tmask = np.zeros((N, C), dtype=bool)
    tmask[rows, y] = True

    return PartitionBatch(
        target=y,
        target_mask=tmask,
        confusion_mask=conf,
        background_mask=bg,
        mass_target=P[rows, y],
        mass_confusion=np.where(conf, P, 0.0).sum(axis=1),
        mass_background=np.where(bg, P, 0.0).sum(axis=1),
        order=order,
        confusion_size=count,
    )


def build_partition(teacher, y, tau):
    """Triage a single teacher posterior.

    Parameters
    ----------
    teacher : ProbVector or array_like of shape (C,)
        Teacher posterior (after temperature scaling).
    y : int
        Target class.
    tau : float
        Cumulative-probability cutoff in (0, 1].

    Returns
    -------
    TriagePartition
    """
    probs = teacher.probs if isinstance(teacher, ProbVector) else np.asarray(teacher, dtype=np.float64)
    if probs.ndim != 1:
        raise ShapeError("build_partition expects a single posterior; use partition_batch")
    if not (0 <= int(y) < probs.shape[0]):
        raise ClassIndexError(f"class index {y} out of range [0, {probs.shape[0]})")
    return partition_batch(probs[None], [int(y)], tau).row(0)


def conditional_over_set(p, index_set):
    """Renormalise ``p`` over ``index_set`` (order preserved)."""
    if not isinstance(p, ProbVector):
        p = ProbVector.from_probs(p)
    idx = np.asarray(list(index_set), dtype=np.int64)
    if idx.size == 0:
        raise EmptySetError("cannot condition on an empty set")
    if np.any((idx < 0) | (idx >= len(p))):
        raise ClassIndexError("set contains an out-of-range class index")
    lp = p.log_probs[idx]
    total = logsumexp(lp)
    if not np.isfinite(total):
        raise DegenerateMassError("set has zero probability mass")
    return ProbVector.from_log_probs(lp - total)


def three_mass_vector(p, part):
    """``[p_y, p_F, p_B]`` for ``p`` under ``part``; ``[p_y, p_F]`` if B is empty."""
    if not isinstance(p, ProbVector):
        p = ProbVector.from_probs(p)
    if len(p) != part.num_classes:
        raise ShapeError(f"partition built for {part.num_classes} classes, got {len(p)}")
    lp = p.log_probs
    masses = [lp[part.target], logsumexp(lp[list(part.confusion_set)])]
    if part.background_set:
        masses.append(logsumexp(lp[list(part.background_set)]))
    return ProbVector.from_log_probs(np.array(masses, dtype=np.float64))
