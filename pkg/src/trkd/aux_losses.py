"""Classification and embedding-matching objectives.

``aam_softmax_loss`` is additive angular margin softmax (ArcFace style):
cosine scores against unit-norm class weights, the target angle widened by
``margin``, everything multiplied by ``scale``, then cross-entropy.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import ClassIndexError, DegenerateInputError, InvalidParameterError, ShapeError
from .losses import LossValueGrad
from .prob import log_softmax

__all__ = [
    "AamConfig",
    "AamLossGrad",
    "aam_target_logit",
    "aam_from_cosines",
    "aam_softmax_loss",
    "cosine_logits",
    "mse_embed_loss",
    "cos_embed_loss",
    "normalize_rows",
]

_NORM_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class AamConfig:
    class_weights: np.ndarray
    scale: float = 32.0
    margin: float = 0.2

    def __post_init__(self):
        W = np.asarray(self.class_weights, dtype=np.float64)
        if W.ndim != 2:
            raise ShapeError("class_weights must be a (C, d) matrix")
        if np.any(np.abs(np.linalg.norm(W, axis=1) - 1.0) > 1e-9):
            raise InvalidParameterError("class weight vectors must have unit L2 norm")
        if not self.scale > 0:
            raise InvalidParameterError(f"scale must be > 0, got {self.scale}")
        if not 0.0 <= self.margin < np.pi / 2:
            raise InvalidParameterError(f"margin must lie in [0, pi/2), got {self.margin}")
        object.__setattr__(self, "class_weights", W)

    @classmethod
    def random(cls, num_classes, dim, rng, scale=32.0, margin=0.2):
        W = normalize_rows(rng.standard_normal((num_classes, dim)))
        return cls(W, scale, margin)


class AamLossGrad(NamedTuple):
    value: float
    grad_embedding: np.ndarray
    grad_class_weights: np.ndarray


def normalize_rows(x):
    x = np.asarray(x, dtype=np.float64)
    return x / np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), _NORM_EPS)


def _normalize_backward(x, unit, d_unit):
    """Backprop through ``unit = x / |x|`` along the last axis."""
    norm = np.maximum(np.linalg.norm(x, axis=-1, keepdims=True), _NORM_EPS)
    return (d_unit - np.sum(d_unit * unit, axis=-1, keepdims=True) * unit) / norm


def aam_target_logit(cos_y, margin):
    """Margin-adjusted target cosine and its derivative w.r.t. ``cos_y``.

    Uses ``cos(theta + m)`` while ``theta + m < pi`` and the linear extension
    ``cos_y - m * sin(m)`` beyond it.
    """
    cos_y = np.asarray(cos_y, dtype=np.float64)
    sin_m, cos_m = np.sin(margin), np.cos(margin)
    sin_t = np.sqrt(np.clip(1.0 - cos_y * cos_y, 0.0, None))
    arc = cos_y > np.cos(np.pi - margin)
    phi = np.where(arc, cos_y * cos_m - sin_t * sin_m, cos_y - margin * sin_m)
    dphi = np.where(arc, cos_m + cos_y * sin_m / np.maximum(sin_t, _NORM_EPS), 1.0)
    return phi, dphi


def aam_from_cosines(cos, y, scale, margin):
    """Mean AAM cross-entropy over a batch of cosine rows.

    Returns ``(value, dcos)`` where ``dcos`` is the gradient of the mean
    loss with respect to the ``(N, C)`` cosine matrix.
    """
    cos = np.atleast_2d(np.asarray(cos, dtype=np.float64))
    n, C = cos.shape
    y = np.asarray(y, dtype=np.int64).reshape(n)
    rows = np.arange(n)
    phi, dphi = aam_target_logit(cos[rows, y], margin)
    logits = scale * cos
    logits[rows, y] = scale * phi
    logp = log_softmax(logits)
    value = np.mean(_cross_entropy_rows(logits, y))
    dlogits = np.exp(logp)
    dlogits[rows, y] -= 1.0
    dlogits /= n
    dcos = scale * dlogits
    dcos[rows, y] *= dphi
    return float(value), dcos


def _cross_entropy_rows(logits, y):
    """``-log softmax(logits)[y]`` per row, measured from the target logit.

    When the target is the largest logit this is ``log1p`` of the non-target
    mass, so rounding scales with that mass instead of with the logit
    magnitude (about ``scale * eps`` otherwise).
    """
    rows = np.arange(logits.shape[0])
    d = logits - logits[rows, y][:, None]
    d[rows, y] = -np.inf
    top = np.max(d, axis=1)
    lead = top <= 0
    shift = np.where(lead, 0.0, top)
    rest = np.sum(np.exp(d - shift[:, None]), axis=1)
    return np.where(lead, np.log1p(rest), shift + np.log(np.exp(-shift) + rest))


def cosine_logits(embeddings, class_weights):
    return normalize_rows(embeddings) @ normalize_rows(class_weights).T


def aam_softmax_loss(embedding, y, cfg):
    """AAM-softmax loss for one embedding (or a batch, mean-reduced).

    Returns the value with gradients w.r.t. the embedding(s) and the class
    weight matrix.
    """
    e = np.asarray(embedding, dtype=np.float64)
    single = e.ndim == 1
    E = np.atleast_2d(e)
    W = cfg.class_weights
    if E.shape[1] != W.shape[1]:
        raise ShapeError(f"embedding dim {E.shape[1]} != class weight dim {W.shape[1]}")
    if np.any(np.linalg.norm(E, axis=1) == 0) or not np.all(np.isfinite(E)):
        raise DegenerateInputError("embedding must be finite and non-zero")
    yy = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if np.any((yy < 0) | (yy >= W.shape[0])):
        raise ClassIndexError(f"class index out of range [0, {W.shape[0]})")
    unit = normalize_rows(E)
    value, dcos = aam_from_cosines(unit @ W.T, yy, cfg.scale, cfg.margin)
    d_unit = dcos @ W
    dE = _normalize_backward(E, unit, d_unit)
    dW = dcos.T @ unit
    return AamLossGrad(value, dE[0] if single else dE, dW)


def _pair(student, teacher):
    s = np.asarray(student, dtype=np.float64)
    t = np.asarray(teacher, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"student {s.shape} and teacher {t.shape} embeddings differ in shape")
    return s, t


def mse_embed_loss(student, teacher):
    """Mean squared difference over dimensions (and examples, for a batch)."""
    s, t = _pair(student, teacher)
    diff = s - t
    return LossValueGrad(float(np.mean(diff ** 2)), 2.0 * diff / diff.size)


def cos_embed_loss(student, teacher):
    """``1 - cosine(student, teacher)``, gradient w.r.t. the student only."""
    s, t = _pair(student, teacher)
    S, T = np.atleast_2d(s), np.atleast_2d(t)
    ns = np.linalg.norm(S, axis=1, keepdims=True)
    nt = np.linalg.norm(T, axis=1, keepdims=True)
    if np.any(ns == 0) or np.any(nt == 0):
        raise DegenerateInputError("cosine loss needs non-zero embeddings")
    su, tu = S / ns, T / nt
    c = np.sum(su * tu, axis=1, keepdims=True)
    grad = -(tu - c * su) / ns / S.shape[0]
    value = float(np.mean(1.0 - c))
    return LossValueGrad(value, grad[0] if s.ndim == 1 else grad)
