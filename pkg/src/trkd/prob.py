"""Numerically stable probability primitives.

Everything works in float64 and natural log. Functions accept a single
vector (shape ``(C,)``) or a batch of row vectors (shape ``(N, C)``); the
class axis is always the last one.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError, ShapeError

__all__ = [
    "ProbVector",
    "as_logits",
    "temperature_scale",
    "logsumexp",
    "log_softmax",
    "softmax",
    "kl_divergence",
]


def as_logits(z, name="logits"):
    """Validate ``z`` as a logit vector or batch and return a float64 copy."""
    z = np.array(z, dtype=np.float64)
    if z.ndim not in (1, 2):
        raise ShapeError(f"{name} must be 1-D or 2-D, got shape {z.shape}")
    if z.shape[-1] < 2:
        raise ShapeError(f"{name} needs at least 2 classes, got {z.shape[-1]}")
    if not np.all(np.isfinite(z)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return z


def temperature_scale(z, T):
    if not (np.isfinite(T) and T > 0):
        raise InvalidParameterError(f"temperature must be positive and finite, got {T!r}")
    return as_logits(z) / float(T)


def logsumexp(x, mask=None):
    """Max-shifted log-sum-exp over the last axis.

    With ``mask`` only the selected entries take part; rows whose mask is
    empty (or whose selected entries are all ``-inf``) give ``-inf``.
    """
    x = np.asarray(x, dtype=np.float64)
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=-1, keepdims=True)
    finite = np.isfinite(m)
    shift = np.where(finite, m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(x - shift), axis=-1)) + np.squeeze(shift, -1)
    return np.where(np.squeeze(finite, -1), out, -np.inf)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    return z - logsumexp(z)[..., None]


@dataclass(frozen=True, eq=False)
class ProbVector:
    """A categorical distribution stored with its log-probabilities.

    ``log_probs`` is the primary representation; ``probs`` is its exponent.
    Zero probabilities are represented by ``-inf`` log-probabilities.
    """

    probs: np.ndarray
    log_probs: np.ndarray

    @classmethod
    def from_log_probs(cls, log_probs):
        log_probs = np.asarray(log_probs, dtype=np.float64)
        return cls(np.exp(log_probs), log_probs)

    @classmethod
    def from_probs(cls, probs, atol=1e-12):
        p = np.array(probs, dtype=np.float64)
        if p.ndim not in (1, 2) or p.shape[-1] < 1:
            raise ShapeError(f"probabilities must be 1-D or 2-D, got shape {p.shape}")
        if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
            raise InvalidParameterError("probabilities must lie in [0, 1]")
        if np.any(np.abs(p.sum(axis=-1) - 1.0) > atol):
            raise InvalidParameterError("probabilities must sum to 1")
        with np.errstate(divide="ignore"):
            return cls(p, np.log(p))

    def __len__(self):
        return self.probs.shape[-1]

    @property
    def shape(self):
        return self.probs.shape


def softmax(z):
    """Softmax of a logit vector (or batch) as a :class:`ProbVector`."""
    return ProbVector.from_log_probs(log_softmax(as_logits(z)))


def _as_prob(p):
    return p if isinstance(p, ProbVector) else ProbVector.from_probs(p)


def kl_divergence(p, q):
    """Forward KL(p || q) in nats.

    Terms with ``p_i == 0`` contribute 0. If some ``p_i > 0`` meets
    ``q_i == 0`` the result is ``+inf`` (never NaN). Batched inputs give one
    value per row.
    """
    p, q = _as_prob(p), _as_prob(q)
    if p.shape != q.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {q.shape}")
    support = p.probs > 0
    if np.any(support & np.isneginf(q.log_probs)):
        divergent = np.any(support & np.isneginf(q.log_probs), axis=-1)
    else:
        divergent = None
    with np.errstate(invalid="ignore"):
        terms = np.where(support, p.probs * (p.log_probs - q.log_probs), 0.0)
    out = np.sum(terms, axis=-1)
    if divergent is not None:
        out = np.where(divergent, np.inf, out)
    return float(out) if out.ndim == 0 else out
