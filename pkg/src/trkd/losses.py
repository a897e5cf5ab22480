"""Logit-level distillation losses with analytic student-logit gradients.

Every loss takes raw teacher and student logits, divides both by the
temperature ``T``, and compares the resulting posteriors with forward
KL(teacher || student). Values and gradients are multiplied by ``T**2``
unless ``DistillWeights.rescale`` is off.

Inputs may be one example (shape ``(C,)``) or a batch (``(N, C)``). A batch
is reduced by the mean, and the returned gradient is the gradient of that
mean with respect to each row of student logits.

Two building blocks cover the whole family. A *grouped* KL compares the
total masses of a set of disjoint class groups (TCKD, TMKD, and KD when
every class is its own group). A *conditional* KL compares the
distributions renormalised inside one class set (NCKD, CFKD, BGKD).
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DegenerateMassError, EmptySetError, InvalidParameterError, ShapeError
from .partition import PartitionBatch, TriagePartition, _check_targets, partition_batch
from .prob import as_logits, log_softmax, logsumexp

__all__ = [
    "DistillWeights",
    "LossValueGrad",
    "kd_loss",
    "tckd_loss",
    "nckd_loss",
    "dkd_loss",
    "tmkd_loss",
    "cfkd_loss",
    "bgkd_loss",
    "trkd_loss",
    "trkd_components",
    "kd_decomposition_check",
    "dkd_decomposition_check",
]

# Teacher non-target mass below this makes the renormalised non-target
# distribution meaningless.
MIN_NONTARGET_MASS = 1e-300


@dataclass(frozen=True)
class DistillWeights:
    alpha: float = 1.0
    beta: float = 8.0
    lambda_m: float = 1.0
    lambda_f: float = 8.0
    temperature: float = 4.0
    rescale: bool = True

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_m", "lambda_f"):
            w = getattr(self, name)
            if not (np.isfinite(w) and w >= 0):
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {w!r}")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise InvalidParameterError(f"temperature must be > 0, got {self.temperature!r}")

    @property
    def scale(self):
        return self.temperature ** 2 if self.rescale else 1.0


class LossValueGrad(NamedTuple):
    value: float
    grad: np.ndarray

    def __add__(self, other):
        return LossValueGrad(self.value + other.value, self.grad + other.grad)

    def scaled(self, w):
        return LossValueGrad(w * self.value, w * self.grad)


_UNIT = DistillWeights(temperature=1.0, rescale=False)


def _prepare(teacher_logits, student_logits, weights):
    zt = as_logits(teacher_logits, "teacher_logits")
    zs = as_logits(student_logits, "student_logits")
    if zt.shape != zs.shape:
        raise ShapeError(f"teacher {zt.shape} and student {zs.shape} logits differ in shape")
    single = zt.ndim == 1
    T = weights.temperature
    lt = log_softmax(np.atleast_2d(zt) / T)
    ls = log_softmax(np.atleast_2d(zs) / T)
    return lt, ls, single


def _finish(values, grad_u, weights, single, reduction="mean"):
    """Apply the T**2 rescale, the 1/T chain factor and the batch reduction.

    ``reduction="none"`` keeps per-row values and per-row gradients.
    """
    values = np.maximum(values, 0.0)
    c = weights.scale
    grad = grad_u * (c / weights.temperature)
    if single:
        return LossValueGrad(float(c * values[0]), grad[0])
    if reduction == "none":
        return LossValueGrad(c * values, grad)
    if reduction != "mean":
        raise InvalidParameterError(f"reduction must be 'mean' or 'none', got {reduction!r}")
    n = values.shape[0]
    return LossValueGrad(float(c * values.mean()), grad / n)


def _kl_terms(lp, lq):
    """Elementwise ``p * (expm1(u) - u)`` with ``u = log q - log p``.

    Sums to ``KL(p || q)`` when both sum to one. Unlike ``p * (log p - log q)``
    every term is non-negative and the sum is first-order insensitive to a
    common error in the log-normalisers, which keeps finite differences of
    the value clean.
    """
    p = np.exp(lp)
    with np.errstate(invalid="ignore", over="ignore"):
        u = lq - lp
        t = p * (np.expm1(u) - u)
    return np.where(p > 0, t, 0.0)


def _grouped_kl(lt, ls, groups):
    """KL between group-mass vectors; gradient w.r.t. scaled student logits.

    For student probabilities p_i and group masses P_g the gradient is
    ``p_i * (1 - Pt_g / Ps_g)`` for i in group g.
    """
    value = np.zeros(lt.shape[0])
    ratio = np.zeros_like(lt)
    for mask in groups:
        lpt = logsumexp(lt, mask)
        lps = logsumexp(ls, mask)
        live = np.isfinite(lpt)
        with np.errstate(invalid="ignore", over="ignore"):
            r = np.where(live, np.exp(lpt - lps), 0.0)
        value += np.where(live, _kl_terms(lpt, lps), 0.0)
        ratio += np.where(mask, r[:, None], 0.0)
    ps = np.exp(ls)
    return value, ps - ps * ratio


def _conditional_kl(lt, ls, mask):
    """KL between the distributions renormalised inside ``mask`` (row-wise).

    Rows with an empty mask contribute zero value and zero gradient.
    """
    lse_t = logsumexp(lt, mask)[:, None]
    lse_s = logsumexp(ls, mask)[:, None]
    with np.errstate(invalid="ignore"):
        lrt = np.where(mask, lt - lse_t, -np.inf)
        lrs = np.where(mask, ls - lse_s, -np.inf)
    rt = np.exp(lrt)
    value = np.sum(_kl_terms(lrt, lrs), axis=1)
    grad = np.where(mask, np.exp(lrs) - rt, 0.0)
    return value, grad


def _target_mask(y, shape):
    y = _check_targets(y, shape[0], shape[1])
    m = np.zeros(shape, dtype=bool)
    m[np.arange(shape[0]), y] = True
    return m


def _as_partition_batch(part, shape):
    if isinstance(part, TriagePartition):
        part = part.to_batch()
    elif not isinstance(part, PartitionBatch):
        raise TypeError(f"expected TriagePartition or PartitionBatch, got {type(part).__name__}")
    if part.shape != shape:
        raise ShapeError(f"partition shape {part.shape} does not match logits shape {shape}")
    return part


def kd_loss(teacher_logits, student_logits, weights=DistillWeights(), reduction="mean"):
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    value = np.sum(_kl_terms(lt, ls), axis=1)
    return _finish(value, np.exp(ls) - np.exp(lt), weights, single, reduction)


def _tckd(lt, ls, tmask):
    return _grouped_kl(lt, ls, (tmask, ~tmask))


def _nckd(lt, ls, tmask):
    if np.any(logsumexp(lt, ~tmask) < np.log(MIN_NONTARGET_MASS)):
        raise DegenerateMassError("teacher non-target mass is numerically zero")
    return _conditional_kl(lt, ls, ~tmask)


def tckd_loss(teacher_logits, student_logits, y, weights=DistillWeights(), reduction="mean"):
    """Binary KL between ``[p_y, 1 - p_y]`` of teacher and student."""
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    return _finish(*_tckd(lt, ls, _target_mask(y, lt.shape)), weights, single, reduction)


def nckd_loss(teacher_logits, student_logits, y, weights=DistillWeights(), reduction="mean"):
    """KL between the non-target distributions renormalised to sum to one."""
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    return _finish(*_nckd(lt, ls, _target_mask(y, lt.shape)), weights, single, reduction)


def dkd_loss(teacher_logits, student_logits, y, weights=DistillWeights(), reduction="mean"):
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    tmask = _target_mask(y, lt.shape)
    tc = _finish(*_tckd(lt, ls, tmask), weights, single, reduction)
    nc = _finish(*_nckd(lt, ls, tmask), weights, single, reduction)
    return tc.scaled(weights.alpha) + nc.scaled(weights.beta)


def _tmkd(lt, ls, part):
    return _grouped_kl(lt, ls, (part.target_mask, part.confusion_mask, part.background_mask))


def tmkd_loss(teacher_logits, student_logits, part, weights=DistillWeights(), reduction="mean"):
    """Three-mass KL over ``[p_y, p_F, p_B]`` for a fixed partition."""
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    part = _as_partition_batch(part, lt.shape)
    return _finish(*_tmkd(lt, ls, part), weights, single, reduction)


def cfkd_loss(teacher_logits, student_logits, part, weights=DistillWeights(), reduction="mean"):
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    part = _as_partition_batch(part, lt.shape)
    if not np.all(part.confusion_mask.any(axis=1)):
        raise EmptySetError("confusion-set is empty")
    return _finish(*_conditional_kl(lt, ls, part.confusion_mask), weights, single, reduction)


def bgkd_loss(teacher_logits, student_logits, part, weights=DistillWeights(), reduction="mean"):
    """Within-background KL; zero (with zero gradient) for an empty background."""
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    part = _as_partition_batch(part, lt.shape)
    return _finish(*_conditional_kl(lt, ls, part.background_mask), weights, single, reduction)


def trkd_components(teacher_logits, student_logits, y, tau, weights=DistillWeights(), reduction="mean"):
    """Unweighted ``(tmkd, cfkd, partition)`` with the partition rebuilt from
    the temperature-scaled teacher posterior at cutoff ``tau``."""
    lt, ls, single = _prepare(teacher_logits, student_logits, weights)
    part = partition_batch(np.exp(lt), _check_targets(y, *lt.shape), tau)
    tm = _finish(*_tmkd(lt, ls, part), weights, single, reduction)
    cf = _finish(*_conditional_kl(lt, ls, part.confusion_mask), weights, single, reduction)
    return tm, cf, part


def trkd_loss(teacher_logits, student_logits, y, tau, weights=DistillWeights(), reduction="mean"):
    tm, cf, _ = trkd_components(teacher_logits, student_logits, y, tau, weights, reduction)
    return tm.scaled(weights.lambda_m) + cf.scaled(weights.lambda_f)


def kd_decomposition_check(teacher_logits, student_logits, y, tau, temperature=1.0):
    """Largest residual of ``KL = TMKD + p_F * CFKD + p_B * BGKD`` over the rows.

    No loss weights and no T**2 rescale are applied. At ``tau = 1`` this is
    the target/non-target split ``KL = TCKD + p_rest * NCKD``.
    """
    w = DistillWeights(temperature=temperature, rescale=False)
    lt, ls, _ = _prepare(teacher_logits, student_logits, w)
    part = partition_batch(np.exp(lt), _check_targets(y, *lt.shape), tau)
    pt = np.exp(lt)
    kl = np.sum(np.where(pt > 0, pt * (lt - ls), 0.0), axis=1)
    tm, _ = _tmkd(lt, ls, part)
    cf, _ = _conditional_kl(lt, ls, part.confusion_mask)
    bg, _ = _conditional_kl(lt, ls, part.background_mask)
    rhs = tm + part.mass_confusion * cf + part.mass_background * bg
    return float(np.max(np.abs(kl - rhs)))


def dkd_decomposition_check(teacher_logits, student_logits, y, temperature=1.0):
    """Largest residual of ``KL = TCKD + (1 - p_y) * NCKD`` over the rows."""
    w = DistillWeights(temperature=temperature, rescale=False)
    lt, ls, _ = _prepare(teacher_logits, student_logits, w)
    tmask = _target_mask(y, lt.shape)
    pt = np.exp(lt)
    kl = np.sum(np.where(pt > 0, pt * (lt - ls), 0.0), axis=1)
    tc, _ = _tckd(lt, ls, tmask)
    nc, _ = _nckd(lt, ls, tmask)
    rest = np.exp(logsumexp(lt, ~tmask))
    return float(np.max(np.abs(kl - (tc + rest * nc))))
