"""Randomized identity and gradient suites behind ``trkd selfcheck``.

Everything is assembled from the public loss functions, so tampering with
one of them (see ``fault``) shows up as a failed suite.
"""
from dataclasses import dataclass

import numpy as np

from . import losses as L
from .gradcheck import numerical_gradient, relative_error
from .partition import partition_batch
from .prob import log_softmax

__all__ = ["SuiteResult", "run_selfcheck", "random_instance", "FAULTS"]

IDENTITY_TOL = 1e-10
GRAD_TOL = 1e-6
FAULTS = ("value", "grad")


@dataclass(frozen=True)
class SuiteResult:
    name: str
    max_residual: float
    tolerance: float
    cases: int

    @property
    def passed(self):
        return bool(self.max_residual <= self.tolerance)

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name:<14} max={self.max_residual:.3e} tol={self.tolerance:.0e} n={self.cases}"


def random_instance(rng, c_min=3, c_max=200, spread=None):
    """Teacher logits, student logits, target index and cutoff for one draw."""
    C = int(rng.integers(c_min, c_max + 1))
    s = rng.uniform(0.5, 4.0) if spread is None else spread
    zt = s * rng.standard_normal(C)
    zs = s * rng.standard_normal(C)
    y = int(rng.integers(C))
    tau = float(1.0 - rng.random())  # (0, 1]
    return zt, zs, y, tau


class _Losses:
    """Indirection so a fault can be injected into the TMKD term."""

    def __init__(self, fault=None):
        if fault is not None and fault not in FAULTS:
            raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
        self.fault = fault

    def __getattr__(self, name):
        return getattr(L, name)

    def tmkd_loss(self, *args, **kwargs):
        res = L.tmkd_loss(*args, **kwargs)
        if self.fault == "value":
            return L.LossValueGrad(res.value * (1 + 1e-6) + 1e-9, res.grad)
        if self.fault == "grad":
            return L.LossValueGrad(res.value, res.grad * (1 + 1e-4))
        return res

    def trkd_loss(self, zt, zs, y, tau, w, reduction="mean"):
        part = _partition(zt, y, tau, w.temperature)
        return (self.tmkd_loss(zt, zs, part, w, reduction).scaled(w.lambda_m)
                + L.cfkd_loss(zt, zs, part, w, reduction).scaled(w.lambda_f))


def _partition(zt, y, tau, temperature):
    """Partition of the temperature-scaled teacher (rows or a single vector)."""
    zt = np.asarray(zt, dtype=np.float64)
    p = np.exp(log_softmax(np.atleast_2d(zt) / temperature))
    part = partition_batch(p, np.atleast_1d(y), tau)
    return part.row(0) if zt.ndim == 1 else part


def _identity_residuals(losses, zt, zs, y, tau, T, a, b):
    """Per-batch max residuals of the two-way split, the three-way split and
    the DKD/TRKD(1) equivalence; rows share C and T."""
    unit = L.DistillWeights(temperature=T, rescale=False)
    kl = losses.kd_loss(zt, zs, unit, reduction="none").value
    p_rest = 1.0 - np.exp(log_softmax(zt / T))[np.arange(len(y)), y]
    two = (losses.tckd_loss(zt, zs, y, unit, reduction="none").value
           + p_rest * losses.nckd_loss(zt, zs, y, unit, reduction="none").value)
    three = 0.0
    for t in np.unique(tau):
        rows = tau == t
        part = _partition(zt[rows], y[rows], float(t), T)
        rhs = (losses.tmkd_loss(zt[rows], zs[rows], part, unit, reduction="none").value
               + part.mass_confusion * losses.cfkd_loss(zt[rows], zs[rows], part, unit, reduction="none").value
               + part.mass_background * losses.bgkd_loss(zt[rows], zs[rows], part, unit, reduction="none").value)
        three = max(three, float(np.max(np.abs(kl[rows] - rhs))))
    w = L.DistillWeights(alpha=a, beta=b, lambda_m=a, lambda_f=b, temperature=T)
    d = losses.dkd_loss(zt, zs, y, w, reduction="none")
    t1 = losses.trkd_loss(zt, zs, y, 1.0, w, reduction="none")
    equiv = max(float(np.max(np.abs(d.value - t1.value))), float(np.max(np.abs(d.grad - t1.grad))))
    return float(np.max(np.abs(kl - two))), three, equiv


# Rounding one float64 loss value costs about eps * |f|; a central difference
# turns that into eps * |f| / h of gradient noise. The allowance is a few
# times that bound.
_FD_NOISE = 8 * np.finfo(np.float64).eps


def _grad_cases(losses, zt, zs, y, tau, T, h=1e-5):
    w = L.DistillWeights(temperature=T)
    part = _partition(zt, y, tau, T)
    cases = {
        "kd": lambda s: losses.kd_loss(zt, s, w),
        "tckd": lambda s: losses.tckd_loss(zt, s, y, w),
        "nckd": lambda s: losses.nckd_loss(zt, s, y, w),
        "dkd": lambda s: losses.dkd_loss(zt, s, y, w),
        "tmkd": lambda s: losses.tmkd_loss(zt, s, part, w),
        "cfkd": lambda s: losses.cfkd_loss(zt, s, part, w),
        "bgkd": lambda s: losses.bgkd_loss(zt, s, part, w),
        "trkd": lambda s: losses.trkd_loss(zt, s, y, tau, w),
    }
    out = {}
    for name, f in cases.items():
        res = f(zs)
        fd = numerical_gradient(lambda s: f(s).value, zs, h)
        out[name] = relative_error(res.grad, fd, noise=_FD_NOISE * abs(res.value) / h)
    return out


def run_selfcheck(trials=1000, seed=0, fault=None, grad_trials=None):
    """Run every suite; returns a list of :class:`SuiteResult`.

    Identity suites draw ``trials`` instances with C in [3, 200]. The
    gradient suites use ``min(trials, 100)`` instances (C = 10, standard
    normal logits, T drawn from {1, 2, 4}) unless ``grad_trials`` is given,
    and allow for the float64 rounding noise of the differenced values.
    """
    losses = _Losses(fault)
    rng = np.random.default_rng(seed)
    draws = [random_instance(rng) + (float(rng.choice([1.0, 2.0, 4.0])),) for _ in range(trials)]
    groups = {}
    for zt, zs, y, tau, T in draws:
        groups.setdefault((zt.size, T), []).append((zt, zs, y, tau))
    eq6 = eq14 = equiv = 0.0
    for (_, T), rows in sorted(groups.items()):
        zt, zs, y, tau = (np.array(col) for col in zip(*rows))
        a, b = rng.uniform(0.0, 10.0, size=2)
        r6, r14, req = _identity_residuals(losses, zt, zs, y, tau, T, a, b)
        eq6, eq14, equiv = max(eq6, r6), max(eq14, r14), max(equiv, req)
    n_grad = min(trials, 100) if grad_trials is None else grad_trials
    grad = {}
    for _ in range(n_grad):
        zt, zs, y, tau = random_instance(rng, 10, 10, spread=1.0)
        T = float(rng.choice([1.0, 2.0, 4.0]))
        for name, err in _grad_cases(losses, zt, zs, y, tau, T).items():
            grad[name] = max(grad.get(name, 0.0), err)
    out = [
        SuiteResult("kl-split", eq6, IDENTITY_TOL, trials),
        SuiteResult("kl-three-way", eq14, IDENTITY_TOL, trials),
        SuiteResult("dkd=trkd(1)", equiv, IDENTITY_TOL, trials),
    ]
    out += [SuiteResult(f"grad-{name}", err, GRAD_TOL, n_grad) for name, err in grad.items()]
    return out
