"""Exponential tau-curriculum driven by clipped linear progress."""
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParameterError

__all__ = ["TauSchedule", "progress", "tau_at"]


@dataclass(frozen=True)
class TauSchedule:
    """Cutoff decays from ``tau_init`` to ``tau_final`` between steps
    ``k_start`` and ``k_stop``; ``gamma`` sets the curvature."""

    tau_init: float = 1.0
    tau_final: float = 0.05
    gamma: float = 0.001
    k_start: int = 0
    k_stop: int = 1

    def __post_init__(self):
        if not self.k_start < self.k_stop:
            raise InvalidParameterError(
                f"k_start ({self.k_start}) must be smaller than k_stop ({self.k_stop})"
            )
        if not 0.0 < self.tau_final <= self.tau_init <= 1.0:
            raise InvalidParameterError(
                f"need 0 < tau_final <= tau_init <= 1, got {self.tau_final}, {self.tau_init}"
            )
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {self.gamma}")

    @classmethod
    def constant(cls, tau):
        return cls(tau_init=tau, tau_final=tau, gamma=0.0, k_start=0, k_stop=1)

    @classmethod
    def from_fractions(cls, total_steps, start_fraction=1 / 15, stop_fraction=2 / 5,
                       tau_init=1.0, tau_final=0.05, gamma=0.001):
        """Place the decay window at fixed fractions of a run of ``total_steps``."""
        k_start = int(round(start_fraction * total_steps))
        k_stop = max(int(round(stop_fraction * total_steps)), k_start + 1)
        return cls(tau_init, tau_final, gamma, k_start, k_stop)

    def progress(self, k):
        return progress(self, k)

    def __call__(self, k):
        return tau_at(self, k)

    def curve(self, v):
        """The in-window branch evaluated at progress ``v`` (no piecewise cut)."""
        return self.tau_final + (self.tau_init - self.tau_final) * self.gamma ** v

    def jump_at_stop(self):
        """Size of the step down at ``k_stop``: limit of the curve minus ``tau_final``."""
        return self.curve(1.0) - self.tau_final


def progress(cfg, k):
    v = (k - cfg.k_start) / (cfg.k_stop - cfg.k_start)
    return min(1.0, max(0.0, v))


def tau_at(cfg, k):
    if k < cfg.k_start:
        return float(cfg.tau_init)
    if k >= cfg.k_stop:
        return float(cfg.tau_final)
    return float(cfg.curve(progress(cfg, k)))


def tau_table(cfg, n_steps):
    """``(k, tau(k))`` rows for ``k = 0 .. n_steps - 1``."""
    ks = np.arange(n_steps)
    return ks, np.array([tau_at(cfg, int(k)) for k in ks])
