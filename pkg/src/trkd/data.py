"""Synthetic class-clustered data standing in for a speaker corpus."""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import InvalidParameterError

__all__ = ["SyntheticDatasetConfig", "Dataset", "gen_dataset"]


@dataclass(frozen=True)
class SyntheticDatasetConfig:
    num_classes: int = 64
    input_dim: int = 32
    samples_per_class: int = 200
    class_separation: float = 1.0
    noise_sigma: float = 1.0
    held_out_fraction: float = 0.25
    seed: int = 0
    num_groups: int = 0
    group_spread: float = 0.35

    def __post_init__(self):
        if self.num_classes < 2:
            raise InvalidParameterError("num_classes must be >= 2")
        if self.input_dim < 1:
            raise InvalidParameterError("input_dim must be >= 1")
        if self.samples_per_class < 2:
            raise InvalidParameterError("samples_per_class must be >= 2 to hold out a split")
        if not self.class_separation > 0:
            raise InvalidParameterError("class_separation must be positive")
        if not self.noise_sigma >= 0:
            raise InvalidParameterError("noise_sigma must be non-negative")
        if not 0 < self.held_out_fraction < 1:
            raise InvalidParameterError("held_out_fraction must lie in (0, 1)")
        if not 0 <= self.num_groups <= self.num_classes:
            raise InvalidParameterError("num_groups must lie in [0, num_classes]")
        if not self.group_spread >= 0:
            raise InvalidParameterError("group_spread must be non-negative")


class Dataset(NamedTuple):
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    means: np.ndarray


def gen_dataset(cfg):
    """Gaussian clusters around seeded class means, stratified split.

    Class means are standard normal draws times ``class_separation``. With
    ``num_groups > 0`` classes are dealt round-robin into groups and each
    mean is its group centre plus ``group_spread`` times its own standard
    normal offset (then scaled), which makes within-group classes the
    natural confusions.

    Every class contributes ``max(1, round(fraction * n))`` held-out samples
    and at least one training sample.
    """
    rng = np.random.default_rng(cfg.seed)
    C, d, n = cfg.num_classes, cfg.input_dim, cfg.samples_per_class
    if cfg.num_groups:
        centres = rng.standard_normal((cfg.num_groups, d))
        means = centres[np.arange(C) % cfg.num_groups] + cfg.group_spread * rng.standard_normal((C, d))
        means *= cfg.class_separation
    else:
        means = cfg.class_separation * rng.standard_normal((C, d))
    noise = rng.standard_normal((C, n, d))
    X = means[:, None, :] + cfg.noise_sigma * noise
    n_test = min(max(1, int(round(cfg.held_out_fraction * n))), n - 1)
    perm = np.argsort(rng.random((C, n)), axis=1)
    X = np.take_along_axis(X, perm[:, :, None], axis=1)
    labels = np.broadcast_to(np.arange(C)[:, None], (C, n))
    return Dataset(
        X_train=X[:, n_test:].reshape(-1, d),
        y_train=labels[:, n_test:].reshape(-1).copy(),
        X_test=X[:, :n_test].reshape(-1, d),
        y_test=labels[:, :n_test].reshape(-1).copy(),
        means=means,
    )
