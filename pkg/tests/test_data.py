import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from trkd.data import SyntheticDatasetConfig, gen_dataset
from trkd.exceptions import InvalidParameterError


def test_seeded_determinism():
    a = gen_dataset(SyntheticDatasetConfig(num_classes=8, samples_per_class=20, seed=4))
    b = gen_dataset(SyntheticDatasetConfig(num_classes=8, samples_per_class=20, seed=4))
    c = gen_dataset(SyntheticDatasetConfig(num_classes=8, samples_per_class=20, seed=5))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a.X_train, c.X_train)


def test_zero_noise_collapses_onto_means():
    ds = gen_dataset(SyntheticDatasetConfig(num_classes=5, samples_per_class=6, noise_sigma=0.0))
    np.testing.assert_array_equal(ds.X_train, ds.means[ds.y_train])
    np.testing.assert_array_equal(ds.X_test, ds.means[ds.y_test])


def test_stratified_disjoint_split():
    cfg = SyntheticDatasetConfig(num_classes=10, samples_per_class=40, input_dim=6)
    ds = gen_dataset(cfg)
    assert np.array_equal(np.bincount(ds.y_test), np.full(10, 10))
    assert np.array_equal(np.bincount(ds.y_train), np.full(10, 30))
    rows = {r.tobytes() for r in ds.X_train}
    assert not any(r.tobytes() in rows for r in ds.X_test)


def test_separable_with_wide_margin():
    cfg = SyntheticDatasetConfig(num_classes=16, input_dim=32, samples_per_class=50,
                                 class_separation=10.0, noise_sigma=0.1, seed=2)
    ds = gen_dataset(cfg)
    clf = LogisticRegression(max_iter=2000).fit(ds.X_train, ds.y_train)
    assert clf.score(ds.X_test, ds.y_test) > 0.99


def test_groups_cluster_means():
    ds = gen_dataset(SyntheticDatasetConfig(num_classes=16, num_groups=4, group_spread=0.1))
    d = np.linalg.norm(ds.means[:, None] - ds.means[None], axis=-1)
    group = np.arange(16) % 4
    same = group[:, None] == group[None]
    np.fill_diagonal(same, False)
    assert d[same].max() < d[group[:, None] != group[None]].min()


@pytest.mark.parametrize("kwargs", [dict(samples_per_class=1), dict(num_classes=1), dict(held_out_fraction=1.0),
                                    dict(noise_sigma=-1.0), dict(num_groups=100)])
def test_invalid_configs(kwargs):
    with pytest.raises(InvalidParameterError):
        SyntheticDatasetConfig(**kwargs)
