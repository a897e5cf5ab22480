import numpy as np
import pytest
from sklearn.base import clone

from trkd.data import SyntheticDatasetConfig, gen_dataset
from trkd.estimators import AamTeacher, DistilledStudent
from trkd.exceptions import DivergenceError, InvalidParameterError
from trkd.io import load_checkpoint, save_checkpoint

SMALL = dict(epochs=6, batch_size=32)


@pytest.fixture(scope="module")
def data():
    return gen_dataset(SyntheticDatasetConfig(num_classes=8, input_dim=6, samples_per_class=40, class_separation=3.0, seed=1))


@pytest.fixture(scope="module")
def teacher(data):
    return AamTeacher(hidden_layer_sizes=(32,), embedding_dim=16, **SMALL).fit(data.X_train, data.y_train)


def student(teacher, **kw):
    params = dict(hidden_layer_sizes=(16,), embedding_dim=8, **SMALL)
    params.update(kw)
    return DistilledStudent(teacher, **params)


def test_teacher_learns(teacher, data):
    assert teacher.history_[-1]["accuracy"] > 0.95
    assert teacher.score(data.X_test, data.y_test) > 0.8
    # first-epoch AAM loss starts near chance level, not orders of magnitude off
    assert teacher.history_[0]["loss"] < 3 * 32 * 2
    assert teacher.history_[-1]["loss"] < teacher.history_[0]["loss"]
    assert teacher.predict_proba(data.X_test).sum(axis=1) == pytest.approx(1.0)


def test_teacher_is_deterministic(teacher, data):
    again = clone(teacher).fit(data.X_train, data.y_train)
    for a, b in zip(teacher.net_.params, again.net_.params):
        np.testing.assert_array_equal(a, b)
    assert [r["loss_total"] for r in teacher.log_] == [r["loss_total"] for r in again.log_]


def test_teacher_untouched_by_distillation(teacher, data):
    before = [p.copy() for p in teacher.net_.params] + [teacher.class_weights_.copy()]
    student(teacher, method="trkd").fit(data.X_train, data.y_train)
    after = teacher.net_.params + [teacher.class_weights_]
    assert all(np.array_equal(a, b) for a, b in zip(before, after))


@pytest.mark.parametrize("method, keys", [
    ("none", set()), ("kd", {"loss_kd"}), ("dkd", {"loss_tckd", "loss_nckd"}),
    ("trkd", {"tau", "loss_tmkd", "loss_cfkd", "confusion_size_mean"}), ("mse", {"loss_mse"}), ("cos", {"loss_cos"}),
])
def test_log_columns_per_method(teacher, data, method, keys):
    est = student(teacher, method=method, epochs=2).fit(data.X_train, data.y_train)
    base = {"step", "epoch", "lr", "loss_total", "loss_aam"}
    assert set(est.log_[0]) == base | keys
    assert all(np.isfinite(r["loss_total"]) for r in est.log_)
    assert est.transform(data.X_test).shape == (data.X_test.shape[0], 8)


def test_dkd_and_trkd_at_full_cutoff_train_identically(teacher, data):
    dkd = student(teacher, method="dkd").fit(data.X_train, data.y_train)
    trkd = student(teacher, method="trkd", tau_fixed=1.0).fit(data.X_train, data.y_train)
    a = np.array([r["loss_total"] for r in dkd.log_])
    b = np.array([r["loss_total"] for r in trkd.log_])
    assert np.max(np.abs(a - b)) <= 1e-8


def test_tau_curriculum_is_logged(teacher, data):
    est = student(teacher, method="trkd", epochs=15).fit(data.X_train, data.y_train)
    taus = np.array([r["tau"] for r in est.log_])
    assert taus[0] == 1.0 and taus[-1] == 0.05
    assert np.all(np.diff(taus) <= 0)
    sched = est.tau_schedule_
    assert (sched.k_start, sched.k_stop) == (round(est.n_steps_ / 15), round(est.n_steps_ * 2 / 5))
    sizes = np.array([r["confusion_size_mean"] for r in est.log_])
    assert sizes[0] == 7 and sizes[-1] < 7


def test_absolute_tau_window(teacher):
    sched = student(teacher, tau_steps=(3, 9)).tau_schedule(100)
    assert (sched.k_start, sched.k_stop) == (3, 9)


def test_divergence_is_reported(data):
    est = AamTeacher(hidden_layer_sizes=(16,), embedding_dim=8, epochs=3, lr_peak=1e300, lr_final=1e299,
                     warmup_epochs=0)
    with pytest.raises(DivergenceError) as info:
        est.fit(data.X_train, data.y_train)
    assert info.value.step == len(info.value.log) - 1
    assert not np.isfinite(info.value.log[-1]["loss_total"])


def test_checkpoint_round_trip(teacher, data, tmp_path):
    ckpt = teacher.to_checkpoint()
    save_checkpoint(tmp_path / "t.ckpt", ckpt.net, ckpt.class_weights)
    back = AamTeacher.from_checkpoint(load_checkpoint(tmp_path / "t.ckpt"))
    np.testing.assert_array_equal(back.decision_function(data.X_test), teacher.decision_function(data.X_test))
    assert back.embedding_dim == 16 and back.hidden_layer_sizes == (32,)


def test_invalid_parameters(teacher, data):
    with pytest.raises(InvalidParameterError):
        student(teacher, method="gkd").fit(data.X_train, data.y_train)
    with pytest.raises(InvalidParameterError):
        DistilledStudent(None).fit(data.X_train, data.y_train)
    with pytest.raises(InvalidParameterError):
        student(teacher, momentum=1.0).fit(data.X_train, data.y_train)
