"""File-level steps shared by the CLI: train, distill, evaluate."""
import json
import os

import numpy as np

from .data import gen_dataset
from .estimators import AamTeacher, DistilledStudent
from .exceptions import ShapeError, StateError
from .io import LogitDump, load_checkpoint, save_checkpoint, write_dump
from .verification import evaluate_eer, write_score_file

__all__ = ["train_teacher", "distill_student", "evaluate_checkpoint", "write_jsonl", "load_teacher"]


def write_jsonl(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def _out_dir(cfg, out_dir):
    path = out_dir or cfg.train.output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _save_run(est, path, stem, cfg):
    ckpt = os.path.join(path, f"{stem}.ckpt")
    save_checkpoint(ckpt, est.net_, est.class_weights_)
    write_jsonl(os.path.join(path, f"{stem}_log.jsonl"), est.log_)
    write_jsonl(os.path.join(path, f"{stem}_epochs.jsonl"), est.history_)
    with open(os.path.join(path, f"{stem}_config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    return ckpt


def train_teacher(cfg, out_dir=None):
    """Fit the teacher; writes ``teacher.ckpt``, its logs and a logit dump of
    the training split. Returns ``(estimator, checkpoint_path)``."""
    path = _out_dir(cfg, out_dir)
    ds = gen_dataset(cfg.dataset_config())
    teacher = AamTeacher(**cfg.teacher_params()).fit(ds.X_train, ds.y_train)
    ckpt = _save_run(teacher, path, "teacher", cfg)
    logits = teacher.decision_function(ds.X_train)
    write_dump(LogitDump(logits, ds.y_train), os.path.join(path, "teacher_logits.tkld"))
    return teacher, ckpt


def load_teacher(cfg, path):
    ckpt = load_checkpoint(path)
    params = cfg.teacher_params()
    for key in ("hidden_layer_sizes", "embedding_dim"):
        params.pop(key)
    teacher = AamTeacher.from_checkpoint(ckpt, **params)
    if teacher.n_features_in_ != cfg.dataset.input_dim:
        raise ShapeError(f"teacher expects {teacher.n_features_in_} inputs, dataset has {cfg.dataset.input_dim}")
    if teacher.classes_.size != cfg.dataset.num_classes:
        raise ShapeError(f"teacher has {teacher.classes_.size} classes, dataset has {cfg.dataset.num_classes}")
    return teacher


def distill_student(cfg, teacher_path, out_dir=None):
    """Distil a student with ``cfg.distill.method``; writes
    ``student_<method>.ckpt`` and its logs. Returns ``(estimator, path)``.

    On divergence the partial log is written before the error propagates.
    """
    path = _out_dir(cfg, out_dir)
    teacher = load_teacher(cfg, teacher_path)
    before = [p.copy() for p in teacher.net_.params] + [teacher.class_weights_.copy()]
    ds = gen_dataset(cfg.dataset_config())
    stem = f"student_{cfg.distill.method}"
    student = DistilledStudent(teacher=teacher, **cfg.student_params())
    try:
        student.fit(ds.X_train, ds.y_train)
    except FloatingPointError as exc:
        write_jsonl(os.path.join(path, f"{stem}_log.jsonl"), getattr(exc, "log", []))
        raise
    after = teacher.net_.params + [teacher.class_weights_]
    if not all(np.array_equal(a, b) for a, b in zip(before, after)):
        raise StateError("teacher parameters changed during distillation")
    return student, _save_run(student, path, stem, cfg)


def evaluate_checkpoint(cfg, ckpt_path, scores_path=None):
    """EER of a checkpoint on the held-out split of the configured dataset."""
    params = cfg.teacher_params()
    for key in ("hidden_layer_sizes", "embedding_dim"):
        params.pop(key)
    est = AamTeacher.from_checkpoint(load_checkpoint(ckpt_path), **params)
    if est.n_features_in_ != cfg.dataset.input_dim:
        raise ShapeError(f"checkpoint expects {est.n_features_in_} inputs, dataset has {cfg.dataset.input_dim}")
    ds = gen_dataset(cfg.dataset_config())
    eer, trials = evaluate_eer(est, ds.X_test, ds.y_test, cfg.eval.pairs_per_class, cfg.eval.seed)
    if scores_path:
        write_score_file(scores_path, trials)
    return {
        "checkpoint": str(ckpt_path),
        "eer": eer,
        "eer_percent": 100.0 * eer,
        "target_trials": int(trials.target_scores.size),
        "nontarget_trials": int(trials.nontarget_scores.size),
    }
