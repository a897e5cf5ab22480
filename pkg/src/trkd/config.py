"""Run configuration: TOML sections plus ``section.key=value`` overrides.

Every value is checked against the owning type before a run starts; any
problem raises :class:`~trkd.exceptions.ConfigError` naming the key.
"""
import json
import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .data import SyntheticDatasetConfig
from .estimators import METHODS
from .exceptions import ConfigError, TrkdError
from .schedule import TauSchedule

__all__ = ["RunConfig", "load_config", "parse_overrides", "DEFAULT_CONFIG_TOML"]


@dataclass(frozen=True)
class DatasetSection:
    num_classes: int = 64
    input_dim: int = 32
    samples_per_class: int = 200
    class_separation: float = 1.0
    noise_sigma: float = 1.0
    held_out_fraction: float = 0.25
    seed: int = 0
    num_groups: int = 0
    group_spread: float = 0.35


@dataclass(frozen=True)
class NetSection:
    widths: tuple = ()


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 30
    batch_size: int = 64
    lr_peak: float = 0.1
    lr_final: float = 5e-5
    warmup_epochs: float = 1.2
    momentum: float = 0.9
    aam_scale: float = 32.0
    aam_margin: float = 0.2
    seed: int = 0
    output_dir: str = "runs"


@dataclass(frozen=True)
class DistillSection:
    method: str = "trkd"
    temperature: float = 4.0
    alpha: float = 1.0
    beta: float = 8.0
    lambda_m: float = 1.0
    lambda_f: float = 8.0
    rescale: bool = True
    tau_fixed: float = None


@dataclass(frozen=True)
class ScheduleSection:
    tau_init: float = 1.0
    tau_final: float = 0.05
    gamma: float = 0.001
    start_fraction: float = 1 / 15
    stop_fraction: float = 2 / 5
    k_start: int = None
    k_stop: int = None


@dataclass(frozen=True)
class EvalSection:
    pairs_per_class: int = 100
    seed: int = 0


_SECTIONS = {
    "dataset": DatasetSection,
    "teacher": NetSection,
    "student": NetSection,
    "train": TrainSection,
    "distill": DistillSection,
    "schedule": ScheduleSection,
    "eval": EvalSection,
}
_DEFAULT_WIDTHS = {"teacher": (32, 256, 256, 64), "student": (32, 64, 32)}


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    teacher: NetSection = field(default_factory=lambda: NetSection(_DEFAULT_WIDTHS["teacher"]))
    student: NetSection = field(default_factory=lambda: NetSection(_DEFAULT_WIDTHS["student"]))
    train: TrainSection = field(default_factory=TrainSection)
    distill: DistillSection = field(default_factory=DistillSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    eval: EvalSection = field(default_factory=EvalSection)

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a table of sections")
        sections = {}
        for name, value in raw.items():
            if name not in _SECTIONS:
                raise ConfigError(name, "unknown section")
            if not isinstance(value, dict):
                raise ConfigError(name, "must be a table")
            sections[name] = _build_section(name, value)
        cfg = cls(**sections)
        cfg.validate()
        return cfg

    def to_dict(self):
        out = {}
        for f in fields(self):
            sec = getattr(self, f.name)
            out[f.name] = {g.name: getattr(sec, g.name) for g in fields(sec)
                           if getattr(sec, g.name) is not None}
            if "widths" in out[f.name]:
                out[f.name]["widths"] = list(out[f.name]["widths"])
        return out

    def with_overrides(self, overrides):
        """Apply ``{"section.key": value}`` overrides and revalidate."""
        raw = self.to_dict()
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key:
                raise ConfigError(dotted, "override must look like section.key=value")
            if section not in _SECTIONS:
                raise ConfigError(section, "unknown section")
            raw.setdefault(section, {})[key] = value
        return RunConfig.from_dict(raw)

    def dataset_config(self):
        return SyntheticDatasetConfig(**{f.name: getattr(self.dataset, f.name) for f in fields(self.dataset)})

    def tau_schedule(self, total_steps):
        s = self.schedule
        if self.distill.tau_fixed is not None:
            return TauSchedule.constant(self.distill.tau_fixed)
        if s.k_start is not None or s.k_stop is not None:
            if s.k_start is None or s.k_stop is None:
                raise ConfigError("schedule.k_stop" if s.k_stop is None else "schedule.k_start",
                                  "k_start and k_stop must be given together")
            return TauSchedule(s.tau_init, s.tau_final, s.gamma, s.k_start, s.k_stop)
        return TauSchedule.from_fractions(total_steps, s.start_fraction, s.stop_fraction,
                                          s.tau_init, s.tau_final, s.gamma)

    def teacher_params(self):
        t = self.train
        return dict(hidden_layer_sizes=tuple(self.teacher.widths[1:-1]),
                    embedding_dim=self.teacher.widths[-1], scale=t.aam_scale, margin=t.aam_margin,
                    epochs=t.epochs, batch_size=t.batch_size, lr_peak=t.lr_peak,
                    lr_final=t.lr_final, warmup_epochs=t.warmup_epochs, momentum=t.momentum,
                    random_state=t.seed)

    def student_params(self):
        t, d, s = self.train, self.distill, self.schedule
        params = self.teacher_params()
        params.update(hidden_layer_sizes=tuple(self.student.widths[1:-1]),
                      embedding_dim=self.student.widths[-1], method=d.method,
                      temperature=d.temperature, alpha=d.alpha, beta=d.beta,
                      lambda_m=d.lambda_m, lambda_f=d.lambda_f, rescale=d.rescale,
                      tau_init=s.tau_init, tau_final=s.tau_final, gamma=s.gamma,
                      tau_start=s.start_fraction, tau_stop=s.stop_fraction,
                      tau_steps=None if s.k_start is None else (s.k_start, s.k_stop),
                      tau_fixed=d.tau_fixed)
        return params

    def validate(self):
        try:
            self.dataset_config()
        except TrkdError as exc:
            # messages start with the offending field name
            raise ConfigError(f"dataset.{str(exc).split()[0]}", str(exc)) from exc
        for name in ("teacher", "student"):
            w = getattr(self, name).widths
            if len(w) < 3 or min(w) < 1:
                raise ConfigError(f"{name}.widths", "need at least 3 positive widths")
            if w[0] != self.dataset.input_dim:
                raise ConfigError(f"{name}.widths", f"first width {w[0]} != dataset.input_dim {self.dataset.input_dim}")
        t = self.train
        checks = [
            ("train.epochs", t.epochs >= 1, "must be >= 1"),
            ("train.batch_size", t.batch_size >= 1, "must be >= 1"),
            ("train.lr_final", t.lr_final > 0, "must be positive"),
            ("train.lr_peak", t.lr_peak > t.lr_final, "must exceed lr_final"),
            ("train.warmup_epochs", 0 <= t.warmup_epochs < t.epochs, "must lie in [0, epochs)"),
            ("train.momentum", 0 <= t.momentum < 1, "must lie in [0, 1)"),
            ("train.aam_scale", t.aam_scale > 0, "must be positive"),
            ("train.aam_margin", 0 <= t.aam_margin < 1.5707963267948966, "must lie in [0, pi/2)"),
            ("distill.method", self.distill.method in METHODS, f"must be one of {METHODS}"),
            ("distill.temperature", self.distill.temperature > 0, "must be positive"),
            ("eval.pairs_per_class", self.eval.pairs_per_class >= 1, "must be >= 1"),
        ]
        for key in ("alpha", "beta", "lambda_m", "lambda_f"):
            checks.append((f"distill.{key}", getattr(self.distill, key) >= 0, "must be non-negative"))
        if self.distill.tau_fixed is not None:
            checks.append(("distill.tau_fixed", 0 < self.distill.tau_fixed <= 1, "must lie in (0, 1]"))
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(key, msg)
        s = self.schedule
        if not 0 <= s.start_fraction < s.stop_fraction <= 1:
            raise ConfigError("schedule.stop_fraction", "need 0 <= start_fraction < stop_fraction <= 1")
        try:
            self.tau_schedule(1000)
        except ConfigError:
            raise
        except TrkdError as exc:
            raise ConfigError("schedule", str(exc)) from exc


def _coerce(key, value, default):
    """Cast ``value`` to the type of ``default``; strings come from ``--set``."""
    if isinstance(value, str) and not isinstance(default, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            raise ConfigError(key, f"cannot parse {value!r}") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key, "must be true or false")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(key, "must be a list of integers")
        return tuple(value)
    if isinstance(default, int) or default is None and key.split(".")[-1] in ("k_start", "k_stop"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, "must be an integer")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, "must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(key, "must be a string")
        return value
    raise ConfigError(key, "unsupported value")  # pragma: no cover


def _build_section(name, values):
    cls = _SECTIONS[name]
    base = cls(_DEFAULT_WIDTHS[name]) if cls is NetSection else cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in values.items():
        dotted = f"{name}.{key}"
        if key not in known:
            raise ConfigError(dotted, "unknown key")
        kwargs[key] = _coerce(dotted, value, getattr(base, key))
    return replace(base, **kwargs)


def parse_overrides(items):
    """``["train.epochs=5", ...]`` to ``{"train.epochs": "5"}``."""
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(item, "override must look like section.key=value")
        out[key.strip()] = value.strip()
    return out


def load_config(path=None, overrides=None):
    raw = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    cfg = RunConfig.from_dict(raw)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


DEFAULT_CONFIG_TOML = """\
# Synthetic class-clustered data.
[dataset]
num_classes = 64
input_dim = 32
samples_per_class = 200
class_separation = 1.0     # scale of the class means
noise_sigma = 1.0          # within-class noise
held_out_fraction = 0.25
seed = 0
num_groups = 0             # > 0 clusters the class means into groups
group_spread = 0.35

[teacher]
widths = [32, 256, 256, 64]   # input, hidden..., embedding

[student]
widths = [32, 64, 32]

[train]
epochs = 30
batch_size = 64
lr_peak = 0.1
lr_final = 5e-5
warmup_epochs = 1.2        # linear warm-up from 0, then exponential decay
momentum = 0.9
aam_scale = 32.0
aam_margin = 0.2
seed = 0
output_dir = "runs"

[distill]
method = "trkd"            # none | kd | dkd | trkd | mse | cos
temperature = 4.0
alpha = 1.0                # dkd target weight
beta = 8.0                 # dkd non-target weight
lambda_m = 1.0             # trkd three-mass weight
lambda_f = 8.0             # trkd confusion-set weight
rescale = true             # multiply by temperature**2
# tau_fixed = 0.05         # replaces the curriculum by a constant cutoff

[schedule]
tau_init = 1.0
tau_final = 0.05
gamma = 0.001
start_fraction = 0.06666666666666667  # of total optimizer steps
stop_fraction = 0.4
# k_start = 0              # absolute steps; override the fractions
# k_stop = 100

[eval]
pairs_per_class = 100
seed = 0
"""
