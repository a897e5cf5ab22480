"""Command line entry point: ``trkd <subcommand> ...``.

Exit codes: 0 success, 2 configuration or shape error, 3 numerical failure
or divergence, 4 I/O or file-format error.
"""
import argparse
import json
import sys

from .config import DEFAULT_CONFIG_TOML, load_config, parse_overrides
from .estimators import METHODS
from .exceptions import (ClassIndexError, ConfigError, DegenerateInputError, DegenerateMassError,
                         EmptySetError, FormatError, InvalidParameterError, ShapeError)
from .io import analyze_partitions, read_dump
from .pipeline import distill_student, evaluate_checkpoint, train_teacher
from .schedule import tau_table
from .selfcheck import FAULTS, run_selfcheck

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _config_args(p):
    p.add_argument("--config", metavar="PATH", help="TOML run configuration (defaults when omitted)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable; wins over the file")


def build_parser():
    parser = _Parser(prog="trkd", description="Teacher training, distillation and evaluation on synthetic data.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-teacher", help="train the teacher; writes checkpoint, logs and a logit dump")
    _config_args(p)
    p.add_argument("--out-dir", metavar="DIR", help="output directory (default: train.output_dir)")

    p = sub.add_parser("distill", help="distil a student from a teacher checkpoint")
    _config_args(p)
    p.add_argument("--method", choices=METHODS, help="distillation objective (default: distill.method)")
    p.add_argument("--tau-fixed", type=float, metavar="TAU", help="constant cutoff instead of the curriculum")
    p.add_argument("--teacher", metavar="PATH", help="teacher checkpoint (default: <out-dir>/teacher.ckpt)")
    p.add_argument("--out-dir", metavar="DIR", help="output directory (default: train.output_dir)")

    p = sub.add_parser("evaluate", help="EER of a checkpoint on the held-out split")
    _config_args(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--scores", metavar="PATH", help="write one 'tgt|non score' line per trial")

    p = sub.add_parser("analyze", help="confusion-set statistics of a logit dump, one JSON line per tau")
    p.add_argument("dump", metavar="DUMP")
    p.add_argument("--tau", type=float, nargs="+", required=True, metavar="TAU")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--output", metavar="PATH", help="write JSONL here instead of stdout")

    p = sub.add_parser("selfcheck", help="randomized identity and gradient suites")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", choices=FAULTS, help="tamper with the three-mass loss (negative control)")

    p = sub.add_parser("schedule-dump", help="print the (step, tau) table of the configured schedule")
    _config_args(p)
    p.add_argument("--steps", type=int, required=True, metavar="N")

    sub.add_parser("example-config", help="print a complete commented configuration")
    return parser


def _load(args, extra=None):
    overrides = parse_overrides(args.overrides)
    overrides.update(extra or {})
    return load_config(args.config, overrides)


def _print_json(obj, out=None):
    line = json.dumps(obj)
    if out is None:
        print(line)
    else:
        out.write(line + "\n")


def cmd_train_teacher(args):
    cfg = _load(args)
    teacher, ckpt = train_teacher(cfg, args.out_dir)
    last = teacher.history_[-1]
    _print_json({"checkpoint": ckpt, "epochs": len(teacher.history_),
                 "final_loss": last["loss"], "final_accuracy": last["accuracy"]})


def cmd_distill(args):
    extra = {}
    if args.method is not None:
        extra["distill.method"] = args.method
    if args.tau_fixed is not None:
        extra["distill.tau_fixed"] = args.tau_fixed
    cfg = _load(args, extra)
    out_dir = args.out_dir or cfg.train.output_dir
    teacher = args.teacher or f"{out_dir}/teacher.ckpt"
    try:
        open(teacher, "rb").close()
    except OSError as exc:
        raise OSError(f"teacher checkpoint not found: {teacher} (run train-teacher first)") from exc
    student, ckpt = distill_student(cfg, teacher, out_dir)
    last = student.history_[-1]
    _print_json({"checkpoint": ckpt, "method": cfg.distill.method,
                 "final_loss": last["loss"], "final_accuracy": last["accuracy"]})


def cmd_evaluate(args):
    cfg = _load(args)
    report = evaluate_checkpoint(cfg, args.checkpoint, args.scores)
    print(f"EER {report['eer_percent']:.4f}%", file=sys.stderr)
    _print_json(report)


def cmd_analyze(args):
    dump = read_dump(args.dump)
    rows = analyze_partitions(dump, args.tau, args.temperature)
    if args.output:
        with open(args.output, "w") as fh:
            for row in rows:
                _print_json(row, fh)
    else:
        for row in rows:
            _print_json(row)


def cmd_selfcheck(args):
    if args.trials < 1:
        raise ConfigError("--trials", "must be >= 1")
    results = run_selfcheck(args.trials, args.seed, args.inject_fault)
    for res in results:
        print(res.line())
    failed = [r.name for r in results if not r.passed]
    print(f"{'FAIL' if failed else 'PASS'} selfcheck ({len(results) - len(failed)}/{len(results)} suites)")
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_schedule_dump(args):
    if args.steps < 1:
        raise ConfigError("--steps", "must be >= 1")
    cfg = _load(args)
    if cfg.distill.tau_fixed is None and (cfg.schedule.k_start is None and args.steps < 2):
        raise ConfigError("--steps", "need at least 2 steps to place the decay window")
    sched = cfg.tau_schedule(args.steps)
    ks, taus = tau_table(sched, args.steps)
    print("k\ttau")
    for k, tau in zip(ks, taus):
        print(f"{int(k)}\t{float(tau)!r}")


def cmd_example_config(args):
    sys.stdout.write(DEFAULT_CONFIG_TOML)


_COMMANDS = {
    "train-teacher": cmd_train_teacher,
    "distill": cmd_distill,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "selfcheck": cmd_selfcheck,
    "schedule-dump": cmd_schedule_dump,
    "example-config": cmd_example_config,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args) or EXIT_OK
    except (ConfigError, ShapeError, ClassIndexError, InvalidParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (FloatingPointError, DegenerateMassError, DegenerateInputError, EmptySetError) as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"numerical failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
