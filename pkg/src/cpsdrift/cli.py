"""``cpsdrift`` command line: simulate, evolve, train, run and eval.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.  Diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .evaluation import make_report, roc
from .mixup import MixupConfig
from .neuralnet import NumericalError
from .pipeline import (MODES, Experiment, RunConfig, TaskError, pretrain, pretrained_from_dict,
                       pretrained_to_dict, run_experiment, split_task)
from .scoring import ScoringConfig
from .simulator import DRIFT_AMPS, DRIFT_FREQS, EvolveSpec, SimConfig, evolve, make_tasks, simulate
from .ssm import SSMModel, TrainConfig
from .threshold import ThresholdConfig, compute_threshold
from .timeseries import DataError, TimeSeries, load_csv, save_csv

log = logging.getLogger("cpsdrift")

ENV_CONFIG = "CPSDRIFT_CONFIG"

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# config file sections and the dataclass each one fills
SECTIONS: dict[str, type] = {
    "run": RunConfig,
    "sim": SimConfig,
    "mixup": MixupConfig,
    "train": TrainConfig,
    "threshold": ThresholdConfig,
    "scoring": ScoringConfig,
}
_NESTED = ("mixup", "train", "threshold", "scoring")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ config

def _scalar_fields(cls: type) -> dict[str, Any]:
    defaults = cls()
    return {f.name: getattr(defaults, f.name) for f in dataclasses.fields(cls)
            if not (cls is RunConfig and f.name in _NESTED)}


def config_keys() -> list[tuple[str, Any]]:
    return [(f"{sec}.{key}", val) for sec, cls in SECTIONS.items()
            for key, val in _scalar_fields(cls).items()]


def _coerce(section: str, key: str, value: Any, default: Any) -> Any:
    where = f"{section}.{key}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UsageError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise UsageError(f"{where}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UsageError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or len(value) != len(default):
            raise UsageError(f"{where}: expected a list of {len(default)} values")
        return tuple(float(v) for v in value)
    if not isinstance(value, str):
        raise UsageError(f"{where}: expected a string, got {value!r}")
    return value


def merge_config(base: dict, updates: dict) -> dict:
    """Validate ``updates`` (section -> key -> value) and merge them into ``base``."""
    out = {sec: dict(vals) for sec, vals in base.items()}
    if not isinstance(updates, dict):
        raise UsageError("config must be a JSON object of sections")
    for sec, vals in updates.items():
        if sec not in SECTIONS:
            raise UsageError(f"unknown config section {sec!r} (known: {', '.join(SECTIONS)})")
        if not isinstance(vals, dict):
            raise UsageError(f"config section {sec!r} must be an object")
        fields = _scalar_fields(SECTIONS[sec])
        for key, value in vals.items():
            if key not in fields:
                raise UsageError(f"unknown config key {sec}.{key}")
            out.setdefault(sec, {})[key] = _coerce(sec, key, value, fields[key])
    return out


def load_config(path: str | os.PathLike | None) -> dict:
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    return merge_config({}, raw)


def parse_set(items: Sequence[str]) -> dict:
    updates: dict = {}
    for item in items:
        key, sep, text = item.partition("=")
        sec, dot, name = key.partition(".")
        if not sep or not dot:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        updates.setdefault(sec, {})[name] = value
    return updates


def build_run_config(conf: dict) -> RunConfig:
    nested = {sec: SECTIONS[sec](**conf.get(sec, {})) for sec in _NESTED}
    return RunConfig(**conf.get("run", {}), **nested)


def resolve_config(args, flag_updates: dict | None = None) -> dict:
    conf = load_config(args.config)
    conf = merge_config(conf, parse_set(args.set or []))
    if flag_updates:
        conf = merge_config(conf, flag_updates)
    return conf


def _flags(pairs: dict[str, Any]) -> dict:
    """``{"sec.key": value}`` for the flags that were actually given."""
    out: dict = {}
    for dotted, value in pairs.items():
        if value is not None:
            sec, key = dotted.split(".")
            out.setdefault(sec, {})[key] = value
    return out


# ------------------------------------------------------------------ output helpers

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(obj, indent=2, default=_json_default) + "\n"
    if path is not None:
        path.write_text(text, encoding="utf-8")
    return text


def _num(v: float) -> str:
    return repr(float(v))


def write_rows(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_scores(path: Path, t, scores, labels) -> None:
    write_rows(path, ["t", "score", "label"],
               ((int(a), _num(b), int(c)) for a, b, c in zip(t, scores, labels)))


def write_pdf(path: Path, grid, densities) -> None:
    write_rows(path, ["grid", "density"], ((_num(g), _num(d)) for g, d in zip(grid, densities)))


def write_roc(path: Path, scores, labels) -> bool:
    try:
        points, _ = roc(scores, labels)
    except ValueError:
        return False
    write_rows(path, ["fpr", "tpr", "score"], ((_num(f), _num(t), _num(s)) for f, t, s in points))
    return True


def read_scores(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["t", "score", "label"]:
        raise DataError(f"{path}:1: expected header t,score,label")
    t, s, lab = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        try:
            t.append(int(row[0]))
            s.append(float(row[1]))
            lab.append(int(row[2]))
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric value") from None
    if not s:
        raise DataError(f"{path}: no scores")
    scores = np.asarray(s)
    if not np.all(np.isfinite(scores)):
        raise DataError(f"{path}: scores must be finite")
    return np.asarray(t), scores, np.asarray(lab)


# ------------------------------------------------------------------ commands

def cmd_simulate(args) -> int:
    flags = _flags({"sim.T": args.T, "sim.amp": args.amp, "sim.freq": args.freq, "sim.seed": args.seed,
                    "sim.u0": args.u0, "sim.inject_anomalies": True if args.anomalies else None})
    conf = resolve_config(args, flags)
    sim = SimConfig(**conf.get("sim", {}))
    if args.schedule == "single":
        if not args.out:
            raise UsageError("simulate: --out is required")
        save_csv(simulate(sim), Path(args.out))
        return EXIT_OK
    if not args.out_dir:
        raise UsageError("simulate --schedule drift: --out-dir is required")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_csv(simulate(dataclasses.replace(sim, inject_anomalies=False)), out / "initial.csv")
    names = []
    for i, (train, test) in enumerate(make_tasks(sim, DRIFT_AMPS, DRIFT_FREQS, args.train_len,
                                                 args.test_len), start=1):
        save_csv(train, out / f"task{i}_train.csv")
        save_csv(test, out / f"task{i}_test.csv")
        names.append(f"{out / f'task{i}_train.csv'}:{out / f'task{i}_test.csv'}")
    print(",".join(names))
    return EXIT_OK


def cmd_evolve(args) -> int:
    spec = EvolveSpec(args.mode, args.devices, args.seed, tuple(args.factor_range))
    save_csv(evolve(load_csv(args.input), spec), Path(args.out))
    return EXIT_OK


def _run_config(args) -> RunConfig:
    flags = _flags({"run.seed": getattr(args, "seed", None), "run.w": getattr(args, "w", None),
                    "train.epochs": getattr(args, "epochs", None),
                    "threshold.delta": getattr(args, "delta", None)})
    mode = getattr(args, "mode", None)
    if mode and mode != "all":
        flags.setdefault("run", {})["mode"] = mode
    return build_run_config(resolve_config(args, flags))


def cmd_train(args) -> int:
    cfg = _run_config(args)
    pre = pretrain(cfg, load_csv(args.initial))
    pre.model.save(args.out, extra={"pretrained": pretrained_to_dict(pre), "config": cfg.to_dict()})
    sys.stdout.write(dump_json(pre.report.to_dict()))
    return EXIT_OK


def parse_tasks(spec: str | None, train_len: int,
                test_len: int | None = None) -> list[tuple[TimeSeries, TimeSeries]]:
    tasks = []
    for item in filter(None, (spec or "").split(",")):
        train_path, sep, test_path = item.partition(":")
        if sep:
            tasks.append((load_csv(train_path), load_csv(test_path)))
        else:
            tasks.append(split_task(load_csv(train_path), train_len, test_len))
    return tasks


def write_experiment(exp: Experiment, out: Path, inputs: dict) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    artifacts = ["pretrain_report.json", "summary.json", "reports.json"]
    dump_json(exp.pre.report.to_dict(), out / "pretrain_report.json")
    write_pdf(out / "pretrain_pdf.csv", exp.pre.kde.grid, exp.pre.kde.densities)
    artifacts.append("pretrain_pdf.csv")
    for mode, run in exp.runs.items():
        (out / mode).mkdir(exist_ok=True)
        for r in run.tasks:
            stem = f"{mode}/task{r.task}"
            dump_json(r.to_dict(), out / f"{stem}_report.json")
            write_scores(out / f"{stem}_scores.csv", r.t, r.scores, r.labels)
            write_pdf(out / f"{stem}_pdf.csv", r.kde.grid, r.kde.densities)
            artifacts += [f"{stem}_report.json", f"{stem}_scores.csv", f"{stem}_pdf.csv"]
            if write_roc(out / f"{stem}_roc.csv", r.scores, r.labels):
                artifacts.append(f"{stem}_roc.csv")
    summary = exp.summaries()
    dump_json(summary, out / "summary.json")
    dump_json(exp.reports(), out / "reports.json")
    manifest = {"config": exp.config.to_dict(), "seed": exp.config.seed, "modes": list(exp.runs),
                "inputs": inputs, "artifacts": artifacts}
    dump_json(manifest, out / "manifest.json")
    return summary


def cmd_run(args) -> int:
    cfg = _run_config(args)
    modes = list(MODES) if args.mode == "all" else [cfg.mode]
    initial = load_csv(args.initial)
    tasks = parse_tasks(args.tasks, cfg.train_len, cfg.test_len)
    pre = None
    if args.model:
        ckpt = json.loads(Path(args.model).read_text(encoding="utf-8"))
        model = SSMModel.from_dict(ckpt)
        pre = pretrained_from_dict(model, ckpt.get("meta", {}).get("pretrained", {}), cfg)
    exp = run_experiment(cfg, initial, tasks, modes, pre=pre)
    inputs = {"initial": args.initial, "tasks": args.tasks or "", "model": args.model}
    summary = write_experiment(exp, Path(args.out_dir), inputs)
    sys.stdout.write(dump_json(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    flags = _flags({"threshold.delta": args.delta, "threshold.Z": args.Z})
    conf = resolve_config(args, flags)
    tcfg = ThresholdConfig(**conf.get("threshold", {}))
    _, scores, labels = read_scores(Path(args.scores))
    kde = compute_threshold(scores, tcfg)
    result = {**make_report(scores, labels, kde.threshold).to_dict(), "kde": kde.to_dict()}
    text = dump_json(result, Path(args.out) if args.out else None)
    if not args.out:
        sys.stdout.write(text)
    if args.pdf:
        write_pdf(Path(args.pdf), kde.grid, kde.densities)
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _keys_epilog() -> str:
    lines = ["config keys (JSON sections, or --set section.key=value) and defaults:"]
    lines += [f"  {key} = {json.dumps(val, default=_json_default)}" for key, val in config_keys()]
    lines.append(f"\nThe default config file path may be given in ${ENV_CONFIG}.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    parser = _Parser(prog="cpsdrift", description="Incremental anomaly detection for evolving CPS telemetry.",
                     epilog=_keys_epilog(), formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help=f"JSON config file (default: ${ENV_CONFIG})")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one config key; repeatable")

    p = sub.add_parser("simulate", help="write simulated series as CSV", epilog=_keys_epilog(),
                       formatter_class=fmt)
    common(p)
    p.add_argument("--schedule", choices=("single", "drift"), default="single",
                   help="one series, or the initial series plus the five-task drift schedule")
    p.add_argument("--T", type=int)
    p.add_argument("--amp", type=float)
    p.add_argument("--freq", type=float)
    p.add_argument("--u0", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--anomalies", action="store_true", help="inject anomaly blocks")
    p.add_argument("--train-len", type=int, default=500)
    p.add_argument("--test-len", type=int, default=2000)
    p.add_argument("--out", help="output CSV (single)")
    p.add_argument("--out-dir", help="output directory (drift)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evolve", help="apply a device evolution to a CSV series")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("remove", "upgrade", "mix"), default="mix")
    p.add_argument("--devices", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--factor-range", type=float, nargs=2, default=(0.95, 1.05), metavar=("LO", "HI"))
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("train", help="pre-train a model on an initial series", epilog=_keys_epilog(),
                       formatter_class=fmt)
    common(p)
    p.add_argument("--initial", required=True)
    p.add_argument("--out", required=True, help="checkpoint JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--w", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run the incremental tasks and write reports", epilog=_keys_epilog(),
                       formatter_class=fmt)
    common(p)
    p.add_argument("--mode", choices=(*MODES, "all"))
    p.add_argument("--initial", required=True)
    p.add_argument("--tasks", help="comma-separated task CSVs (split at run.train_len) "
                                   "or TRAIN.csv:TEST.csv pairs")
    p.add_argument("--model", help="pre-trained checkpoint from 'train'")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--w", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="threshold and metrics for a scores CSV", epilog=_keys_epilog(),
                       formatter_class=fmt)
    common(p)
    p.add_argument("--scores", required=True, help="CSV with header t,score,label")
    p.add_argument("--delta", type=float)
    p.add_argument("--Z", type=int)
    p.add_argument("--out", help="report JSON (default: stdout)")
    p.add_argument("--pdf", help="also write the density curve as CSV")
    p.set_defaults(func=cmd_eval)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, TaskError):
        return _exit_code(exc.cause)
    if isinstance(exc, NumericalError) or isinstance(exc, FloatingPointError):
        return EXIT_NUMERIC
    if isinstance(exc, (DataError, OSError, json.JSONDecodeError)):
        return EXIT_DATA
    if isinstance(exc, (UsageError, ValueError, TypeError)):
        return EXIT_USAGE
    return EXIT_DATA


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, NumericalError, TaskError, OSError, ValueError, TypeError) as exc:
        print(f"cpsdrift {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
