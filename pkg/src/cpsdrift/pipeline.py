"""Per-task incremental adaptation loop and the static / it / iadcps comparison modes.

static  the pre-trained model, normalisation, noise model and threshold are frozen.
it      standard training on the retained history plus the task's few normal samples.
iadcps  as ``it`` with temporal-mixup samples added, followed by meta fine-tuning.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .evaluation import Report, make_report
from .mixup import MixupConfig, build_mixed_dataset
from .scoring import NoiseModel, ScoringConfig, estimate_noise, score_pairs
from .ssm import SSMModel, TrainConfig, meta_finetune, train_standard
from .threshold import KdeResult, ScoreMemory, ThresholdConfig, compute_threshold
from .timeseries import (ANOMALOUS, DataError, NormStats, Pairs, TimeSeries, apply_norm, fit_norm,
                         sliding_pairs, union)

log = logging.getLogger(__name__)

MODES = ("static", "it", "iadcps")


@dataclass
class RunConfig:
    mode: str = "iadcps"
    w: int = 31
    seed: int = 0
    train_len: int = 1000
    test_len: int = 3000
    d_z: int = 8
    hidden: int = 64
    history_len: int = 1000
    val_fraction: float = 0.2
    merge_meta: bool = True
    continue_on_error: bool = False
    mixup: MixupConfig = field(default_factory=MixupConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    threshold: ThresholdConfig = field(default_factory=ThresholdConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.w < 1 or self.train_len < 1 or self.test_len < 1:
            raise ValueError("window and split lengths must be positive")
        if self.history_len <= self.w:
            raise ValueError("history_len must exceed the window length")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class TaskError(RuntimeError):
    def __init__(self, task: int, stage: str, cause: Exception):
        super().__init__(f"task {task}, stage '{stage}': {type(cause).__name__}: {cause}")
        self.task, self.stage, self.cause = task, stage, cause


@contextmanager
def _stage(task: int, name: str):
    try:
        yield
    except TaskError:
        raise
    except Exception as exc:
        raise TaskError(task, name, exc) from exc


def _recent(series: TimeSeries, n: int) -> TimeSeries:
    return series.slice(max(0, len(series) - n), len(series))


def _trainable(pairs: Pairs) -> Pairs:
    return pairs.take(np.flatnonzero(pairs.labels != ANOMALOUS))


@dataclass
class Pretrained:
    model: SSMModel
    stats: NormStats
    noise: NoiseModel
    val_scores: np.ndarray
    val_labels: np.ndarray
    kde: KdeResult
    report: Report


def pretrained_to_dict(pre: Pretrained) -> dict:
    """Everything besides the network needed to resume from a pre-trained checkpoint."""
    return {"stats": pre.stats.to_dict(), "noise": pre.noise.to_dict(),
            "val_scores": pre.val_scores.tolist(), "val_labels": pre.val_labels.tolist()}


def pretrained_from_dict(model: SSMModel, d: dict, cfg: RunConfig) -> Pretrained:
    if model.w != cfg.w:
        raise DataError(f"checkpoint window {model.w} != configured window {cfg.w}")
    try:
        scores = np.asarray(d["val_scores"], dtype=float)
        labels = np.asarray(d["val_labels"], dtype=np.int64)
        kde = compute_threshold(scores, cfg.threshold)
        return Pretrained(model, NormStats.from_dict(d["stats"]), NoiseModel.from_dict(d["noise"]),
                          scores, labels, kde, make_report(scores, labels, kde.threshold))
    except (KeyError, TypeError) as exc:
        raise DataError(f"checkpoint lacks pre-training metadata: {exc}") from None


@dataclass
class TaskResult:
    task: int
    mode: str
    model: SSMModel
    stats: NormStats
    noise: NoiseModel
    scores: np.ndarray
    labels: np.ndarray
    t: np.ndarray
    kde: KdeResult
    report: Report
    sizes: dict

    def to_dict(self) -> dict:
        return {"task": self.task, "mode": self.mode, **self.report.to_dict(),
                "kde": self.kde.to_dict(), "sizes": self.sizes}


def _seed(cfg: RunConfig, task: int, salt: int) -> int:
    return cfg.seed * 1_000_003 + 1000 * task + salt


def pretrain(cfg: RunConfig, initial: TimeSeries) -> Pretrained:
    """Fit normalisation and the base model on the initial series; calibrate on a held-out tail."""
    stats = fit_norm(initial)
    pairs = _trainable(sliding_pairs(apply_norm(initial, stats), cfg.w))
    n_val = max(10, int(round(cfg.val_fraction * len(pairs))))
    if len(pairs) - n_val < 1:
        raise DataError(f"initial series too short: {len(pairs)} pairs for a {n_val}-pair hold-out")
    train, val = pairs.take(slice(0, len(pairs) - n_val)), pairs.take(slice(len(pairs) - n_val, None))
    model = SSMModel.init(cfg.w, initial.m, initial.k, cfg.d_z, (cfg.hidden,), seed=_seed(cfg, 0, 1))
    model = train_standard(model, train, replace(cfg.train, seed=_seed(cfg, 0, 2)))
    noise = estimate_noise(model, val)
    scores = score_pairs(model, val, noise, cfg.scoring)
    kde = compute_threshold(scores, cfg.threshold)
    report = make_report(scores, val.labels, kde.threshold)
    return Pretrained(model, stats, noise, scores, val.labels, kde, report)


def run_task(model: SSMModel, history: TimeSeries, task: tuple[TimeSeries, TimeSeries],
             cfg: RunConfig, pre: Pretrained, memory: ScoreMemory, index: int = 1,
             mode: str | None = None) -> TaskResult:
    """Adapt ``model`` to one evolving task and score its test split."""
    mode = mode or cfg.mode
    train_series, test_series = task
    if (train_series.m, train_series.k) != (model.m, model.k):
        raise TaskError(index, "input", DataError("task channel counts differ from the model"))
    tcfg = replace(cfg.train, seed=_seed(cfg, index, 2))
    sizes: dict = {}
    if mode == "static":
        stats, noise = pre.stats, pre.noise
    else:
        with _stage(index, "normalise"):
            stats = fit_norm([history, train_series])
    with _stage(index, "windows"):
        d_query = sliding_pairs(apply_norm(test_series, stats), cfg.w)
        sizes["query"] = len(d_query)

    if mode != "static":
        with _stage(index, "windows"):
            d_train = _trainable(sliding_pairs(apply_norm(history, stats), cfg.w))
            d_meta = _trainable(sliding_pairs(apply_norm(train_series, stats), cfg.w))
            sizes.update(train=len(d_train), meta=len(d_meta))
        parts = [d_train]
        if mode == "iadcps":
            with _stage(index, "mixup"):
                mcfg = replace(cfg.mixup, seed=_seed(cfg, index, 3) + cfg.mixup.seed)
                d_mix = build_mixed_dataset(d_train, d_meta, mcfg)
                parts.append(d_mix)
                sizes["mix"] = len(d_mix)
        if mode == "it" or cfg.merge_meta:
            parts.append(d_meta)
        with _stage(index, "train"):
            merge = union(*parts)
            sizes["merge"] = len(merge)
            model = train_standard(model, merge, tcfg)
        if mode == "iadcps":
            with _stage(index, "meta"):
                model = meta_finetune(model, d_meta, tcfg)
        with _stage(index, "noise"):
            noise = estimate_noise(model, d_meta)

    with _stage(index, "score"):
        scores = score_pairs(model, d_query, noise, cfg.scoring)
    with _stage(index, "threshold"):
        memory.push(scores)
        kde = pre.kde if mode == "static" else compute_threshold(memory.values(), cfg.threshold)
    with _stage(index, "report"):
        report = make_report(scores, d_query.labels, kde.threshold)
    log.info("task %d [%s]: auc=%s f1=%.3f thr=%.4g", index, mode, report.auc, report.f1, kde.threshold)
    return TaskResult(index, mode, model, stats, noise, scores, d_query.labels, d_query.t, kde,
                      report, sizes)


@dataclass
class ModeRun:
    mode: str
    tasks: list[TaskResult]
    failures: list[str]

    def summary(self) -> dict:
        aucs = [r.report.auc for r in self.tasks if r.report.auc is not None]
        f1s = [r.report.f1 for r in self.tasks]
        return {
            "mode": self.mode,
            "tasks": len(self.tasks),
            "mean_auc": float(np.mean(aucs)) if aucs else None,
            "mean_f1": float(np.mean(f1s)) if f1s else None,
            "failures": self.failures,
        }


@dataclass
class Experiment:
    config: RunConfig
    pre: Pretrained
    runs: dict[str, ModeRun]

    def summaries(self) -> dict:
        return {
            "pretrain": self.pre.report.to_dict(),
            "modes": {m: r.summary() for m, r in self.runs.items()},
        }

    def reports(self) -> list[dict]:
        return [r.to_dict() for run in self.runs.values() for r in run.tasks]


def run_mode(cfg: RunConfig, pre: Pretrained, initial: TimeSeries,
             tasks: Sequence[tuple[TimeSeries, TimeSeries]], mode: str) -> ModeRun:
    model = pre.model.copy()
    history = _recent(initial, cfg.history_len)
    memory = ScoreMemory(cfg.threshold.memory)
    results, failures = [], []
    for k, task in enumerate(tasks, start=1):
        try:
            res = run_task(model, history, task, cfg, pre, memory, k, mode)
        except TaskError as exc:
            if not cfg.continue_on_error:
                raise
            log.warning("%s", exc)
            failures.append(str(exc))
            continue
        results.append(res)
        model = res.model
        if mode != "static":
            # only the preceding task's normal samples are kept for the next task
            history = _recent(task[0], cfg.history_len)
    return ModeRun(mode, results, failures)


def run_experiment(cfg: RunConfig, initial: TimeSeries, tasks: Sequence[tuple[TimeSeries, TimeSeries]],
                   modes: Sequence[str] | None = None, pre: Pretrained | None = None) -> Experiment:
    """Pre-train once (unless ``pre`` is given), then fold the tasks through every requested mode."""
    modes = list(modes) if modes else [cfg.mode]
    for m in modes:
        if m not in MODES:
            raise ValueError(f"unknown mode {m!r}")
    if pre is None:
        pre = pretrain(cfg, initial)
    runs = {m: run_mode(cfg, pre, initial, tasks, m) for m in modes}
    return Experiment(cfg, pre, runs)


def split_task(series: TimeSeries, train_len: int,
               test_len: int | None = None) -> tuple[TimeSeries, TimeSeries]:
    """First ``train_len`` points train, the next ``test_len`` (default: all the rest) test."""
    if not 0 < train_len < len(series):
        raise DataError(f"cannot split {len(series)} points at {train_len}")
    stop = len(series) if test_len is None else min(len(series), train_len + test_len)
    return series.slice(0, train_len), series.slice(train_len, stop)
