"""Multivariate CPS series: CSV ingestion, min-max scaling and sliding windows.

A series is stored column-wise as numpy arrays; individual :class:`TimePoint`
views are produced on indexing.  Window pairs are likewise stored as stacked
arrays (:class:`Pairs`) because every consumer works on batches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

NORMAL = 0
ANOMALOUS = 1
UNKNOWN = -1
_VALID_LABELS = (NORMAL, ANOMALOUS, UNKNOWN)


class DataError(ValueError):
    """Raised for malformed input data."""


@dataclass(frozen=True)
class TimePoint:
    t: int
    sensors: np.ndarray
    actuators: np.ndarray
    label: int


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled series with ``m`` sensor and ``k`` actuator channels."""

    t: np.ndarray
    sensors: np.ndarray
    actuators: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.int64)
        sensors = np.asarray(self.sensors, dtype=float)
        actuators = np.asarray(self.actuators, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        n = len(t)
        if n == 0:
            raise DataError("series must be non-empty")
        if sensors.ndim != 2 or actuators.ndim != 2:
            raise DataError("sensors and actuators must be 2-D (length, channels)")
        if sensors.shape[0] != n or actuators.shape[0] != n or labels.shape != (n,):
            raise DataError("column lengths differ")
        if sensors.shape[1] < 1:
            raise DataError("at least one sensor channel is required")
        if n > 1 and np.any(np.diff(t) != 1):
            raise DataError("t must increase by exactly 1 per point")
        if not np.isin(labels, _VALID_LABELS).all():
            raise DataError("labels must be in {0, 1, -1}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "sensors", sensors)
        object.__setattr__(self, "actuators", actuators)
        object.__setattr__(self, "labels", labels)

    @property
    def m(self) -> int:
        return self.sensors.shape[1]

    @property
    def k(self) -> int:
        return self.actuators.shape[1]

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> TimePoint:
        return TimePoint(int(self.t[i]), self.sensors[i], self.actuators[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[TimePoint]:
        return (self[i] for i in range(len(self)))

    @property
    def channels(self) -> np.ndarray:
        """Sensors then actuators, shape ``(length, m + k)``."""
        return np.hstack([self.sensors, self.actuators])

    def with_channels(self, channels: np.ndarray) -> "TimeSeries":
        channels = np.asarray(channels, dtype=float)
        return TimeSeries(self.t, channels[:, : self.m], channels[:, self.m :], self.labels)

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.t[start:stop], self.sensors[start:stop],
                          self.actuators[start:stop], self.labels[start:stop])

    def renumbered(self, t0: int = 1) -> "TimeSeries":
        return TimeSeries(np.arange(t0, t0 + len(self)), self.sensors, self.actuators, self.labels)


def concat(series: Sequence[TimeSeries]) -> TimeSeries:
    """Join series end to end, renumbering ``t`` from the first series' start."""
    if not series:
        raise DataError("nothing to concatenate")
    shapes = {(s.m, s.k) for s in series}
    if len(shapes) != 1:
        raise DataError(f"channel counts differ: {sorted(shapes)}")
    n = sum(len(s) for s in series)
    t0 = int(series[0].t[0])
    return TimeSeries(
        np.arange(t0, t0 + n),
        np.vstack([s.sensors for s in series]),
        np.vstack([s.actuators for s in series]),
        np.concatenate([s.labels for s in series]),
    )


# --------------------------------------------------------------------------- CSV

def _header(m: int, k: int, with_label: bool = True) -> list[str]:
    cols = ["t"] + [f"s{i}" for i in range(m)] + [f"a{i}" for i in range(k)]
    return cols + ["label"] if with_label else cols


def load_csv(path: str | Path) -> TimeSeries:
    """Read ``t,s0..s{m-1},a0..a{k-1}[,label]``; a missing label column means unknown."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_label = header[-1] == "label"
        m = sum(1 for c in header if c.startswith("s"))
        k = sum(1 for c in header if c.startswith("a"))
        if header != _header(m, k, has_label):
            raise DataError(f"{path}: header must be t,s0..s{{m-1}},a0..a{{k-1}},label; got {header}")
        ncol = len(header)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncol:
                raise DataError(f"{path}:{lineno}: expected {ncol} columns, got {len(row)}")
            try:
                t = int(row[0])
                vals = [float(v) for v in row[1 : 1 + m + k]]
                label = int(row[-1]) if has_label else UNKNOWN
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if label not in _VALID_LABELS:
                raise DataError(f"{path}:{lineno}: invalid label {label}")
            rows.append((t, vals, label))
    if not rows:
        raise DataError(f"{path}: no data rows")
    vals = np.array([r[1] for r in rows], dtype=float).reshape(len(rows), m + k)
    try:
        return TimeSeries(
            np.array([r[0] for r in rows]), vals[:, :m], vals[:, m:], np.array([r[2] for r in rows])
        )
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_csv(series: TimeSeries, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header(series.m, series.k))
        for t, row, label in zip(series.t, series.channels, series.labels):
            writer.writerow([int(t), *(repr(float(v)) for v in row), int(label)])


# ------------------------------------------------------------------ normalisation

@dataclass(frozen=True)
class NormStats:
    """Per-channel minimum and maximum, ordered sensors then actuators."""

    lo: np.ndarray
    hi: np.ndarray

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["min"], dtype=float), np.asarray(d["max"], dtype=float))


def fit_norm(series: TimeSeries | Sequence[TimeSeries], subset=None) -> NormStats:
    """Fit min-max stats on ``subset`` (indices) of one series, or on several series."""
    if isinstance(series, TimeSeries):
        data = series.channels
        if subset is not None:
            data = data[np.asarray(subset, dtype=np.int64)]
    else:
        if not series:
            raise DataError("no series to fit normalisation on")
        data = np.vstack([s.channels for s in series])
    if len(data) == 0:
        raise DataError("normalisation subset is empty")
    return NormStats(data.min(axis=0), data.max(axis=0))


def apply_norm(series: TimeSeries, stats: NormStats) -> TimeSeries:
    """Min-max scale; constant channels map to 0 and values are not clamped."""
    span = stats.hi - stats.lo
    safe = np.where(span > 0, span, 1.0)
    scaled = np.where(span > 0, (series.channels - stats.lo) / safe, 0.0)
    return series.with_channels(scaled)


def invert_norm(series: TimeSeries, stats: NormStats) -> TimeSeries:
    return series.with_channels(series.channels * (stats.hi - stats.lo) + stats.lo)


# ----------------------------------------------------------------- window pairs

@dataclass(frozen=True)
class WindowPair:
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    label: int


@dataclass(frozen=True)
class Pairs:
    """A batch of window pairs stored as stacked arrays.

    ``x`` is ``(n, w*(m+k))`` flattened time-major, ``u`` is ``(n, k)``
    (actuators at the window's last step), ``y`` is ``(n, m)`` (sensors one
    step after the window) and ``t`` holds the target point's timestamp.
    """

    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    labels: np.ndarray
    t: np.ndarray
    w: int

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i) -> WindowPair:
        return WindowPair(self.x[i], self.u[i], self.y[i], int(self.labels[i]))

    def __iter__(self) -> Iterator[WindowPair]:
        return (self[i] for i in range(len(self)))

    @property
    def m(self) -> int:
        return self.y.shape[1]

    @property
    def k(self) -> int:
        return self.u.shape[1]

    def windows(self) -> np.ndarray:
        """``x`` reshaped to ``(n, w, m+k)``."""
        return self.x.reshape(len(self), self.w, self.m + self.k)

    def last_sensors(self) -> np.ndarray:
        return self.windows()[:, -1, : self.m]

    def take(self, idx) -> "Pairs":
        idx = np.asarray(idx, dtype=np.int64) if not isinstance(idx, slice) else idx
        return Pairs(self.x[idx], self.u[idx], self.y[idx], self.labels[idx], self.t[idx], self.w)

    def normal(self) -> "Pairs":
        return self.take(np.flatnonzero(self.labels == NORMAL))

    def key(self) -> bytes:
        """Byte signature of every pair, used for exact de-duplication."""
        return b"".join(self.row_keys())

    def row_keys(self) -> list[bytes]:
        rows = np.hstack([self.x, self.u, self.y]) + 0.0  # folds -0.0 into 0.0
        return [r.tobytes() for r in np.ascontiguousarray(rows)]


def empty_pairs(w: int, m: int, k: int) -> Pairs:
    return Pairs(np.zeros((0, w * (m + k))), np.zeros((0, k)), np.zeros((0, m)),
                 np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), w)


def union(*sets: Pairs) -> Pairs:
    """Concatenate pair sets in order, dropping exact duplicates (first copy kept)."""
    sets = [s for s in sets if len(s)]
    if not sets:
        raise DataError("union of empty pair sets")
    seen: set[bytes] = set()
    keep: list[tuple[int, int]] = []
    for si, s in enumerate(sets):
        for i, key in enumerate(s.row_keys()):
            if key not in seen:
                seen.add(key)
                keep.append((si, i))
    parts = []
    for si, s in enumerate(sets):
        parts.append(s.take([i for sj, i in keep if sj == si]))
    return Pairs(
        np.vstack([p.x for p in parts]), np.vstack([p.u for p in parts]),
        np.vstack([p.y for p in parts]), np.concatenate([p.labels for p in parts]),
        np.concatenate([p.t for p in parts]), sets[0].w,
    )


def sliding_pairs(series: TimeSeries, w: int) -> Pairs:
    """All ``len(series) - w`` one-step-ahead window pairs, in order."""
    n = len(series)
    if w < 1:
        raise DataError("window length must be >= 1")
    if n <= w:
        raise DataError(f"series length {n} must exceed window length {w}")
    ch = series.channels
    count = n - w
    windows = np.lib.stride_tricks.sliding_window_view(ch, (w, ch.shape[1]))[:count, 0]
    x = np.ascontiguousarray(windows).reshape(count, -1)
    u = series.actuators[w - 1 : n - 1].copy()
    y = series.sensors[w:].copy()
    return Pairs(x, u, y, series.labels[w:].copy(), series.t[w:].copy(), w)
