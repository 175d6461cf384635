"""Label-free dynamic threshold from the low-density tail of a Gaussian KDE of scores."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

H_FLOOR = 1e-6
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class ThresholdConfig:
    Z: int = 1000
    delta: float = 0.05
    memory: int = 10000

    def __post_init__(self):
        if self.Z < 2:
            raise ValueError("Z must be >= 2")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.memory < 1:
            raise ValueError("memory capacity must be >= 1")


@dataclass
class ScoreMemory:
    """Bounded FIFO of the most recent scores."""

    capacity: int = 10000
    buffer: deque = field(default_factory=deque)

    def __post_init__(self):
        self.buffer = deque(self.buffer, maxlen=self.capacity)

    def push(self, scores: Iterable[float]) -> "ScoreMemory":
        self.buffer.extend(float(s) for s in scores)
        return self

    def values(self) -> np.ndarray:
        return np.fromiter(self.buffer, dtype=float, count=len(self.buffer))

    def __len__(self) -> int:
        return len(self.buffer)


def push_scores(memory: ScoreMemory, scores: Iterable[float]) -> ScoreMemory:
    return memory.push(scores)


@dataclass(frozen=True)
class KdeResult:
    grid: np.ndarray
    densities: np.ndarray
    h: float
    peak_index: int
    threshold: float
    delta: float

    def to_dict(self) -> dict:
        return {"h": self.h, "peak_index": self.peak_index, "peak": float(self.grid[self.peak_index]),
                "threshold": self.threshold, "delta": self.delta, "Z": len(self.grid)}


def query_grid(scores, Z: int = 1000) -> np.ndarray:
    """``Z`` evenly spaced points from ``min - 3*std`` to ``max + 3*std`` (population std)."""
    if Z < 2:
        raise ValueError("Z must be >= 2")
    x = np.asarray(scores, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one score")
    sigma = x.std()
    return np.linspace(x.min() - 3.0 * sigma, x.max() + 3.0 * sigma, Z)


def bandwidth(scores) -> float:
    """Rule-of-thumb bandwidth ``(4 / (3n))**(1/5) * std``, floored at 1e-6."""
    x = np.asarray(scores, dtype=float)
    if x.size == 0:
        raise ValueError("need at least one score")
    return max((4.0 / (3.0 * x.size)) ** 0.2 * x.std(), H_FLOOR)


def kde_pdf(scores, grid, h: float, chunk: int = 256) -> np.ndarray:
    """Gaussian KDE of ``scores`` evaluated on ``grid``."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(scores, dtype=float)
    g = np.asarray(grid, dtype=float)
    out = np.empty(len(g))
    norm = _INV_SQRT_2PI / h / x.size
    for start in range(0, len(g), chunk):
        d = (g[start : start + chunk, None] - x[None, :]) / h
        out[start : start + chunk] = np.exp(-0.5 * d * d).sum(axis=1) * norm
    return out


def find_peak(densities) -> int:
    d = np.asarray(densities)
    if d.size == 0:
        raise ValueError("empty densities")
    return int(np.argmax(d))


def ldp_threshold(grid, densities, peak_index: int, delta: float) -> float:
    """First grid value right of the peak whose density drops below ``delta``;
    the last grid value when the density never does."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    d = np.asarray(densities)
    below = np.flatnonzero(d[peak_index + 1 :] < delta)
    if below.size == 0:
        return float(grid[-1])
    return float(grid[peak_index + 1 + below[0]])


def compute_threshold(scores, cfg: ThresholdConfig = ThresholdConfig()) -> KdeResult:
    x = np.asarray(scores, dtype=float)
    h = bandwidth(x)
    if x.size == 0:
        raise ValueError("need at least one score")
    if x.std() == 0.0:
        # no density contrast: put the cut just above the common value
        grid = np.full(cfg.Z, x[0])
        dens = kde_pdf(x, grid, h)
        return KdeResult(grid, dens, h, 0, float(x[0] + 3.0 * H_FLOOR), cfg.delta)
    grid = query_grid(x, cfg.Z)
    dens = kde_pdf(x, grid, h)
    peak = find_peak(dens)
    return KdeResult(grid, dens, h, peak, ldp_threshold(grid, dens, peak, cfg.delta), cfg.delta)


def classify(scores, threshold: float) -> np.ndarray:
    return (np.asarray(scores, dtype=float) > threshold).astype(np.int64)
