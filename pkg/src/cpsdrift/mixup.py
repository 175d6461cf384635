"""Temporal mixup: blend historical windows with moving-averaged evolving windows."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .timeseries import NORMAL, DataError, Pairs


@dataclass(frozen=True)
class MixupConfig:
    lam: float = 0.2
    N: int = 2
    seed: int = 0
    max_lam: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("mixing rate must lie in [0, 1]")
        if self.N < 2 or self.N % 2:
            raise ValueError("mixed window length N must be even and >= 2")


def moving_average(seq: np.ndarray, N: int) -> np.ndarray:
    """Centered mean over steps ``d-N/2 .. d+N/2`` along axis -2, clamped at the edges.

    Works on ``(steps, channels)`` or batched ``(n, steps, channels)`` arrays.
    """
    half = N // 2
    steps = seq.shape[-2]
    csum = np.cumsum(seq, axis=-2)
    zero = np.zeros(seq.shape[:-2] + (1, seq.shape[-1]))
    csum = np.concatenate([zero, csum], axis=-2)
    d = np.arange(steps)
    lo = np.maximum(d - half, 0)
    hi = np.minimum(d + half, steps - 1) + 1
    counts = (hi - lo)[:, None]
    return (csum[..., hi, :] - csum[..., lo, :]) / counts


def temporal_mixup(hist: np.ndarray, meta: np.ndarray, cfg: MixupConfig) -> np.ndarray:
    """``lam * hist[d] + (1 - lam) * mean(meta[d-N/2 .. d+N/2])`` for every step ``d``.

    ``hist`` and ``meta`` are windows of identical ``(steps, channels)`` shape
    (optionally with a leading batch axis).
    """
    hist = np.asarray(hist, dtype=float)
    meta = np.asarray(meta, dtype=float)
    if hist.shape != meta.shape:
        raise DataError(f"shape mismatch: {hist.shape} vs {meta.shape}")
    return cfg.lam * hist + (1.0 - cfg.lam) * moving_average(meta, cfg.N)


def build_mixed_dataset(d_train: Pairs, d_meta: Pairs, cfg: MixupConfig) -> Pairs:
    """One mixed pair per historical pair, each paired with a random evolving pair.

    Targets are mixed with the same rate against the evolving pair's target;
    ``u`` is read from the mixed window's last step; all outputs are normal.
    """
    if len(d_train) == 0 or len(d_meta) == 0:
        raise DataError("mixup needs non-empty historical and evolving sets")
    if (d_train.w, d_train.m, d_train.k) != (d_meta.w, d_meta.m, d_meta.k):
        raise DataError("historical and evolving pairs differ in shape")
    if cfg.lam >= cfg.max_lam:
        warnings.warn(f"mixing rate {cfg.lam} >= {cfg.max_lam}: historical samples dominate",
                      stacklevel=2)
    rng = np.random.default_rng(cfg.seed)
    pick = rng.integers(0, len(d_meta), size=len(d_train))
    partner = d_meta.take(pick)
    mixed = temporal_mixup(d_train.windows(), partner.windows(), cfg)
    y = cfg.lam * d_train.y + (1.0 - cfg.lam) * partner.y
    n = len(d_train)
    return Pairs(
        mixed.reshape(n, -1),
        mixed[:, -1, d_train.m :].copy(),
        y,
        np.full(n, NORMAL, dtype=np.int64),
        d_train.t.copy(),
        d_train.w,
    )
