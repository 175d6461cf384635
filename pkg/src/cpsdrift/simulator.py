"""Sine-wave CPS generator with injected noise anomalies, and device-evolution transforms.

Noise is drawn from a portable stream: PCG64 raw 64-bit outputs are mapped to
doubles in [0, 1) as ``(r >> 11) * 2**-53`` and turned into standard normals
with the Box-Muller transform (both variates of each pair are used).  The PCG64
bit stream is fixed by its published algorithm, so generated series are the
same on every platform and numpy version.

Each tick draws the hidden-state noise and then the measurement noise, always
both, so toggling anomaly injection never shifts the stream.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .timeseries import ANOMALOUS, NORMAL, DataError, TimeSeries

ANOMALY_BLOCK = 1000
ANOMALY_LEN = 100
SWITCH_PERIOD = 30


class NormalStream:
    """Seeded standard-normal stream (PCG64 + Box-Muller)."""

    def __init__(self, seed: int):
        self._bits = np.random.PCG64(seed)

    def uniform(self, n: int) -> np.ndarray:
        raw = self._bits.random_raw(n)
        return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(2.0 * np.pi * u2)
        out[1::2] = r * np.sin(2.0 * np.pi * u2)
        return out[:n]


@dataclass(frozen=True)
class SimConfig:
    T: int = 10000
    amp: float = 1.0
    freq: float = 1.0
    u0: float = 3.0
    meas_noise_std: float = 0.2
    proc_noise_std: float = 0.2
    anomaly_noise_std: float = 0.6
    seed: int = 0
    inject_anomalies: bool = False

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if min(self.meas_noise_std, self.proc_noise_std, self.anomaly_noise_std) < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if self.freq == 0:
            raise ValueError("freq must be non-zero")


def anomaly_mask(T: int) -> np.ndarray:
    """Offsets 0..99 of every 1000-point block are anomalous."""
    return (np.arange(T) % ANOMALY_BLOCK) < ANOMALY_LEN


def simulate(cfg: SimConfig) -> TimeSeries:
    """One sensor ``x`` and one actuator ``u`` following the switched sine system.

    For ``t = 1..T``: ``u`` flips to ``9 - u`` whenever ``t % 30 == 0``;
    ``z = amp*sin(t/freq*u) + e1`` and ``x = 2*z + e2``.  ``e1`` is the
    measurement noise (its std is raised to ``anomaly_noise_std`` inside
    anomaly blocks) and ``e2`` the process noise.
    """
    T = cfg.T
    t = np.arange(1, T + 1)
    u = np.empty(T)
    cur = cfg.u0
    for i, ti in enumerate(t):
        if ti % SWITCH_PERIOD == 0:
            cur = 9.0 - cur
        u[i] = cur
    noise = NormalStream(cfg.seed).normal(2 * T).reshape(T, 2)
    if cfg.inject_anomalies:
        mask = anomaly_mask(T)
    else:
        mask = np.zeros(T, dtype=bool)
    z_std = np.where(mask, cfg.anomaly_noise_std, cfg.meas_noise_std)
    z = cfg.amp * np.sin(t / cfg.freq * u) + z_std * noise[:, 0]
    x = 2.0 * z + cfg.proc_noise_std * noise[:, 1]
    labels = np.where(mask, ANOMALOUS, NORMAL)
    return TimeSeries(t, x[:, None], u[:, None], labels)


@dataclass(frozen=True)
class EvolveSpec:
    mode: str = "mix"
    n_devices: int = 1
    seed: int = 0
    factor_range: tuple[float, float] = (0.95, 1.05)

    def __post_init__(self):
        if self.mode not in ("remove", "upgrade", "mix"):
            raise ValueError(f"unknown evolution mode {self.mode!r}")
        if self.n_devices < 1:
            raise ValueError("n_devices must be >= 1")
        lo, hi = self.factor_range
        if lo > hi:
            raise ValueError("factor_range must be (low, high)")


def evolve(series: TimeSeries, spec: EvolveSpec) -> TimeSeries:
    """Apply a remove / upgrade / mix device evolution to ``series``.

    Channels are indexed sensors first, then actuators.  Removed channels are
    zero-filled so the dimensionality is preserved; upgraded channels are
    multiplied by one factor per channel drawn from ``factor_range``.
    """
    n_ch = series.m + series.k
    if spec.n_devices > n_ch:
        raise ValueError(f"n_devices={spec.n_devices} exceeds channel count {n_ch}")
    rng = np.random.default_rng(spec.seed)
    ch = series.channels.copy()
    if spec.mode in ("remove", "mix"):
        gone = rng.choice(n_ch, size=spec.n_devices, replace=False)
        ch[:, gone] = 0.0
    if spec.mode in ("upgrade", "mix"):
        picked = rng.choice(n_ch, size=spec.n_devices, replace=False)
        lo, hi = spec.factor_range
        factors = rng.uniform(lo, hi, size=spec.n_devices) if hi > lo else np.full(spec.n_devices, lo)
        ch[:, picked] = ch[:, picked] * factors
    return series.with_channels(ch)


DRIFT_AMPS = (1.2, 1.4, 1.6, 1.8, 2.0)
DRIFT_FREQS = (2.0, 4.0, 6.0, 8.0, 10.0)


def make_tasks(
    base: SimConfig,
    amps: Sequence[float] = DRIFT_AMPS,
    freqs: Sequence[float] = DRIFT_FREQS,
    train_len: int = 500,
    test_len: int = 2000,
) -> list[tuple[TimeSeries, TimeSeries]]:
    """Incremental tasks: an anomaly-free train split and an anomaly-injected test split each."""
    if len(amps) != len(freqs):
        raise DataError("amps and freqs must have the same length")
    tasks = []
    for i, (amp, freq) in enumerate(zip(amps, freqs)):
        seed = base.seed + 7919 * (i + 1)
        train = simulate(replace(base, T=train_len, amp=amp, freq=freq, seed=seed,
                                 inject_anomalies=False))
        test = simulate(replace(base, T=test_len, amp=amp, freq=freq, seed=seed + 1,
                                inject_anomalies=True))
        tasks.append((train, test))
    return tasks
