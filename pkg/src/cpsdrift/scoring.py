"""Anomaly scores from an unscented filter run in the model's latent space.

Per query pair the filter (1) pulls the carried latent state toward the
encoding of the current window, (2) propagates sigma points through the
transition net, (3) maps them through the emission net to a predicted sensor
distribution, and (4) scores the observed target by its Mahalanobis distance
under that distribution before applying the usual Kalman correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ssm import SSMModel
from .timeseries import DataError, Pairs, WindowPair

NOISE_FLOOR = 1e-6
S_JITTER = 1e-9


@dataclass(frozen=True)
class ScoringConfig:
    method: str = "filter"
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    encoder_noise: float = 1e-6

    def __post_init__(self):
        if self.method not in ("filter", "residual"):
            raise ValueError(f"unknown scoring method {self.method!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.encoder_noise <= 0:
            raise ValueError("encoder_noise must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Diagonal process (latent) and measurement noise covariances."""

    Q: np.ndarray
    R: np.ndarray

    def to_dict(self) -> dict:
        return {"Q": np.diag(self.Q).tolist(), "R": np.diag(self.R).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        return cls(np.diag(d["Q"]), np.diag(d["R"]))


@dataclass(frozen=True)
class FilterState:
    mean: np.ndarray
    cov: np.ndarray
    Q: np.ndarray
    R: np.ndarray


def estimate_noise(model: SSMModel, pairs: Pairs, floor: float = NOISE_FLOOR) -> NoiseModel:
    """Diagonal noise from normal pairs.

    R is the per-sensor variance of one-step prediction residuals.  Q is the
    per-latent variance of ``h(x_t) - f(h(x_{t-1}), u_{t-1})`` over pairs whose
    targets are consecutive in time.  Both are floored.
    """
    if len(pairs) < 10:
        raise DataError(f"noise estimation needs >= 10 pairs, got {len(pairs)}")
    resid = pairs.y - model.predict(pairs)
    R = np.maximum(resid.var(axis=0), floor)
    Z = model.encode(pairs.x)
    step = np.flatnonzero(np.diff(pairs.t) == 1)
    if len(step) >= 2:
        drift = Z[step + 1] - model.transition(Z[step], pairs.u[step])
        Q = np.maximum(drift.var(axis=0), floor)
    else:
        Q = np.full(model.d_z, floor)
    return NoiseModel(np.diag(Q), np.diag(R))


def sigma_weights(n: int, alpha: float = 1e-3, beta: float = 2.0, kappa: float = 0.0):
    """Scaled sigma-point weights ``(Wm, Wc, lambda)`` for ``2n+1`` points.

    The outer weight is snapped to a binary grid coarse enough that ``2n`` of
    them and their complement are exact, so the mean weights sum to exactly
    one even when they reach 1e6 in magnitude.
    """
    if n + kappa <= 0:
        raise ValueError("n + kappa must be positive")
    lam = alpha**2 * (n + kappa) - n
    w = 0.5 / (n + lam)
    q = np.spacing(max(1.0, 4.0 * n * w)) * 2.0 ** (2 * n).bit_length()
    w = round(w / q) * q
    Wm = np.full(2 * n + 1, w)
    Wc = Wm.copy()
    Wm[0] = 1.0 - 2 * n * w
    Wc[0] = Wm[0] + (1.0 - alpha**2 + beta)
    return Wm, Wc, lam


def _sqrt_psd(A: np.ndarray) -> np.ndarray:
    """Lower factor ``L`` with ``L @ L.T == A`` for a PSD matrix."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sigma_points(mean: np.ndarray, cov: np.ndarray, lam: float) -> np.ndarray:
    n = len(mean)
    L = _sqrt_psd((n + lam) * cov)
    return np.vstack([mean, mean + L.T, mean - L.T])


def _nearest_psd(A: np.ndarray) -> np.ndarray:
    A = 0.5 * (A + A.T)
    vals, vecs = np.linalg.eigh(A)
    if vals.min() >= 0:
        return A
    return (vecs * np.clip(vals, 0.0, None)) @ vecs.T


def _weighted_cov(Wc, A, a_mean, B, b_mean) -> np.ndarray:
    return ((A - a_mean) * Wc[:, None]).T @ (B - b_mean)


def mahalanobis(innov: np.ndarray, S: np.ndarray) -> float:
    """``sqrt(innov' S^-1 innov)``; adds jitter until ``S`` factorises."""
    jitter = 0.0
    eye = np.eye(len(S))
    for _ in range(12):
        try:
            L = np.linalg.cholesky(S + jitter * eye)
            break
        except np.linalg.LinAlgError:
            jitter = S_JITTER if jitter == 0.0 else jitter * 10.0
    else:
        L = np.linalg.cholesky(_nearest_psd(S) + max(jitter, S_JITTER) * eye)
    v = np.linalg.solve(L, innov)
    return float(np.sqrt(v @ v))


def init_state(model: SSMModel, first: WindowPair, noise: NoiseModel) -> FilterState:
    """State at a task boundary: the first window's encoding with covariance Q."""
    return FilterState(model.encode(first.x), noise.Q.copy(), noise.Q, noise.R)


def filter_step(model: SSMModel, state: FilterState, pair: WindowPair,
                cfg: ScoringConfig = ScoringConfig()) -> tuple[FilterState, float]:
    """Advance the latent filter by one pair and score its target."""
    n = model.d_z
    Wm, Wc, lam = sigma_weights(n, cfg.alpha, cfg.beta, cfg.kappa)
    eye = np.eye(n)

    # blend the carried state with the current window's encoding
    mu, P = state.mean, state.cov
    enc = model.encode(pair.x)
    gain = np.linalg.solve((P + cfg.encoder_noise * eye).T, P.T).T
    mu = mu + gain @ (enc - mu)
    P = _nearest_psd((eye - gain) @ P)

    # time update through the transition net
    chi = sigma_points(mu, P, lam)
    chi_f = model.transition(chi, pair.u)
    mu_p = Wm @ chi_f
    P_p = _nearest_psd(_weighted_cov(Wc, chi_f, mu_p, chi_f, mu_p) + state.Q)

    # predicted measurement through the emission net
    chi_p = sigma_points(mu_p, P_p, lam)
    ys = model.emit(chi_p)
    y_hat = Wm @ ys
    S = _weighted_cov(Wc, ys, y_hat, ys, y_hat) + state.R
    S = 0.5 * (S + S.T)
    P_zy = _weighted_cov(Wc, chi_p, mu_p, ys, y_hat)

    innov = np.asarray(pair.y, dtype=float) - y_hat
    score = mahalanobis(innov, S)

    S_reg = S + S_JITTER * np.eye(len(S))
    K = np.linalg.solve(S_reg.T, P_zy.T).T
    mu_n = mu_p + K @ innov
    P_n = _nearest_psd(P_p - K @ S_reg @ K.T)
    return FilterState(mu_n, P_n, state.Q, state.R), score


def residual_score(model: SSMModel, pair: WindowPair | Pairs) -> float | np.ndarray:
    """Euclidean norm of the one-step prediction residual."""
    resid = np.asarray(pair.y, dtype=float) - model.predict(pair)
    return np.linalg.norm(resid, axis=-1) if resid.ndim > 1 else float(np.linalg.norm(resid))


def score_pairs(model: SSMModel, pairs: Pairs, noise: NoiseModel | None = None,
                cfg: ScoringConfig = ScoringConfig()) -> np.ndarray:
    """Scores for a consecutive run of query pairs (filter restarted at the first pair)."""
    if len(pairs) == 0:
        return np.zeros(0)
    if cfg.method == "residual":
        return np.asarray(residual_score(model, pairs), dtype=float)
    if noise is None:
        raise ValueError("filter scoring needs a noise model")
    state = init_state(model, pairs[0], noise)
    scores = np.empty(len(pairs))
    for i in range(len(pairs)):
        state, scores[i] = filter_step(model, state, pairs[i], cfg)
    return scores
