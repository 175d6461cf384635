"""Neural state-space model ``g(f(h(x), u))`` with standard and meta fine-tuning phases."""

from __future__ import annotations

import copy
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .neuralnet import Adam, DenseNet, NumericalError, sgd_step
from .timeseries import DataError, Pairs, WindowPair

log = logging.getLogger(__name__)

FORMAT = "cpsdrift-ssm"
FORMAT_VERSION = 1

# parameter stages: previous task, after standard training, after meta fine-tuning
STAGE_BASE = "base"
STAGE_TRAINED = "trained"
STAGE_META = "meta"


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-5
    meta_lr: float = 1e-5
    episodes: int = 10
    batch_size: int = 8
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.episodes < 0:
            raise ValueError("epochs and episodes must be >= 0")
        if self.lr <= 0 or self.meta_lr < 0 or self.beta < 0:
            raise ValueError("learning rates must be positive and beta non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class SSMModel:
    """Encoder ``h`` (window -> latent), transition ``f`` (latent + actuators -> latent)
    and emission ``g`` (latent -> sensors)."""

    def __init__(self, h_net: DenseNet, f_net: DenseNet, g_net: DenseNet, w: int, m: int, k: int,
                 stage: str = STAGE_BASE, optimizer: Adam | None = None):
        d_z = h_net.n_out
        if h_net.n_in != w * (m + k):
            raise ValueError(f"encoder input {h_net.n_in} != w*(m+k) = {w * (m + k)}")
        if f_net.n_in != d_z + k or f_net.n_out != d_z:
            raise ValueError("transition must map d_z + k -> d_z")
        if g_net.n_in != d_z or g_net.n_out != m:
            raise ValueError("emission must map d_z -> m")
        self.h_net, self.f_net, self.g_net = h_net, f_net, g_net
        self.w, self.m, self.k = w, m, k
        self.stage = stage
        self.optimizer = optimizer if optimizer is not None else Adam()
        self.history: list[float] = []

    @classmethod
    def init(cls, w: int, m: int, k: int, d_z: int = 8, hidden: Sequence[int] = (64,),
             seed: int = 0) -> "SSMModel":
        rng = np.random.default_rng(seed)
        hidden = list(hidden)
        h = DenseNet.init([w * (m + k), *hidden, d_z], rng)
        f = DenseNet.init([d_z + k, *hidden, d_z], rng)
        g = DenseNet.init([d_z, *hidden, m], rng)
        return cls(h, f, g, w, m, k)

    @property
    def d_z(self) -> int:
        return self.h_net.n_out

    def nets(self) -> tuple[DenseNet, DenseNet, DenseNet]:
        return self.h_net, self.f_net, self.g_net

    def params(self) -> list[np.ndarray]:
        return self.h_net.params() + self.f_net.params() + self.g_net.params()

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        i = 0
        for net in self.nets():
            n = len(net.params())
            net.set_params(params[i : i + n])
            i += n

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "SSMModel":
        return copy.deepcopy(self)

    # ------------------------------------------------------------ evaluation

    def encode(self, x) -> np.ndarray:
        return self.h_net.forward(x)

    def transition(self, z, u) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float)
        return self.f_net.forward(np.concatenate([z, np.broadcast_to(u, z.shape[:-1] + (self.k,))],
                                                 axis=-1))

    def emit(self, z) -> np.ndarray:
        return self.g_net.forward(z)

    def predict(self, pair: WindowPair | Pairs) -> np.ndarray:
        """One-step-ahead sensor prediction for a pair or a batch of pairs."""
        x, u = np.asarray(pair.x, dtype=float), np.asarray(pair.u, dtype=float)
        if x.shape[-1] != self.w * (self.m + self.k) or u.shape[-1] != self.k:
            raise ValueError("pair dimensions do not match the model")
        return self.emit(self.transition(self.encode(x), u))

    # -------------------------------------------------------------- gradients

    def loss_grad(self, pairs: Pairs, beta: float = 0.0) -> tuple[float, list[np.ndarray]]:
        """Prediction MSE plus ``beta`` times the reconstruction MSE ``g(h(x))`` vs the
        window's last sensor row, with gradients for every parameter."""
        X, U, Y = pairs.x, pairs.u, pairs.y
        n = len(Y)
        Z, h_cache = self.h_net.forward_cached(X)
        ZU = np.hstack([Z, U])
        F, f_cache = self.f_net.forward_cached(ZU)
        Yhat, g_cache = self.g_net.forward_cached(F)
        diff = Yhat - Y
        loss = float(np.mean(diff**2))
        dF, g_grads = self.g_net.backward(g_cache, 2.0 * diff / diff.size)
        dZU, f_grads = self.f_net.backward(f_cache, dF)
        dZ = dZU[:, : self.d_z]
        if beta > 0:
            target = X.reshape(n, self.w, self.m + self.k)[:, -1, : self.m]
            R, r_cache = self.g_net.forward_cached(Z)
            rdiff = R - target
            loss += beta * float(np.mean(rdiff**2))
            dZr, gr_grads = self.g_net.backward(r_cache, 2.0 * beta * rdiff / rdiff.size)
            dZ = dZ + dZr
            g_grads = [a + b for a, b in zip(g_grads, gr_grads)]
        _, h_grads = self.h_net.backward(h_cache, dZ)
        if not np.isfinite(loss):
            raise NumericalError("non-finite training loss")
        return loss, h_grads + f_grads + g_grads

    def loss(self, pairs: Pairs, beta: float = 0.0) -> float:
        Yhat = self.predict(pairs)
        loss = float(np.mean((Yhat - pairs.y) ** 2))
        if beta > 0:
            R = self.emit(self.encode(pairs.x))
            loss += beta * float(np.mean((R - pairs.last_sensors()) ** 2))
        return loss

    # ---------------------------------------------------------- serialisation

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "stage": self.stage,
            "w": self.w, "m": self.m, "k": self.k,
            "h": self.h_net.to_dict(), "f": self.f_net.to_dict(), "g": self.g_net.to_dict(),
            "optimizer": self.optimizer.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SSMModel":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise DataError(f"not a {FORMAT} v{FORMAT_VERSION} checkpoint")
        opt = Adam.from_dict(d["optimizer"]) if "optimizer" in d else None
        return cls(DenseNet.from_dict(d["h"]), DenseNet.from_dict(d["f"]), DenseNet.from_dict(d["g"]),
                   d["w"], d["m"], d["k"], stage=d.get("stage", STAGE_BASE), optimizer=opt)

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        d = self.to_dict()
        if extra:
            d["meta"] = extra
        Path(path).write_text(json.dumps(d), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SSMModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_standard(model: SSMModel, merge: Pairs, cfg: TrainConfig) -> SSMModel:
    """Mini-batch Adam on prediction + ``beta`` * reconstruction MSE for ``cfg.epochs``.

    Returns a trained copy; ``history`` holds the full-set loss before training
    and after every epoch.
    """
    if len(merge) == 0:
        raise DataError("merged training set is empty")
    out = model.copy()
    out.optimizer.lr = cfg.lr
    rng = np.random.default_rng(cfg.seed)
    n = len(merge)
    params = out.params()
    # overflow surfaces as a NumericalError below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        out.history = [out.loss(merge, cfg.beta)]
        for epoch in range(cfg.epochs):
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                batch = merge.take(order[start : start + cfg.batch_size])
                try:
                    _, grads = out.loss_grad(batch, cfg.beta)
                except NumericalError as exc:
                    raise NumericalError(f"epoch {epoch}, batch at {start}: {exc}") from None
                out.optimizer.step(params, grads)
            epoch_loss = out.loss(merge, cfg.beta)
            if not np.isfinite(epoch_loss):
                raise NumericalError(f"epoch {epoch}: non-finite loss {epoch_loss}")
            out.history.append(epoch_loss)
    log.debug("standard training on %d pairs: loss %.6g -> %.6g", n, out.history[0], out.history[-1])
    out.set_params(params)
    out.stage = STAGE_TRAINED
    return out


def meta_finetune(model, d_meta: Pairs, cfg: TrainConfig):
    """Sequential first-order meta steps, one plain gradient step per support set.

    ``d_meta`` is split into ``cfg.episodes`` contiguous support sets; each step
    uses the mean prediction error over its set.  Works with any model exposing
    ``copy``, ``params``, ``set_params`` and ``loss_grad``.
    """
    if len(d_meta) == 0:
        raise DataError("meta set is empty")
    episodes = cfg.episodes
    if episodes > len(d_meta):
        warnings.warn(f"episodes={episodes} exceeds |D_meta|={len(d_meta)}; using {len(d_meta)}",
                      stacklevel=2)
        episodes = len(d_meta)
    out = model.copy()
    params = out.params()
    for support in np.array_split(np.arange(len(d_meta)), episodes) if episodes else []:
        _, grads = out.loss_grad(d_meta.take(support), 0.0)
        params = sgd_step(params, grads, cfg.meta_lr)
        out.set_params(params)
    out.stage = STAGE_META
    return out
