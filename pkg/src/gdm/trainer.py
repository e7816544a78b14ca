"""Adam on the unweighted groupwise flow-matching loss ``||(x - z) - u(x_t, A(t))||^2``."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import net as netlib
from .flow import FlowConfig, corrupt, mask_inactive
from .grouping import GroupSchedule
from .net import NonFiniteError, VectorFieldNet

log = logging.getLogger(__name__)

BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


@dataclass(eq=False)
class TrainState:
    net: VectorFieldNet
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    lr_anneal: str = "none"
    total_steps: int | None = None
    batch_size: int = 128
    rng_seed: int = 0
    t_sampling: str = "uniform"
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        if self.adam_m.shape != self.net.params.shape or self.adam_v.shape != self.net.params.shape:
            raise ValueError("Adam moments must match the parameter vector")
        if self.lr < 0 or self.step < 0:
            raise ValueError("lr and step must be non-negative")
        if self.lr_anneal not in ("none", "linear"):
            raise ValueError(f"unknown lr_anneal {self.lr_anneal!r}")
        if self.lr_anneal == "linear" and not self.total_steps:
            raise ValueError("linear annealing needs total_steps")
        if self.t_sampling not in ("uniform", "stratified"):
            raise ValueError(f"unknown t_sampling {self.t_sampling!r}")
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)

    def current_lr(self) -> float:
        if self.lr_anneal == "linear":
            return self.lr * max(0.0, 1.0 - self.step / self.total_steps)
        return self.lr


def new_state(net: VectorFieldNet, lr=1e-3, batch_size=128, seed=0, lr_anneal="none", total_steps=None, t_sampling="uniform"):
    z = np.zeros_like(net.params)
    return TrainState(
        net, z, z.copy(), lr=lr, lr_anneal=lr_anneal, total_steps=total_steps,
        batch_size=batch_size, rng_seed=seed, t_sampling=t_sampling,
    )


def sample_times(rng: np.random.Generator, schedule: GroupSchedule, n: int, mode="uniform") -> np.ndarray:
    """Draw ``t`` in (0, 1) avoiding schedule breakpoints.

    ``stratified`` first picks a group uniformly, then ``t`` inside its interval.
    """
    bad = schedule.breakpoints
    if mode == "stratified":
        g = rng.integers(0, schedule.k, size=n)
        lo, hi = schedule.t_start[g], schedule.t_end[g]
        t = lo + (hi - lo) * rng.random(n)
    else:
        t = rng.random(n)
    redo = np.isin(t, bad)
    while np.any(redo):
        t[redo] = rng.random(int(redo.sum()))
        redo = np.isin(t, bad)
    return t


def draw_noise(state: TrainState, cfg: FlowConfig, n: int):
    z = state.rng.standard_normal((n, cfg.d))
    t = sample_times(state.rng, cfg.schedule, n, state.t_sampling)
    return z, t


def _net_input(cfg: FlowConfig, x_t, t):
    return mask_inactive(cfg, x_t, t) if cfg.mask_inactive_inputs else x_t


def loss_and_grad(net: VectorFieldNet, cfg: FlowConfig, x, z, t, need_grad=True):
    """Mean squared error over rows and its parameter gradient."""
    pair = corrupt(cfg, x, z, t)
    h0, _ = netlib._inputs(net, _net_input(cfg, pair.x_t, t), pair.cond)
    out, cache = netlib.forward_cached(net, h0)
    resid = out - pair.target
    n = resid.shape[0]
    loss = float(np.sum(resid * resid) / n)
    if not need_grad:
        return loss, None
    return loss, netlib.backward_cached(net, cache, (2.0 / n) * resid)


def loss_batch(state: TrainState, cfg: FlowConfig, batch, z=None, t=None) -> float:
    """Monte-Carlo loss on ``batch``; noise and times come from the state RNG unless given."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if z is None or t is None:
        z, t = draw_noise(state, cfg, x.shape[0])
    loss, _ = loss_and_grad(state.net, cfg, x, z, np.asarray(t, dtype=np.float64), need_grad=False)
    return loss


def adam_update(state: TrainState, grad: np.ndarray) -> None:
    lr = state.current_lr()
    state.step += 1
    state.adam_m *= BETA1
    state.adam_m += (1.0 - BETA1) * grad
    state.adam_v *= BETA2
    state.adam_v += (1.0 - BETA2) * grad * grad
    mhat = state.adam_m / (1.0 - BETA1**state.step)
    vhat = state.adam_v / (1.0 - BETA2**state.step)
    state.net.params -= lr * mhat / (np.sqrt(vhat) + EPS)


def train_step(state: TrainState, cfg: FlowConfig, batch) -> float:
    """One Adam step in place; returns the pre-update batch loss."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    z, t = draw_noise(state, cfg, x.shape[0])
    try:
        loss, grad = loss_and_grad(state.net, cfg, x, z, t)
    except NonFiniteError as exc:
        raise NonFiniteError(f"{exc} at step {state.step}") from exc
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NonFiniteError(f"non-finite loss at step {state.step}")
    adam_update(state, grad)
    return loss


@dataclass
class TrainConfig:
    steps: int = 20000
    lr: float = 1e-3
    batch_size: int = 128
    lr_anneal: str = "linear"
    seed: int = 0
    hidden: Sequence[int] = (128, 128, 128)
    activation: str = "silu"
    cond_embed_dim: int = 16
    t_sampling: str = "uniform"
    checkpoint_every: int = 0
    log_every: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known - {"train_orders"}
        if unknown:
            raise ValueError(f"unknown train options: {sorted(unknown)}")
        return cls(**{k: v for k, v in doc.items() if k in known})


def train(
    cfg: FlowConfig,
    data: np.ndarray,
    hp: TrainConfig,
    out_dir: str | Path | None = None,
    schedules: Sequence[GroupSchedule] | None = None,
    net: VectorFieldNet | None = None,
):
    """Full training loop; returns ``(net, losses)``.

    With ``schedules`` set, each batch is trained under one of them drawn
    uniformly (a single model shared across generation orders). With
    ``out_dir`` a ``loss.csv`` (step, loss, lr) is written and checkpoints are
    saved every ``hp.checkpoint_every`` steps and at the end.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != cfg.d or data.shape[0] == 0:
        raise ValueError(f"dataset must be (n, {cfg.d}), got {data.shape}")
    if net is None:
        net = netlib.build(cfg.d, cfg.k, hp.hidden, hp.activation, hp.cond_embed_dim, seed=hp.seed)
    state = new_state(net, hp.lr, hp.batch_size, hp.seed, hp.lr_anneal, hp.steps, hp.t_sampling)
    batch_rng = np.random.default_rng([hp.seed, 1])
    cfgs = [cfg] if not schedules else [cfg.with_schedule(s) for s in schedules]

    out = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        fh = open(out / "loss.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "lr"])

    losses = np.empty(hp.steps)
    try:
        for i in range(hp.steps):
            idx = batch_rng.integers(0, data.shape[0], size=hp.batch_size)
            c = cfgs[batch_rng.integers(len(cfgs))] if len(cfgs) > 1 else cfg
            lr = state.current_lr()
            losses[i] = train_step(state, c, data[idx])
            if writer is not None and (i % hp.log_every == 0 or i == hp.steps - 1):
                writer.writerow([state.step, repr(losses[i]), repr(lr)])
            if out is not None and hp.checkpoint_every and state.step % hp.checkpoint_every == 0:
                netlib.save_checkpoint(out / f"ckpt_{state.step:07d}.bin", net, cfg.to_dict())
            if i and i % 5000 == 0:
                log.info("step %d loss %.5f", i, losses[max(0, i - 500) : i].mean())
    finally:
        if fh is not None:
            fh.close()
    if out is not None:
        netlib.save_checkpoint(out / "model.bin", net, cfg.to_dict())
    return net, losses
