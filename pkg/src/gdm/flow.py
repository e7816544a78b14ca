"""Groupwise linear interpolant and its velocity, parameterized in pixel space.

With an orthogonal basis ``U`` the interpolation runs on coefficients
``U^T x`` while the network sees and predicts pixel-space vectors. The
training target ``x - z`` is basis independent; the velocity applies
``A'(t)`` on coefficients: ``U A'(t) U^T u``.

All functions accept a single vector of length d or a batch of row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .basis import OrthoBasis, basis_from_dict, identity_basis
from .grouping import (
    GroupPartition,
    GroupSchedule,
    group_alpha_primes,
    group_alphas,
    grouping_from_dict,
    grouping_to_dict,
)


@dataclass(frozen=True, eq=False)
class FlowConfig:
    partition: GroupPartition
    schedule: GroupSchedule
    basis: OrthoBasis
    mask_inactive_inputs: bool = False
    solver_steps: int = 64

    def __post_init__(self):
        if self.partition.d != self.basis.d:
            raise ValueError(f"partition d={self.partition.d} but basis d={self.basis.d}")
        if self.partition.k != self.schedule.k:
            raise ValueError(f"partition k={self.partition.k} but schedule k={self.schedule.k}")
        if self.solver_steps < self.partition.k:
            raise ValueError(f"solver_steps={self.solver_steps} is below k={self.partition.k}")

    @property
    def d(self) -> int:
        return self.partition.d

    @property
    def k(self) -> int:
        return self.partition.k

    def with_schedule(self, schedule: GroupSchedule) -> "FlowConfig":
        return replace(self, schedule=schedule)

    def to_dict(self) -> dict:
        return {
            "grouping": grouping_to_dict(self.partition, self.schedule),
            "basis": self.basis.to_dict(),
            "mask_inactive_inputs": self.mask_inactive_inputs,
            "solver_steps": self.solver_steps,
        }

    @classmethod
    def from_dict(cls, doc: dict, cache_dir=None) -> "FlowConfig":
        partition, schedule = grouping_from_dict(doc["grouping"])
        return cls(
            partition=partition,
            schedule=schedule,
            basis=basis_from_dict(doc["basis"], cache_dir=cache_dir),
            mask_inactive_inputs=bool(doc.get("mask_inactive_inputs", False)),
            solver_steps=int(doc.get("solver_steps", 64)),
        )


def simple_config(partition: GroupPartition, schedule: GroupSchedule, basis: OrthoBasis | None = None, **kw):
    """FlowConfig with an identity basis unless one is given."""
    if basis is None:
        basis = identity_basis(partition.d)
    kw.setdefault("solver_steps", max(64, partition.k))
    return FlowConfig(partition, schedule, basis, **kw)


@dataclass(frozen=True)
class TrainingPair:
    x: np.ndarray
    z: np.ndarray
    t: np.ndarray
    x_t: np.ndarray
    target: np.ndarray
    cond: np.ndarray


def _vec(cfg: FlowConfig, v, name):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim not in (1, 2) or v.shape[-1] != cfg.d:
        raise ValueError(f"{name} must have trailing length {cfg.d}, got shape {v.shape}")
    return v


def _col(t, x):
    t = np.asarray(t, dtype=np.float64)
    return t[..., None] if t.ndim == x.ndim else t


def cond_at(cfg: FlowConfig, t) -> np.ndarray:
    """The k group alphas at time ``t`` (network conditioning)."""
    return group_alphas(cfg.schedule, t)


def corrupt(cfg: FlowConfig, x, z, t) -> TrainingPair:
    """``x_t = U (A(t) U^T x + (I - A(t)) U^T z)`` with the k-alpha conditioning."""
    x = _vec(cfg, x, "x")
    z = _vec(cfg, z, "z")
    if x.shape != z.shape:
        raise ValueError(f"x {x.shape} and z {z.shape} differ in shape")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim > 0 and (x.ndim != 2 or t.shape != (x.shape[0],)):
        raise ValueError("batched t needs one time per row of x")
    cond = group_alphas(cfg.schedule, t)
    a = cond[..., cfg.partition.assignment]
    basis = cfg.basis
    xb, zb = basis.to_freq(x), basis.to_freq(z)
    x_t = basis.from_freq(a * xb + (1.0 - a) * zb)
    return TrainingPair(x=x, z=z, t=t, x_t=x_t, target=x - z, cond=cond)


def training_target(cfg: FlowConfig, x, z) -> np.ndarray:
    x = _vec(cfg, x, "x")
    z = _vec(cfg, z, "z")
    if x.shape != z.shape:
        raise ValueError(f"x {x.shape} and z {z.shape} differ in shape")
    return x - z


def velocity_coeffs(cfg: FlowConfig, u, t, midpoint: bool = False) -> np.ndarray:
    """``A'(t) U^T u``: the velocity expressed in frequency coordinates."""
    u = _vec(cfg, u, "u")
    ap = group_alpha_primes(cfg.schedule, t, midpoint=midpoint)[..., cfg.partition.assignment]
    return ap * cfg.basis.to_freq(u)


def velocity(cfg: FlowConfig, u, t, midpoint: bool = False) -> np.ndarray:
    """Pixel-space velocity ``U A'(t) U^T u``; equals ``-u`` for k=1 and identity basis."""
    return cfg.basis.from_freq(velocity_coeffs(cfg, u, t, midpoint=midpoint))


def inactive_groups(cfg: FlowConfig, t) -> np.ndarray:
    """Boolean (..., k): groups still pure noise at ``t`` (t_end < t)."""
    t = np.asarray(t, dtype=np.float64)[..., None]
    return cfg.schedule.t_end < t


def coeff_keep_mask(cfg: FlowConfig, t) -> np.ndarray:
    return ~inactive_groups(cfg, t)[..., cfg.partition.assignment]


def mask_coeffs(cfg: FlowConfig, xbar, t) -> np.ndarray:
    keep = coeff_keep_mask(cfg, t)
    return np.where(keep, xbar, 0.0)


def mask_inactive(cfg: FlowConfig, x_t, t) -> np.ndarray:
    """Zero the coefficients of groups that have not started generating at ``t``."""
    x_t = _vec(cfg, x_t, "x_t")
    return cfg.basis.from_freq(mask_coeffs(cfg, cfg.basis.to_freq(x_t), t))
