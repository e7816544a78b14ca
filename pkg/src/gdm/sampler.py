"""Midpoint-evaluated Euler integration of the groupwise ODE.

The state is carried as frequency coefficients so coordinates outside the
active group receive an exactly-zero increment. With an identity basis this
is the same as integrating in pixel space.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .flow import FlowConfig, cond_at, mask_coeffs
from .grouping import GroupSchedule
from .net import NonFiniteError, VectorFieldNet, forward


@dataclass(frozen=True, eq=False)
class StepGrid:
    """Time points (1 -> 0 for sampling, 0 -> 1 for encoding) and steps per group."""

    times: np.ndarray
    per_group_steps: np.ndarray

    @property
    def total_steps(self) -> int:
        return self.times.size - 1

    def reversed(self) -> "StepGrid":
        return StepGrid(self.times[::-1].copy(), self.per_group_steps)

    @property
    def decreasing(self) -> bool:
        return bool(self.times[0] > self.times[-1])


def _proportional(lengths: np.ndarray, total: int) -> np.ndarray:
    ideal = lengths * total
    n = np.maximum(1, np.floor(ideal + 1e-9)).astype(np.int64)
    while n.sum() < total:
        n[np.argmax(ideal - n)] += 1
    while n.sum() > total:
        slack = np.where(n > 1, ideal - n, np.inf)
        n[np.argmin(slack)] -= 1
    return n


def make_grid(
    schedule: GroupSchedule,
    total_steps: int,
    allocation: str = "proportional",
    per_group: Sequence[int] | None = None,
    direction: str = "sample",
) -> StepGrid:
    """Step grid whose points include every interval endpoint.

    ``allocation`` is ``proportional`` (steps ~ interval length, at least one
    each), ``uniform_per_group`` (equal counts; leftovers go to the groups
    generated first) or ``explicit`` (``per_group`` counts, indexed by group).
    """
    k = schedule.k
    if allocation == "explicit":
        if per_group is None or len(per_group) != k:
            raise ValueError(f"explicit allocation needs {k} per-group step counts")
        steps = np.asarray(per_group, dtype=np.int64)
        if np.any(steps < 1):
            raise ValueError("every group needs at least one step")
    else:
        if total_steps < k:
            raise ValueError(f"total_steps={total_steps} is below k={k}")
        if allocation == "proportional":
            steps = _proportional(schedule.t_end - schedule.t_start, total_steps)
        elif allocation == "uniform_per_group":
            steps = np.full(k, total_steps // k, dtype=np.int64)
            for g in schedule.generation_order[: total_steps % k]:
                steps[g] += 1
        else:
            raise ValueError(f"unknown allocation {allocation!r}")

    pts = []
    for g in np.argsort(schedule.t_start, kind="stable"):
        a, b, n = schedule.t_start[g], schedule.t_end[g], steps[g]
        pts.extend(a + (b - a) * (np.arange(n) / n))
    pts.append(1.0)
    times = np.asarray(pts)
    if direction == "sample":
        times = times[::-1].copy()
    elif direction != "encode":
        raise ValueError("direction must be 'sample' or 'encode'")
    return StepGrid(times, steps)


def _step_factors(schedule: GroupSchedule, t0, t1, t_mid) -> np.ndarray:
    # (t1 - t0) * A'(t_mid) written as a quotient so a step spanning a whole
    # interval has factor exactly 1
    active = (schedule.t_start < t_mid) & (t_mid < schedule.t_end)
    return np.where(active, (t1 - t0) / (schedule.t_start - schedule.t_end), 0.0)


def _integrate(net, cfg: FlowConfig, xbar, grid: StepGrid, callback=None):
    xbar = np.array(xbar, dtype=np.float64)
    if xbar.shape[-1] != cfg.d:
        raise ValueError(f"expected vectors of length {cfg.d}, got {xbar.shape}")
    basis = cfg.basis
    assignment = cfg.partition.assignment
    times = grid.times
    for i in range(times.size - 1):
        t0, t1 = times[i], times[i + 1]
        t_mid = 0.5 * (t0 + t1)
        cond = cond_at(cfg, t_mid)
        inp = basis.from_freq(mask_coeffs(cfg, xbar, t_mid) if cfg.mask_inactive_inputs else xbar)
        u = forward(net, inp, cond)
        xbar = xbar + _step_factors(cfg.schedule, t0, t1, t_mid)[assignment] * basis.to_freq(u)
        if not np.all(np.isfinite(xbar)):
            raise NonFiniteError(f"non-finite state at integration step {i} (t={t_mid:.6g})")
        if callback is not None:
            callback(i, t1, xbar)
    return xbar


def sample_freq(net: VectorFieldNet, cfg: FlowConfig, zbar, grid: StepGrid, callback: Callable | None = None):
    """As :func:`sample`, with latent and result given as frequency coefficients."""
    if not grid.decreasing:
        raise ValueError("sampling needs a decreasing grid (1 -> 0)")
    return _integrate(net, cfg, zbar, grid, callback)


def encode_freq(net: VectorFieldNet, cfg: FlowConfig, xbar, grid: StepGrid, callback: Callable | None = None):
    if grid.decreasing:
        grid = grid.reversed()
    return _integrate(net, cfg, xbar, grid, callback)


def sample(net: VectorFieldNet, cfg: FlowConfig, z, grid: StepGrid, callback: Callable | None = None) -> np.ndarray:
    """Integrate from the latent ``z`` at t=1 down to t=0.

    Each sub-step ``[t_b, t_a]`` applies
    ``x <- x - (t_a - t_b) * U A'(t_mid) U^T u(x, A(t_mid))``.
    ``callback(step, t, coeffs)`` sees the frequency coefficients after each step.
    """
    return cfg.basis.from_freq(sample_freq(net, cfg, cfg.basis.to_freq(z), grid, callback))


def encode(net: VectorFieldNet, cfg: FlowConfig, x, grid: StepGrid, callback: Callable | None = None) -> np.ndarray:
    """Integrate data ``x`` forward from t=0 to t=1, returning its latent."""
    return cfg.basis.from_freq(encode_freq(net, cfg, cfg.basis.to_freq(x), grid, callback))


def default_grid(cfg: FlowConfig, steps: int | None = None, direction="sample") -> StepGrid:
    return make_grid(cfg.schedule, steps or cfg.solver_steps, direction=direction)


def trajectory(net, cfg: FlowConfig, z, grid: StepGrid) -> np.ndarray:
    """Stacked frequency coefficients: initial state then one row per step."""
    states = [cfg.basis.to_freq(np.asarray(z, dtype=np.float64))]
    sample(net, cfg, z, grid, callback=lambda i, t, xb: states.append(xb.copy()))
    return np.stack(states)


def write_latents_csv(path, coeffs: np.ndarray) -> None:
    """Latents as rows of frequency-ordered coefficients."""
    np.savetxt(path, np.atleast_2d(coeffs), delimiter=",", fmt="%.17g")


def read_latents_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
