"""Autoregressive and cascaded special cases, plus the invariant suites behind ``gdm verify``."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import net as netlib
from .basis import blur_basis, blur_matrix, dct2_basis, identity_basis
from .flow import FlowConfig
from .grouping import GroupPartition, make_partition, make_schedule, make_uniform_schedule
from .sampler import StepGrid, make_grid, sample, sample_freq, trajectory


def ar_config(d: int, order=None, mask_inactive_inputs: bool = False) -> FlowConfig:
    """k = d singleton groups; ``order`` lists coordinates from first generated to last.

    The default order generates coordinate d-1 first and coordinate 0 last.
    """
    order = list(range(d - 1, -1, -1)) if order is None else [int(i) for i in order]
    if sorted(order) != list(range(d)):
        raise ValueError(f"order must be a permutation of range({d})")
    assignment = np.empty(d, dtype=np.int64)
    for p, i in enumerate(order):
        assignment[i] = d - 1 - p
    partition = GroupPartition(d, d, assignment, strategy="ar", params={"order": order})
    return FlowConfig(partition, make_uniform_schedule(d), identity_basis(d), mask_inactive_inputs, solver_steps=d)


def ar_grid(cfg: FlowConfig) -> StepGrid:
    return make_grid(cfg.schedule, cfg.k, allocation="explicit", per_group=[1] * cfg.k)


def ar_sample_oracle(net: netlib.VectorFieldNet, cfg_ar: FlowConfig, z) -> np.ndarray:
    """Explicit coordinate-at-a-time generation.

    For each coordinate in generation order, feed the current vector (with
    not-yet-started coordinates zeroed when masking is on) and the per-group
    alphas (1 for already generated groups, 1/2 for the current one, 0 for
    groups still pure noise), then replace the coordinate by its denoised
    prediction ``x_l + u_l``.
    """
    d = cfg_ar.d
    if cfg_ar.k != d:
        raise ValueError("oracle needs one group per coordinate")
    x = np.array(z, dtype=np.float64)
    group_of = cfg_ar.partition.assignment
    coord_of = np.empty(d, dtype=np.int64)
    coord_of[group_of] = np.arange(d)
    for g in range(d - 1, -1, -1):
        cond = np.where(np.arange(d) > g, 1.0, np.where(np.arange(d) == g, 0.5, 0.0))
        inp = x.copy()
        if cfg_ar.mask_inactive_inputs:
            inp[..., group_of < g] = 0.0
        u = netlib.forward(net, inp, cond)
        l = coord_of[g]
        x[..., l] = x[..., l] + u[..., l]
    return x


def cdm_config(height: int, width: int, levels: int = 2, inverse: bool = False, solver_steps: int = 64) -> FlowConfig:
    """Cascaded grouping: the 2^(levels-1)-subsampled lattice first, finer remainders after."""
    strategy = "cdm_inverse" if inverse else "cdm"
    partition = make_partition(strategy, height, width, levels=levels)
    d = height * width
    return FlowConfig(
        partition, make_uniform_schedule(levels), identity_basis(d, height, width), solver_steps=max(solver_steps, levels)
    )


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _random_net(d, k, rng, hidden=(16, 16), activation="silu", cond_embed_dim=4, scale=1.0):
    net = netlib.build(d, k, hidden, activation, cond_embed_dim, seed=int(rng.integers(2**31)))
    net.params[:] = rng.standard_normal(net.params.size) * scale / np.sqrt(max(hidden))
    return net


def check_ar(trials: int = 20, dims=(2, 4, 9), seed: int = 0) -> CheckResult:
    """Groupwise Euler with one step per group versus the explicit AR loop."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst, bitwise, runs = 0.0, 0, 0
    for d in dims:
        for _ in range(trials):
            order = rng.permutation(d)
            cfg = ar_config(d, order, mask_inactive_inputs=bool(rng.integers(2)))
            net = _random_net(d, d, rng)
            z = rng.standard_normal(d)
            a = sample(net, cfg, z, ar_grid(cfg))
            b = ar_sample_oracle(net, cfg, z)
            worst = max(worst, float(np.max(np.abs(a - b))))
            bitwise += int(np.array_equal(a, b))
            runs += 1
    return CheckResult(
        "ar-equivalence",
        worst <= 1e-10,
        f"max |diff| = {worst:.3g} over {runs} nets ({bitwise} bitwise equal)",
        time.perf_counter() - t0,
    )


def frozen_violation(cfg: FlowConfig, traj: np.ndarray, times: np.ndarray) -> float:
    """Largest coefficient change outside its group's active interval along a trajectory."""
    worst = 0.0
    sched, assign = cfg.schedule, cfg.partition.assignment
    for i in range(traj.shape[0] - 1):
        t_mid = 0.5 * (times[i] + times[i + 1])
        active = (sched.t_start < t_mid) & (t_mid < sched.t_end)
        frozen = ~active[assign]
        diff = np.abs(traj[i + 1][..., frozen] - traj[i][..., frozen])
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


def check_cdm(trials: int = 10, seed: int = 0) -> CheckResult:
    """Coarse lattice pixels stay fixed while finer levels are generated."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for trial in range(trials):
        levels = 2 + trial % 2
        size = 2 ** (levels - 1) * int(rng.integers(1, 3))
        cfg = cdm_config(size, size, levels, inverse=bool(trial % 3 == 2), solver_steps=12)
        net = _random_net(cfg.d, cfg.k, rng)
        grid = make_grid(cfg.schedule, 12)
        traj = trajectory(net, cfg, rng.standard_normal((3, cfg.d)), grid)
        worst = max(worst, frozen_violation(cfg, traj, grid.times))
    inv_ok = all(
        np.array_equal(
            make_partition("cdm", 8, 8, levels=L).assignment,
            L - 1 - make_partition("cdm_inverse", 8, 8, levels=L).assignment,
        )
        for L in (2, 3, 4)
    )
    return CheckResult(
        "cdm-freeze",
        worst == 0.0 and inv_ok,
        f"max frozen-pixel change {worst:.3g}, cdm/cdm_inverse mirror: {inv_ok}",
        time.perf_counter() - t0,
    )


def random_config(rng: np.random.Generator, basis_kind: str | None = None, mask: bool | None = None) -> FlowConfig:
    """A small random grouping, schedule (random boundaries and order) and basis."""
    h, w = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    d = h * w
    k = int(rng.integers(1, min(d, 5) + 1))
    a = np.concatenate([np.arange(k), rng.integers(0, k, d - k)])
    partition = GroupPartition(d, k, rng.permutation(a), strategy="random")
    bounds = np.sort(rng.choice(np.arange(1, 40), size=k - 1, replace=False)) / 40.0
    schedule = make_schedule(bounds, rng.permutation(k).tolist())
    kind = basis_kind or ("identity", "dct", "blur")[int(rng.integers(3))]
    basis = {"identity": lambda: identity_basis(d, h, w), "dct": lambda: dct2_basis(h, w), "blur": lambda: blur_basis(h, w, 1.0)}[kind]()
    m = bool(rng.integers(2)) if mask is None else mask
    return FlowConfig(partition, schedule, basis, mask_inactive_inputs=m, solver_steps=max(k, 8))


def check_freeze(trials: int = 50, seed: int = 0) -> CheckResult:
    """Coefficients outside the active group never move along a sampling trajectory.

    Identity-basis configs must be bitwise constant; frequency bases within 1e-10.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_id, worst_freq = 0.0, 0.0
    for trial in range(trials):
        cfg = random_config(rng, basis_kind=("identity", "dct", "blur")[trial % 3])
        net = _random_net(cfg.d, cfg.k, rng)
        grid = make_grid(cfg.schedule, int(rng.integers(cfg.k, 3 * cfg.k + 4)))
        traj = trajectory(net, cfg, rng.standard_normal((2, cfg.d)), grid)
        v = frozen_violation(cfg, traj, grid.times)
        if cfg.basis.kind == "identity":
            worst_id = max(worst_id, v)
        else:
            worst_freq = max(worst_freq, v)
    return CheckResult(
        "freeze",
        worst_id == 0.0 and worst_freq <= 1e-10,
        f"identity max change {worst_id:.3g}, frequency max change {worst_freq:.3g} over {trials} configs",
        time.perf_counter() - t0,
    )


def check_locality(trials: int = 20, seed: int = 0) -> CheckResult:
    """With masked inputs, redrawing group j's latent leaves earlier groups bitwise unchanged."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    violations, cases = 0, 0
    for trial in range(trials):
        cfg = random_config(rng, basis_kind=("identity", "dct", "blur")[trial % 3], mask=True)
        net = _random_net(cfg.d, cfg.k, rng)
        grid = make_grid(cfg.schedule, 2 * cfg.k + 2)
        te = cfg.schedule.t_end
        for j in range(cfg.k):
            earlier = cfg.partition.member_mask([g for g in range(cfg.k) if te[g] > te[j]])
            sel = cfg.partition.member_mask([j])
            base = rng.standard_normal((3, cfg.d))
            alt = base.copy()
            alt[:, sel] = rng.standard_normal((3, int(sel.sum())))
            x0, x1 = sample_freq(net, cfg, base, grid), sample_freq(net, cfg, alt, grid)
            violations += int(not np.array_equal(x0[:, earlier], x1[:, earlier]))
            cases += 1
    return CheckResult(
        "locality",
        violations == 0,
        f"{violations} of {cases} group resamples changed an earlier group",
        time.perf_counter() - t0,
    )


def check_basis(sizes=((4, 4), (8, 8), (16, 16), (32, 32)), sigma: float = 1.0) -> CheckResult:
    t0 = time.perf_counter()
    worst_orth, worst_w = 0.0, 0.0
    for h, w in sizes:
        for basis in (identity_basis(h * w, h, w), dct2_basis(h, w), blur_basis(h, w, sigma)):
            u = basis.dense()
            worst_orth = max(worst_orth, float(np.max(np.abs(u.T @ u - np.eye(h * w)))))
            if basis.kind == "blur":
                rec = (u * basis.spectrum) @ u.T
                worst_w = max(worst_w, float(np.max(np.abs(rec - blur_matrix(h, w, sigma)))))
    return CheckResult(
        "basis",
        worst_orth <= 1e-8 and worst_w <= 1e-6,
        f"max |U^T U - I| = {worst_orth:.3g}, max |U D U^T - W| = {worst_w:.3g}",
        time.perf_counter() - t0,
    )


def gradient_check(net: netlib.VectorFieldNet, x, cond, g, rng, per_layer: int = 50, step: float = 1e-5):
    """Worst relative error of analytic vs central-difference gradients.

    Samples ``per_layer`` coordinates from each layer's parameter block. The
    relative error is ``|a - f| / max(|a|, |f|, 1e-8)``.
    """
    analytic = netlib.backward(net, x, cond, g)
    worst = 0.0
    off = 0
    base = net.params.copy()
    for fan_in, fan_out in zip(net.layer_dims[:-1], net.layer_dims[1:]):
        size = (fan_in + 1) * fan_out
        idx = off + rng.choice(size, size=min(per_layer, size), replace=False)
        for i in idx:
            net.params[i] = base[i] + step
            fp = np.sum(g * netlib.forward(net, x, cond))
            net.params[i] = base[i] - step
            fm = np.sum(g * netlib.forward(net, x, cond))
            net.params[i] = base[i]
            fd = (fp - fm) / (2 * step)
            err = abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), 1e-8)
            worst = max(worst, err)
        off += size
    return worst


def check_gradient(seed: int = 0) -> CheckResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for activation in ("silu", "relu", "tanh"):
        d, k = 5, 2
        net = netlib.build(d, k, (12, 10), activation, 4, seed=int(rng.integers(1000)))
        net.params[:] = rng.standard_normal(net.params.size) * 0.5
        x = rng.standard_normal((4, d))
        cond = rng.random((4, k))
        g = rng.standard_normal((4, d))
        worst = max(worst, gradient_check(net, x, cond, g, rng))
    return CheckResult("gradient", worst <= 1e-4, f"max relative error {worst:.3g}", time.perf_counter() - t0)


SUITES = {
    "ar": check_ar,
    "freeze": check_freeze,
    "locality": check_locality,
    "cdm": check_cdm,
    "basis": check_basis,
    "gradient": check_gradient,
}
