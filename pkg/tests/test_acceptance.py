"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``. Trained models are built once
per session; the whole file takes roughly 20 minutes on one core.
"""

import itertools
import time

import numpy as np
import pytest

from gdm import data, equivalence, latent_ops, metrics
from gdm.basis import blur_basis, identity_basis
from gdm.flow import FlowConfig, simple_config
from gdm.grouping import GroupPartition, make_partition, make_uniform_schedule
from gdm.sampler import default_grid, encode, make_grid, sample
from gdm.trainer import TrainConfig, train

pytestmark = pytest.mark.acceptance

MIX = dict(modes=8, radius=0.8, sigma=0.05)
MIX_HP = {
    1: TrainConfig(steps=20000, lr=2e-3, batch_size=256, hidden=(128, 128, 128)),
    2: TrainConfig(steps=20000, lr=2e-3, batch_size=1024, hidden=(128, 128, 128)),
}


def report(capsys, number, name, passed, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if passed else 'FAIL'} criterion {number:2d} {name}: {detail}")
    assert passed, detail


# ----------------------------------------------------------------- fixtures


@pytest.fixture(scope="session")
def mixture():
    return data.gaussian_mixture_2d(n=20000, seed=1, **MIX)


@pytest.fixture(scope="session")
def mixture_models(mixture):
    out = {}
    for k in (1, 2):
        cfg = simple_config(GroupPartition(2, k, np.arange(2) % k), make_uniform_schedule(k))
        t0 = time.perf_counter()
        net, _ = train(cfg, mixture.samples, MIX_HP[k])
        out[k] = (net, cfg, time.perf_counter() - t0)
    return out


@pytest.fixture(scope="session")
def band_model():
    ds = data.synthetic_factors(16, 16, 4096, seed=0)
    part = make_partition("frequency_bands", 16, 16, cutoffs=(16, 64, 256))
    cfg = FlowConfig(part, make_uniform_schedule(3, order=[0, 1, 2]), blur_basis(16, 16, 1.0), mask_inactive_inputs=True, solver_steps=64)
    net, _ = train(cfg, ds.samples, BAND_HP)
    return net, cfg


@pytest.fixture(scope="session")
def order_model():
    ds = data.synthetic_factors(8, 8, 8192, seed=0)
    cfg = FlowConfig(make_partition("blocks", 8, 8, grid=(2, 2)), make_uniform_schedule(4), identity_basis(64, 8, 8), solver_steps=32)
    scheds = [make_uniform_schedule(4, list(o)) for o in itertools.permutations(range(4))]
    net, _ = train(cfg, ds.samples, ORDER_HP, schedules=scheds)
    return net, cfg


BAND_HP = TrainConfig(steps=20000, lr=1e-3, batch_size=128, hidden=(256, 256, 256))
ORDER_HP = TrainConfig(steps=10000, lr=1e-3, batch_size=64, hidden=(256, 256, 256))


# ----------------------------------------------------------------- criteria


def test_01_ar_reduction(capsys):
    r = equivalence.check_ar(trials=20, dims=(2, 4, 9))
    report(capsys, 1, "AR reduction", r.passed and r.seconds < 10, r.detail + f", {r.seconds:.2f}s")


def test_02_freeze_invariance(capsys):
    r = equivalence.check_freeze(trials=50)
    report(capsys, 2, "freeze invariance", r.passed and r.seconds < 30, r.detail + f", {r.seconds:.2f}s")


def test_03_masked_locality(capsys):
    r = equivalence.check_locality(trials=20)
    report(capsys, 3, "masked locality", r.passed, r.detail)


def test_04_basis(capsys):
    r = equivalence.check_basis(sizes=((4, 4), (8, 8), (16, 16), (32, 32)))
    report(capsys, 4, "basis correctness", r.passed and r.seconds < 60, r.detail + f", {r.seconds:.2f}s")


def test_05_gradient(capsys):
    r = equivalence.check_gradient()
    report(capsys, 5, "gradient check", r.passed, r.detail)


def test_06_mixture_quality(capsys, mixture_models):
    ref = data.gaussian_mixture_2d(n=5000, seed=99, **MIX).samples
    centers = data.mixture_centers(MIX["modes"], MIX["radius"])
    parts, ok = [], True
    for k, (net, cfg, secs) in mixture_models.items():
        z = np.random.default_rng(5).standard_normal((5000, 2))
        x = sample(net, cfg, z, make_grid(cfg.schedule, 64))
        swd = metrics.sliced_wasserstein(x, ref)
        near = float(np.mean(np.min(np.linalg.norm(x[:, None] - centers[None], axis=2), axis=1) < 4 * MIX["sigma"]))
        ok &= swd <= 0.15 and near >= 0.95 and secs < 600
        parts.append(f"k={k}: swd={swd:.4f}, within 4 sigma={near:.4f}, train {secs:.0f}s")
    report(capsys, 6, "2D generative quality", ok, "; ".join(parts))


def test_07_round_trip(capsys, mixture, mixture_models):
    x = mixture.samples[:100]
    parts, ok = [], True
    for k, (net, cfg, _) in mixture_models.items():
        grid = make_grid(cfg.schedule, 256)
        back = sample(net, cfg, encode(net, cfg, x, grid), grid)
        err = float(np.mean(np.linalg.norm(back - x, axis=1) / np.linalg.norm(x, axis=1)))
        ok &= err <= 2e-2
        parts.append(f"k={k}: mean relative L2 {err:.4g}")
    report(capsys, 7, "round trip", ok, "; ".join(parts))


def test_08_band_monotonicity(capsys, band_model):
    net, cfg = band_model
    grid = default_grid(cfg, 64)
    prefixes = (0, cfg.d // 16, cfg.d // 4, cfg.d)
    means = [np.mean([metrics.band_variance_probe(net, cfg, grid, p, 16, s) for s in range(16)]) for p in prefixes]
    ok = all(a >= b for a, b in zip(means, means[1:]))
    detail = ", ".join(f"prefix {p}: {m:.4g}" for p, m in zip(prefixes, means))
    report(capsys, 8, "band-variance monotonicity", ok, detail)


def test_09_order_sensitivity(capsys, order_model):
    net, cfg = order_model
    ref = data.synthetic_factors(8, 8, 4000, seed=99).samples
    orders = metrics.random_orders(cfg.k, 12, seed=0)
    rows = metrics.order_benchmark(net, cfg, orders, range(3), ref, n_samples=4000, steps=32)
    s = metrics.order_summary(rows)
    ok = len(orders) >= 10 and s["spread"] > 3 * s["within_std"]
    report(capsys, 9, "order sensitivity", ok, f"{len(orders)} orders, spread {s['spread']:.4g}, within-order std {s['within_std']:.4g}, ratio {s['ratio']:.2f}")


def test_10_latent_moments(capsys, mixture, mixture_models):
    parts, ok = [], True
    for k, (net, cfg, _) in mixture_models.items():
        m = metrics.latent_normality(net, cfg, make_grid(cfg.schedule, 256), mixture, 2000)
        ok &= m.max_abs_mean <= 0.2 and m.max_abs_var_dev <= 0.3
        parts.append(f"k={k}: max|mean|={m.max_abs_mean:.3f}, max|var-1|={m.max_abs_var_dev:.3f}")
    report(capsys, 10, "latent-prior moments", ok, "; ".join(parts))


def test_11_latent_ops_algebra(capsys):
    rng = np.random.default_rng(0)
    failures = []
    for trial in range(50):
        cfg = equivalence.random_config(rng)
        zA, zB = rng.standard_normal(cfg.d), rng.standard_normal(cfg.d)
        groups = [g for g in range(cfg.k) if rng.random() < 0.5]
        sel = cfg.partition.member_mask(groups)
        m = latent_ops.swap_groups(zA, zB, groups, cfg, coords="freq")
        if not (np.array_equal(m[sel], zB[sel]) and np.array_equal(m[~sel], zA[~sel])):
            failures.append("swap support")
        if not np.array_equal(latent_ops.swap_groups(m, zA, groups, cfg, coords="freq"), zA):
            failures.append("swap involution")
        if not np.array_equal(latent_ops.swap_groups(zA, zB, range(cfg.k), cfg), zB):
            failures.append("swap all")
        if not np.array_equal(latent_ops.swap_groups(zA, zB, [], cfg), zA):
            failures.append("swap none")
        g = int(rng.integers(cfg.k))
        if not np.array_equal(latent_ops.interpolate_group(zA, zB, g, 0.0, cfg, coords="freq"), zA):
            failures.append("interp 0")
        if not np.array_equal(
            latent_ops.interpolate_group(zA, zB, g, 1.0, cfg, coords="freq"),
            latent_ops.swap_groups(zA, zB, [g], cfg, coords="freq"),
        ):
            failures.append("interp 1")
        i = int(rng.integers(cfg.d))
        sweep = latent_ops.traverse_sweep(zA, i, np.linspace(-3, 3, 7), cfg, coords="freq")
        changed = sweep != zA
        if changed[:, np.arange(cfg.d) != i].any() or not np.array_equal(sweep[:, i], np.linspace(-3, 3, 7)):
            failures.append("traverse support")
        if not np.array_equal(latent_ops.traverse_element(zA, i, zA[i], cfg, coords="freq"), zA):
            failures.append("traverse identity")
    report(capsys, 11, "latent-ops algebra", not failures, f"50 random configs, {len(failures)} violations {sorted(set(failures))}")
