import numpy as np
import pytest

from gdm import net as netlib
from gdm.basis import blur_basis
from gdm.flow import FlowConfig, simple_config
from gdm.grouping import GroupPartition, make_partition, make_schedule, make_uniform_schedule
from gdm.sampler import (
    default_grid,
    encode,
    make_grid,
    read_latents_csv,
    sample,
    sample_freq,
    trajectory,
    write_latents_csv,
)


def random_net(d, k, seed=0, scale=0.3):
    net = netlib.build(d, k, (16, 16), "tanh", 4, seed=seed)
    net.params[:] = np.random.default_rng(seed).standard_normal(net.params.size) * scale
    return net


def test_grid_k1():
    g = make_grid(make_uniform_schedule(1), 4)
    np.testing.assert_allclose(g.times, [1, 0.75, 0.5, 0.25, 0])
    assert g.total_steps == 4 and g.decreasing


def test_grid_ar_midpoints():
    d = 5
    g = make_grid(make_uniform_schedule(d), d)
    mids = 0.5 * (g.times[:-1] + g.times[1:])
    np.testing.assert_allclose(np.sort(mids), (np.arange(1, d + 1) - 0.5) / d)
    np.testing.assert_array_equal(g.per_group_steps, np.ones(d))


def test_grid_k2_proportional():
    g = make_grid(make_uniform_schedule(2), 6)
    np.testing.assert_array_equal(g.per_group_steps, [3, 3])
    assert 0.5 in g.times.tolist()


def test_grid_contains_every_boundary():
    s = make_schedule((0.1, 0.2, 0.3))
    for alloc in ("proportional", "uniform_per_group"):
        g = make_grid(s, 10, alloc)
        for b in (0.0, 0.1, 0.2, 0.3, 1.0):
            assert np.any(g.times == b)
        assert g.per_group_steps.sum() == 10 and g.per_group_steps.min() >= 1
    g = make_grid(s, 0, "explicit", per_group=[2, 1, 1, 5])
    assert g.total_steps == 9
    assert make_grid(s, 10, direction="encode").times[0] == 0.0
    with pytest.raises(ValueError):
        make_grid(s, 3)
    with pytest.raises(ValueError):
        make_grid(s, 10, "explicit", per_group=[1, 0, 1, 1])


def test_zero_net_is_identity():
    cfg = simple_config(GroupPartition(3, 2, np.array([0, 1, 1])), make_uniform_schedule(2))
    net = netlib.build(3, 2, (8,), seed=0)
    z = np.random.default_rng(0).standard_normal((4, 3))
    grid = default_grid(cfg, 8)
    np.testing.assert_array_equal(sample(net, cfg, z, grid), z)
    np.testing.assert_array_equal(encode(net, cfg, z, grid), z)


def test_k1_matches_plain_euler():
    cfg = simple_config(GroupPartition(2, 1, np.zeros(2, int)), make_uniform_schedule(1))
    net = random_net(2, 1)
    z = np.random.default_rng(1).standard_normal(2)
    x = z.copy()
    for i in range(8):
        t0, t1 = 1 - i / 8, 1 - (i + 1) / 8
        x = x + (t1 - t0) * (-netlib.forward(net, x, [1 - 0.5 * (t0 + t1)]))
    np.testing.assert_allclose(sample(net, cfg, z, make_grid(cfg.schedule, 8)), x, rtol=1e-12)


def test_round_trip_improves_with_steps():
    cfg = FlowConfig(make_partition("frequency_bands", 3, 3, cutoffs=(3, 9)), make_uniform_schedule(2), blur_basis(3, 3))
    net = random_net(9, 2, seed=2, scale=0.1)
    x = np.random.default_rng(3).uniform(-1, 1, (5, 9))
    errs = []
    for steps in (8, 64, 512):
        g = make_grid(cfg.schedule, steps)
        errs.append(np.abs(sample(net, cfg, encode(net, cfg, x, g), g) - x).max())
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 1e-3


def test_trajectory_and_direction_checks():
    cfg = simple_config(GroupPartition(2, 2, np.array([0, 1])), make_uniform_schedule(2))
    net = random_net(2, 2)
    g = make_grid(cfg.schedule, 6)
    traj = trajectory(net, cfg, np.zeros((1, 2)), g)
    assert traj.shape == (7, 1, 2)
    # coordinate 0 is frozen while group 1 is generated (first three steps)
    np.testing.assert_array_equal(traj[:4, 0, 0], 0.0)
    with pytest.raises(ValueError):
        sample_freq(net, cfg, np.zeros(2), g.reversed())


def test_latent_csv_round_trip(tmp_path):
    z = np.random.default_rng(0).standard_normal((3, 5))
    write_latents_csv(tmp_path / "z.csv", z)
    np.testing.assert_array_equal(read_latents_csv(tmp_path / "z.csv"), z)
