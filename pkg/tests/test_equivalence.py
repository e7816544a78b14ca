import numpy as np
import pytest

from gdm import equivalence as eq
from gdm import net as netlib
from gdm.sampler import sample


def affine_net(w, b):
    return netlib.VectorFieldNet((w.shape[0], w.shape[1]), "relu", np.concatenate([w.ravel(), b]), k=2)


def test_d2_hand_trace():
    # u = W^T [x0, x1, c0, c1] + b ; one step on coordinate 1, then on coordinate 0
    w = np.array([[0.5, -1.0], [2.0, 0.25], [1.0, 3.0], [-2.0, 0.5]])
    b = np.array([0.1, -0.2])
    net = affine_net(w, b)
    cfg = eq.ar_config(2)
    z = np.array([0.4, -0.8])

    # step 1: t 1 -> 1/2, alphas (0, 1/2); x1 += u1
    u1 = -1.0 * 0.4 + 0.25 * -0.8 + 3.0 * 0.0 + 0.5 * 0.5 - 0.2
    x1 = -0.8 + u1
    # step 2: t 1/2 -> 0, alphas (1/2, 1); x0 += u0
    u0 = 0.5 * 0.4 + 2.0 * x1 + 1.0 * 0.5 - 2.0 * 1.0 + 0.1
    x0 = 0.4 + u0
    expect = np.array([x0, x1])
    np.testing.assert_allclose(expect, [-3.5, -1.35], rtol=1e-14)
    np.testing.assert_allclose(eq.ar_sample_oracle(net, cfg, z), expect, rtol=1e-14)
    np.testing.assert_allclose(sample(net, cfg, z, eq.ar_grid(cfg)), expect, rtol=1e-14)


def test_ar_config_examples():
    cfg = eq.ar_config(3, order=[0, 1, 2])
    assert cfg.k == 3 and cfg.partition.sizes().tolist() == [1, 1, 1]
    for j in range(3):
        assert cfg.schedule.t_start[j] == pytest.approx(j / 3)
    # coordinate 0 is generated first: its interval ends at 1
    assert cfg.schedule.t_end[cfg.partition.assignment[0]] == 1.0
    one = eq.ar_config(1)
    assert one.k == 1 and one.schedule.t_start[0] == 0 and one.schedule.t_end[0] == 1
    with pytest.raises(ValueError):
        eq.ar_config(3, order=[0, 0, 1])


def test_oracle_zero_net():
    cfg = eq.ar_config(4)
    z = np.random.default_rng(0).standard_normal(4)
    np.testing.assert_array_equal(eq.ar_sample_oracle(netlib.build(4, 4, (8,)), cfg, z), z)


def test_cdm_config():
    cfg = eq.cdm_config(4, 4, 2)
    first = cfg.schedule.generation_order[0]
    assert len(cfg.partition.indices(first)) == 4
    assert len(cfg.partition.indices(1 - first)) == 12


@pytest.mark.parametrize("name", ["ar", "cdm", "basis", "gradient", "locality"])
def test_suites_pass(name):
    r = eq.SUITES[name]()
    assert r.passed, r.line()
    assert r.line().startswith("[PASS]")


def test_frozen_violation_detects_change():
    cfg = eq.cdm_config(2, 2, 2, solver_steps=4)
    from gdm.sampler import make_grid

    grid = make_grid(cfg.schedule, 4)
    traj = np.zeros((5, 4))
    assert eq.frozen_violation(cfg, traj, grid.times) == 0.0
    traj[1:, cfg.partition.indices(0)[0]] = 1.0  # finer group moves during the coarse interval
    assert eq.frozen_violation(cfg, traj, grid.times) == 1.0
