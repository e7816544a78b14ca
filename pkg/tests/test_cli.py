import csv
import json

import numpy as np
import pytest

from gdm import data
from gdm import net as netlib
from gdm.cli import flow_from_config, main
from gdm.sampler import read_latents_csv

POINTS = {
    "data": {"kind": "mixture2d", "modes": 4, "n": 500, "seed": 0},
    "partition": {"strategy": "rows_bottom_top", "k": 1},
    "basis": {"kind": "identity"},
    "solver_steps": 8,
    "train": {"steps": 30, "batch_size": 32, "hidden": [16, 16], "cond_embed_dim": 4},
}

IMAGES = {
    "data": {"kind": "synthetic", "height": 8, "width": 8, "n": 64, "seed": 0},
    "height": 8,
    "width": 8,
    "partition": {"strategy": "blocks", "grid": [2, 2]},
    "schedule": {"order": [3, 2, 1, 0]},
    "basis": {"kind": "blur", "sigma": 1.0},
    "solver_steps": 8,
    "train": {"steps": 20, "batch_size": 16, "hidden": [16], "cond_embed_dim": 2, "train_orders": "all"},
}


def write_cfg(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def zero_ckpt(tmp_path, doc):
    cfg = flow_from_config(doc)
    net = netlib.build(cfg.d, cfg.k, (8,), cond_embed_dim=2)
    return str(netlib.save_checkpoint(tmp_path / "zero.bin", net, cfg.to_dict(), extra={"run_config": doc}))


def test_flow_from_config_order():
    cfg = flow_from_config(IMAGES)
    assert cfg.d == 64 and cfg.k == 4 and cfg.basis.kind == "blur"
    assert cfg.schedule.generation_order == [3, 2, 1, 0]


def test_train_sample_encode_points(tmp_path):
    c = write_cfg(tmp_path, POINTS)
    assert main(["train", "--config", c, "--out", str(tmp_path / "run")]) == 0
    ckpt = tmp_path / "run" / "model.bin"
    assert ckpt.exists() and (tmp_path / "run" / "loss.csv").exists()
    man = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert man["command"] == "train" and len(man["checkpoint_hash"]) == 64
    assert main(["sample", "--ckpt", str(ckpt), "--n", "5", "--seed", "1", "--out", str(tmp_path / "s")]) == 0
    pts = np.loadtxt(tmp_path / "s" / "samples.csv", delimiter=",")
    assert pts.shape == (5, 2)
    np.savetxt(tmp_path / "x.csv", pts[:2], delimiter=",")
    assert main(["encode", "--ckpt", str(ckpt), "--image", str(tmp_path / "x.csv"), "--out", str(tmp_path / "z.csv")]) == 0
    assert read_latents_csv(tmp_path / "z.csv").shape == (2, 2)


def test_sample_zero_checkpoint_returns_latents(tmp_path):
    ckpt = zero_ckpt(tmp_path, POINTS)
    assert main(["sample", "--ckpt", ckpt, "--n", "4", "--seed", "7", "--out", str(tmp_path / "s")]) == 0
    out = np.loadtxt(tmp_path / "s" / "samples.csv", delimiter=",")
    np.testing.assert_array_equal(out, np.random.default_rng(7).standard_normal((4, 2)))


def test_image_commands(tmp_path):
    ckpt = zero_ckpt(tmp_path, IMAGES)
    ds = data.synthetic_factors(8, 8, 2, seed=3)
    for i in range(2):
        data.write_image(tmp_path / f"img{i}.pgm", ds.samples[i].reshape(8, 8))
    for i in range(2):
        assert main(["encode", "--ckpt", ckpt, "--image", str(tmp_path / f"img{i}.pgm"), "--out", str(tmp_path / f"z{i}.csv")]) == 0
    assert main(["mix", "--ckpt", ckpt, "--a", str(tmp_path / "z0.csv"), "--b", str(tmp_path / "z1.csv"),
                 "--groups", "0,2", "--out", str(tmp_path / "mix.pgm")]) == 0
    assert (tmp_path / "mix.pgm").read_bytes()[:2] == b"P5"
    assert main(["traverse", "--ckpt", ckpt, "--z", str(tmp_path / "z0.csv"), "--index", "1",
                 "--range=-3:3:7", "--out", str(tmp_path / "trav")]) == 0
    assert len(list((tmp_path / "trav").glob("traverse_0*.pgm"))) == 7
    assert main(["vary", "--ckpt", ckpt, "--image", str(tmp_path / "img0.pgm"), "--fix-bands", "0:8",
                 "--n", "3", "--out", str(tmp_path / "var")]) == 0
    assert main(["vary", "--ckpt", ckpt, "--image", str(tmp_path / "img0.pgm"), "--fix-groups", "1",
                 "--n", "2", "--out", str(tmp_path / "var2")]) == 0
    assert (tmp_path / "var2" / "variation_grid.pgm").exists()
    assert main(["sample", "--ckpt", ckpt, "--n", "4", "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "sample_grid.pgm").exists()


def test_probe(tmp_path):
    ckpt = zero_ckpt(tmp_path, IMAGES)
    out = tmp_path / "p.csv"
    assert main(["probe", "--ckpt", ckpt, "--kind", "band-variance", "--seeds", "2", "--trials", "4", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 8 and rows[0]["metric"] == "band_variance"
    assert main(["probe", "--ckpt", ckpt, "--kind", "normality", "--n", "50", "--out", str(tmp_path / "n.csv")]) == 0
    assert main(["probe", "--ckpt", ckpt, "--kind", "leakage", "--trials", "2", "--out", str(tmp_path / "l.csv")]) == 0


def test_bench_order_shares_checkpoint(tmp_path):
    c = write_cfg(tmp_path, IMAGES)
    out = tmp_path / "bench.csv"
    assert main(["bench-order", "--config", c, "--orders", "2", "--seeds", "2", "--n", "20", "--n-ref", "64",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len({r["order"] for r in rows}) == 2 and len(rows) == 4
    assert len({r["checkpoint_hash"] for r in rows}) == 1
    ckpt = tmp_path / "bench_model.bin"
    assert main(["bench-order", "--config", c, "--ckpt", str(ckpt), "--orders", "2", "--seeds", "2", "--n", "20",
                 "--n-ref", "64", "--out", str(tmp_path / "b2.csv")]) == 0


def test_verify(capsys):
    assert main(["verify", "--suite", "ar"]) == 0
    assert "[PASS] ar-equivalence" in capsys.readouterr().out


def test_exit_codes(tmp_path, monkeypatch):
    bad = dict(POINTS, partition={"strategy": "blocks", "grid": [3, 3]})
    assert main(["train", "--config", write_cfg(tmp_path, bad), "--out", str(tmp_path / "r")]) == 1
    assert main(["sample", "--ckpt", str(tmp_path / "missing.bin"), "--out", str(tmp_path / "s")]) == 2
    from gdm import equivalence
    from gdm.equivalence import CheckResult

    monkeypatch.setitem(equivalence.SUITES, "ar", lambda: CheckResult("ar", False, "forced"))
    assert main(["verify", "--suite", "ar"]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["sample"])
    assert exc.value.code == 1


def test_thread_limit_env(tmp_path, monkeypatch):
    monkeypatch.setenv("GDM_NUM_THREADS", "1")
    assert main(["verify", "--suite", "gradient"]) == 0
