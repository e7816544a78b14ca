"""Command-line front end: ``gdm <command> ...``.

Exit codes: 0 ok, 1 validation error, 2 runtime error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data as datalib
from . import equivalence, latent_ops, metrics
from . import net as netlib
from .basis import basis_from_dict
from .flow import FlowConfig
from .grouping import GroupPartition, make_partition, make_schedule, make_uniform_schedule
from .net import NonFiniteError
from .sampler import default_grid, encode_freq, read_latents_csv, sample_freq, write_latents_csv
from .trainer import TrainConfig, train

log = logging.getLogger("gdm")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class VerificationFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- config


def grid_shape(doc: dict) -> tuple[int, int]:
    if "height" in doc and "width" in doc:
        return int(doc["height"]), int(doc["width"])
    if doc.get("data", {}).get("kind") == "mixture2d":
        return 1, 2
    ds = doc.get("data", {})
    side = ds.get("height", ds.get("target", [16])[0])
    return int(side), int(ds.get("width", side))


def flow_from_config(doc: dict, cache_dir=None) -> FlowConfig:
    """Build and validate a FlowConfig from the JSON run config."""
    h, w = grid_shape(doc)
    pdoc = dict(doc.get("partition", {"strategy": "rows_bottom_top", "k": 1}))
    if "assignment" in pdoc:
        a = np.asarray(pdoc["assignment"], dtype=np.int64)
        partition = GroupPartition(a.size, int(pdoc.get("k", a.max() + 1)), a)
    else:
        strategy = pdoc.pop("strategy")
        partition = make_partition(strategy, h, w, **pdoc)
    sdoc = doc.get("schedule", {})
    order = sdoc.get("order")
    if "boundaries" in sdoc:
        schedule = make_schedule(sdoc["boundaries"], order)
    else:
        schedule = make_uniform_schedule(partition.k, order)
    bdoc = {"kind": "identity", "sigma": 1.0, **doc.get("basis", {}), "height": h, "width": w}
    return FlowConfig(
        partition,
        schedule,
        basis_from_dict(bdoc, cache_dir=cache_dir),
        mask_inactive_inputs=bool(doc.get("mask_inactive_inputs", False)),
        solver_steps=int(doc.get("solver_steps", 64)),
    )


def load_config(path) -> dict:
    return json.loads(Path(path).read_text())


def load_data(spec: str | None, doc: dict) -> datalib.Dataset:
    if spec is None:
        if "data" not in doc:
            raise ValueError("no --data given and the config has no 'data' block")
        return datalib.dataset_from_dict(doc["data"])
    p = Path(spec)
    if p.is_dir():
        return datalib.load_image_dir(p, grid_shape(doc))
    if p.suffix == ".json":
        return datalib.dataset_from_dict(json.loads(p.read_text()))
    if p.with_suffix(p.suffix + ".json").exists():
        return datalib.load_dataset(p)
    raise ValueError(f"cannot interpret --data {spec!r}")


def train_orders(cfg: FlowConfig, tdoc: dict, seed: int):
    """Schedules for multi-order training: 'all', 'random' or an explicit list."""
    spec = tdoc.get("train_orders")
    if not spec:
        return None
    k = cfg.k
    if spec == "all":
        orders = [list(p) for p in itertools.permutations(range(k))]
    elif spec == "random":
        rng = np.random.default_rng([seed, 7])
        orders = [rng.permutation(k).tolist() for _ in range(int(tdoc.get("n_train_orders", 256)))]
    else:
        orders = [list(o) for o in spec]
    return [make_uniform_schedule(k, o) for o in orders]


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_model(path):
    net, header = netlib.load_checkpoint(path)
    cfg = FlowConfig.from_dict(header["flow_config"])
    if net.d != cfg.d or net.k != cfg.k:
        raise ValueError(f"{path}: network (d={net.d}, k={net.k}) does not match its flow config")
    return net, cfg, header


def write_manifest(out: Path, command: str, config, seed, ckpt_hash, artifacts) -> Path:
    path = out / "manifest.json" if out.is_dir() else out.with_name(out.name + ".manifest.json")
    path.write_text(
        json.dumps(
            {
                "command": command,
                "config": config,
                "seed": seed,
                "checkpoint_hash": ckpt_hash,
                "artifacts": [str(a) for a in artifacts],
            },
            indent=2,
        )
    )
    return path


def _argdict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _dims(cfg: FlowConfig):
    return (cfg.basis.height, cfg.basis.width)


def _is_points(cfg: FlowConfig) -> bool:
    return cfg.basis.height == 1


def write_outputs(out_dir: Path, x: np.ndarray, cfg: FlowConfig, stem="sample") -> list[Path]:
    """Raw rows to CSV; images additionally to PGM files plus a tiled grid."""
    out_dir.mkdir(parents=True, exist_ok=True)
    x = np.atleast_2d(x)
    paths = [out_dir / f"{stem}s.csv"]
    np.savetxt(paths[0], x, delimiter=",", fmt="%.17g")
    if _is_points(cfg):
        return paths
    h, w = _dims(cfg)
    imgs = x.reshape(-1, h, w)
    for i, img in enumerate(imgs):
        p = out_dir / f"{stem}_{i:03d}.pgm"
        datalib.write_image(p, img)
        paths.append(p)
    cols = int(np.ceil(np.sqrt(len(imgs))))
    rows = int(np.ceil(len(imgs) / cols))
    tile = np.full((rows * (h + 1) - 1, cols * (w + 1) - 1), -1.0)
    for i, img in enumerate(imgs):
        r, c = divmod(i, cols)
        tile[r * (h + 1) : r * (h + 1) + h, c * (w + 1) : c * (w + 1) + w] = img
    p = out_dir / f"{stem}_grid.pgm"
    datalib.write_image(p, tile)
    paths.append(p)
    return paths


def read_input(path, cfg: FlowConfig) -> np.ndarray:
    """A PGM/PPM image (cropped and resized to the model grid) or a CSV of rows."""
    p = Path(path)
    if p.suffix.lower() in datalib.IMAGE_SUFFIXES:
        img = datalib.center_crop_downsample(datalib.read_image(p), _dims(cfg))
        return datalib.from_uint8(img).ravel()[None, :]
    x = np.atleast_2d(np.loadtxt(p, delimiter=",", dtype=np.float64))
    if x.shape[1] != cfg.d:
        raise ValueError(f"{p}: rows have {x.shape[1]} values, model expects {cfg.d}")
    return x


def parse_range(text: str):
    lo, hi, n = text.split(":")
    return np.linspace(float(lo), float(hi), int(n))


def parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def parse_band(text: str) -> tuple[int, int]:
    lo, hi = text.split(":")
    return int(lo), int(hi)


# --------------------------------------------------------------------------- commands


def cmd_train(args):
    doc = load_config(args.config)
    cfg = flow_from_config(doc, cache_dir=args.basis_cache)
    ds = load_data(args.data, doc)
    if ds.d != cfg.d:
        raise ValueError(f"dataset d={ds.d} does not match config d={cfg.d}")
    tdoc = doc.get("train", {})
    hp = TrainConfig.from_dict(tdoc)
    if args.steps:
        hp.steps = args.steps
    out = Path(args.out)
    schedules = train_orders(cfg, tdoc, hp.seed)
    net, losses = train(cfg, ds.samples, hp, out_dir=out, schedules=schedules)
    ckpt = netlib.save_checkpoint(out / "model.bin", net, cfg.to_dict(), extra={"run_config": doc})
    write_manifest(out, "train", doc, hp.seed, file_hash(ckpt), [ckpt, out / "loss.csv"])
    print(f"trained {hp.steps} steps, final loss {losses[-min(100, len(losses)):].mean():.5f} -> {ckpt}")


def cmd_sample(args):
    net, cfg, _ = load_model(args.ckpt)
    grid = default_grid(cfg, args.steps)
    zbar = np.random.default_rng(args.seed).standard_normal((args.n, cfg.d))
    x = cfg.basis.from_freq(sample_freq(net, cfg, zbar, grid))
    out = Path(args.out)
    paths = write_outputs(out, x, cfg)
    write_latents_csv(out / "latents.csv", zbar)
    write_manifest(out, "sample", _argdict(args), args.seed, file_hash(args.ckpt), paths + [out / "latents.csv"])
    print(f"wrote {args.n} samples to {out}")


def cmd_encode(args):
    net, cfg, _ = load_model(args.ckpt)
    x = read_input(args.image, cfg)
    zbar = encode_freq(net, cfg, cfg.basis.to_freq(x), default_grid(cfg, args.steps))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_latents_csv(out, zbar)
    write_manifest(out, "encode", _argdict(args), None, file_hash(args.ckpt), [out])
    print(f"encoded {x.shape[0]} input(s) to {out}")


def _decode_to(out: Path, zbar, net, cfg, steps, stem):
    x = cfg.basis.from_freq(sample_freq(net, cfg, np.atleast_2d(zbar), default_grid(cfg, steps)))
    if out.suffix.lower() in datalib.IMAGE_SUFFIXES and not _is_points(cfg):
        out.parent.mkdir(parents=True, exist_ok=True)
        datalib.write_image(out, x[0].reshape(_dims(cfg)))
        return [out]
    if out.suffix.lower() == ".csv":
        out.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(out, x, delimiter=",", fmt="%.17g")
        return [out]
    return write_outputs(out, x, cfg, stem)


def cmd_mix(args):
    net, cfg, _ = load_model(args.ckpt)
    za, zb = read_latents_csv(args.a)[0], read_latents_csv(args.b)[0]
    mixed = latent_ops.swap_groups(za, zb, parse_ints(args.groups), cfg, coords="freq")
    out = Path(args.out)
    paths = _decode_to(out, mixed, net, cfg, args.steps, "mix")
    write_latents_csv(out.with_name(out.stem + "_latent.csv"), mixed)
    write_manifest(out, "mix", _argdict(args), None, file_hash(args.ckpt), paths)


def cmd_traverse(args):
    net, cfg, _ = load_model(args.ckpt)
    z = read_latents_csv(args.z)[0]
    values = parse_range(args.range)
    sweep = latent_ops.traverse_sweep(z, args.index, values, cfg, coords="freq")
    out = Path(args.out)
    paths = _decode_to(out, sweep, net, cfg, args.steps, "traverse")
    write_latents_csv(out / "latents.csv", sweep)
    write_manifest(out, "traverse", _argdict(args), None, file_hash(args.ckpt), paths)


def cmd_vary(args):
    net, cfg, _ = load_model(args.ckpt)
    x = read_input(args.image, cfg)[0]
    grid = default_grid(cfg, args.steps)
    if args.fix_groups is not None:
        var = latent_ops.make_variation(x, parse_ints(args.fix_groups), args.seed, net, cfg, grid, n=args.n)
    else:
        band = parse_band(args.fix_bands)
        var = latent_ops.subset_reconstruct(np.tile(x, (args.n, 1)), band, args.seed, net, cfg, grid)
    out = Path(args.out)
    paths = write_outputs(out, var, cfg, "variation")
    write_manifest(out, "vary", _argdict(args), args.seed, file_hash(args.ckpt), paths)


def cmd_probe(args):
    net, cfg, header = load_model(args.ckpt)
    grid = default_grid(cfg, args.steps)
    rows = []
    if args.kind == "band-variance":
        prefixes = parse_ints(args.prefixes) if args.prefixes else [0, cfg.d // 16, cfg.d // 4, cfg.d]
        for p in prefixes:
            for s in range(args.seeds):
                v = metrics.band_variance_probe(net, cfg, grid, p, args.trials, s)
                rows.append({"metric": "band_variance", "params": json.dumps({"fixed_prefix": p}), "value": v, "seed": s})
    elif args.kind == "normality":
        doc = header.get("run_config") or {}
        ds = load_data(args.data, doc)
        m = metrics.latent_normality(net, cfg, grid, ds, min(args.n, ds.n))
        rows.append({"metric": "max_abs_mean", "params": json.dumps({"n": args.n}), "value": m.max_abs_mean, "seed": ""})
        rows.append({"metric": "max_abs_var_dev", "params": json.dumps({"n": args.n}), "value": m.max_abs_var_dev, "seed": ""})
        for i, (mu, var) in enumerate(zip(m.mean, m.var)):
            rows.append({"metric": "coeff_mean", "params": json.dumps({"index": i}), "value": mu, "seed": ""})
            rows.append({"metric": "coeff_var", "params": json.dumps({"index": i}), "value": var, "seed": ""})
    elif args.kind == "leakage":
        groups = parse_ints(args.groups) if args.groups else range(cfg.k)
        for g in groups:
            r = metrics.locality_leakage(net, cfg, grid, g, args.trials, args.seed)
            rows.append({"metric": "locality_leakage", "params": json.dumps({"group": g}), "value": r, "seed": args.seed})
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.exists():
        out.unlink()
    metrics.write_metric_rows(out, rows)
    write_manifest(out, "probe", _argdict(args), args.seed, file_hash(args.ckpt), [out])


def cmd_bench_order(args):
    doc = load_config(args.config)
    cfg = flow_from_config(doc, cache_dir=args.basis_cache)
    ds = load_data(args.data, doc)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.ckpt:
        net, _, _ = load_model(args.ckpt)
        ckpt = Path(args.ckpt)
    else:
        tdoc = {"train_orders": "all" if cfg.k <= 6 else "random", **doc.get("train", {})}
        hp = TrainConfig.from_dict(tdoc)
        net, _ = train(cfg, ds.samples, hp, schedules=train_orders(cfg, tdoc, hp.seed))
        ckpt = netlib.save_checkpoint(out.with_name(out.stem + "_model.bin"), net, cfg.to_dict(), extra={"run_config": doc})
    digest = file_hash(ckpt)
    orders = metrics.random_orders(cfg.k, args.orders, args.seed)
    rows = metrics.order_benchmark(
        net, cfg, orders, seeds=range(args.seeds), reference=ds.samples[: args.n_ref], n_samples=args.n, steps=args.steps
    )
    for r in rows:
        r["checkpoint_hash"] = digest
    metrics.write_order_rows(out, rows)
    summary = metrics.order_summary(rows)
    print(json.dumps(summary, indent=2))
    write_manifest(out, "bench-order", {"args": _argdict(args), "config": doc}, args.seed, digest, [out, ckpt])


def cmd_verify(args):
    results = [equivalence.SUITES[s]() for s in args.suite]
    for r in results:
        print(r.line())
    if not all(r.passed for r in results):
        raise VerificationFailed(", ".join(r.name for r in results if not r.passed))


# --------------------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gdm", description="Groupwise rectified-flow models at desk scale.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", help="train a model from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--data", help="image directory, dataset cache or dataset JSON (default: config 'data')")
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int, help="override train.steps")
    s.add_argument("--basis-cache")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="draw samples from a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--n", type=int, default=16)
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("encode", help="encode an image or CSV rows to latent coefficients")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("mix", help="swap latent groups of two encoded inputs")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    s.add_argument("--groups", required=True, help="comma-separated group ids taken from --b")
    s.add_argument("--steps", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("traverse", help="sweep one latent coefficient")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--z", required=True)
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--range", default="-3:3:7", help="lo:hi:count; write as --range=-3:3:7 when lo is negative")
    s.add_argument("--steps", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_traverse)

    s = sub.add_parser("vary", help="variations of an input with some latents fixed")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--image", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--fix-bands", help="lo:hi frequency positions kept from the input")
    g.add_argument("--fix-groups", help="comma-separated group ids kept from the input")
    s.add_argument("--n", type=int, default=8)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--steps", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_vary)

    s = sub.add_parser("probe", help="band-variance, latent normality or locality leakage")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--kind", required=True, choices=["band-variance", "normality", "leakage"])
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=16)
    s.add_argument("--trials", type=int, default=16)
    s.add_argument("--prefixes", help="comma-separated fixed-prefix sizes")
    s.add_argument("--groups", help="comma-separated groups for leakage")
    s.add_argument("--data", help="dataset for the normality probe (default: training data)")
    s.add_argument("--n", type=int, default=2000)
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("bench-order", help="evaluate one shared model under random generation orders")
    s.add_argument("--config", required=True)
    s.add_argument("--ckpt", help="reuse a multi-order checkpoint instead of training")
    s.add_argument("--data")
    s.add_argument("--orders", type=int, default=10)
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=4000, help="samples per (order, seed)")
    s.add_argument("--n-ref", type=int, default=4000)
    s.add_argument("--steps", type=int)
    s.add_argument("--basis-cache")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench_order)

    s = sub.add_parser("verify", help="run invariant suites")
    s.add_argument("--suite", required=True, action="append", choices=sorted(equivalence.SUITES))
    s.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    threads = os.environ.get("GDM_NUM_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(int(threads)):
                args.func(args)
        else:
            args.func(args)
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, NonFiniteError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
