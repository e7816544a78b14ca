"""Desk-scale evaluation: sliced Wasserstein, band-variance probe, latent moments, locality leakage."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flow import FlowConfig
from .sampler import StepGrid, encode_freq, sample, sample_freq


def _quantiles(sorted_vals: np.ndarray, m: int) -> np.ndarray:
    n = sorted_vals.size
    if n == m:
        return sorted_vals
    pos = np.arange(m) * (n - 1) / (m - 1)
    return np.interp(pos, np.arange(n), sorted_vals)


def sliced_wasserstein(A, B, projections: int = 128, seed: int = 0) -> float:
    """Mean over random unit directions of the 1D 2-Wasserstein distance.

    Each projected sample set is sorted and linearly interpolated to
    ``min(n, m)`` evenly spaced quantiles before comparing.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if B.ndim == 1:
        B = B[:, None]
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if A.shape[0] < 2 or B.shape[0] < 2:
        raise ValueError("need at least two samples on each side")
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((A.shape[1], projections))
    dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)
    pa = np.sort(A @ dirs, axis=0)
    pb = np.sort(B @ dirs, axis=0)
    m = min(pa.shape[0], pb.shape[0])
    total = 0.0
    for j in range(projections):
        qa = _quantiles(pa[:, j], m)
        qb = _quantiles(pb[:, j], m)
        total += math.sqrt(np.mean((qa - qb) ** 2))
    return total / projections


def band_variance_probe(net, cfg: FlowConfig, grid: StepGrid, fixed_prefix: int, trials: int, seed: int) -> float:
    """Sample variance ``E||x - E x||^2`` when the lowest ``fixed_prefix`` coefficients are shared.

    One latent is drawn; every trial keeps its first ``fixed_prefix``
    frequency coefficients and redraws the rest.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    if not 0 <= fixed_prefix <= cfg.d:
        raise ValueError(f"fixed_prefix must lie in [0, {cfg.d}]")
    rng = np.random.default_rng(seed)
    shared = rng.standard_normal(cfg.d)
    zbar = rng.standard_normal((trials, cfg.d))
    zbar[:, :fixed_prefix] = shared[:fixed_prefix]
    x = sample(net, cfg, cfg.basis.from_freq(zbar), grid)
    return float(np.sum(np.var(x, axis=0, ddof=1)))


@dataclass
class LatentMoments:
    mean: np.ndarray
    var: np.ndarray

    @property
    def max_abs_mean(self) -> float:
        return float(np.max(np.abs(self.mean)))

    @property
    def max_abs_var_dev(self) -> float:
        return float(np.max(np.abs(self.var - 1.0)))


def latent_normality(net, cfg: FlowConfig, grid: StepGrid, dataset, n: int) -> LatentMoments:
    """Per-coefficient mean and variance of encoded data (the prior is N(0, I))."""
    if n < 10:
        raise ValueError("need at least 10 encoded points")
    data = np.asarray(getattr(dataset, "samples", dataset))[:n]
    if data.shape[0] < n:
        raise ValueError(f"dataset has only {data.shape[0]} points")
    zbar = encode_freq(net, cfg, cfg.basis.to_freq(data), grid)
    return LatentMoments(zbar.mean(axis=0), zbar.var(axis=0, ddof=1))


def earlier_groups(cfg: FlowConfig, group: int) -> list[int]:
    """Groups generated before ``group`` (their intervals end later)."""
    te = cfg.schedule.t_end
    return [g for g in range(cfg.k) if te[g] > te[group]]


def locality_leakage(net, cfg: FlowConfig, grid: StepGrid, group: int, trials: int, seed: int) -> float:
    """Mean ratio of the change in earlier-generated groups to the change inside ``group``.

    Changes are max-abs differences of decoded frequency coefficients when the
    group's latent coefficients are redrawn. Returns NaN when no group is
    generated before ``group``.
    """
    before = earlier_groups(cfg, group)
    if not before:
        return math.nan
    rng = np.random.default_rng(seed)
    in_group = cfg.partition.member_mask([group])
    in_before = cfg.partition.member_mask(before)
    # identical batch shapes keep BLAS summation order identical row by row
    base = np.broadcast_to(rng.standard_normal(cfg.d), (trials, cfg.d)).copy()
    alt = base.copy()
    alt[:, in_group] = rng.standard_normal((trials, int(in_group.sum())))
    x0 = sample_freq(net, cfg, base, grid)
    x1 = sample_freq(net, cfg, alt, grid)
    diff = np.abs(x1 - x0)
    num = diff[:, in_before].max(axis=1)
    den = diff[:, in_group].max(axis=1)
    return float(np.mean(num / np.maximum(den, 1e-300)))


def write_metric_rows(path, rows) -> None:
    """Append ``{metric, params, value, seed}`` rows to a CSV file."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["metric", "params", "value", "seed"], extrasaction="ignore")
        if new:
            w.writeheader()
        for r in rows:
            w.writerow(r)


def random_orders(k: int, count: int, seed: int) -> list[tuple[int, ...]]:
    """``count`` distinct random generation orders (all of them if ``k!`` is smaller)."""
    if count > math.factorial(k):
        raise ValueError(f"only {math.factorial(k)} distinct orders exist for k={k}")
    rng = np.random.default_rng(seed)
    seen: list[tuple[int, ...]] = []
    while len(seen) < count:
        o = tuple(int(v) for v in rng.permutation(k))
        if o not in seen:
            seen.append(o)
    return seen


def order_benchmark(net, cfg: FlowConfig, orders, seeds, reference, n_samples: int, steps=None, projections: int = 128):
    """Sliced Wasserstein to ``reference`` for every (order, seed) pair on one shared model.

    Each order is a uniform schedule whose first-listed group is generated
    first. The seed drives the latent draw only; projections are fixed.
    """
    from .grouping import make_uniform_schedule
    from .sampler import default_grid

    rows = []
    for order in orders:
        c = cfg.with_schedule(make_uniform_schedule(cfg.k, order))
        grid = default_grid(c, steps)
        for s in seeds:
            zbar = np.random.default_rng(s).standard_normal((n_samples, cfg.d))
            x = c.basis.from_freq(sample_freq(net, c, zbar, grid))
            swd = sliced_wasserstein(x, reference, projections=projections, seed=0)
            rows.append({"order": "-".join(map(str, order)), "seed": int(s), "swd": swd})
    return rows


@dataclass
class OrderSummary:
    per_order_mean: dict
    spread: float
    within_std: float

    @property
    def ratio(self) -> float:
        return self.spread / self.within_std if self.within_std > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "per_order_mean": self.per_order_mean,
            "spread": self.spread,
            "within_std": self.within_std,
            "ratio": self.ratio,
        }


def order_summary(rows) -> dict:
    """Spread of per-order mean SWD against the pooled within-order seed std (ddof=1)."""
    by: dict[str, list[float]] = {}
    for r in rows:
        by.setdefault(r["order"], []).append(float(r["swd"]))
    means = {o: float(np.mean(v)) for o, v in by.items()}
    variances = [np.var(v, ddof=1) for v in by.values() if len(v) > 1]
    if not variances:
        raise ValueError("need at least two seeds per order")
    within = float(math.sqrt(np.mean(variances)))
    spread = max(means.values()) - min(means.values())
    return OrderSummary(means, spread, within).to_dict()


def write_order_rows(path, rows) -> None:
    fields = ["order", "seed", "swd", "checkpoint_hash"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)
