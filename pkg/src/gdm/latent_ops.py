"""Group-level latent editing: mixing, interpolation, traversal, variation, subset reconstruction.

Latents are pixel-space vectors by default and are moved to frequency
coefficients internally. Pass ``coords="freq"`` to work on coefficient
vectors directly, in which case every edit is exact bookkeeping.
"""

from __future__ import annotations

import numpy as np

from .flow import FlowConfig
from .sampler import StepGrid, encode_freq, sample_freq


def _to(cfg: FlowConfig, z, coords):
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != cfg.d:
        raise ValueError(f"latent must have length {cfg.d}, got {z.shape}")
    if coords == "freq":
        return z.copy()
    if coords != "pixel":
        raise ValueError("coords must be 'pixel' or 'freq'")
    return cfg.basis.to_freq(z)


def _back(cfg: FlowConfig, zbar, coords):
    return zbar if coords == "freq" else cfg.basis.from_freq(zbar)


def _decreasing(grid: StepGrid) -> StepGrid:
    return grid if grid.decreasing else grid.reversed()


def swap_groups(zA, zB, groups, cfg: FlowConfig, coords: str = "pixel") -> np.ndarray:
    """Replace zA's coefficients on the given groups by zB's."""
    sel = cfg.partition.member_mask(groups)
    a, b = _to(cfg, zA, coords), _to(cfg, zB, coords)
    # whole-vector cases skip the basis round trip so they stay exact
    if not sel.any():
        return np.array(zA, dtype=np.float64)
    if sel.all():
        return np.array(zB, dtype=np.float64)
    return _back(cfg, np.where(sel, b, a), coords)


def interpolate_group(zA, zB, group: int, lam: float, cfg: FlowConfig, coords: str = "pixel") -> np.ndarray:
    """``(1 - lam) * zA + lam * zB`` on one group's coefficients; zA elsewhere."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    a, b = _to(cfg, zA, coords), _to(cfg, zB, coords)
    sel = cfg.partition.member_mask([group])
    if lam == 0.0:
        mixed = a
    elif lam == 1.0:
        mixed = b
    else:
        mixed = (1.0 - lam) * a + lam * b
    return _back(cfg, np.where(sel, mixed, a), coords)


def traverse_element(z, freq_index: int, value: float, cfg: FlowConfig, coords: str = "pixel") -> np.ndarray:
    """Set one frequency coefficient (position in low-to-high order) to ``value``."""
    if not 0 <= freq_index < cfg.d:
        raise ValueError(f"freq_index {freq_index} out of range [0, {cfg.d})")
    zbar = _to(cfg, z, coords)
    zbar[..., freq_index] = value
    return _back(cfg, zbar, coords)


def traverse_sweep(z, freq_index: int, values, cfg: FlowConfig, coords: str = "pixel") -> np.ndarray:
    return np.stack([traverse_element(z, freq_index, v, cfg, coords) for v in values])


def resample_coeffs(zbar: np.ndarray, keep: np.ndarray, rng: np.random.Generator, fill: str = "noise"):
    """Keep coefficients where ``keep`` is true; refill the rest with N(0, 1) draws or zeros."""
    if fill == "noise":
        fresh = rng.standard_normal(zbar.shape)
    elif fill == "zeros":
        fresh = np.zeros(zbar.shape)
    else:
        raise ValueError("fill must be 'noise' or 'zeros'")
    return np.where(keep, zbar, fresh)


def make_variation(x, fixed_groups, seed, net, cfg: FlowConfig, grid: StepGrid, n: int | None = None) -> np.ndarray:
    """Encode ``x``, redraw every coefficient outside ``fixed_groups``, decode.

    With ``n`` set, returns ``n`` variations stacked along the first axis.
    """
    fixed_groups = list(fixed_groups)
    keep = cfg.partition.member_mask(fixed_groups) if fixed_groups else np.zeros(cfg.d, bool)
    zbar = encode_freq(net, cfg, cfg.basis.to_freq(x), grid)
    rng = np.random.default_rng(seed)
    reps = 1 if n is None else n
    zs = resample_coeffs(np.broadcast_to(zbar, (reps, cfg.d)), keep, rng)
    out = cfg.basis.from_freq(sample_freq(net, cfg, zs, _decreasing(grid)))
    return out[0] if n is None else out


def band_mask(d: int, band) -> np.ndarray:
    lo, hi = band
    if not 0 <= lo <= hi <= d:
        raise ValueError(f"band [{lo}, {hi}) is outside [0, {d})")
    keep = np.zeros(d, dtype=bool)
    keep[lo:hi] = True
    return keep


def subset_reconstruct(x, keep_band, seed, net, cfg: FlowConfig, grid: StepGrid, fill: str = "noise") -> np.ndarray:
    """Decode after keeping only the coefficients in ``keep_band = (lo, hi)``.

    Discarded coefficients are refilled with fresh prior noise by default
    (``fill="zeros"`` for comparison). ``x`` may be a batch of rows.
    """
    keep = band_mask(cfg.d, keep_band)
    zbar = encode_freq(net, cfg, cfg.basis.to_freq(x), grid)
    rng = np.random.default_rng(seed)
    zs = resample_coeffs(zbar, keep, rng, fill)
    return cfg.basis.from_freq(sample_freq(net, cfg, zs, _decreasing(grid)))
