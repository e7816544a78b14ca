"""Orthogonal bases for frequency-domain grouping.

A basis stores its dense ``d x d`` matrix with columns already arranged from
lowest to highest frequency, so ``to_freq(x)[0]`` is the coarsest coefficient.
``freq_order[p]`` records which native column (2D index ``u * width + v``)
sits at position ``p``.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KINDS = ("identity", "dct2", "blur")
_KIND_CODES = {k: i for i, k in enumerate(KINDS)}
_HEADER = struct.Struct("<2sHId")
_MAGIC = b"GB"


@dataclass(frozen=True, eq=False)
class OrthoBasis:
    """Orthogonal transform with a canonical low-to-high frequency ordering.

    Attributes
    ----------
    kind : str
        One of ``identity``, ``dct2``, ``blur``.
    height, width : int
        Image grid; ``d = height * width``.
    sigma : float
        Blur width (blur bases only, 0.0 otherwise).
    matrix : ndarray (d, d) or None
        Basis vectors as columns in frequency order. ``None`` for identity,
        which is applied without any arithmetic.
    freq_order : ndarray (d,)
        Native column index at each frequency position.
    spectrum : ndarray (d,)
        Ordering key at each frequency position: blur eigenvalues
        (non-increasing) or DCT frequency radii (non-decreasing).
    """

    kind: str
    height: int
    width: int
    sigma: float
    matrix: np.ndarray | None
    freq_order: np.ndarray
    spectrum: np.ndarray

    @property
    def d(self) -> int:
        return self.height * self.width

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise ValueError(f"expected trailing dimension {self.d}, got {x.shape}")
        return x

    def to_freq(self, x) -> np.ndarray:
        """Coefficients ``U^T x`` permuted into frequency order (row vectors ok)."""
        x = self._check(x)
        if self.matrix is None:
            return x.copy()
        return x @ self.matrix

    def from_freq(self, y) -> np.ndarray:
        y = self._check(y)
        if self.matrix is None:
            return y.copy()
        return y @ self.matrix.T

    def forward_apply(self, x) -> np.ndarray:
        """``U^T x`` in native column order."""
        y = self.to_freq(x)
        out = np.empty_like(y)
        out[..., self.freq_order] = y
        return out

    def inverse_apply(self, y) -> np.ndarray:
        y = self._check(y)
        return self.from_freq(y[..., self.freq_order])

    def dense(self) -> np.ndarray:
        """Basis matrix with columns in frequency order."""
        return np.eye(self.d) if self.matrix is None else self.matrix

    def to_dict(self) -> dict:
        return {"kind": self.kind, "height": self.height, "width": self.width, "sigma": self.sigma}


def _freeze(*arrays):
    for a in arrays:
        if a is not None:
            a.setflags(write=False)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # deterministic sign: the largest-magnitude entry of each column is positive
    idx = np.argmax(np.abs(np.round(vecs, 12)), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def identity_basis(d: int, height: int | None = None, width: int | None = None) -> OrthoBasis:
    if d < 1:
        raise ValueError("d must be >= 1")
    if height is None or width is None:
        height, width = 1, d
    if height * width != d:
        raise ValueError(f"{height}x{width} does not match d={d}")
    order = np.arange(d)
    spectrum = np.zeros(d)
    _freeze(order, spectrum)
    return OrthoBasis("identity", height, width, 0.0, None, order, spectrum)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix; row ``u`` is the u-th cosine basis vector."""
    i = np.arange(n)
    u = i[:, None]
    c = np.cos(np.pi * (2 * i[None, :] + 1) * u / (2 * n))
    c[0] *= math.sqrt(1.0 / n)
    c[1:] *= math.sqrt(2.0 / n)
    return c


def _ordered(kind, height, width, sigma, native, keys, descending):
    u, v = np.divmod(np.arange(height * width), width)
    rounded = np.round(keys, 12)
    primary = -rounded if descending else rounded
    order = np.lexsort((v, u, primary))
    matrix = np.ascontiguousarray(native[:, order])
    spectrum = keys[order]
    _freeze(matrix, order, spectrum)
    return OrthoBasis(kind, height, width, float(sigma), matrix, order, spectrum)


def dct2_basis(height: int, width: int) -> OrthoBasis:
    """Separable 2D DCT-II, ordered by radius ``sqrt((u/h)^2 + (v/w)^2)``."""
    if height < 1 or width < 1:
        raise ValueError("height and width must be >= 1")
    native = np.kron(dct_matrix(height).T, dct_matrix(width).T)
    u, v = np.divmod(np.arange(height * width), width)
    radius = np.sqrt((u / height) ** 2 + (v / width) ** 2)
    return _ordered("dct2", height, width, 0.0, native, radius, descending=False)


def blur_matrix_1d(n: int, sigma: float) -> np.ndarray:
    """Symmetrized Gaussian blur with half-sample reflective boundaries."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(math.ceil(4.0 * sigma)))
    offsets = np.arange(-radius, radius + 1)
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    g /= g.sum()
    w = np.zeros((n, n))
    for i in range(n):
        j = np.mod(i + offsets, 2 * n)
        j = np.where(j >= n, 2 * n - 1 - j, j)
        np.add.at(w[i], j, g)
    return 0.5 * (w + w.T)


def blur_matrix(height: int, width: int, sigma: float) -> np.ndarray:
    """The 2D blurring matrix ``W`` acting on row-major flattened images."""
    return np.kron(blur_matrix_1d(height, sigma), blur_matrix_1d(width, sigma))


def _eig_axis(n, sigma, axis):
    w = blur_matrix_1d(n, sigma)
    try:
        vals, vecs = np.linalg.eigh(w)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"blur eigendecomposition failed on {axis} axis (n={n}, sigma={sigma}): {exc}"
        ) from exc
    idx = np.argsort(-vals, kind="stable")
    return vals[idx], _fix_signs(vecs[:, idx])


def blur_basis(height: int, width: int, sigma: float = 1.0) -> OrthoBasis:
    """Eigenbasis of the Gaussian blur ``W = U D U^T``, coarsest vectors first.

    Each axis is eigendecomposed separately and the 2D basis is their tensor
    product; the ordering key is the product of the per-axis eigenvalues.
    """
    if height < 1 or width < 1:
        raise ValueError("height and width must be >= 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    lam_h, vec_h = _eig_axis(height, sigma, "row")
    lam_w, vec_w = _eig_axis(width, sigma, "column")
    native = np.kron(vec_h, vec_w)
    keys = np.kron(lam_h, lam_w)
    return _ordered("blur", height, width, sigma, native, keys, descending=True)


def to_freq(basis: OrthoBasis, x) -> np.ndarray:
    return basis.to_freq(x)


def from_freq(basis: OrthoBasis, y) -> np.ndarray:
    return basis.from_freq(y)


def make_basis(kind: str, height: int, width: int, sigma: float = 1.0) -> OrthoBasis:
    if kind == "identity":
        return identity_basis(height * width, height, width)
    if kind == "dct2":
        return dct2_basis(height, width)
    if kind == "blur":
        return blur_basis(height, width, sigma)
    raise ValueError(f"unknown basis kind {kind!r}; expected one of {KINDS}")


def basis_from_dict(doc: dict, cache_dir: str | Path | None = None) -> OrthoBasis:
    kind, h, w = doc["kind"], int(doc["height"]), int(doc["width"])
    sigma = float(doc.get("sigma", 1.0))
    if cache_dir is not None and kind == "blur":
        path = Path(cache_dir) / f"blur_{h}x{w}_s{sigma:g}.bin"
        if path.exists():
            return load_basis(path, h, w)
        basis = blur_basis(h, w, sigma)
        save_basis(path, basis)
        return basis
    return make_basis(kind, h, w, sigma)


def save_basis(path: str | Path, basis: OrthoBasis) -> None:
    """Write a binary cache: 16-byte header then float64 order, spectrum, matrix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _HEADER.pack(_MAGIC, _KIND_CODES[basis.kind], basis.d, basis.sigma)
    body = np.concatenate(
        [basis.freq_order.astype("<f8"), basis.spectrum.astype("<f8"), basis.dense().astype("<f8").ravel()]
    )
    path.write_bytes(header + body.astype("<f8").tobytes())


def load_basis(path: str | Path, height: int, width: int) -> OrthoBasis:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated basis cache")
    magic, code, d, sigma = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not a basis cache (bad magic {magic!r})")
    if d != height * width:
        raise ValueError(f"{path}: cached d={d} does not match {height}x{width}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != d * d + 2 * d:
        raise ValueError(f"{path}: expected {d * d + 2 * d} floats, found {body.size}")
    kind = KINDS[code]
    order = body[:d].astype(np.int64)
    spectrum = body[d : 2 * d].astype(np.float64)
    matrix = None if kind == "identity" else body[2 * d :].reshape(d, d).astype(np.float64)
    _freeze(order, spectrum, matrix)
    return OrthoBasis(kind, height, width, float(sigma), matrix, order, spectrum)
