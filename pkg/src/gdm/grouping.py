"""Group partitions, per-group time intervals and the diagonal schedule A(t).

Coordinates are split into ``k`` disjoint groups. Group ``j`` is noised
(forward time) during ``[t_start[j], t_end[j]]`` and is therefore generated
during the same interval in reverse time. The diagonal of ``A(t)`` is a
linear ramp from 1 to 0 across that interval, constant outside it.

Generation order convention: under the default schedules the group with the
highest index owns the last time interval, so it is generated first when
integrating from t=1 down to t=0. Every schedule builder accepts an explicit
``order`` (first-generated group first) to override this.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

STRATEGIES = (
    "rows_bottom_top",
    "rows_top_bottom",
    "cols_right_left",
    "blocks",
    "cdm",
    "cdm_inverse",
    "per_element_raster",
    "frequency_bands",
    "custom_order",
)


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """Assignment of ``d`` coordinate indices to ``k`` non-empty groups."""

    d: int
    k: int
    assignment: np.ndarray
    strategy: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if self.d < 1 or self.k < 1 or self.k > self.d:
            raise ValueError(f"need 1 <= k <= d, got d={self.d}, k={self.k}")
        if a.shape != (self.d,):
            raise ValueError(f"assignment has shape {a.shape}, expected ({self.d},)")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(a == np.round(a)):
                raise ValueError("assignment must hold integer group ids")
        a = a.astype(np.int64)
        if a.min() < 0 or a.max() >= self.k:
            raise ValueError(f"group ids must lie in [0, {self.k})")
        counts = np.bincount(a, minlength=self.k)
        if np.any(counts == 0):
            raise ValueError(f"empty groups: {np.flatnonzero(counts == 0).tolist()}")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    def indices(self, j: int) -> np.ndarray:
        if not 0 <= j < self.k:
            raise ValueError(f"unknown group id {j} (k={self.k})")
        return np.flatnonzero(self.assignment == j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def member_mask(self, groups) -> np.ndarray:
        """Boolean length-d mask of coordinates belonging to any of ``groups``."""
        groups = sorted(set(int(g) for g in groups))
        for g in groups:
            if not 0 <= g < self.k:
                raise ValueError(f"unknown group id {g} (k={self.k})")
        return np.isin(self.assignment, groups)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "k": self.k,
            "assignment": self.assignment.tolist(),
            "strategy": self.strategy,
            "params": self.params,
        }


@dataclass(frozen=True, eq=False)
class GroupSchedule:
    t_start: np.ndarray
    t_end: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.t_start, dtype=np.float64).copy()
        te = np.asarray(self.t_end, dtype=np.float64).copy()
        if ts.ndim != 1 or ts.shape != te.shape or ts.size == 0:
            raise ValueError("t_start and t_end must be equal-length 1D arrays")
        if np.any(ts < 0) or np.any(te > 1) or np.any(ts >= te):
            raise ValueError("each interval must satisfy 0 <= t_start < t_end <= 1")
        # tiling check: sorted intervals must chain from 0 to 1 without overlap or gap
        order = np.argsort(ts, kind="stable")
        s, e = ts[order], te[order]
        if abs(s[0]) > 1e-12 or abs(e[-1] - 1.0) > 1e-12:
            raise ValueError("intervals must cover [0, 1]")
        if np.any(s[1:] < e[:-1] - 1e-12):
            raise ValueError("group intervals overlap")
        if np.any(s[1:] > e[:-1] + 1e-12):
            raise ValueError("group intervals leave a gap where no group diffuses")
        ts.setflags(write=False)
        te.setflags(write=False)
        object.__setattr__(self, "t_start", ts)
        object.__setattr__(self, "t_end", te)

    @property
    def k(self) -> int:
        return self.t_start.size

    @property
    def generation_order(self) -> list[int]:
        """Group ids sorted from first generated (latest interval) to last."""
        return [int(j) for j in np.argsort(-self.t_end, kind="stable")]

    @property
    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([self.t_start, self.t_end]))

    def to_dict(self) -> dict:
        return {"t_start": self.t_start.tolist(), "t_end": self.t_end.tolist()}


@dataclass(frozen=True)
class ScheduleDiag:
    values: np.ndarray
    t: float


def _check_pair(partition: GroupPartition, schedule: GroupSchedule):
    if partition.k != schedule.k:
        raise ValueError(f"partition has k={partition.k} but schedule has k={schedule.k}")


def _check_t(t):
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0) or np.any(t > 1):
        raise ValueError("t must lie in [0, 1]")
    return t


def group_alphas(schedule: GroupSchedule, t) -> np.ndarray:
    """Per-group value of A(t); shape ``t.shape + (k,)``."""
    t = _check_t(t)[..., None]
    ts, te = schedule.t_start, schedule.t_end
    ramp = (t - te) / (ts - te)
    return np.where(t <= ts, 1.0, np.where(t <= te, ramp, 0.0))


def group_alpha_primes(schedule: GroupSchedule, t, midpoint: bool = False) -> np.ndarray:
    """Per-group value of A'(t); shape ``t.shape + (k,)``.

    A'(t) is piecewise constant and undefined at interval endpoints. Querying
    a breakpoint raises unless ``midpoint`` is set, in which case the mean of
    the left and right limits is returned.
    """
    t = _check_t(t)[..., None]
    ts, te = schedule.t_start, schedule.t_end
    slope = 1.0 / (ts - te)
    left = np.where((t > ts) & (t <= te), slope, 0.0)
    right = np.where((t >= ts) & (t < te), slope, 0.0)
    same = left == right
    if np.all(same):
        return left
    if not midpoint:
        bad = np.unique(np.broadcast_to(t, same.shape)[~same])
        raise ValueError(f"A'(t) is undefined at breakpoint t={bad.tolist()}; pass midpoint=True")
    return np.where(same, left, 0.5 * (left + right))


def alpha_at(partition: GroupPartition, schedule: GroupSchedule, t: float) -> ScheduleDiag:
    _check_pair(partition, schedule)
    a = group_alphas(schedule, float(t))
    return ScheduleDiag(values=a[partition.assignment], t=float(t))


def alpha_prime_at(
    partition: GroupPartition, schedule: GroupSchedule, t: float, midpoint: bool = False
) -> ScheduleDiag:
    _check_pair(partition, schedule)
    ap = group_alpha_primes(schedule, float(t), midpoint=midpoint)
    return ScheduleDiag(values=ap[partition.assignment], t=float(t))


def _assign_intervals(bounds: np.ndarray, order) -> GroupSchedule:
    k = bounds.size - 1
    starts, ends = bounds[:-1], bounds[1:]
    if order is None:
        return GroupSchedule(starts, ends)
    order = [int(g) for g in order]
    if sorted(order) != list(range(k)):
        raise ValueError(f"order must be a permutation of range({k}), got {order}")
    ts = np.empty(k)
    te = np.empty(k)
    for p, g in enumerate(order):
        # the p-th generated group owns the p-th interval counted from t=1
        ts[g] = starts[k - 1 - p]
        te[g] = ends[k - 1 - p]
    return GroupSchedule(ts, te)


def make_uniform_schedule(k: int, order: Sequence[int] | None = None) -> GroupSchedule:
    """Equal-length intervals; group j gets [j/k, (j+1)/k] unless ``order`` is given."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    bounds = np.arange(k + 1, dtype=np.float64) / k
    return _assign_intervals(bounds, order)


def make_schedule(boundaries: Sequence[float], order: Sequence[int] | None = None) -> GroupSchedule:
    """Intervals split at the given interior ``boundaries`` (k = len + 1)."""
    b = np.asarray(list(boundaries), dtype=np.float64)
    if b.size and (np.any(b <= 0) or np.any(b >= 1)):
        raise ValueError("boundaries must lie strictly inside (0, 1)")
    if b.size > 1 and np.any(np.diff(b) <= 0):
        raise ValueError("boundaries must be strictly increasing")
    bounds = np.concatenate([[0.0], b, [1.0]])
    return _assign_intervals(bounds, order)


def _bands(n: int, k: int) -> np.ndarray:
    if not 1 <= k <= n:
        raise ValueError(f"cannot split {n} lines into {k} bands")
    return np.arange(n) * k // n


def make_partition(strategy: str, height: int, width: int, **params) -> GroupPartition:
    """Build a named grouping over a ``height x width`` grid (row-major indices).

    Strategy parameters:

    - ``rows_bottom_top`` / ``rows_top_bottom`` / ``cols_right_left``: ``k``
    - ``blocks``: ``grid=(rows, cols)``
    - ``cdm`` / ``cdm_inverse``: ``levels`` (>= 2)
    - ``per_element_raster``: none; pixel 0 is generated first
    - ``frequency_bands``: ``cutoffs``, increasing and ending at d; indices are
      positions in a basis' low-to-high frequency ordering
    - ``custom_order``: ``base``, ``base_params``, ``order`` (base group ids,
      first generated first)
    """
    if height < 1 or width < 1:
        raise ValueError("height and width must be positive")
    d = height * width
    rows, cols = np.divmod(np.arange(d), width)

    if strategy in ("rows_bottom_top", "rows_top_bottom", "cols_right_left"):
        k = int(params.get("k", 2))
        if strategy == "cols_right_left":
            band = _bands(width, k)[cols]
        else:
            band = _bands(height, k)[rows]
        # highest index is generated first
        assignment = band if strategy != "rows_top_bottom" else k - 1 - band
        params = {"k": k}
    elif strategy == "blocks":
        gr, gc = (int(v) for v in params.get("grid", (2, 2)))
        if gr < 1 or gc < 1 or height % gr or width % gc:
            raise ValueError(f"block grid {gr}x{gc} does not divide a {height}x{width} image")
        bh, bw = height // gr, width // gc
        assignment = (rows // bh) * gc + cols // bw
        k = gr * gc
        params = {"grid": [gr, gc]}
    elif strategy in ("cdm", "cdm_inverse"):
        levels = int(params.get("levels", 2))
        if levels < 2:
            raise ValueError("cdm needs levels >= 2")
        stride = 2 ** (levels - 1)
        if height % stride or width % stride:
            raise ValueError(f"{height}x{width} is not divisible by 2^(levels-1)={stride}")
        level = np.zeros(d, dtype=np.int64)
        for m in range(1, levels):
            s = 2**m
            level[(rows % s == 0) & (cols % s == 0)] = m
        # level L-1 is the coarsest lattice; cdm generates it first
        assignment = level if strategy == "cdm" else levels - 1 - level
        k = levels
        params = {"levels": levels}
    elif strategy == "per_element_raster":
        k = d
        assignment = d - 1 - np.arange(d)
        params = {}
    elif strategy == "frequency_bands":
        cutoffs = [int(c) for c in params["cutoffs"]]
        if not cutoffs or cutoffs[-1] != d:
            raise ValueError(f"cutoffs must end at d={d}, got {cutoffs}")
        if cutoffs[0] <= 0 or any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
            raise ValueError(f"cutoffs must be strictly increasing and positive, got {cutoffs}")
        k = len(cutoffs)
        assignment = np.searchsorted(np.asarray(cutoffs), np.arange(d), side="right")
        params = {"cutoffs": cutoffs}
    elif strategy == "custom_order":
        base_name = params["base"]
        if base_name == "custom_order":
            raise ValueError("custom_order cannot wrap itself")
        base = make_partition(base_name, height, width, **params.get("base_params", {}))
        order = [int(g) for g in params["order"]]
        if sorted(order) != list(range(base.k)):
            raise ValueError(f"order must be a permutation of range({base.k})")
        relabel = np.empty(base.k, dtype=np.int64)
        for p, g in enumerate(order):
            relabel[g] = base.k - 1 - p
        assignment = relabel[base.assignment]
        k = base.k
        params = {"base": base_name, "base_params": base.params, "order": order}
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")

    return GroupPartition(d=d, k=k, assignment=np.asarray(assignment), strategy=strategy, params=params)


def grouping_to_dict(partition: GroupPartition, schedule: GroupSchedule) -> dict:
    _check_pair(partition, schedule)
    return {**partition.to_dict(), **schedule.to_dict()}


def grouping_from_dict(doc: dict[str, Any]) -> tuple[GroupPartition, GroupSchedule]:
    partition = GroupPartition(
        d=int(doc["d"]),
        k=int(doc["k"]),
        assignment=np.asarray(doc["assignment"], dtype=np.int64),
        strategy=doc.get("strategy", "custom"),
        params=doc.get("params", {}),
    )
    schedule = GroupSchedule(doc["t_start"], doc["t_end"])
    _check_pair(partition, schedule)
    return partition, schedule


def grouping_to_json(partition: GroupPartition, schedule: GroupSchedule) -> str:
    return json.dumps(grouping_to_dict(partition, schedule))


def grouping_from_json(text: str) -> tuple[GroupPartition, GroupSchedule]:
    return grouping_from_dict(json.loads(text))
