"""Star discrepancy of q-adic point sets in exact rational arithmetic.

For half-open anchored boxes [0, y) the supremum of |A/N - vol| is attained
in the limit at corners y of the grid G_1 x ... x G_d, where G_j holds the
j-th coordinates of the points together with 1.  Approaching a corner from
below counts the points with x < y in every coordinate (open count, the
deficit term vol - open/N); approaching from above counts the points with
x <= y (closed count, the excess term closed/N - vol).  Both kernels below
evaluate these two terms on that grid.

All comparisons are done on integer numerators over a common q^m
denominator, so duplicated coordinates never produce tie errors.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import BudgetExceeded, DimensionMismatch, ValidationError
from .field_series import QadicRational
from .sequences import PointSet

DEFAULT_BUDGET = 10**8
KINDS = ("exact", "lower_bound", "upper_bound")

_INT64_SAFE = 2**62
_BLOCK_CELLS = 1 << 20


@dataclass(frozen=True)
class DiscrepancyResult:
    value: Fraction
    kind: str = "exact"
    delta: Fraction = Fraction(0)
    elapsed: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "value", Fraction(self.value))
        object.__setattr__(self, "delta", Fraction(self.delta))
        if self.kind not in KINDS:
            raise ValidationError(f"unknown result kind {self.kind!r}")
        if not 0 <= self.value <= 1:
            raise ValidationError(f"discrepancy {self.value} outside [0, 1]")
        if self.kind == "exact" and self.delta != 0:
            raise ValidationError("exact results carry delta = 0")

    @property
    def value_f64(self) -> float:
        return float(self.value)

    def to_record(self, timing: bool = False) -> dict:
        """JSON record; elapsed time is only written when ``timing`` is set."""
        return {
            "value_num": self.value.numerator,
            "value_den": self.value.denominator,
            "value_f64": self.value_f64,
            "kind": self.kind,
            "delta": float(self.delta),
            "elapsed_s": round(self.elapsed, 6) if timing else 0.0,
        }


def _as_fraction(y) -> Fraction:
    if isinstance(y, QadicRational):
        return y.fraction
    return Fraction(y)


def _nonempty(ps: PointSet) -> None:
    if ps.N == 0:
        raise ValidationError("the star discrepancy of an empty point set is undefined")


def local_discrepancy(ps: PointSet, y: Sequence) -> Fraction:
    """A([0, y), P) / N - prod(y), counting x_j < y_j strictly."""
    _nonempty(ps)
    y = [_as_fraction(v) for v in y]
    if len(y) != ps.d:
        raise DimensionMismatch(f"box has {len(y)} coordinates, points have {ps.d}")
    if any(not 0 <= v <= 1 for v in y):
        raise ValidationError("box corner must lie in [0, 1]^d")
    S = ps.denominator
    inside = np.ones(ps.N, dtype=bool)
    for j, v in enumerate(y):
        # x < v  <=>  a < v * S  <=>  a * den < num * S
        col = np.asarray(ps.num[:, j], dtype=object) * v.denominator
        inside &= np.asarray(col < v.numerator * S, dtype=bool)
    vol = Fraction(1)
    for v in y:
        vol *= v
    return Fraction(int(inside.sum()), ps.N) - vol


def _grid(ps: PointSet):
    """Per-axis sorted candidate values (numerators, with S for 1) and point ranks."""
    S = ps.denominator
    vals, idx = [], []
    for j in range(ps.d):
        col = np.asarray(ps.num[:, j])
        u = np.unique(col)
        u = np.concatenate([u, np.array([S], dtype=u.dtype)])
        vals.append(u)
        idx.append(np.searchsorted(u, col))
    return vals, np.stack(idx, axis=1)


def grid_cells(ps: PointSet) -> int:
    """Work measure d * prod_j |G_j| of the exact kernel."""
    cells = ps.d
    for j in range(ps.d):
        cells *= len(np.unique(np.asarray(ps.num[:, j]))) + 1
    return cells


def _closed_count_blocks(idx: np.ndarray, shape: tuple[int, ...]):
    """Yield (a0, closed, prev) blocks of the closed-count array along axis 0.

    closed[a - a0, b...] = #{points with rank <= (a, b...)} and prev holds the
    same array for rows a - 1 (zeros before the first row).
    """
    n0, rest = shape[0], shape[1:]
    R = int(np.prod(rest, dtype=np.int64)) if rest else 1
    if rest:
        rest_flat = np.ravel_multi_index(tuple(idx[:, 1:].T), rest)
    else:
        rest_flat = np.zeros(len(idx), dtype=np.int64)
    order = np.argsort(idx[:, 0], kind="stable")
    r0, rflat = idx[order, 0], rest_flat[order]
    B = max(1, min(n0, _BLOCK_CELLS // max(R, 1)))
    carry = np.zeros(rest, dtype=np.int64)
    for a0 in range(0, n0, B):
        a1 = min(n0, a0 + B)
        lo, hi = np.searchsorted(r0, [a0, a1])
        hist = np.bincount((r0[lo:hi] - a0) * R + rflat[lo:hi], minlength=(a1 - a0) * R)
        c = hist.reshape((a1 - a0,) + rest)
        for ax in range(1, len(shape)):
            c = np.cumsum(c, axis=ax)
        c = np.cumsum(c, axis=0) + carry
        prev = np.concatenate([carry[None], c[:-1]], axis=0)
        yield a0, c, prev
        carry = c[-1]


def _shift_rest(a: np.ndarray) -> np.ndarray:
    """out[:, b...] = a[:, b-1...], zero where any rest index is 0."""
    out = np.zeros_like(a)
    if a.ndim == 1:
        return a.copy()
    src = (slice(None),) + (slice(None, -1),) * (a.ndim - 1)
    dst = (slice(None),) + (slice(1, None),) * (a.ndim - 1)
    out[dst] = a[src]
    return out


def star_discrepancy_exact(ps: PointSet, budget: int = DEFAULT_BUDGET) -> DiscrepancyResult:
    """Exact D*_N over the full corner grid.

    Raises :class:`BudgetExceeded` if d * prod_j |G_j| exceeds ``budget``;
    callers should then fall back to bracketing bounds.
    """
    t0 = time.perf_counter()
    _nonempty(ps)
    cells = grid_cells(ps)
    if cells > budget:
        raise BudgetExceeded(f"exact grid needs {cells} cells, budget is {budget}")
    N, d, S = ps.N, ps.d, ps.denominator
    vals, idx = _grid(ps)
    shape = tuple(len(v) for v in vals)
    Sd = S**d
    wide = N * Sd >= _INT64_SAFE or ps.num.dtype == object
    dt = object if wide else np.int64
    vals = [np.asarray(v, dtype=dt) for v in vals]
    vol_rest = np.ones((), dtype=dt)
    for v in vals[1:]:
        vol_rest = np.multiply.outer(vol_rest, v)
    best = None
    for a0, closed, prev in _closed_count_blocks(idx, shape):
        b = closed.shape[0]
        x0 = vals[0][a0 : a0 + b].reshape((b,) + (1,) * (d - 1))
        vol_n = x0 * vol_rest * N
        opened = _shift_rest(prev)
        if wide:
            closed, opened = closed.astype(object), opened.astype(object)
        m1 = (vol_n - opened * Sd).max()
        m2 = (closed * Sd - vol_n).max()
        cand = max(int(m1), int(m2))
        best = cand if best is None else max(best, cand)
    return DiscrepancyResult(Fraction(best, N * Sd), "exact", 0, time.perf_counter() - t0)


def star_discrepancy_1d(ps: PointSet) -> DiscrepancyResult:
    """D* = 1/(2N) + max_i |x_(i) - (2i - 1)/(2N)| for sorted coordinates."""
    t0 = time.perf_counter()
    if ps.d != 1:
        raise DimensionMismatch(f"the 1-d formula needs d = 1, got d = {ps.d}")
    _nonempty(ps)
    N, S = ps.N, ps.denominator
    x = sorted(int(v) for v in ps.num[:, 0])
    # scaled by 2 N S
    dev = max(abs(2 * N * a - (2 * i - 1) * S) for i, a in enumerate(x, start=1))
    return DiscrepancyResult(Fraction(S + dev, 2 * N * S), "exact", 0, time.perf_counter() - t0)


def star_discrepancy_oracle(ps: PointSet) -> DiscrepancyResult:
    """Brute-force reference: every grid corner, open and closed counts, Fractions."""
    t0 = time.perf_counter()
    _nonempty(ps)
    if ps.N > 16 or ps.d > 3:
        raise BudgetExceeded("the oracle is restricted to N <= 16 and d <= 3")
    S = ps.denominator
    pts = [[Fraction(int(a), S) for a in row] for row in ps.num.tolist()]
    axes = [sorted({p[j] for p in pts} | {Fraction(1)}) for j in range(ps.d)]
    best = Fraction(0)
    for y in itertools.product(*axes):
        vol = Fraction(1)
        for v in y:
            vol *= v
        n_open = sum(all(p[j] < y[j] for j in range(ps.d)) for p in pts)
        n_closed = sum(all(p[j] <= y[j] for j in range(ps.d)) for p in pts)
        best = max(best, vol - Fraction(n_open, ps.N), Fraction(n_closed, ps.N) - vol)
    return DiscrepancyResult(best, "exact", 0, time.perf_counter() - t0)


def star_discrepancy_lower(
    ps: PointSet, rng: np.random.Generator | None = None, samples: int = 4096
) -> DiscrepancyResult:
    """Lower bound from corners at data coordinates.

    Candidates are every data point itself plus ``samples`` corners whose
    j-th coordinate is drawn from G_j.  Each corner is scored with both the
    open and the closed count, so the result never exceeds D*.
    """
    t0 = time.perf_counter()
    _nonempty(ps)
    N, d, S = ps.N, ps.d, ps.denominator
    vals, _ = _grid(ps)
    cand = [np.asarray(ps.num, dtype=object)]
    if samples and rng is not None:
        pick = [v[rng.integers(0, len(v), size=samples)] for v in vals]
        cand.append(np.stack([np.asarray(p, dtype=object) for p in pick], axis=1))
    corners = np.concatenate(cand, axis=0)
    X = np.asarray(ps.num, dtype=object)
    Sd = S**d
    best = 0
    step = max(1, _BLOCK_CELLS // max(N * d, 1))
    for k0 in range(0, len(corners), step):
        c = corners[k0 : k0 + step]
        lt = np.all(X[None, :, :] < c[:, None, :], axis=2).sum(axis=1)
        le = np.all(X[None, :, :] <= c[:, None, :], axis=2).sum(axis=1)
        vol = np.prod(c, axis=1) * N
        lt, le = lt.astype(object), le.astype(object)
        best = max(best, int((vol - lt * Sd).max()), int((le * Sd - vol).max()))
    return DiscrepancyResult(Fraction(best, N * Sd), "lower_bound", 0, time.perf_counter() - t0)
