"""q-adic bracketing covers, bracket chains beta_h(y) and the shells K_h(y).

The cover tau_h used here is the full grid of cells of side q^{-M} with
M = h + 1 + ceil(log_q d).  A cell [v, v + q^{-M}] has anchored-volume gap
at most d q^{-M} <= q^{-h}, so it is a q^{-h}-bracketing cover whose lower
corners sit on the q^{-M} grid and whose upper corners sit on the
q^{-(M+1)} grid.

The chain for y takes q-adic floors of y at the resolutions h + 1 + L
(h = 1..H) and the ceiling at resolution H + 2 + L for the last point.
Because floors of floors are floors, beta_{h+1}(x) = beta_{h+1}(y) forces
beta_h(x) = beta_h(y).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .discrepancy import DiscrepancyResult
from .errors import (
    BudgetExceeded,
    ChainInvalid,
    CoverInvalid,
    DimensionMismatch,
    InsufficientResolution,
    ValidationError,
)
from .field_series import QadicRational, ceil_log, field as fq
from .sequences import PointSet

MATERIALIZE_BUDGET = 10**6
CORNER_BUDGET = 10**7

_INT64_SAFE = 2**62


def cover_resolution(q: int, d: int, h: int) -> int:
    return h + 1 + ceil_log(q, d)


@dataclass(frozen=True)
class Bracket:
    v: tuple[QadicRational, ...]
    w: tuple[QadicRational, ...]

    def __post_init__(self):
        if len(self.v) != len(self.w) or any(a > b for a, b in zip(self.v, self.w)):
            raise ValidationError("bracket needs v <= w componentwise")

    @property
    def gap(self) -> Fraction:
        """lambda([0, w)) - lambda([0, v))."""
        pw = pv = Fraction(1)
        for a, b in zip(self.v, self.w):
            pv *= a.fraction
            pw *= b.fraction
        return pw - pv

    def contains(self, y: Sequence) -> bool:
        y = [_frac(c) for c in y]
        return all(a.fraction <= c <= b.fraction for a, b, c in zip(self.v, self.w, y))


def _frac(y) -> Fraction:
    return y.fraction if isinstance(y, QadicRational) else Fraction(y)


@dataclass(frozen=True, eq=False)
class BracketingCover:
    """q^{-h}-bracketing cover of [0,1]^d by grid cells at resolution m(h).

    ``cells`` is None for the implicit full grid; otherwise it is a
    (K, d) array of lower-corner indices a, for the cells
    [a / q^M, (a + 1) / q^M].
    """

    q: int
    d: int
    h: int
    cells: np.ndarray | None = None
    removed: frozenset = frozenset()
    _index: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.d < 1 or self.h < 0:
            raise ValidationError("need d >= 1 and h >= 0")
        object.__setattr__(self, "removed", frozenset(tuple(int(x) for x in a) for a in self.removed))
        if self.cells is not None:
            if self.removed:
                raise ValidationError("give either explicit cells or removed cells, not both")
            cells = np.unique(np.asarray(self.cells, dtype=np.int64).reshape(-1, self.d), axis=0)
            if cells.size and (cells.min() < 0 or cells.max() >= self.side):
                raise ValidationError("cell index outside the grid")
            cells.setflags(write=False)
            object.__setattr__(self, "cells", cells)
            object.__setattr__(self, "_index", {tuple(c): k for k, c in enumerate(cells.tolist())})

    @property
    def resolution(self) -> int:
        return cover_resolution(self.q, self.d, self.h)

    @property
    def delta(self) -> Fraction:
        return Fraction(1, self.q**self.h)

    @property
    def side(self) -> int:
        return self.q**self.resolution

    @property
    def materialized(self) -> bool:
        return self.cells is not None

    @property
    def full_size(self) -> int:
        return self.side**self.d

    def __len__(self) -> int:
        return self.full_size - len(self.removed) if self.cells is None else len(self.cells)

    @property
    def is_full_grid(self) -> bool:
        return len(self) == self.full_size

    def has(self, a: Sequence[int]) -> bool:
        a = tuple(int(x) for x in a)
        if any(not 0 <= x < self.side for x in a):
            return False
        return a in self._index if self.cells is not None else a not in self.removed

    def bracket(self, a: Sequence[int]) -> Bracket:
        M = self.resolution
        v = tuple(QadicRational(self.q, int(x), M) for x in a)
        w = tuple(QadicRational(self.q, (int(x) + 1) * self.q, M + 1) for x in a)
        return Bracket(v, w)

    def brackets(self):
        if self.cells is not None:
            cells = self.cells.tolist()
        else:
            cells = (a for a in itertools.product(range(self.side), repeat=self.d) if a not in self.removed)
        for a in cells:
            yield self.bracket(a)

    def missing_cells(self) -> list[tuple[int, ...]]:
        """Grid cells absent from the cover, in lexicographic order."""
        if self.cells is None:
            return sorted(self.removed)
        if self.is_full_grid:
            return []
        present = np.zeros((self.side,) * self.d, dtype=bool)
        present[tuple(self.cells.T)] = True
        return [tuple(int(x) for x in a) for a in np.argwhere(~present)]

    def cell_of(self, y: Sequence) -> tuple[int, ...]:
        """Index of the grid cell holding y (points with y_i = 1 go to the last cell)."""
        side = self.side
        return tuple(min(int(_frac(c) * side), side - 1) for c in y)

    def lookup(self, y: Sequence) -> Bracket | None:
        """A bracket of the cover containing y, or None if there is none."""
        if len(y) != self.d:
            raise DimensionMismatch(f"expected {self.d} coordinates")
        a = self.cell_of(y)
        if self.has(a):
            return self.bracket(a)
        # y on a cell boundary may still be covered by a neighbouring cell:
        # cell k holds coordinate c iff k <= c * side <= k + 1
        scaled = [_frac(c) * self.side for c in y]
        options = []
        for c in scaled:
            lo, hi = math.ceil(c) - 1, math.floor(c)
            options.append(range(max(lo, 0), min(hi, self.side - 1) + 1))
        for b in itertools.product(*options):
            if self.has(b):
                return self.bracket(b)
        return None

    def without(self, a: Sequence[int]) -> BracketingCover:
        """The cover with the cell at index a removed."""
        a = tuple(int(x) for x in a)
        if self.cells is None:
            return BracketingCover(self.q, self.d, self.h, removed=self.removed | {a})
        keep = [c for c in self.cells.tolist() if tuple(c) != a]
        return BracketingCover(self.q, self.d, self.h, np.array(keep, dtype=np.int64).reshape(-1, self.d))

    def materialize(self, budget: int = MATERIALIZE_BUDGET) -> BracketingCover:
        if self.cells is not None:
            return self
        if self.full_size > budget:
            raise BudgetExceeded(f"cover has {self.full_size} cells, budget is {budget}")
        grid = np.indices((self.side,) * self.d).reshape(self.d, -1).T
        if self.removed:
            keep = np.ones(len(grid), dtype=bool)
            for a in self.removed:
                keep[np.ravel_multi_index(a, (self.side,) * self.d)] = False
            grid = grid[keep]
        return BracketingCover(self.q, self.d, self.h, grid)

    def summary(self) -> dict:
        return {
            "q": self.q,
            "d": self.d,
            "h": self.h,
            "delta": float(self.delta),
            "resolution": self.resolution,
            "cells": len(self),
        }


def qadic_cover(q: int, d: int, h: int, materialize: bool | None = None, budget: int = MATERIALIZE_BUDGET):
    """The q^{-h}-bracketing grid cover; materialized when it fits ``budget``.

    ``materialize=True`` forces materialization (and may raise BudgetExceeded),
    ``False`` forces the implicit lookup-only form.
    """
    fq(q)
    cover = BracketingCover(q, d, h)
    if materialize is None:
        materialize = cover.full_size <= budget
    return cover.materialize(budget) if materialize else cover


@dataclass
class CoverReport:
    valid: bool
    samples: int
    max_gap: Fraction
    delta: Fraction

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "samples": self.samples,
            "max_gap": float(self.max_gap),
            "max_gap_exact": f"{self.max_gap.numerator}/{self.max_gap.denominator}",
            "delta": float(self.delta),
        }


def validate_cover(cover: BracketingCover, sample_count: int, rng: np.random.Generator, extra_digits: int = 3):
    """Check the bracketing property of a grid cover.

    Random q-adic points finer than the grid (plus the all-zero and all-one
    corners) must each lie in a bracket of gap at most delta.  Because the
    cover is a sub-grid, it is then also checked exactly: every missing grid
    cell leaves its centre uncovered, and the largest gap is that of the top
    cell.  Raises :class:`CoverInvalid` with an uncovered point.
    """
    q, d, M = cover.q, cover.d, cover.resolution
    r = M + extra_digits
    R = q**r
    ys = rng.integers(0, R + 1, size=(sample_count, d)).tolist()
    ys.extend([[0] * d, [R] * d])
    max_gap = Fraction(0)
    gaps: dict[tuple, Fraction] = {}
    for row in ys:
        y = [QadicRational(q, a, r) for a in row]
        b = cover.lookup(y)
        if b is None or not b.contains(y):
            raise CoverInvalid(f"no bracket contains y={[str(c.fraction) for c in y]}", y)
        key = tuple(c.a for c in b.v)
        g = gaps.get(key)
        if g is None:
            g = gaps[key] = b.gap
        if g > cover.delta:
            raise CoverInvalid(f"bracket gap {g} exceeds delta {cover.delta}", y)
        max_gap = max(max_gap, g)
    missing = cover.missing_cells()
    if missing:
        # x + (q // 2) / q lies strictly inside cell x for every q >= 2
        inner = [QadicRational(q, x * q + q // 2, M + 1) for x in missing[0]]
        raise CoverInvalid(
            f"{len(missing)} grid cells missing; {[str(c.fraction) for c in inner]} is uncovered", inner
        )
    top = cover.bracket([cover.side - 1] * d).gap
    if top > cover.delta:
        raise CoverInvalid(f"bracket gap {top} exceeds delta {cover.delta}", [Fraction(1)] * d)
    return CoverReport(True, len(ys), max(max_gap, top), cover.delta)


# -- bracketing bounds on the star discrepancy --------------------------------


def _cell_index(ps: PointSet, M: int) -> np.ndarray:
    """floor(x * q^M) per coordinate, exact for any point resolution."""
    num = np.asarray(ps.num, dtype=object)
    if ps.m >= M:
        out = num // ps.q ** (ps.m - M)
    else:
        out = num * ps.q ** (M - ps.m)
    return np.asarray(out, dtype=np.int64)


def _grid_open_counts(cells: np.ndarray, side: int, d: int) -> np.ndarray:
    """counts[k] = #{points with cell < k componentwise}, k in [0, side]^d."""
    flat = np.ravel_multi_index(tuple(cells.T), (side,) * d)
    hist = np.bincount(flat, minlength=side**d).reshape((side,) * d)
    c = hist
    for ax in range(d):
        c = np.cumsum(c, axis=ax)
    out = np.zeros((side + 1,) * d, dtype=np.int64)
    out[(slice(1, None),) * d] = c
    return out


def _scaled_local_disc(counts, corners_vol, N, Sd):
    """N * Sd * (count / N - vol) with vol = corners_vol / Sd."""
    return counts * Sd - corners_vol * N


def _corner_disc_list(ps: PointSet, corners: np.ndarray, M: int) -> np.ndarray:
    """Scaled local discrepancies at explicit corners k / q^M (rows of ``corners``)."""
    cells = _cell_index(ps, M)
    N, d = ps.N, ps.d
    out = []
    step = max(1, (1 << 20) // max(N * d, 1))
    Sd = (ps.q**M) ** d
    for k0 in range(0, len(corners), step):
        c = corners[k0 : k0 + step]
        cnt = np.all(cells[None, :, :] < c[:, None, :], axis=2).sum(axis=1).astype(object)
        vol = np.prod(np.asarray(c, dtype=object), axis=1)
        out.append(_scaled_local_disc(cnt, vol, N, Sd))
    return np.concatenate(out) if out else np.zeros(0, dtype=object)


def star_discrepancy_bracket_bound(
    ps: PointSet, cover: BracketingCover, budget: int = CORNER_BUDGET
) -> tuple[DiscrepancyResult, DiscrepancyResult | None]:
    """Lower and upper bounds on D* from the corners of a bracketing cover.

    lower = max |local discrepancy| over all bracket corners v and w.  For y
    in a bracket (v, w), |disc(y)| <= max(|disc(v)|, |disc(w)|) + delta, so
    upper = lower + delta (clipped to 1).  When the full corner grid exceeds
    ``budget`` only the corners of cells that hold data points are scored and
    the upper bound is None.
    """
    t0 = time.perf_counter()
    if ps.N == 0:
        raise ValidationError("empty point set")
    if ps.q != cover.q or ps.d != cover.d:
        raise DimensionMismatch("point set and cover disagree on q or d")
    d, M, N = cover.d, cover.resolution, ps.N
    side = cover.side
    Sd = side**d
    delta = cover.delta
    if (side + 1) ** d <= budget and cover.is_full_grid:
        counts = _grid_open_counts(_cell_index(ps, M), side, d)
        axis = np.arange(side + 1, dtype=np.int64)
        vol = np.ones((), dtype=object if Sd >= _INT64_SAFE // max(N, 1) else np.int64)
        for _ in range(d):
            vol = np.multiply.outer(vol, axis.astype(vol.dtype))
        if vol.dtype == object:
            counts = counts.astype(object)
        disc = np.abs(_scaled_local_disc(counts, vol, N, Sd))
        lower_num = max(int(disc[(slice(None, -1),) * d].max()), int(disc[(slice(1, None),) * d].max()))
        complete = True
    elif cover.materialized and len(cover) * 2 <= budget:
        # a partial cover still gives a valid lower bound, but no upper bound
        cells = cover.cells
        corners = np.unique(np.concatenate([cells, cells + 1]), axis=0)
        lower_num = int(np.abs(_corner_disc_list(ps, corners, M)).max()) if len(corners) else 0
        complete = cover.is_full_grid
    else:
        cells = np.unique(_cell_index(ps, M), axis=0)
        cells = np.minimum(cells, side - 1)
        corners = np.unique(np.concatenate([cells, cells + 1]), axis=0)
        lower_num = int(np.abs(_corner_disc_list(ps, corners, M)).max())
        complete = False
    lower = Fraction(lower_num, N * Sd)
    elapsed = time.perf_counter() - t0
    lo = DiscrepancyResult(lower, "lower_bound", delta, elapsed)
    if not complete:
        return lo, None
    return lo, DiscrepancyResult(min(Fraction(1), lower + delta), "upper_bound", delta, elapsed)


# -- bracket chains -----------------------------------------------------------


def chain_resolution(q: int, d: int, h: int, H: int) -> int:
    """Resolution of beta_h: h + 1 + L for h <= H, H + 2 + L for h = H + 1."""
    L = ceil_log(q, d)
    return h + 1 + L if h <= H else H + 2 + L


@dataclass(frozen=True)
class KShell:
    """K_h = [0, upper) minus [0, lower), with its exact volume."""

    h: int
    lower: tuple[QadicRational, ...]
    upper: tuple[QadicRational, ...]
    measure: Fraction

    def contains(self, x: Sequence) -> bool:
        x = [_frac(c) for c in x]
        below_up = all(c < u.fraction for c, u in zip(x, self.upper))
        below_lo = all(c < v.fraction for c, v in zip(x, self.lower))
        return below_up and not below_lo


DeltaIndicator = KShell


@dataclass(frozen=True)
class BracketChain:
    q: int
    H: int
    y: tuple[QadicRational, ...]
    betas: tuple[tuple[QadicRational, ...], ...]

    @property
    def d(self) -> int:
        return len(self.y)

    def beta(self, h: int) -> tuple[QadicRational, ...]:
        return self.betas[h]

    def shell(self, h: int) -> KShell:
        if not 0 <= h <= self.H:
            raise ValidationError(f"K_h is defined for 0 <= h <= {self.H}")
        lo, up = self.betas[h], self.betas[h + 1]
        return KShell(h, lo, up, _prod_frac(up) - _prod_frac(lo))


def _prod_frac(v) -> Fraction:
    out = Fraction(1)
    for c in v:
        out *= c.fraction
    return out


def _leq(a, b) -> bool:
    return all(x <= y for x, y in zip(a, b))


def build_bracket_chain(y: Sequence, H: int, q: int) -> BracketChain:
    """beta_0 = 0, beta_h = floor of y at resolution h+1+L (1 <= h <= H),
    beta_{H+1} = ceiling of y at resolution H+2+L."""
    fq(q)
    if H < 1:
        raise ValidationError("H must be >= 1")
    d = len(y)
    if d < 1:
        raise ValidationError("y needs at least one coordinate")
    need = chain_resolution(q, d, H + 1, H)
    pts = []
    for c in y:
        if not isinstance(c, QadicRational):
            c = Fraction(c)
            r = ceil_log(q, c.denominator)
            if q**r != c.denominator:
                raise InsufficientResolution(f"{c} is not a q-adic rational for q={q}")
            c = QadicRational.from_fraction(c, q, max(r, need))
        if c.q != q:
            raise ValidationError("y must be written in base q")
        if c.m < need:
            raise InsufficientResolution(f"y needs resolution >= {need}, has {c.m}")
        if c.fraction >= 1:
            raise ValidationError("y must lie in [0, 1)^d")
        pts.append(c)
    betas = [tuple(QadicRational(q, 0, chain_resolution(q, d, 0, H)) for _ in pts)]
    for h in range(1, H + 1):
        r = chain_resolution(q, d, h, H)
        betas.append(tuple(c.floor_to(r) for c in pts))
    betas.append(tuple(c.ceil_to(need) for c in pts))
    return BracketChain(q, H, tuple(pts), tuple(betas))


def check_chain(chain: BracketChain) -> None:
    """Monotonicity and grid resolution of the chain; raises ChainInvalid."""
    q, H, d = chain.q, chain.H, chain.d
    b = chain.betas
    if len(b) != H + 2:
        raise ChainInvalid("chain must hold beta_0 .. beta_{H+1}")
    if any(c.a != 0 for c in b[0]):
        raise ChainInvalid("beta_0 must be the origin")
    for h in range(H):
        if not _leq(b[h], b[h + 1]):
            raise ChainInvalid(f"beta_{h} <= beta_{h + 1} fails")
    if not (_leq(b[H], chain.y) and _leq(chain.y, b[H + 1])):
        raise ChainInvalid("beta_H <= y <= beta_{H+1} fails")
    if any(c.fraction > 1 for c in b[H + 1]):
        raise ChainInvalid("beta_{H+1} must not exceed 1")
    for h in range(H + 2):
        r = chain_resolution(q, d, h, H)
        for c in b[h]:
            if (c.fraction * q**r).denominator != 1:
                raise ChainInvalid(f"beta_{h} is not on the q^-{r} grid")


def k_sets(chain: BracketChain, probes: Sequence[Sequence] = ()) -> list[KShell]:
    """The shells K_0 .. K_H with exact volumes.

    Checks lambda(K_h) <= q^{-h}, nesting (hence pairwise disjointness) and,
    for every probe point x, that x lies in at most one shell and that
    K_0 u .. u K_{H-1} <= [0, y) <= K_0 u .. u K_H holds at x.
    """
    check_chain(chain)
    shells = [chain.shell(h) for h in range(chain.H + 1)]
    for s in shells:
        if s.measure < 0 or s.measure > Fraction(1, chain.q**s.h):
            raise ChainInvalid(f"lambda(K_{s.h}) = {s.measure} exceeds q^-{s.h}")
    y = [c.fraction for c in chain.y]
    for x in probes:
        x = [_frac(c) for c in x]
        hits = [s.h for s in shells if s.contains(x)]
        if len(hits) > 1:
            raise ChainInvalid(f"x={x} lies in shells {hits}")
        in_box = all(a < b for a, b in zip(x, y))
        if hits and hits[0] < chain.H and not in_box:
            raise ChainInvalid(f"x={x} in K_{hits[0]} but outside [0, y)")
        if in_box and not hits:
            raise ChainInvalid(f"x={x} in [0, y) but in no shell")
    return shells


def delta_indicator(D: KShell, x: Sequence) -> Fraction:
    """1_{K_h}(x) - lambda(K_h)."""
    return (1 if D.contains(x) else 0) - D.measure


def membership_window(q: int, d: int, h: int) -> int:
    """Number of leading digits per coordinate that decide membership in K_h."""
    return h + 2 + ceil_log(q, d)


# -- vectorised chains for campaigns and bulk checks --------------------------


def chain_arrays(y_num: np.ndarray, r: int, q: int, H: int) -> list[np.ndarray]:
    """Numerators of beta_0..beta_{H+1} for a batch of points y_num / q^r.

    Returns a list of (T, d) int64 arrays; entry h is at resolution
    :func:`chain_resolution` (q, d, h, H).
    """
    y_num = np.asarray(y_num, dtype=np.int64)
    d = y_num.shape[1]
    need = chain_resolution(q, d, H + 1, H)
    if r < need:
        raise InsufficientResolution(f"y needs resolution >= {need}, has {r}")
    out = [np.zeros_like(y_num)]
    for h in range(1, H + 1):
        out.append(y_num // q ** (r - chain_resolution(q, d, h, H)))
    f = q ** (r - need)
    out.append(-(-y_num // f))
    return out


def shell_measures(betas: list[np.ndarray], q: int, H: int) -> tuple[np.ndarray, int]:
    """lambda(K_h) for every chain in the batch.

    Returns (numerators of shape (T, H+1), common denominator q^{d (H+2+L)}).
    """
    d = betas[0].shape[1]
    top = chain_resolution(q, d, H + 1, H)
    den = q ** (top * d)
    obj = den >= _INT64_SAFE
    vols = []
    for h, b in enumerate(betas):
        scale = q ** (top - chain_resolution(q, d, h, H))
        arr = b.astype(object) * scale if obj else b * scale
        vols.append(np.prod(arr, axis=1))
    meas = np.stack([vols[h + 1] - vols[h] for h in range(H + 1)], axis=1)
    return meas, den


def in_shell(x_num: np.ndarray, rx: int, q: int, lower: np.ndarray, r_lo: int, upper: np.ndarray, r_up: int):
    """x in K for K = [0, upper / q^r_up) minus [0, lower / q^r_lo).

    Uses x < b / q^r  <=>  floor(x q^r) < b, exact for integer b.  Shapes of
    ``x_num`` (..., d) and the corner arrays must broadcast.
    """
    x_num = np.asarray(x_num, dtype=np.int64)

    def _floor(r):
        return x_num // q ** (rx - r) if rx >= r else x_num * q ** (r - rx)

    below_up = np.all(_floor(r_up) < upper, axis=-1)
    below_lo = np.all(_floor(r_lo) < lower, axis=-1)
    return below_up & ~below_lo


# -- serialization ------------------------------------------------------------


def chain_rows(chain: BracketChain) -> list[list]:
    rows = []
    for h, beta in enumerate(chain.betas):
        r = chain_resolution(chain.q, chain.d, h, chain.H)
        nums = [c.refine(r).a for c in beta]
        if h <= chain.H:
            lam = chain.shell(h).measure
            lam_cols = [lam.numerator, lam.denominator]
        else:
            lam_cols = ["", ""]
        rows.append([h, r, *nums, *lam_cols])
    return rows


def chain_to_csv(chain: BracketChain) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["h", "resolution", *[f"beta_{j + 1}" for j in range(chain.d)], "lambda_num", "lambda_den"])
    w.writerows(chain_rows(chain))
    return buf.getvalue()


__all__ = [
    "Bracket",
    "BracketChain",
    "BracketingCover",
    "CoverReport",
    "DeltaIndicator",
    "KShell",
    "build_bracket_chain",
    "chain_arrays",
    "chain_resolution",
    "chain_to_csv",
    "check_chain",
    "cover_resolution",
    "delta_indicator",
    "in_shell",
    "k_sets",
    "membership_window",
    "qadic_cover",
    "shell_measures",
    "star_discrepancy_bracket_bound",
    "validate_cover",
]
