"""Exact point sets from digital Kronecker sequences and their lacunary
subsequences.

Every coordinate is a q-adic rational a / q^m, so a point set is an integer
matrix of numerators plus the pair (q, m).  Lacunary rows are indexed from
n = 1 (x_n uses the digit window f_n .. f_{n+m-1}), full Kronecker rows from
n = 0 (y_0 is the origin).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InsufficientPrecision, SchemaError, ValidationError
from .field_series import (
    FracSeries,
    QadicRational,
    field,
    frac_part,
    mul_poly_series,
    phi,
    poly_from_int,
)

PROVENANCES = ("lacunary-digital", "kronecker", "classical-lacunary", "external")

_INT64_SAFE = 2**62


def numerator_dtype(q: int, m: int):
    """int64 when every numerator (and q^m itself) fits comfortably, else object."""
    return np.int64 if q**m < _INT64_SAFE else object


@dataclass(frozen=True)
class GeneratorTuple:
    components: tuple[FracSeries, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValidationError("a generator tuple needs d >= 1 components")
        if len({c.q for c in comps}) != 1:
            raise ValidationError("all components must share q")
        object.__setattr__(self, "components", comps)

    @property
    def q(self) -> int:
        return self.components[0].q

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def precision(self) -> int:
        return min(c.m for c in self.components)

    @classmethod
    def from_digits(cls, q: int, digits) -> GeneratorTuple:
        """Build from a (d, L) array-like of digits."""
        return cls(tuple(FracSeries(q, tuple(np.asarray(row).tolist())) for row in digits))

    def digit_matrix(self, length: int) -> np.ndarray:
        if self.precision < length:
            raise InsufficientPrecision(f"need {length} digits, have {self.precision}")
        return np.array([c.digits[:length] for c in self.components], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PointSet:
    """N points in [0,1)^d with coordinates num[n, j] / q^m."""

    q: int
    m: int
    num: np.ndarray
    provenance: str = "external"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if self.m < 0:
            raise ValidationError("resolution must be nonnegative")
        dtype = numerator_dtype(self.q, self.m)
        num = np.asarray(self.num)
        if num.ndim != 2:
            raise ValidationError("numerators must form an N x d matrix")
        if dtype is object:
            num = np.array([[int(v) for v in row] for row in num.tolist()], dtype=object).reshape(
                num.shape
            )
        else:
            num = num.astype(np.int64)
        if num.size and (num.min() < 0 or num.max() >= self.q**self.m):
            raise ValidationError("coordinates must lie in [0, 1)")
        num = np.asfortranarray(num)
        num.setflags(write=False)
        object.__setattr__(self, "num", num)

    @property
    def N(self) -> int:
        return self.num.shape[0]

    @property
    def d(self) -> int:
        return self.num.shape[1]

    @property
    def denominator(self) -> int:
        return self.q**self.m

    def coord(self, n: int, j: int) -> QadicRational:
        return QadicRational(self.q, int(self.num[n, j]), self.m)

    def head(self, n: int) -> PointSet:
        """The first n rows (the point set of the shorter prefix)."""
        return PointSet(self.q, self.m, self.num[:n], self.provenance)

    def refined(self, m: int) -> PointSet:
        """Same points at a finer resolution."""
        if m < self.m:
            raise ValidationError("can only refine to a finer resolution")
        f = self.q ** (m - self.m)
        return PointSet(self.q, m, np.asarray(self.num, dtype=object) * f, self.provenance)

    def __eq__(self, other):
        if not isinstance(other, PointSet):
            return NotImplemented
        return (
            self.q == other.q
            and self.m == other.m
            and self.num.shape == other.num.shape
            and bool(np.all(np.asarray(self.num, dtype=object) == np.asarray(other.num, dtype=object)))
        )


@dataclass(frozen=True)
class DigitStream:
    """Base-b digits alpha_1 alpha_2 ... of a real number in [0,1)."""

    base: int
    digits: tuple[int, ...]

    def __post_init__(self):
        if self.base < 2:
            raise ValidationError("base must be >= 2")
        d = tuple(int(x) for x in self.digits)
        if any(not 0 <= x < self.base for x in d):
            raise ValidationError(f"digits must lie in [0, {self.base})")
        object.__setattr__(self, "digits", d)

    @property
    def exact(self) -> int:
        return len(self.digits)


def _window_numerators(digits: np.ndarray, q: int, N: int, m: int) -> np.ndarray:
    """Row n (0-based) gets the base-q integer with digits digits[..., n:n+m]."""
    digits = np.asarray(digits, dtype=np.int64)
    if m == 0:
        return np.zeros(digits.shape[:-1] + (N,), dtype=np.int64)
    windows = sliding_window_view(digits[..., : N - 1 + m], m, axis=-1)
    if numerator_dtype(q, m) is np.int64:
        weights = q ** np.arange(m - 1, -1, -1, dtype=np.int64)
        return windows @ weights
    weights = np.array([q**e for e in range(m - 1, -1, -1)], dtype=object)
    return windows.astype(object) @ weights


def window_numerators(digits: np.ndarray, q: int, N: int, m: int) -> np.ndarray:
    """Vectorised lacunary coordinates for a batch of digit arrays.

    ``digits`` has shape (..., L) with L >= N - 1 + m; the result has shape
    (..., N) and entry n - 1 is the numerator of phi({t^{n-1} f}) at
    resolution m.
    """
    if np.shape(digits)[-1] < N - 1 + m:
        raise InsufficientPrecision(f"need {N - 1 + m} digits, have {np.shape(digits)[-1]}")
    return _window_numerators(digits, q, N, m)


def lacunary_digital_points(f: GeneratorTuple, N: int, m: int) -> PointSet:
    """x_n = phi({t^{n-1} f}) for n = 1..N at resolution m."""
    if N < 0 or m < 1:
        raise ValidationError("need N >= 0 and m >= 1")
    need = N - 1 + m
    if f.precision < need:
        raise InsufficientPrecision(f"lacunary points need {need} digits, have {f.precision}")
    if N == 0:
        return PointSet(f.q, m, np.zeros((0, f.d), dtype=np.int64), "lacunary-digital")
    num = _window_numerators(f.digit_matrix(need), f.q, N, m)
    return PointSet(f.q, m, num.T, "lacunary-digital")


def shift_map(g: FracSeries, step: int) -> FracSeries:
    """{t^{step-1} g}: drops the first step-1 digits."""
    if step < 1:
        raise ValidationError("step must be a positive integer")
    if g.m < step:
        raise InsufficientPrecision(f"shift by {step - 1} leaves no exact digit of {g.m}")
    return FracSeries(g.q, g.digits[step - 1 :])


def digital_kronecker_points(f: GeneratorTuple, N: int, m: int) -> PointSet:
    """y_n = phi({n(t) f}) for n = 0..N-1 at resolution m."""
    if N < 0 or m < 1:
        raise ValidationError("need N >= 0 and m >= 1")
    params = field(f.q)
    deg = poly_from_int(N - 1, params).degree if N >= 2 else 0
    if f.precision < deg + m:
        raise InsufficientPrecision(f"Kronecker points need {deg + m} digits, have {f.precision}")
    rows = []
    for n in range(N):
        p = poly_from_int(n, params)
        row = []
        for g in f.components:
            integer, frac = mul_poly_series(p, g, m)
            row.append(phi(frac_part(integer, frac)).a)
        rows.append(row)
    num = np.array(rows, dtype=numerator_dtype(f.q, m)).reshape(N, f.d)
    return PointSet(f.q, m, num, "kronecker")


def classical_lacunary_points(alpha: Sequence[DigitStream], N: int, m: int) -> PointSet:
    """{b^{n-1} alpha} for n = 1..N, each alpha_i given by its base-b digits."""
    alpha = list(alpha)
    if not alpha or len({a.base for a in alpha}) != 1:
        raise ValidationError("need d >= 1 digit streams with a common base")
    if N < 0 or m < 1:
        raise ValidationError("need N >= 0 and m >= 1")
    b = alpha[0].base
    need = N - 1 + m
    if min(a.exact for a in alpha) < need:
        raise InsufficientPrecision(f"classical lacunary points need {need} digits")
    if N == 0:
        return PointSet(b, m, np.zeros((0, len(alpha)), dtype=np.int64), "classical-lacunary")
    digits = np.array([a.digits[:need] for a in alpha], dtype=np.int64)
    return PointSet(b, m, _window_numerators(digits, b, N, m).T, "classical-lacunary")


def to_float(ps: PointSet) -> np.ndarray:
    """Nearest binary64 values of the coordinates."""
    den = ps.denominator
    if ps.num.dtype != object and den <= 2**53:
        return ps.num.astype(np.float64) / float(den)
    # int / int true division rounds correctly for arbitrary Python ints
    return np.array([[int(a) / den for a in row] for row in ps.num.tolist()], dtype=np.float64).reshape(
        ps.num.shape
    )


# -- CSV exchange -----------------------------------------------------------


def write_points_csv(ps: PointSet, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["q", "d", "N", "m"])
    w.writerow([ps.q, ps.d, ps.N, ps.m])
    for row in ps.num.tolist():
        w.writerow([int(v) for v in row])


def points_to_csv(ps: PointSet) -> str:
    buf = io.StringIO()
    write_points_csv(ps, buf)
    return buf.getvalue()


def read_points_csv(fh, provenance: str = "external") -> PointSet:
    rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2 or [c.strip() for c in rows[0]] != ["q", "d", "N", "m"]:
        raise SchemaError("expected header 'q,d,N,m' followed by a value row")
    try:
        q, d, N, m = (int(c) for c in rows[1])
        body = [[int(c) for c in r] for r in rows[2:]]
    except ValueError as exc:
        raise SchemaError(f"non-integer entry: {exc}") from None
    if len(body) != N or any(len(r) != d for r in body):
        raise SchemaError(f"expected {N} rows of {d} numerators")
    num = np.array(body, dtype=numerator_dtype(q, m)).reshape(N, d)
    return PointSet(q, m, num, provenance)


def points_from_csv(text: str) -> PointSet:
    return read_points_csv(io.StringIO(text))


def write_float_csv(ps: PointSet, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(ps.d)])
    for row in to_float(ps):
        w.writerow([f"{v:.17g}" for v in row])


def from_fractions(q: int, m: int, rows: Iterable[Sequence]) -> PointSet:
    """Point set from rational coordinates that are exact multiples of q^-m."""
    num = [[QadicRational.from_fraction(x, q, m).a for x in row] for row in rows]
    return PointSet(q, m, np.array(num, dtype=numerator_dtype(q, m)).reshape(len(num), -1))
