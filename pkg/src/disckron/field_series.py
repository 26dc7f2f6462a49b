"""Arithmetic over the prime field Z_q, polynomials in Z_q[t] and truncated
fractional Laurent series in t^{-1}.

A fractional series g = g_1 t^{-1} + g_2 t^{-2} + ... is stored as its first
``m`` digits.  Digits past ``m`` are unknown, and every operation refuses to
produce an output digit that would depend on them.

The map phi evaluates a fractional series at t = q, so the m stored digits of
g give phi(g) exactly up to the resolution q^{-m}.  These values are carried
as :class:`QadicRational` numerators ``a / q^m``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (
    InsufficientPrecision,
    InsufficientResolution,
    PrecisionExceeded,
    ValidationError,
)

MAX_Q = 2**16


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def ceil_log(q: int, d: int) -> int:
    """Smallest integer L >= 0 with q**L >= d, i.e. ceil(log_q d) in exact arithmetic."""
    if d < 1:
        raise ValidationError("d must be positive")
    L, p = 0, 1
    while p < d:
        p *= q
        L += 1
    return L


def make_rng(master_seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the stream ``(master_seed, *stream)``.

    Streams with different keys are statistically independent, so each trial
    can own its generator without any shared state.
    """
    seq = np.random.SeedSequence([int(master_seed), *(int(s) for s in stream)])
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class FieldParams:
    q: int

    def __post_init__(self):
        if not isinstance(self.q, (int, np.integer)) or not 2 <= self.q <= MAX_Q:
            raise ValidationError(f"q must be an integer in [2, {MAX_Q}], got {self.q!r}")
        if not _is_prime(int(self.q)):
            raise ValidationError(f"q={self.q} is not prime")


@functools.lru_cache(maxsize=None)
def field(q: int) -> FieldParams:
    return FieldParams(q)


@dataclass(frozen=True)
class PolyFq:
    """Polynomial n_0 + n_1 t + ... + n_r t^r over Z_q with n_r != 0."""

    q: int
    coeffs: tuple[int, ...] = ()

    def __post_init__(self):
        c = tuple(int(x) for x in self.coeffs)
        if any(not 0 <= x < self.q for x in c):
            raise ValidationError(f"coefficients must lie in [0, {self.q})")
        while c and c[-1] == 0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        """Degree, with -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def __add__(self, other: PolyFq) -> PolyFq:
        if other.q != self.q:
            raise ValidationError("polynomials over different fields")
        n = max(len(self.coeffs), len(other.coeffs))
        a = self.coeffs + (0,) * (n - len(self.coeffs))
        b = other.coeffs + (0,) * (n - len(other.coeffs))
        return PolyFq(self.q, tuple((x + y) % self.q for x, y in zip(a, b)))

    def __int__(self) -> int:
        return sum(c * self.q**i for i, c in enumerate(self.coeffs))


@dataclass(frozen=True)
class FracSeries:
    """First ``m`` digits g_1..g_m of a series in the fractional part of Z_q((t^{-1}))."""

    q: int
    digits: tuple[int, ...]

    def __post_init__(self):
        d = tuple(int(x) for x in self.digits)
        if not d:
            raise ValidationError("a series needs at least one exact digit")
        if any(not 0 <= x < self.q for x in d):
            raise ValidationError(f"digits must lie in [0, {self.q})")
        object.__setattr__(self, "digits", d)

    @property
    def m(self) -> int:
        return len(self.digits)

    def __getitem__(self, i: int) -> int:
        # 1-based, matching g_1 t^{-1} + g_2 t^{-2} + ...
        if not 1 <= i <= self.m:
            raise PrecisionExceeded(f"digit {i} not stored (precision {self.m})")
        return self.digits[i - 1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.digits, dtype=np.int64)


@functools.total_ordering
@dataclass(frozen=True)
class QadicRational:
    """The number a / q^m, with 0 <= a <= q^m."""

    q: int
    a: int
    m: int

    def __post_init__(self):
        a, m = int(self.a), int(self.m)
        if m < 0:
            raise ValidationError("resolution must be nonnegative")
        if not 0 <= a <= self.q**m:
            raise ValidationError(f"numerator {a} outside [0, q^m]")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "m", m)

    @classmethod
    def from_fraction(cls, x: Fraction, q: int, m: int) -> QadicRational:
        x = Fraction(x)
        a = x * q**m
        if a.denominator != 1:
            raise InsufficientPrecision(f"{x} is not a multiple of {q}^-{m}")
        return cls(q, int(a), m)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.a, self.q**self.m)

    def __float__(self) -> float:
        return self.a / self.q**self.m

    def __eq__(self, other):
        if isinstance(other, QadicRational):
            return self.fraction == other.fraction
        if isinstance(other, (int, Fraction)):
            return self.fraction == other
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, QadicRational):
            return self.fraction < other.fraction
        if isinstance(other, (int, Fraction)):
            return self.fraction < other
        return NotImplemented

    def __hash__(self):
        return hash(self.fraction)

    def refine(self, r: int) -> QadicRational:
        """Same value written at the finer resolution r >= m."""
        if r < self.m:
            raise InsufficientResolution(f"cannot refine resolution {self.m} to {r}")
        return QadicRational(self.q, self.a * self.q ** (r - self.m), r)

    def floor_to(self, r: int) -> QadicRational:
        if r >= self.m:
            return self.refine(r)
        return QadicRational(self.q, self.a // self.q ** (self.m - r), r)

    def ceil_to(self, r: int) -> QadicRational:
        if r >= self.m:
            return self.refine(r)
        return QadicRational(self.q, -(-self.a // self.q ** (self.m - r)), r)


def poly_from_int(n: int, params: FieldParams) -> PolyFq:
    """n = n_0 + n_1 q + ... + n_r q^r  ->  n_0 + n_1 t + ... + n_r t^r."""
    if n < 0:
        raise ValidationError("n must be nonnegative")
    q = params.q
    coeffs = []
    while n:
        n, r = divmod(n, q)
        coeffs.append(r)
    return PolyFq(q, tuple(coeffs))


def frac_part(integer_coeffs: PolyFq | Sequence[int], frac: FracSeries) -> FracSeries:
    """Fractional part of the Laurent series (integer part, fractional part)."""
    if isinstance(integer_coeffs, PolyFq) and integer_coeffs.q != frac.q:
        raise ValidationError("inputs over different fields")
    return frac


def mul_poly_series(p: PolyFq, g: FracSeries, m: int) -> tuple[PolyFq, FracSeries]:
    """Exact product p * g split into integer part and the fractional digits 1..m.

    The coefficient of t^{-j} is sum_i p_i g_{i+j}, so digit m needs g up to
    index deg(p) + m.
    """
    if p.q != g.q:
        raise ValidationError("inputs over different fields")
    if m < 1:
        raise ValidationError("output precision must be >= 1")
    q = g.q
    deg = max(p.degree, 0)
    if g.m < deg + m:
        raise InsufficientPrecision(f"need {deg + m} digits of g, have {g.m}")
    pc, gd = p.coeffs, g.digits
    frac = [sum(c * gd[i + j - 1] for i, c in enumerate(pc)) % q for j in range(1, m + 1)]
    # coefficient of t^k, k >= 0, collects p_i g_{i-k} for i > k
    integer = [
        sum(pc[i] * gd[i - k - 1] for i in range(k + 1, len(pc))) % q for k in range(len(pc) - 1)
    ]
    return PolyFq(q, tuple(integer)), FracSeries(q, tuple(frac))


def phi(g: FracSeries) -> QadicRational:
    """sum g_i t^{-i}  ->  sum g_i q^{-i}, exact at resolution g.m."""
    a = 0
    for x in g.digits:
        a = a * g.q + x
    return QadicRational(g.q, a, g.m)


def digits_of(x: QadicRational) -> FracSeries:
    """Inverse of :func:`phi` on numerators below q^m."""
    if x.a >= x.q**x.m or x.m < 1:
        raise ValidationError("only values in [0,1) with m >= 1 have a digit expansion")
    out = []
    a = x.a
    for _ in range(x.m):
        a, r = divmod(a, x.q)
        out.append(r)
    return FracSeries(x.q, tuple(reversed(out)))


def sample_haar(params: FieldParams, m: int, rng: np.random.Generator) -> FracSeries:
    """Draw the first m digits of a Haar-random fractional series."""
    if m < 1:
        raise ValidationError("m must be >= 1")
    return FracSeries(params.q, tuple(rng.integers(0, params.q, size=m).tolist()))


def sample_haar_digits(q: int, shape, rng: np.random.Generator) -> np.ndarray:
    """Vectorised Haar digits: an int64 array of iid uniform values in [0, q)."""
    return rng.integers(0, q, size=shape, dtype=np.int64)


def cylinder_contains(g: FracSeries, prefix: Sequence[int]) -> bool:
    """Whether g lies in the cylinder set C(c_1, ..., c_k)."""
    k = len(prefix)
    if k > g.m:
        raise PrecisionExceeded(f"prefix of length {k} exceeds precision {g.m}")
    return tuple(g.digits[:k]) == tuple(int(c) for c in prefix)
