from fractions import Fraction

import numpy as np
import pytest

from disckron.bracketing import (
    Bracket,
    BracketChain,
    build_bracket_chain,
    chain_arrays,
    chain_to_csv,
    check_chain,
    delta_indicator,
    in_shell,
    k_sets,
    membership_window,
    qadic_cover,
    shell_measures,
    star_discrepancy_bracket_bound,
    validate_cover,
)
from disckron.discrepancy import star_discrepancy_exact
from disckron.errors import (
    BudgetExceeded,
    ChainInvalid,
    CoverInvalid,
    DimensionMismatch,
    InsufficientResolution,
    ValidationError,
)
from disckron.field_series import QadicRational, make_rng
from disckron.sequences import PointSet, from_fractions


def test_small_cover():
    c = qadic_cover(2, 1, 1)
    assert len(c) == 4 and c.materialized and c.delta == Fraction(1, 2)
    gaps = {b.gap for b in c.brackets()}
    assert gaps == {Fraction(1, 4)}
    assert c.lookup([Fraction(3, 8)]).v[0] == Fraction(1, 4)
    assert c.lookup([1]).w[0] == 1


def test_bracket_checks_order():
    with pytest.raises(ValidationError):
        Bracket((QadicRational(2, 3, 2),), (QadicRational(2, 1, 2),))


def test_cover_resolution_respects_delta():
    for q, d in [(2, 1), (2, 3), (3, 2), (5, 4)]:
        for h in range(3):
            c = qadic_cover(q, d, h, materialize=False)
            assert c.bracket([c.side - 1] * d).gap <= c.delta


def test_validate_and_mutation():
    c = qadic_cover(3, 2, 1)
    rep = validate_cover(c, 3000, make_rng(0))
    assert rep.valid and rep.max_gap <= rep.delta
    with pytest.raises(CoverInvalid) as err:
        validate_cover(c.without((4, 7)), 10, make_rng(0))
    y = err.value.counterexample
    assert c.without((4, 7)).lookup(y) is None
    big = qadic_cover(3, 3, 3, materialize=False)
    with pytest.raises(BudgetExceeded):
        big.materialize()
    with pytest.raises(CoverInvalid):
        validate_cover(big.without((1, 2, 3)), 5, make_rng(0))


def test_boundary_points_use_neighbours():
    c = qadic_cover(2, 2, 0).without((1, 1))
    assert c.side == 4
    # (1/2, 1/2) is the top corner of cell (1,1) and the bottom corner of (2,2)
    b = c.lookup([Fraction(1, 2), Fraction(1, 2)])
    assert b is not None and b.contains([Fraction(1, 2), Fraction(1, 2)])
    assert c.lookup([Fraction(3, 8), Fraction(3, 8)]) is None


def test_bracket_bound_examples():
    lo, up = star_discrepancy_bracket_bound(from_fractions(2, 1, [[Fraction(1, 2)]]), qadic_cover(2, 1, 2))
    assert (lo.value, up.value) == (Fraction(1, 2), Fraction(3, 4))
    zeros = PointSet(2, 3, np.zeros((4, 1), dtype=np.int64))
    lo, up = star_discrepancy_bracket_bound(zeros, qadic_cover(2, 1, 1))
    assert (lo.value, up.value) == (Fraction(3, 4), Fraction(1))
    assert up.kind == "upper_bound" and up.delta == Fraction(1, 2)


def test_bracket_sandwich_random():
    rng = make_rng(3)
    for _ in range(20):
        ps = PointSet(2, 12, rng.integers(0, 2**12, size=(32, 2)))
        exact = star_discrepancy_exact(ps).value
        for h in (1, 2, 3):
            cov = qadic_cover(2, 2, h, materialize=False)
            lo, up = star_discrepancy_bracket_bound(ps, cov)
            assert lo.value <= exact <= up.value
            # the materialized cover gives the same numbers
            lo2, up2 = star_discrepancy_bracket_bound(ps, cov.materialize(), budget=2 * len(cov))
            assert (lo2.value, up2.value) == (lo.value, up.value)


def test_partial_or_large_covers_give_lower_only():
    ps = PointSet(2, 10, make_rng(1).integers(0, 2**10, size=(16, 2)))
    lo, up = star_discrepancy_bracket_bound(ps, qadic_cover(2, 2, 2).without((0, 0)))
    assert up is None and lo.value <= star_discrepancy_exact(ps).value
    lo, up = star_discrepancy_bracket_bound(ps, qadic_cover(2, 2, 8, materialize=False), budget=100)
    assert up is None and lo.value <= star_discrepancy_exact(ps).value
    with pytest.raises(DimensionMismatch):
        star_discrepancy_bracket_bound(ps, qadic_cover(2, 3, 1))


def test_chain_example():
    chain = build_bracket_chain([Fraction(5, 16)], 2, 2)
    assert [b[0].fraction for b in chain.betas] == [0, Fraction(1, 4), Fraction(1, 4), Fraction(5, 16)]
    assert [s.measure for s in k_sets(chain)] == [Fraction(1, 4), 0, Fraction(1, 16)]
    assert chain_to_csv(chain) == (
        "h,resolution,beta_1,lambda_num,lambda_den\n0,1,0,1,4\n1,2,1,0,1\n2,3,2,1,16\n3,4,5,,\n"
    )
    with pytest.raises(InsufficientResolution):
        build_bracket_chain([QadicRational(2, 5, 4)], 3, 2)
    with pytest.raises(InsufficientResolution):
        build_bracket_chain([Fraction(1, 3)], 2, 2)
    with pytest.raises(ValidationError):
        build_bracket_chain([QadicRational(2, 16, 4)], 2, 2)


def test_membership_windows():
    assert membership_window(2, 2, 1) == 4
    assert membership_window(3, 3, 0) == 3


def test_check_chain_detects_tampering():
    chain = build_bracket_chain([QadicRational(3, 17, 5), QadicRational(3, 200, 5)], 2, 3)
    check_chain(chain)
    b = list(chain.betas)
    b[1], b[2] = b[2], b[1]
    with pytest.raises(ChainInvalid):
        check_chain(BracketChain(chain.q, chain.H, chain.y, tuple(b)))


def test_shells_partition_box():
    rng = make_rng(6)
    for _ in range(30):
        q, d, H = int(rng.choice([2, 3])), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        r = H + 4
        y = [QadicRational(q, int(a), r) for a in rng.integers(0, q**r, size=d)]
        chain = build_bracket_chain(y, H, q)
        probes = [[Fraction(int(a), q**r) for a in rng.integers(0, q**r, size=d)] for _ in range(40)]
        shells = k_sets(chain, probes)
        assert all(s.measure <= Fraction(1, q**s.h) for s in shells)
        x = probes[0]
        assert delta_indicator(shells[0], x) == (1 if shells[0].contains(x) else 0) - shells[0].measure


def test_vectorised_chain_matches_scalar():
    rng = make_rng(7)
    q, d, H, r = 3, 2, 3, 7
    y = rng.integers(0, q**r, size=(50, d))
    betas = chain_arrays(y, r, q, H)
    meas, den = shell_measures(betas, q, H)
    xs = rng.integers(0, q**r, size=(50, d))
    for t in range(50):
        chain = build_bracket_chain([QadicRational(q, int(a), r) for a in y[t]], H, q)
        for h in range(H + 1):
            assert [c.a for c in chain.beta(h)] == betas[h][t].tolist()
            shell = chain.shell(h)
            assert Fraction(int(meas[t, h]), den) == shell.measure
            lo = np.array([c.a for c in shell.lower])
            up = np.array([c.a for c in shell.upper])
            x = [QadicRational(q, int(a), r) for a in xs[t]]
            got = in_shell(xs[t], r, q, lo, shell.lower[0].m, up, shell.upper[0].m)
            assert bool(got) == shell.contains(x)
