import math

import numpy as np
import pytest

from disckron.errors import BoundTrivial, DegenerateCell, ValidationError
from disckron.experiments import (
    GROWTH_COLUMNS,
    ExperimentConfig,
    bernstein_envelope,
    c_of_q,
    compute_discrepancy,
    compute_proof_constants,
    estimate_inverse_discrepancy,
    largest_bracket_h,
    parse_method,
    records_to_csv,
    rho_stat,
    run_bernstein_envelope_check,
    run_growth_experiment,
    run_independence_test,
    run_metrical_experiment,
    shell_modulus,
    theta_stat,
    threshold,
    trial_seed,
)
from disckron.field_series import QadicRational, make_rng
from disckron.sequences import PointSet


def test_constants_examples():
    bc = compute_proof_constants(2, 2, 1024, 0.5)
    assert bc.H == 5 and c_of_q(2) == 40
    assert bc.C4 == pytest.approx(math.log(72) + 2, rel=1e-12)
    assert bc.M == (3, 4, 5, 6, 7, 8) and bc.kappa[0] == math.log2(3)
    for C, Cx in [(bc.C3, bc.C1), (bc.C4, bc.C2)]:
        assert C == pytest.approx(Cx**2 / (12 + 2 / 3 * Cx * math.sqrt(40)), rel=1e-12)
    assert all(bc.consequences())
    assert bc.t[0] == pytest.approx(bc.C2 * math.sqrt(1024 * 2 * 3))
    assert bc.t[2] == pytest.approx(bc.C1 * math.sqrt(1024 * 2 * 2 * 0.25 * 5))


def test_constants_guards():
    with pytest.raises(BoundTrivial):
        compute_proof_constants(2, 8, 20, 0.5)  # 8 log_2 8 = 24 > 20
    with pytest.raises(ValidationError):
        compute_proof_constants(2, 1, 100, 0.5)
    with pytest.raises(ValidationError):
        compute_proof_constants(2, 2, 100, 1.0)
    assert compute_proof_constants(3, 3, 3, 0.1).H == 1


def test_envelope_monotone_and_t0():
    t = np.linspace(0, 500, 200)
    env = bernstein_envelope(t, 2, 256, 1)
    assert np.all(np.diff(env) < 0)
    assert env[0] == 2 * shell_modulus(2, 1, 1)
    assert threshold(2, 1, 256, 1, 0.5) > threshold(2, 1, 256, 1, 0.9)


def test_statistics():
    assert theta_stat(1.0, 8, 2) == pytest.approx(math.sqrt(8 / (2 * math.log(2))))
    assert math.isfinite(rho_stat(0.5, 2, 2)) and rho_stat(0.5, 2, 2) > 0


def test_method_parsing_and_dispatch():
    assert parse_method("bracket(3)") == ("bracket", 3)
    assert parse_method("auto") == ("auto", None)
    for bad in ["exact(2)", "bracket()", "fast"]:
        with pytest.raises(ValidationError):
            parse_method(bad)
    rng = make_rng(0)
    one = PointSet(2, 8, rng.integers(0, 256, size=(30, 1)))
    assert compute_discrepancy(one).kind == "exact"
    big = PointSet(2, 20, rng.integers(0, 2**20, size=(600, 2)))
    r = compute_discrepancy(big)
    assert r.kind == "upper_bound" and r.delta == 2.0 ** -largest_bracket_h(2, 2)
    five = PointSet(2, 10, rng.integers(0, 1024, size=(50, 5)))
    assert compute_discrepancy(five, rng=make_rng(1)).kind == "lower_bound"


def test_config_validation():
    for bad in [dict(d_list=[1]), dict(N_list=[1]), dict(trials=0), dict(epsilon=0), dict(q=4),
                dict(discrepancy_method="nope"), dict(threads=0)]:  # fmt: skip
        with pytest.raises(ValidationError):
            ExperimentConfig(**bad)
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"colour": 1})


def test_metrical_deterministic_and_diagnostic(tmp_path):
    cfg = ExperimentConfig(d_list=[2], N_list=[16, 64], trials=6, master_seed=3, output_path=str(tmp_path / "a"))
    recs, summary = run_metrical_experiment(cfg)
    diag = [r for r in recs if r.experiment == "metrical-diagnostic"]
    assert len(diag) == 2 and all(r.result.value == 1 for r in diag)
    assert diag[0].theta == pytest.approx(math.sqrt(16 / (2 * math.log(2))))
    assert {c["count"] for c in summary["cells"]} == {6}
    text = (tmp_path / "a.csv").read_text()
    assert text.splitlines()[0] == "experiment,q,d,N,trial,seed,disc_num,disc_den,disc_f64,kind,delta,theta,elapsed_s"
    cfg.output_path = str(tmp_path / "b")
    cfg.threads = 3
    run_metrical_experiment(cfg)
    assert (tmp_path / "b.csv").read_text() == text
    assert (tmp_path / "b.json").read_text() == (tmp_path / "a.json").read_text()


def test_trial_seed_replays_trial():
    cfg = ExperimentConfig(d_list=[2], N_list=[32], trials=3, master_seed=5, diagnostics=False)
    recs, _ = run_metrical_experiment(cfg)
    from disckron.experiments import default_resolution, lacunary_trial_points

    r = recs[1]
    assert r.seed == trial_seed(5, "metrical", 2, 32, r.trial)
    ps = lacunary_trial_points(2, 2, 32, default_resolution(2, 2, 32, "auto"), make_rng(r.seed))
    assert compute_discrepancy(ps).value == r.result.value


def test_budget_errors_skip_trials():
    cfg = ExperimentConfig(d_list=[2], N_list=[64], trials=3, discrepancy_method="exact", budget=10)
    recs, summary = run_metrical_experiment(cfg)
    assert len(summary["skipped_trials"]) == 3 and summary["cells"] == []


def test_growth_prefix_and_small_n():
    cfg = ExperimentConfig(d_list=[2], N_list=[2, 4, 16, 64], trials=4, discrepancy_method="exact")
    recs, summary = run_growth_experiment(cfg)
    assert len(recs) == 16
    assert all(math.isfinite(r.rho) for r in recs)
    assert set(summary["max_rho"]) == {"2"}
    assert summary["eps_schedule"]["2"] == pytest.approx(6 * 0.1 / (math.pi * 2) ** 2)
    lines = records_to_csv(recs, columns=GROWTH_COLUMNS).splitlines()
    assert lines[0].endswith(",elapsed_s,rho") and all(len(x.split(",")) == len(GROWTH_COLUMNS) for x in lines)
    with pytest.raises(ValidationError):
        run_growth_experiment(ExperimentConfig(N_list=[8, 4]))


def test_independence_example():
    rep = run_independence_test(2, 1, 0, trials=10**5, seed=3, y=[QadicRational(2, 5, 4)])
    assert rep["indices"] == [1, 3, 5] and rep["lambda"] == 0.25
    assert abs(rep["joint_all"] - 0.25**3) < 2.576 * rep["joint_se"]
    assert all(abs(z) < 4 for z in rep["marginal_z"])
    assert rep["dof"] == 4
    assert rep["contrast"]["indices"] == [1, 2, 3]


def test_independence_modulus_and_degenerate():
    rep = run_independence_test(2, 2, 1, trials=2000, seed=0)
    assert rep["modulus"] == 4 and np.all(np.diff(rep["indices"]) == 4)
    with pytest.raises(DegenerateCell):
        # K_1 of y = 5/16 at H = 2 has measure 0
        run_independence_test(2, 1, 1, trials=100, y=[QadicRational(2, 5, 4)], H=2)
    with pytest.raises(ValidationError):
        run_independence_test(2, 1, 0, N=3, trials=100)


def test_bernstein_example():
    rep = run_bernstein_envelope_check(2, 1, 256, 1, 10**4, seed=0, t_grid=[0.0, 5.0, 20.0])
    assert rep["passed"] and rep["envelope_monotone"]
    t0 = [r for r in rep["rows"] if r["t"] == 0.0][0]
    assert t0["p_hat"] <= 1 <= t0["envelope"]


def test_inverse_discrepancy():
    summary = {"cells": [
        {"d": 2, "N": 64, "disc_median": 0.2, "kind": "exact"},
        {"d": 2, "N": 256, "disc_median": 0.08, "kind": "exact"},
        {"d": 2, "N": 1024, "disc_median": 0.03, "kind": "exact"},
    ]}  # fmt: skip
    assert estimate_inverse_discrepancy(summary, 1.0)["2"]["N"] == 64
    assert estimate_inverse_discrepancy(summary, 0.05)["2"]["N"] == 1024
    assert estimate_inverse_discrepancy(summary, 0.01)["2"] == {"N": None, "kind": "not reached"}
    got = [estimate_inverse_discrepancy(summary, e)["2"]["N"] for e in (0.04, 0.08, 0.16, 0.32)]
    assert got == sorted(got, reverse=True)
