"""Seeded Monte Carlo campaigns for lacunary digital Kronecker point sets.

Every campaign is a pure function of its configuration: each trial owns a
Philox stream keyed by (master seed, campaign tag, d, N, trial), and output
rows are sorted before they are written.  Wall-clock timings only reach the
artifacts when ``timing`` is switched on.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import chi2_contingency

from . import __version__
from .bracketing import (
    CORNER_BUDGET,
    build_bracket_chain,
    cover_resolution,
    in_shell,
    membership_window,
    qadic_cover,
    star_discrepancy_bracket_bound,
)
from .discrepancy import (
    DEFAULT_BUDGET,
    DiscrepancyResult,
    star_discrepancy_1d,
    star_discrepancy_exact,
    star_discrepancy_lower,
)
from .errors import BoundTrivial, BudgetExceeded, DegenerateCell, ValidationError
from .field_series import QadicRational, ceil_log, field as fq, make_rng, sample_haar_digits
from .sequences import PointSet, window_numerators

log = logging.getLogger(__name__)

TRIAL_COLUMNS = [
    "experiment", "q", "d", "N", "trial", "seed", "disc_num", "disc_den",
    "disc_f64", "kind", "delta", "theta", "elapsed_s",
]  # fmt: skip
GROWTH_COLUMNS = TRIAL_COLUMNS + ["rho"]

_TAGS = {"metrical": 1, "growth": 2, "independence": 3, "bernstein": 4}


# -- constants of the Bernstein argument ---------------------------------------


def log_q(q: int, x: float) -> float:
    """log_q x, exact when x is a power of q."""
    if isinstance(x, int) and x >= 1:
        L = ceil_log(q, x)
        if q**L == x:
            return float(L)
    return math.log(x) / math.log(q)


def c_of_q(q: int) -> float:
    """c(q) = 2 q^2 (1 + 4 / log_q 2)."""
    return 2 * q**2 * (1 + 4 / log_q(q, 2))


def _invert(C: float, c: float) -> float:
    # positive root of x^2 / (12 + (2/3) x sqrt(c)) = C
    return C * math.sqrt(c) / 3 + math.sqrt(C**2 * c / 9 + 12 * C)


def shell_modulus(q: int, d: int, h: int) -> int:
    """h + 2 + ceil(log_q d): the residue modulus 2^{kappa_h} of the independence lemma."""
    return h + 2 + ceil_log(q, d)


def threshold(q: int, d: int, N: int, h: int, eps: float) -> float:
    """t_h = C_1 sqrt(N d h q^-h M_h) for h >= 1, t_0 = C_2 sqrt(N d M_0)."""
    c = c_of_q(q)
    M = shell_modulus(q, d, h)
    if h == 0:
        C4 = math.log(4 * (q**3 + 1) * math.e**2 / eps)
        return _invert(C4, c) * math.sqrt(N * d * M)
    C3 = math.log(4 * math.sqrt(2) * (q**4 + 1) * math.e**2 / eps)
    return _invert(C3, c) * math.sqrt(N * d * h * q ** (-h) * M)


def bernstein_envelope(t, q: int, N: int, h: int, d: int = 1):
    """2^{kappa_h + 1} exp(-(t^2 / 2^{kappa_h}) / (12 N q^-h + 2 t / 3))."""
    M = shell_modulus(q, d, h)
    t = np.asarray(t, dtype=np.float64)
    return 2 * M * np.exp(-(t**2 / M) / (12 * N * q ** (-h) + 2 * t / 3))


@dataclass(frozen=True)
class BoundConstants:
    q: int
    d: int
    N: int
    eps: float
    H: int
    L: int
    kappa: tuple[float, ...]
    M: tuple[int, ...]
    c_q: float
    C1: float
    C2: float
    C3: float
    C4: float
    t: tuple[float, ...]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["c"] = self.c_q
        return out

    def consequences(self, rtol: float = 1e-12) -> tuple[bool, bool]:
        """q^-H <= sqrt(d log_q d / N) and q^{2H} <= q^2 N / (d log_q d)."""
        s = self.d * log_q(self.q, self.d)
        first = self.q ** (-self.H) <= math.sqrt(s / self.N) * (1 + rtol)
        second = self.q ** (2 * self.H) <= self.q**2 * self.N / s * (1 + rtol)
        return first, second


def compute_proof_constants(q: int, d: int, N: int, eps: float) -> BoundConstants:
    fq(q)
    if d < 2 or N < 2:
        raise ValidationError("the bound is stated for N, d >= 2")
    if not 0 < eps < 1:
        raise ValidationError("eps must lie in (0, 1)")
    s = d * log_q(q, d)
    if N < s:
        raise BoundTrivial(f"N={N} < d log_q d = {s:.6g}")
    ratio = N / s
    # smallest H >= 1 with q^{2H} >= N / (d log_q d), i.e. the ceiling formula
    H = 1
    while q ** (2 * H) < ratio:
        H += 1
    L = ceil_log(q, d)
    c = c_of_q(q)
    C4 = math.log(4 * (q**3 + 1) * math.e**2 / eps)
    C3 = math.log(4 * math.sqrt(2) * (q**4 + 1) * math.e**2 / eps)
    Ms = tuple(shell_modulus(q, d, h) for h in range(H + 1))
    return BoundConstants(
        q=q, d=d, N=N, eps=eps, H=H, L=L,
        kappa=tuple(math.log2(M) for M in Ms),
        M=Ms, c_q=c,
        C1=_invert(C3, c), C2=_invert(C4, c), C3=C3, C4=C4,
        t=tuple(threshold(q, d, N, h, eps) for h in range(H + 1)),
    )  # fmt: skip


# -- configuration ------------------------------------------------------------

_METHOD_RE = re.compile(r"^(auto|exact|1d|lower_only|bracket)(?:\((\d+)\))?$")


def parse_method(method: str) -> tuple[str, int | None]:
    m = _METHOD_RE.match(method.strip())
    if not m or (m.group(2) is not None and m.group(1) != "bracket"):
        raise ValidationError(f"unknown discrepancy method {method!r}")
    return m.group(1), (int(m.group(2)) if m.group(2) is not None else None)


@dataclass
class ExperimentConfig:
    q: int = 2
    d_list: list[int] = field(default_factory=lambda: [2])
    N_list: list[int] = field(default_factory=lambda: [256])
    trials: int = 100
    epsilon: float = 0.1
    delta: float = 0.1
    master_seed: int = 0
    discrepancy_method: str = "auto"
    output_path: str | None = None
    m: int | None = None
    theta_gate: float = 10.0
    rho_gate: float = 10.0
    threads: int = 1
    timing: bool = False
    budget: int = DEFAULT_BUDGET
    diagnostics: bool = True

    def __post_init__(self):
        fq(self.q)
        self.d_list = [int(d) for d in self.d_list]
        self.N_list = [int(n) for n in self.N_list]
        if not self.d_list or not self.N_list:
            raise ValidationError("d_list and N_list must be nonempty")
        if any(d < 2 for d in self.d_list) or any(n < 2 for n in self.N_list):
            raise ValidationError("d and N must be >= 2")
        if self.trials < 1:
            raise ValidationError("need at least one trial")
        if not 0 < self.epsilon < 1 or not 0 < self.delta < 1:
            raise ValidationError("epsilon and delta must lie in (0, 1)")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        parse_method(self.discrepancy_method)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- discrepancy dispatch -----------------------------------------------------


def exact_resolution(q: int, d: int, N: int) -> int:
    """Largest m with q^m <= 2^53 and N q^{dm} < 2^62 (at least 1)."""
    m = 1
    while q ** (m + 1) <= 2**53 and N * q ** (d * (m + 1)) < 2**62:
        m += 1
    return m


def float_resolution(q: int) -> int:
    m = 1
    while q ** (m + 1) <= 2**53:
        m += 1
    return m


def largest_bracket_h(q: int, d: int, budget: int = CORNER_BUDGET) -> int:
    h = 0
    while (q ** cover_resolution(q, d, h + 1) + 1) ** d <= budget:
        h += 1
    return h


def compute_discrepancy(
    ps: PointSet, method: str = "auto", rng: np.random.Generator | None = None, budget: int = DEFAULT_BUDGET
) -> DiscrepancyResult:
    """D* (or a bound on it) by the named method; the result kind says which."""
    name, h = parse_method(method)
    if name == "auto":
        if ps.d == 1:
            return star_discrepancy_1d(ps)
        if ps.d <= 3 and ps.N <= 512:
            try:
                return star_discrepancy_exact(ps, budget)
            except BudgetExceeded:
                pass
        if ps.d <= 4:
            name = "bracket"
        else:
            name = "lower_only"
    if name == "exact":
        return star_discrepancy_exact(ps, budget)
    if name == "1d":
        return star_discrepancy_1d(ps)
    if name == "lower_only":
        return star_discrepancy_lower(ps, rng)
    if h is None:
        h = largest_bracket_h(ps.q, ps.d)
    lower, upper = star_discrepancy_bracket_bound(ps, qadic_cover(ps.q, ps.d, h, materialize=False))
    return upper if upper is not None else lower


def default_resolution(q: int, d: int, N: int, method: str) -> int:
    name, _ = parse_method(method)
    if name == "exact" or (name == "auto" and d <= 3 and N <= 512):
        return exact_resolution(q, d, N)
    return float_resolution(q)


# -- records and summaries ----------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    experiment: str
    q: int
    d: int
    N: int
    trial: int
    seed: int
    result: DiscrepancyResult
    theta: float
    rho: float | None = None

    def row(self, timing: bool = False) -> list:
        r = self.result
        out = [
            self.experiment, self.q, self.d, self.N, self.trial, self.seed,
            r.value.numerator, r.value.denominator, repr(r.value_f64), r.kind,
            repr(float(r.delta)), repr(self.theta),
            repr(round(r.elapsed, 6)) if timing else "0.0",
        ]  # fmt: skip
        if self.rho is not None:
            out.append(repr(self.rho))
        return out


def theta_stat(disc: float, N: int, d: int) -> float:
    """D* sqrt(N / (d ln d))."""
    return disc * math.sqrt(N / (d * math.log(d)))


def rho_stat(disc: float, N: int, d: int) -> float:
    """D* / (ln N sqrt(d ln d / N))."""
    return disc / (math.log(N) * math.sqrt(d * math.log(d) / N))


def quantile_levels(eps: float) -> list[float]:
    return sorted({0.5, 0.9, round(1 - eps, 12)})


def _quantiles(values, levels) -> dict:
    if len(values) == 0:
        return {}
    v = np.asarray(values, dtype=np.float64)
    return {f"{p:g}": float(np.quantile(v, p)) for p in levels}


def trial_seed(master_seed: int, tag: str, *key: int) -> int:
    """Replayable 32-bit seed of one trial: make_rng(seed) rebuilds its stream."""
    ss = np.random.SeedSequence([int(master_seed), _TAGS[tag], *(int(k) for k in key)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def records_to_csv(records: Sequence[TrialRecord], timing: bool = False, columns=TRIAL_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in sorted(records, key=lambda r: (r.d, r.N, r.trial, r.experiment)):
        w.writerow(r.row(timing))
    return buf.getvalue()


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_outputs(prefix: str | None, csv_text: str, summary: dict) -> None:
    if not prefix:
        return
    base = Path(prefix)
    base.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{base}.csv").write_text(csv_text)
    Path(f"{base}.json").write_text(dump_json(summary))


# -- Theorem-style metrical campaign ------------------------------------------


def lacunary_trial_points(q: int, d: int, N: int, m: int, rng: np.random.Generator) -> PointSet:
    digits = sample_haar_digits(q, (d, N - 1 + m), rng)
    return PointSet(q, m, window_numerators(digits, q, N, m).T, "lacunary-digital")


def run_metrical_experiment(config: ExperimentConfig):
    """D* of Haar-random lacunary point sets over the (d, N) grid.

    Returns (records, summary); writes ``<output_path>.csv`` and ``.json`` when
    an output path is configured.  Trial 0 of every cell is the all-zero
    generator, a pipeline check kept out of the quantiles.
    """
    q, cfg = config.q, config
    levels = quantile_levels(cfg.epsilon)
    jobs = [(d, N, k) for d in cfg.d_list for N in cfg.N_list for k in range(1, cfg.trials + 1)]

    def run(job):
        d, N, k = job
        m = cfg.m or default_resolution(q, d, N, cfg.discrepancy_method)
        seed = trial_seed(cfg.master_seed, "metrical", d, N, k)
        rng = make_rng(seed)
        ps = lacunary_trial_points(q, d, N, m, rng)
        try:
            res = compute_discrepancy(ps, cfg.discrepancy_method, rng, cfg.budget)
        except BudgetExceeded as exc:
            log.warning("d=%d N=%d trial %d skipped: %s", d, N, k, exc)
            return None
        return TrialRecord("metrical", q, d, N, k, seed, res, theta_stat(res.value_f64, N, d))

    t0 = time.perf_counter()
    results = _map(run, jobs, cfg.threads)
    records = [r for r in results if r is not None]
    skipped = [{"d": d, "N": N, "trial": k} for (d, N, k), r in zip(jobs, results) if r is None]

    diagnostics = []
    if cfg.diagnostics:
        for d in cfg.d_list:
            for N in cfg.N_list:
                m = cfg.m or default_resolution(q, d, N, cfg.discrepancy_method)
                zero = PointSet(q, m, np.zeros((N, d), dtype=np.int64), "lacunary-digital")
                res = compute_discrepancy(zero, cfg.discrepancy_method, make_rng(0), cfg.budget)
                rec = TrialRecord("metrical-diagnostic", q, d, N, 0, 0, res, theta_stat(res.value_f64, N, d))
                records.append(rec)
                diagnostics.append(
                    {"d": d, "N": N, "disc_f64": res.value_f64, "kind": res.kind, "ok": res.value == 1}
                )

    cells = []
    for d in cfg.d_list:
        for N in cfg.N_list:
            recs = [r for r in records if r.d == d and r.N == N and r.experiment == "metrical"]
            for kind in sorted({r.result.kind for r in recs}):
                sub = [r for r in recs if r.result.kind == kind]
                theta = [r.theta for r in sub]
                cells.append({
                    "d": d, "N": N, "kind": kind, "count": len(sub),
                    "skipped": sum(1 for s in skipped if s["d"] == d and s["N"] == N),
                    "theta_quantiles": _quantiles(theta, levels),
                    "theta_max": max(theta),
                    "disc_median": float(np.median([r.result.value_f64 for r in sub])),
                    "gate_passed": bool(np.quantile(theta, 0.9) < cfg.theta_gate),
                })  # fmt: skip
    summary = {
        "experiment": "metrical",
        "statistic": "theta",
        "q": q,
        "epsilon": cfg.epsilon,
        "method": cfg.discrepancy_method,
        "master_seed": cfg.master_seed,
        "trials": cfg.trials,
        "quantile_levels": levels,
        "log_base": "e",
        "code_version": __version__,
        "theta_gate": cfg.theta_gate,
        "cells": cells,
        "skipped_trials": skipped,
        "diagnostics": diagnostics,
    }
    log.info("metrical campaign: %d records in %.1fs", len(records), time.perf_counter() - t0)
    _write_outputs(cfg.output_path, records_to_csv(records, cfg.timing), summary)
    return records, summary


# -- growth along one sequence ------------------------------------------------


def run_growth_experiment(config: ExperimentConfig):
    """D*_N along increasing prefixes of one sequence per trajectory.

    Each trajectory draws one generator and evaluates the first N points for
    every N in ``N_list``; rho_N = D*_N / (ln N sqrt(d ln d / N)).
    """
    cfg, q = config, config.q
    Ns = sorted(cfg.N_list)
    if Ns != list(cfg.N_list) or len(set(Ns)) != len(Ns):
        raise ValidationError("N_list must be strictly increasing")
    levels = sorted({0.5, 0.9, round(1 - cfg.delta, 12)})
    jobs = [(d, k) for d in cfg.d_list for k in range(1, cfg.trials + 1)]

    def run(job):
        d, k = job
        m = cfg.m or default_resolution(q, d, Ns[-1], cfg.discrepancy_method)
        seed = trial_seed(cfg.master_seed, "growth", d, k)
        rng = make_rng(seed)
        full = lacunary_trial_points(q, d, Ns[-1], m, rng)
        out = []
        for N in Ns:
            try:
                res = compute_discrepancy(full.head(N), cfg.discrepancy_method, rng, cfg.budget)
            except BudgetExceeded as exc:
                log.warning("d=%d N=%d trajectory %d skipped: %s", d, N, k, exc)
                continue
            v = res.value_f64
            out.append(TrialRecord("growth", q, d, N, k, seed, res, theta_stat(v, N, d), rho_stat(v, N, d)))
        return out

    records = [r for rs in _map(run, jobs, cfg.threads) for r in rs]
    cells, trajectories = [], []
    for d in cfg.d_list:
        for N in Ns:
            sub = [r for r in records if r.d == d and r.N == N]
            if sub:
                cells.append({
                    "d": d, "N": N, "count": len(sub),
                    "kinds": sorted({r.result.kind for r in sub}),
                    "rho_quantiles": _quantiles([r.rho for r in sub], levels),
                    "theta_quantiles": _quantiles([r.theta for r in sub], levels),
                    "disc_median": float(np.median([r.result.value_f64 for r in sub])),
                    "eps_N": 6 * cfg.delta / (math.pi * N) ** 2,
                })  # fmt: skip
        for k in range(1, cfg.trials + 1):
            sub = [r for r in records if r.d == d and r.trial == k]
            if sub:
                best = max(sub, key=lambda r: r.rho)
                trajectories.append({"d": d, "trial": k, "max_rho": best.rho, "argmax_N": best.N})
    per_d = {}
    for d in cfg.d_list:
        mx = [t["max_rho"] for t in trajectories if t["d"] == d]
        if mx:
            q90 = float(np.quantile(mx, 0.9))
            per_d[str(d)] = {
                "max_rho_quantiles": _quantiles(mx, levels),
                "gate_passed": bool(math.isfinite(q90) and q90 < cfg.rho_gate),
            }
    summary = {
        "experiment": "growth",
        "statistic": "rho",
        "q": q,
        "delta": cfg.delta,
        "method": cfg.discrepancy_method,
        "master_seed": cfg.master_seed,
        "trials": cfg.trials,
        "quantile_levels": levels,
        "log_base": "e",
        "code_version": __version__,
        "rho_gate": cfg.rho_gate,
        "cells": cells,
        "trajectories": trajectories,
        "max_rho": per_d,
        "eps_schedule": {str(N): 6 * cfg.delta / (math.pi * N) ** 2 for N in Ns},
    }
    _write_outputs(cfg.output_path, records_to_csv(records, cfg.timing, GROWTH_COLUMNS), summary)
    return records, summary


# -- independence of shell indicators -----------------------------------------


def _default_y(q: int, d: int, h: int, H: int, rng: np.random.Generator, y=None):
    r = H + 2 + ceil_log(q, d)
    if y is not None:
        chain = build_bracket_chain(y, H, q)
        shell = chain.shell(h)
        if shell.measure in (0, 1):
            raise DegenerateCell(f"lambda(K_{h}) = {shell.measure}")
        return chain, shell
    for _ in range(1000):
        pt = [QadicRational(q, int(a), r) for a in rng.integers(0, q**r, size=d)]
        chain = build_bracket_chain(pt, H, q)
        shell = chain.shell(h)
        if 0 < shell.measure < 1:
            return chain, shell
    raise DegenerateCell("no nondegenerate shell found")


def _shell_hits(digits: np.ndarray, q: int, shell, indices: Sequence[int]) -> np.ndarray:
    """Boolean (trials, len(indices)): x_n in K_h for each lacunary index n."""
    d = digits.shape[1]
    w = membership_window(q, d, shell.h)
    lo = np.array([c.a for c in shell.lower], dtype=np.int64)
    up = np.array([c.a for c in shell.upper], dtype=np.int64)
    r_lo, r_up = shell.lower[0].m, shell.upper[0].m
    cols = []
    weights = q ** np.arange(w - 1, -1, -1, dtype=np.int64)
    for n in indices:
        x = digits[:, :, n - 1 : n - 1 + w].astype(np.int64) @ weights
        cols.append(in_shell(x, w, q, lo, r_lo, up, r_up))
    return np.stack(cols, axis=1)


def _factorization_test(hits: np.ndarray) -> dict:
    k = hits.shape[1]
    codes = hits.astype(np.int64) @ (1 << np.arange(k - 1, -1, -1))
    table = np.bincount(codes, minlength=2**k).reshape((2,) * k)
    try:
        res = chi2_contingency(table, correction=False)
    except ValueError as exc:
        raise DegenerateCell(f"contingency table has an empty margin: {exc}") from None
    return {"statistic": float(res.statistic), "p_value": float(res.pvalue), "dof": int(res.dof),
            "table": table.ravel().tolist()}  # fmt: skip


def run_independence_test(
    q: int, d: int, h: int, N: int | None = None, trials: int = 10**5, seed: int = 0,
    y=None, gamma: int = 1, H: int | None = None,
) -> dict:  # fmt: skip
    """Chi-square test that 1_{K_h}(x_n) factorizes over n in one residue class.

    Uses the three smallest indices n >= 1 with n = gamma (mod M_h), where
    M_h = h + 2 + ceil(log_q d).  The same draws are also tested at three
    consecutive indices as an exploratory contrast.
    """
    fq(q)
    H = H if H is not None else max(h, 1)
    if not 0 <= h <= H:
        raise ValidationError("need 0 <= h <= H")
    M = shell_modulus(q, d, h)
    first = gamma % M or M
    idx = [first + k * M for k in range(3)]
    N = idx[-1] if N is None else N
    if N < idx[-1]:
        raise ValidationError(f"N={N} too small for indices {idx}")
    rng = make_rng(seed, _TAGS["independence"])
    chain, shell = _default_y(q, d, h, H, rng, y)
    lam = float(shell.measure)
    w = M
    need = max(idx[-1], 3) + w - 1
    digits = sample_haar_digits(q, (trials, d, need), rng)
    hits = _shell_hits(digits, q, shell, idx)
    main = _factorization_test(hits)
    contrast_idx = [first, first + 1, first + 2]
    try:
        contrast = _factorization_test(_shell_hits(digits, q, shell, contrast_idx))
    except DegenerateCell:
        contrast = None
    se = math.sqrt(lam * (1 - lam) / trials)
    marg = hits.mean(axis=0)
    joint = float(np.all(hits, axis=1).mean())
    return {
        "q": q, "d": d, "h": h, "H": H, "N": N, "trials": trials, "seed": seed,
        "modulus": M, "indices": idx,
        "y": [f"{c.a}/{q}^{c.m}" for c in chain.y],
        "lambda": lam, "lambda_exact": f"{shell.measure.numerator}/{shell.measure.denominator}",
        "marginals": marg.tolist(),
        "marginal_z": ((marg - lam) / se).tolist() if se > 0 else [],
        "joint_all": joint,
        "joint_expected": lam**3,
        "joint_se": math.sqrt(lam**3 * (1 - lam**3) / trials),
        **main,
        "contrast": {"indices": contrast_idx, **contrast} if contrast else None,
    }  # fmt: skip


# -- Bernstein tail envelope ---------------------------------------------------


def run_bernstein_envelope_check(
    q: int, d: int, N: int, h: int, trials: int, seed: int = 0,
    eps_values: Sequence[float] = (0.1, 0.5, 0.9), t_grid: Sequence[float] | None = None,
    y=None, H: int | None = None,
) -> dict:  # fmt: skip
    """Monte Carlo tail of |sum_n Delta_{K_h}(x_n)| against the Bernstein envelope.

    Scheduled thresholds are t_h(eps) for each eps; the check passes when the
    empirical tail is at most envelope + 3 standard errors at each of them.
    """
    fq(q)
    H = H if H is not None else max(h, 1)
    rng = make_rng(seed, _TAGS["bernstein"])
    chain, shell = _default_y(q, d, h, H, rng, y)
    lam = shell.measure
    w = shell_modulus(q, d, h)
    digits = sample_haar_digits(q, (trials, d, N + w - 1), rng)
    lo = np.array([c.a for c in shell.lower], dtype=np.int64)
    up = np.array([c.a for c in shell.upper], dtype=np.int64)
    x = window_numerators(digits, q, N, w)  # (trials, d, N)
    hits = in_shell(np.moveaxis(x, 1, 2), w, q, lo, shell.lower[0].m, up, shell.upper[0].m)
    counts = hits.sum(axis=1)
    dev = np.abs(counts - float(N * lam))
    sched = [(float(e), threshold(q, d, N, h, e)) for e in eps_values]
    if t_grid is None:
        t_grid = np.linspace(0.0, max(t for _, t in sched), 25).tolist()
    rows = []
    for src, eps, t in [("schedule", e, t) for e, t in sched] + [("grid", None, float(t)) for t in t_grid]:
        p = float(np.mean(dev > t))
        se = math.sqrt(p * (1 - p) / trials)
        env = float(bernstein_envelope(t, q, N, h, d))
        rows.append({"source": src, "eps": eps, "t": t, "p_hat": p, "se": se, "envelope": env,
                     "ok": p <= env + 3 * se})  # fmt: skip
    grid_env = [r["envelope"] for r in rows if r["source"] == "grid"]
    return {
        "q": q, "d": d, "N": N, "h": h, "trials": trials, "seed": seed,
        "lambda": float(lam), "modulus": w,
        "rows": rows,
        "passed": all(r["ok"] for r in rows if r["source"] == "schedule"),
        "envelope_monotone": bool(np.all(np.diff(grid_env) <= 0)),
    }  # fmt: skip


def bernstein_rows_to_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["source", "eps", "t", "p_hat", "se", "envelope", "ok"]
    w.writerow(cols)
    for r in report["rows"]:
        w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
    return buf.getvalue()


# -- inverse discrepancy -------------------------------------------------------


def estimate_inverse_discrepancy(summary: dict, eps_target: float) -> dict:
    """Smallest grid N per d whose median D* is <= eps_target (None if none)."""
    out = {}
    by_d: dict[int, list] = {}
    for c in summary.get("cells", []):
        by_d.setdefault(int(c["d"]), []).append(c)
    for d, cells in sorted(by_d.items()):
        hit = None
        for c in sorted(cells, key=lambda c: c["N"]):
            if c["disc_median"] <= eps_target:
                hit = c
                break
        out[str(d)] = (
            {"N": int(hit["N"]), "kind": hit.get("kind", "exact")} if hit else {"N": None, "kind": "not reached"}
        )
    return out
