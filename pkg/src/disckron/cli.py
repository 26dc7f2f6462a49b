"""Command-line front end.

Every subcommand is a thin wrapper around one library call and prints (or
writes to --out) exactly that call's serialization.  Exit codes: 0 success,
1 validation or usage error, 2 budget refusal.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bracketing import build_bracket_chain, chain_to_csv, qadic_cover, validate_cover
from .errors import BoundTrivial, BudgetExceeded, DisckronError, SchemaError, ValidationError
from .experiments import (
    ExperimentConfig,
    bernstein_rows_to_csv,
    compute_discrepancy,
    compute_proof_constants,
    dump_json,
    estimate_inverse_discrepancy,
    run_bernstein_envelope_check,
    run_growth_experiment,
    run_independence_test,
    run_metrical_experiment,
)
from .field_series import field, make_rng, sample_haar_digits
from .sequences import (
    DigitStream,
    GeneratorTuple,
    classical_lacunary_points,
    digital_kronecker_points,
    lacunary_digital_points,
    points_to_csv,
    read_points_csv,
)

log = logging.getLogger("disckron")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def generate_points(q: int, d: int, N: int, m: int, seed: int, kind: str = "lacunary"):
    """Seeded point set; the generator digits come from make_rng(seed)."""
    field(q)
    if N < 1 or m < 1:
        raise ValidationError("need N >= 1 and m >= 1")
    rng = make_rng(seed)
    if kind == "lacunary":
        f = GeneratorTuple.from_digits(q, sample_haar_digits(q, (d, N - 1 + m), rng))
        return lacunary_digital_points(f, N, m)
    if kind == "kronecker":
        deg = len(np.base_repr(max(N - 1, 1), q)) - 1
        f = GeneratorTuple.from_digits(q, sample_haar_digits(q, (d, deg + m), rng))
        return digital_kronecker_points(f, N, m)
    if kind == "classical":
        digits = sample_haar_digits(q, (d, N - 1 + m), rng)
        return classical_lacunary_points([DigitStream(q, tuple(r)) for r in digits.tolist()], N, m)
    raise ValidationError(f"unknown point kind {kind!r}")


def _parse_y(text: str) -> list[Fraction]:
    try:
        return [Fraction(s.strip()) for s in text.split(",") if s.strip()]
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"cannot parse y={text!r}; use e.g. 5/16,1/4") from None


def emit_plot(summary: dict, path) -> None:
    """SVG of theta (or rho) quantiles against N, one line per d and quantile."""
    cells = summary.get("cells") if isinstance(summary, dict) else None
    if not cells:
        raise SchemaError("summary has no cells to plot")
    stat = summary.get("statistic", "theta")
    key = f"{stat}_quantiles"
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "disckron", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=100)
        groups: dict[tuple, list] = {}
        for c in cells:
            if key not in c:
                raise SchemaError(f"cell lacks {key}")
            for p, v in c[key].items():
                groups.setdefault((int(c["d"]), c.get("kind", ""), p), []).append((int(c["N"]), float(v)))
        for (d, kind, p), pts in sorted(groups.items()):
            pts.sort()
            label = f"d={d} q{p}" + (f" ({kind})" if kind else "")
            ax.plot([n for n, _ in pts], [v for _, v in pts], marker="o", label=label)
        ax.set_xscale("log")
        ax.set_xlabel("N")
        ax.set_ylabel(stat)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="disckron", description="lacunary digital Kronecker sequences")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="seeded exact point set as CSV")
    g.add_argument("--q", type=int, default=2)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--N", type=int, required=True)
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--kind", choices=["lacunary", "kronecker", "classical"], default="lacunary")
    g.add_argument("--out")

    s = sub.add_parser("discrepancy", help="star discrepancy of a points CSV")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--method", default="auto")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")

    c = sub.add_parser("cover", help="summary (and optional validation) of the q-adic cover")
    c.add_argument("--q", type=int, default=2)
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--h", type=int, required=True)
    c.add_argument("--trials", type=int, default=0, help="validation samples (0 skips)")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--out")

    ch = sub.add_parser("chain", help="bracket chain of y as CSV")
    ch.add_argument("--q", type=int, default=2)
    ch.add_argument("--H", type=int, required=True)
    ch.add_argument("--y", required=True, help="comma-separated rationals, e.g. 5/16,1/4")
    ch.add_argument("--out")

    ind = sub.add_parser("independence", help="chi-square factorization test")
    ind.add_argument("--q", type=int, default=2)
    ind.add_argument("--d", type=int, required=True)
    ind.add_argument("--h", type=int, required=True)
    ind.add_argument("--H", type=int)
    ind.add_argument("--N", type=int)
    ind.add_argument("--trials", type=int, default=10**5)
    ind.add_argument("--seed", type=int, default=0)
    ind.add_argument("--y")
    ind.add_argument("--out")

    b = sub.add_parser("bernstein", help="Monte Carlo tail against the Bernstein envelope")
    b.add_argument("--q", type=int, default=2)
    b.add_argument("--d", type=int, default=1)
    b.add_argument("--N", type=int, required=True)
    b.add_argument("--h", type=int, required=True)
    b.add_argument("--trials", type=int, default=10**4)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")

    e = sub.add_parser("experiment", help="metrical or growth campaign from a JSON config")
    e.add_argument("--config")
    e.add_argument("--kind", choices=["metrical", "growth"], default="metrical")
    e.add_argument("--q", type=int)
    e.add_argument("--d", type=int, nargs="+")
    e.add_argument("--N", type=int, nargs="+")
    e.add_argument("--m", type=int)
    e.add_argument("--trials", type=int)
    e.add_argument("--eps", type=float)
    e.add_argument("--delta", type=float)
    e.add_argument("--seed", type=int)
    e.add_argument("--method")
    e.add_argument("--threads", type=int)
    e.add_argument("--out", help="output prefix for .csv, .json and .svg")
    e.add_argument("--target", type=float, nargs="*", help="eps targets for the inverse-discrepancy table")

    k = sub.add_parser("constants", help="constants of the Bernstein argument")
    k.add_argument("--q", type=int, default=2)
    k.add_argument("--d", type=int, required=True)
    k.add_argument("--N", type=int, required=True)
    k.add_argument("--eps", type=float, required=True)
    k.add_argument("--out")
    return p


def _config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        import json

        with open(args.config) as fh:
            data = json.load(fh)
    overrides = {
        "q": args.q, "d_list": args.d, "N_list": args.N, "m": args.m, "trials": args.trials,
        "epsilon": args.eps, "delta": args.delta, "master_seed": args.seed,
        "discrepancy_method": args.method, "output_path": args.out,
    }  # fmt: skip
    data.update({k: v for k, v in overrides.items() if v is not None})
    threads = args.threads
    if threads is None and os.environ.get("DISCKRON_THREADS"):
        try:
            threads = int(os.environ["DISCKRON_THREADS"])
        except ValueError:
            raise ValidationError("DISCKRON_THREADS must be an integer") from None
    if threads is not None:
        data["threads"] = threads
    return ExperimentConfig.from_dict(data)


def _run(args) -> None:
    if args.cmd == "generate":
        ps = generate_points(args.q, args.d, args.N, args.m, args.seed, args.kind)
        _emit(points_to_csv(ps), args.out)
    elif args.cmd == "discrepancy":
        with open(args.inp, newline="") as fh:
            ps = read_points_csv(fh)
        res = compute_discrepancy(ps, args.method, make_rng(args.seed))
        _emit(dump_json(res.to_record()), args.out)
    elif args.cmd == "cover":
        cover = qadic_cover(args.q, args.d, args.h, materialize=False)
        out = cover.summary()
        if args.trials:
            out["validation"] = validate_cover(cover, args.trials, make_rng(args.seed)).to_dict()
        _emit(dump_json(out), args.out)
    elif args.cmd == "chain":
        chain = build_bracket_chain(_parse_y(args.y), args.H, args.q)
        _emit(chain_to_csv(chain), args.out)
    elif args.cmd == "independence":
        y = _parse_y(args.y) if args.y else None
        rep = run_independence_test(args.q, args.d, args.h, args.N, args.trials, args.seed, y=y, H=args.H)
        _emit(dump_json(rep), args.out)
    elif args.cmd == "bernstein":
        rep = run_bernstein_envelope_check(args.q, args.d, args.N, args.h, args.trials, args.seed)
        _emit(bernstein_rows_to_csv(rep), args.out)
    elif args.cmd == "experiment":
        cfg = _config(args)
        run = run_growth_experiment if args.kind == "growth" else run_metrical_experiment
        _, summary = run(cfg)
        if args.target:
            summary["inverse_discrepancy"] = {
                f"{t:g}": estimate_inverse_discrepancy(summary, t) for t in args.target
            }
        if cfg.output_path:
            Path(f"{cfg.output_path}.json").write_text(dump_json(summary))
            emit_plot(summary, f"{cfg.output_path}.svg")
        else:
            sys.stdout.write(dump_json(summary))
    elif args.cmd == "constants":
        _emit(dump_json(compute_proof_constants(args.q, args.d, args.N, args.eps).to_dict()), args.out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        _run(args)
    except BudgetExceeded as exc:
        print(f"disckron: budget exceeded: {exc}", file=sys.stderr)
        return 2
    except BoundTrivial as exc:
        print(f"disckron: bound is trivial: {exc}", file=sys.stderr)
        return 1
    except (DisckronError, ValueError, OSError) as exc:
        print(f"disckron: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
