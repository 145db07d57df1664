"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 solver error, 4 Slater failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import errors
from .certify import gap_study
from .config import build_instance, dual_options, load_config
from .dual import recover_primal, solve_dual
from .generate import FAMILIES, generate
from .mixing import mix_policies
from .probability import make_scenario_set
from .risk import RiskSpec, lower_evaluate, upper_evaluate

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INFEASIBLE = 0, 2, 3, 4

CONFIG_ERRORS = (errors.SchemaError, errors.LengthMismatch, errors.NonPositiveWeight,
                 errors.WeightSumOutOfRange, errors.InvalidRiskSpec, errors.InfeasibleEnvelope,
                 errors.NonconcaveUtility, errors.InadmissiblePolicy)


def _levels(text: str) -> list[int]:
    try:
        levels = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers: {text!r}")
    if not levels or min(levels) < 1:
        raise argparse.ArgumentTypeError("levels must be positive integers")
    return levels


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riskalloc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, type=Path, help="instance JSON")
        p.add_argument("--out", type=Path, help="output file (default: stdout)")
        p.add_argument("--seed", type=_u64, help="override the seed of the run")

    def solver(p):
        p.add_argument("--method", choices=["exhaustive", "coordinate", "minimax"])
        p.add_argument("--max-iters", type=int, dest="max_iters")

    p = sub.add_parser("solve", help="dual solve plus primal recovery; JSON summary")
    common(p)
    solver(p)
    p.add_argument("--trace", type=Path, help="also write the dual trace as CSV")

    p = sub.add_parser("gap-study", help="duality gap across refinement levels; CSV")
    common(p)
    solver(p)
    p.add_argument("--levels", type=_levels, default=[1, 2, 4, 8])
    p.add_argument("--timing", action="store_true", help="fill the runtime_ms column")

    p = sub.add_parser("risk-eval", help="upper/lower risk values of a sample; CSV")
    common(p, config=False)
    p.add_argument("--sample", required=True, type=Path, help="CSV with columns w,z")
    p.add_argument("--risk", action="append", default=[],
                   help='risk JSON, e.g. \'{"type": "cvar", "beta": 0.5}\' (repeatable)')

    p = sub.add_parser("mix-demo", help="time-sharing error of one random policy pair; CSV")
    common(p)
    p.add_argument("--levels", type=_levels, default=[1, 2, 4, 8])
    p.add_argument("--alphas", default="0,0.25,0.5,0.75,1")

    p = sub.add_parser("generate", help="write a seeded instance config")
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--scenarios", type=int, default=8)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--resolution", type=int, default=2)
    p.add_argument("--risk", help="risk JSON applied to every component")
    p.add_argument("--out", type=Path)
    return ap


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
    opts = dual_options(cfg)
    over = {k: getattr(args, k, None) for k in ("method", "max_iters")}
    if args.seed is not None:
        over["seed"] = int(args.seed)
    opts = type(opts)(**{**opts.__dict__, **{k: v for k, v in over.items() if v is not None}})
    return build_instance(cfg), opts


def _floats(a) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


def cmd_solve(args) -> int:
    inst, o = _load(args)
    res = solve_dual(inst, o.max_iters, o.eta0, o.method, o.seed)
    cand = recover_primal(inst, res, o.refine_factor, o.tol, o.seed)
    summary = {
        "dual": res.best_dual,
        "multipliers": {"lambda_g": _floats(res.best_multipliers.lam_g),
                        "lambda_rho": _floats(res.best_multipliers.lam_rho)},
        "method": res.method,
        "exact": res.exact,
        "iterations": len(res.trace),
        "primal": {
            "x": _floats(cand.x),
            "value": cand.value,
            "min_slack": cand.min_slack,
            "feasible": bool(cand.feasible),
            "refine_factor": cand.refine_factor,
            "mixture_weights": _floats(cand.weights),
            "repaired_value": cand.repaired_value,
        },
        "policy": np.asarray(cand.policy).tolist(),
    }
    _emit(json.dumps(summary, indent=2, sort_keys=True) + "\n", args.out)
    if args.trace is not None:
        args.trace.write_text(res.trace_csv())
    return EXIT_OK


def cmd_gap_study(args) -> int:
    inst, o = _load(args)
    rep = gap_study(inst, args.levels, o.method, o.max_iters, o.eta0, o.seed,
                    o.refine_factor, o.tol, timing=args.timing)
    _emit(rep.to_csv(), args.out)
    return EXIT_OK


def _read_sample(path: Path):
    try:
        text = path.read_text()
    except OSError as exc:
        raise errors.SchemaError(f"cannot read sample {path}: {exc}") from exc
    rows = list(csv.reader(io.StringIO(text)))
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    try:
        data = np.array([[float(c) for c in r] for r in rows if r], dtype=float)
    except ValueError as exc:
        raise errors.SchemaError(f"sample {path} is not numeric: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 2:
        raise errors.SchemaError("sample must have exactly two columns: w,z")
    return make_scenario_set(np.zeros((len(data), 1)), data[:, 0]), data[:, 1]


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def cmd_risk_eval(args) -> int:
    S, Z = _read_sample(args.sample)
    specs = args.risk or ['{"type": "expectation"}', '{"type": "cvar", "beta": 0.5}',
                          '{"type": "mad", "lambda": 0.5}']
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["risk", "upper", "lower"])
    for text in specs:
        try:
            spec = RiskSpec.from_config(json.loads(text))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise errors.SchemaError(f"bad risk spec {text!r}: {exc}") from exc
        w.writerow([repr(spec), repr(upper_evaluate(spec, S, Z)), repr(lower_evaluate(spec, S, Z))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_mix_demo(args) -> int:
    inst, o = _load(args)
    try:
        alphas = [float(a) for a in args.alphas.split(",")]
    except ValueError as exc:
        raise errors.SchemaError(f"bad --alphas: {exc}") from exc
    rng = np.random.default_rng(o.seed)
    p, q = inst.random_grid_policy(rng), inst.random_grid_policy(rng)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "m", "epsilon", "subset_size"])
    for a in alphas:
        prev, prev_m = None, None
        for m in args.levels:
            init = prev if prev_m and m % prev_m == 0 else None
            res = mix_policies(inst, p, q, a, m, init=init, seed=o.seed)
            prev, prev_m = res.subset, m
            w.writerow([repr(a), m, repr(res.epsilon), int(res.subset.sum())])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    risk = None
    if args.risk:
        try:
            risk = json.loads(args.risk)
        except json.JSONDecodeError as exc:
            raise errors.SchemaError(f"bad --risk JSON: {exc}") from exc
    cfg = generate(args.family, args.scenarios, int(args.seed), risk, args.resolution)
    _emit(json.dumps(cfg, indent=2) + "\n", args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "gap-study": cmd_gap_study, "risk-eval": cmd_risk_eval,
            "mix-demo": cmd_mix_demo, "generate": cmd_generate}


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except errors.SlaterNotVerified as exc:
        print(f"riskalloc: Slater condition not verified: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CONFIG_ERRORS as exc:
        print(f"riskalloc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # solver failures of any kind
        print(f"riskalloc: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
