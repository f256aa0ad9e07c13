"""Command-line interface: ``ssadt plan|simulate|fit|fisher|sensitivity|stability``.

Exit codes: 0 success, 2 invalid input or configuration, 3 infeasible
budget, 4 numerical failure or non-convergence.  Output files are written
atomically, so nothing is left behind on a nonzero exit.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import design
from ._files import atomic_write, csv_text
from .errors import (ConfigError, DomainError, InfeasibleBudgetError, NumericalError, OptimizationFailure,
                     SsadtError, UnsupportedConfigurationError)
from .fisher import avar_quantile, fisher_info, verify_fisher
from .inference import fit_mle
from .model import TestPlan, case_study_config, load_config
from .simulate import default_workers, read_dataset_csv, simulate_batch, write_dataset_csv

log = logging.getLogger("ssadt")

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_NUMERIC = 0, 2, 3, 4
DATA = Path(__file__).with_name("data")


class UsageError(SsadtError):
    """Bad command-line arguments detected after parsing."""


def _fmt_report(x: float) -> str:
    # 6 significant digits, but keep one decimal on large values such as xi_p
    return format(x, ".1f") if abs(x) >= 1e5 else format(x, ".6g")


def _parse_plan(text: str, D: float) -> TestPlan:
    parts = text.split(",")
    if len(parts) != 4:
        raise UsageError("--plan expects n,f,M,omega1")
    try:
        n, f, M = (int(x) for x in parts[:3])
        omega1 = float(parts[3])
    except ValueError:
        raise UsageError(f"cannot parse --plan {text!r}") from None
    return TestPlan(n, f, M, omega1, D)


def _parse_p_grid(text: str) -> list[float]:
    """'0.1:0.9:0.1' (inclusive) or a comma list."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            k = int(math.floor((hi - lo) / step + 1e-9))
            return [round(lo + i * step, 12) for i in range(k + 1)]
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse --p-grid {text!r}") from None


def _config(args):
    return load_config(args.config) if args.config else case_study_config()


def _threads(args) -> int:
    return args.threads if args.threads else default_workers()


def _need_out(args):
    if not args.out:
        raise UsageError("--out is required")
    out = Path(args.out)
    if not out.parent.exists():
        raise UsageError(f"output directory {out.parent} does not exist")
    return out


def _emit_json(obj, out: Path | None):
    text = json.dumps(obj, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write(out, text)


def _read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# subcommands


def cmd_plan(args) -> int:
    cfg = _config(args)
    out = _need_out(args)
    ps = _parse_p_grid(args.p_grid) if args.p_grid else [args.p if args.p is not None else cfg.p]
    reports = design.optimize_designs(ps, cfg.params, cfg.stress, cfg.costs, cfg.D, mapping=args.bs_mapping)
    rows = [r.table_row() for r in reports]
    atomic_write(out, csv_text(design.TABLE1_COLUMNS, rows, _fmt_report))
    atomic_write(out.with_suffix(".json"), json.dumps([r.to_dict() for r in reports], indent=2) + "\n")
    if len(reports) > 1:
        stem = out.with_suffix("")
        atomic_write(f"{stem}_omega1_vs_p.csv",
                     csv_text(("p", "omega1_star"), [(r.p, r.omega1_star) for r in reports], _fmt_report))
        atomic_write(f"{stem}_cv_vs_p.csv",
                     csv_text(("p", "min_cv"), [(r.p, r.min_cv) for r in reports], _fmt_report))
    for r in reports:
        log.info("p=%.3g plan=%s omega1*=%.5g cv=%.4g", r.p, r.plan, r.omega1_star, r.min_cv)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _need_out(args)
    if not args.plan:
        raise UsageError("--plan is required")
    plan = _parse_plan(args.plan, cfg.D)
    batch = simulate_batch(plan, cfg.params, cfg.stress, args.reps, args.seed, workers=_threads(args))
    write_dataset_csv(batch, cfg.stress, out)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    if not args.data:
        raise UsageError("--data is required")
    if args.omega1 is None:
        raise UsageError("--omega1 is required (the threshold enters the kappa1 term)")
    obs = read_dataset_csv(args.data, args.omega1, cfg.D, rep=args.rep)
    out = Path(args.out) if args.out else None
    try:
        res = fit_mle(obs, cfg.stress, cfg.params, mapping=args.bs_mapping, seed=args.seed)
    except OptimizationFailure as exc:
        if exc.best is not None:
            _emit_json(exc.best.to_dict(), out)
        raise
    _emit_json(res.to_dict(), out)
    return EXIT_OK


def cmd_fisher(args) -> int:
    cfg = _config(args)
    if not args.plan:
        raise UsageError("--plan is required")
    plan = _parse_plan(args.plan, cfg.D)
    p = args.p if args.p is not None else cfg.p
    info = fisher_info(plan, cfg.params, cfg.stress, args.bs_mapping)
    res = avar_quantile(plan, cfg.params, cfg.stress, cfg.D, p, args.bs_mapping, info=info)
    payload = {"fisher": info.to_dict(), "avar": res.to_dict()}
    if args.verify_fisher:
        check = verify_fisher(plan, cfg.params, cfg.stress, args.bs_mapping, reps=args.reps or 0,
                              seed=args.seed, workers=_threads(args))
        payload["verify"] = check.to_dict()
        if not check.algebra_ok:
            info = check.recommended
            res = avar_quantile(plan, cfg.params, cfg.stress, cfg.D, p, args.bs_mapping, info=info)
            payload.update(fisher=info.to_dict(), avar=res.to_dict())
    _emit_json(payload, Path(args.out) if args.out else None)
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    cfg = _config(args)
    out = _need_out(args)
    rows = _read_csv_rows(args.eps or DATA / "sensitivity_eps.csv")
    if not rows:
        raise UsageError(f"{args.eps}: no perturbation rows")
    default_p = args.p if args.p is not None else cfg.p
    try:
        items = [(float(r["p"]) if r.get("p") else default_p, tuple(float(r[k]) for k in ("eps1", "eps2", "eps3")))
                 for r in rows]
    except (KeyError, ValueError):
        raise UsageError(f"{args.eps}: expected numeric columns eps1,eps2,eps3 (and optionally p)") from None
    result = []
    for p in dict.fromkeys(p for p, _ in items):
        eps = [e for q, e in items if q == p]
        result += design.sensitivity_study(eps, p, cfg.params, cfg.stress, cfg.costs, cfg.D, args.bs_mapping)
    atomic_write(out, csv_text(design.SENS_COLUMNS, [r.to_dict() for r in result], _fmt_report))
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _config(args)
    out = _need_out(args)
    if args.plans or not args.plan:
        rows = _read_csv_rows(args.plans or DATA / "stability_plans.csv")
        try:
            plans = [TestPlan(int(r["n"]), int(r["f"]), int(r["M"]), float(r["omega1"]), cfg.D) for r in rows]
        except (KeyError, ValueError):
            raise UsageError(f"{args.plans}: expected columns n,f,M,omega1") from None
    else:
        plans = [_parse_plan(args.plan, cfg.D)]
    if not plans:
        raise UsageError("no plans given")
    reps = args.reps or 2000
    result = design.stability_study(plans, reps, args.seed, cfg.params, cfg.stress, workers=_threads(args))
    atomic_write(out, csv_text(design.STAB_COLUMNS, [r.to_dict() for r in result], _fmt_report))
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "fisher": cmd_fisher,
    "sensitivity": cmd_sensitivity,
    "stability": cmd_stability,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration (default: bundled case study)")
    common.add_argument("--seed", type=int, default=0, help="unsigned 64-bit seed")
    common.add_argument("--out", help="output path")
    common.add_argument("--p", type=float, help="lifetime quantile level")
    common.add_argument("--p-grid", help="quantile levels, 'lo:hi:step' or comma list")
    common.add_argument("--reps", type=int, help="Monte Carlo replications")
    common.add_argument("--bs-mapping", choices=("scale", "rate"), default="scale")
    common.add_argument("--verify-fisher", action="store_true")
    common.add_argument("--threads", type=int, help="worker processes (default: SSADT_THREADS or CPU count)")
    common.add_argument("--plan", help="n,f,M,omega1")
    common.add_argument("--plans", help="CSV with columns n,f,M,omega1 (default: bundled stability plans)")
    common.add_argument("--eps", help="CSV with columns [p,]eps1,eps2,eps3 (default: bundled perturbation rows)")
    common.add_argument("--data", help="dataset CSV")
    common.add_argument("--rep", type=int, help="replication to read from a multi-replication dataset")
    common.add_argument("--omega1", type=float, help="elevation threshold of the dataset")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ssadt", description="Step-stress ADT planning with gamma degradation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed < 0 or args.seed >= 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    if args.reps is not None and args.reps < 1:
        print("error: --reps must be positive", file=sys.stderr)
        return EXIT_INPUT
    if args.command == "simulate" and args.reps is None:
        args.reps = 1
    try:
        with np.errstate(all="ignore"):
            return COMMANDS[args.command](args)
    except (ConfigError, UsageError, DomainError, UnsupportedConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (NumericalError, OptimizationFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
