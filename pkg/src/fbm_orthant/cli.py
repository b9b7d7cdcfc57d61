"""Command-line interface: ``fbm-orthant <command> ...``.

Index sets are printed 1-based. Tables go to stdout as CSV by default, the
analysis report as JSON. Failures print a JSON object on stderr and exit
with a code that identifies the error class (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .constants import ConstantsError, MissingPickandsError, assemble_asymptotics, c_K
from .critical import (
    CASE_TOL,
    Case,
    CriticalPoint,
    CriticalPointError,
    UnsupportedCaseError,
    find_t0,
    stationary_point,
)
from .fbm import FbmError
from .model import ModelError, ModelSpec, load_model
from .montecarlo import (
    GRID_N,
    HORIZON_MULT,
    METHODS,
    REFINE,
    WINDOW_MULT,
    SHIFTS,
    MCConfig,
    MonteCarloError,
    compare_asymptotics,
    estimate_p,
    rows_to_csv,
)
from .pickands import DEFAULT_GRID, BudgetExceeded, PickandsError, estimate_pickands
from .qp import QPError

THREADS_ENV = "FBM_ORTHANT_THREADS"
EXIT_CODES = {"ok": 0, "other": 1, "usage": 2, "model": 3, "unsupported": 4, "numerical": 5,
              "budget": 6}
PICKANDS_T = (1, 2, 4, 8, 16, 32)

logger = logging.getLogger("fbm_orthant")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    parts = [p for p in text.replace(" ", ",").split(",") if p]
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from exc


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _read_model(path: str) -> ModelSpec:
    try:
        text = Path(path).read_text() if path != "-" else sys.stdin.read()
    except OSError as exc:
        raise ModelError(f"cannot read config {path}: {exc.strerror}") from exc
    return load_model(text)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, Case):
        return x.value
    return x


def _emit(obj, fmt: str, out) -> None:
    if fmt == "json":
        out.write(json.dumps(_jsonable(obj), indent=2) + "\n")
    else:
        out.write(obj)


def _one_based(idx) -> list[int]:
    return [int(i) + 1 for i in idx]


def critical_summary(cp: CriticalPoint) -> dict:
    return {
        "t0": cp.t0,
        "I": _one_based(cp.I),
        "K": _one_based(cp.K),
        "J": _one_based(cp.J),
        "b": cp.b,
        "b_tilde": cp.b_tilde,
        "w_I": cp.w_I,
        "g_value": cp.g_value,
        "g_dd": cp.g_dd,
        "g_dd_plus": cp.g_dd_plus,
        "g_dd_minus": cp.g_dd_minus,
        "I_plus": _one_based(cp.I_plus),
        "I_minus": _one_based(cp.I_minus),
        "case": cp.case.value if cp.case is not None else None,
        "method": cp.method,
        "flags": list(cp.flags),
    }


def _pickands_csv(est) -> str:
    cols = ("T", "delta", "H_T", "H_T_stderr", "H_T_over_T", "stderr", "delta_sensitivity")
    return rows_to_csv(est.table(), cols)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def analyze(model: ModelSpec, args, config_echo: dict | None = None) -> dict:
    """find_t0 -> index sets -> case -> C_K -> (Pickands) -> asymptotics."""
    if model.is_brownian:
        raise UnsupportedCaseError(
            "H = 1/2 is the Brownian case, covered by the earlier Brownian simultaneous-ruin "
            "result rather than by this fBm asymptotic; the 'estimate' and 'compare' "
            "commands still simulate it"
        )
    t_start = time.perf_counter()
    cp = find_t0(model, case_tol=args.case_tol, force_case=args.force_case)
    ck = c_K(model, cp)
    pickands = None
    if cp.case is Case.I:
        pickands = estimate_pickands(
            model, cp, T_grid=args.pickands_T, n_samples=args.pickands_samples, seed=args.seed,
            grid_points=args.pickands_grid, threads=args.threads,
            budget_seconds=args.pickands_budget,
        )
    result = assemble_asymptotics(model, cp, pickands, ck)
    report = {
        "version": __version__,
        "config": config_echo if config_echo is not None else model.to_dict(),
        "seed": args.seed,
        "critical_point": critical_summary(cp),
        "asymptotics": result.to_dict(),
        "pickands": pickands.to_dict() if pickands is not None else None,
    }
    if getattr(args, "timing", False):
        report["wall_clock_seconds"] = time.perf_counter() - t_start
    return report


def example_model() -> tuple[ModelSpec, dict]:
    """Four independent coordinates with I = {1, 2}, K = {3}, J = {4}.

    Coordinates 1 and 2 have drift/scale pairs with separate one-dimensional
    critical times 3 and 12 (H = 3/4); their joint critical time t0 lies in
    between. Coordinates 3 and 4 use nu = t0 with mu = -1 and -2, so that
    b_3 = nu_3 + mu_3 t0 = 0 (weakly essential) and b_4 = -t0 < 0.
    """
    H = 0.75
    pair = ModelSpec(H=H, Sigma=np.eye(2), mu=[1.0, 0.5], nu=[1.0, 2.0])
    t0 = stationary_point(pair, (0, 1))
    model = ModelSpec(H=H, Sigma=np.eye(4), mu=[1.0, 0.5, -1.0, -2.0], nu=[1.0, 2.0, t0, t0])
    notes = {
        "description": "independent coordinates; coordinates 3 and 4 are tuned so that "
                       "nu_3 = nu_4 = t0 of the pair (1, 2)",
        "pair_t0": t0,
        "one_dimensional_t0": [H * 1.0 / ((1 - H) * 1.0), H * 2.0 / ((1 - H) * 0.5)],
    }
    return model, notes


def cmd_analyze(args) -> int:
    model = _read_model(args.config)
    report = analyze(model, args)
    if args.format == "csv":
        a = report["asymptotics"]
        cp = report["critical_point"]
        rows = [{"t0": cp["t0"], "I": " ".join(map(str, cp["I"])), "K": " ".join(map(str, cp["K"])),
                 "J": " ".join(map(str, cp["J"])), "case": cp["case"], "C": a["C"],
                 "gamma": a["gamma"], "rate": a["rate"]}]
        _emit(rows_to_csv(rows, tuple(rows[0])), "csv", args.out)
    else:
        _emit(report, "json", args.out)
    return 0


def cmd_example1(args) -> int:
    model, notes = example_model()
    report = analyze(model, args)
    report["scenario"] = notes
    _emit(report, "json", args.out)
    return 0


def cmd_pickands(args) -> int:
    model = _read_model(args.config)
    cp = find_t0(model, case_tol=args.case_tol, force_case=args.force_case)
    T_grid = args.T or list(PICKANDS_T)
    est = estimate_pickands(model, cp, T_grid=T_grid, n_samples=args.samples, seed=args.seed,
                            grid_points=args.grid, delta=args.delta, threads=args.threads,
                            budget_seconds=args.pickands_budget)
    if args.format == "json":
        _emit(est.to_dict(), "json", args.out)
    else:
        _emit(_pickands_csv(est), "csv", args.out)
    return 0


def _mc_config(args) -> MCConfig:
    if args.shifts < 0:
        raise UsageError("--shifts must be non-negative")
    return MCConfig(horizon_mult=args.horizon_mult, grid_n=args.grid_n, n_samples=args.samples,
                    method=args.method, seed=args.seed, threads=args.threads, refine=args.refine,
                    window_mult=args.window_mult, shifts=args.shifts)


def _require_u(args) -> list[float]:
    if not args.u:
        raise UsageError("--u needs at least one level")
    if any(u < 0 for u in args.u):
        raise UsageError("--u levels must be non-negative")
    return args.u


def cmd_estimate(args) -> int:
    u_list = _require_u(args)
    model = _read_model(args.config)
    cp = find_t0(model)
    cfg = _mc_config(args)
    ests = [estimate_p(model, u, cfg.horizon_mult, cfg.grid_n, cfg.n_samples, cfg.method, cfg.seed,
                       cfg.threads, cfg.refine, cfg.window_mult, cp=cp, shifts=cfg.shifts)
            for u in u_list]
    if args.format == "json":
        _emit({"config": model.to_dict(), "estimates": [e.to_dict() for e in ests]}, "json",
              args.out)
    else:
        cols = ("u", "p", "stderr", "method", "horizon", "grid_n", "refine", "n_samples", "seed",
                "n_hits", "ess", "shifts", "flags")
        _emit(rows_to_csv([e.to_dict() for e in ests], cols), "csv", args.out)
    return 0


def cmd_compare(args) -> int:
    u_list = _require_u(args)
    model = _read_model(args.config)
    if any(b <= a for a, b in zip(u_list, u_list[1:])):
        raise UsageError("--u levels must be strictly increasing")
    asym = None
    if model.is_brownian:
        cp = find_t0(model)
    else:
        cp = find_t0(model, case_tol=args.case_tol, force_case=args.force_case)
        pickands = None
        if cp.case is Case.I:
            pickands = estimate_pickands(model, cp, n_samples=args.pickands_samples, seed=args.seed,
                                         grid_points=args.pickands_grid, threads=args.threads,
                                         budget_seconds=args.pickands_budget)
        asym = assemble_asymptotics(model, cp, pickands)
    rows = compare_asymptotics(model, u_list, asym, _mc_config(args), cp=cp)
    if args.format == "json":
        from dataclasses import asdict

        _emit({"config": model.to_dict(), "rows": [asdict(r) for r in rows]}, "json", args.out)
    else:
        _emit(rows_to_csv(rows), "csv", args.out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p, fmt_default: str):
    p.add_argument("--format", choices=("json", "csv"), default=fmt_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=_default_threads(),
                   help=f"worker threads (default ${THREADS_ENV} or 1); results do not depend on it")
    p.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")


def _add_case(p):
    p.add_argument("--case-tol", type=float, default=CASE_TOL)
    p.add_argument("--force-case", choices=[c.value for c in Case], default=None)


def _add_pickands_budget(p):
    p.add_argument("--pickands-samples", type=_positive_int, default=10_000)
    p.add_argument("--pickands-T", type=_float_list, default=list(PICKANDS_T))
    p.add_argument("--pickands-grid", type=_positive_int, default=DEFAULT_GRID,
                   help="grid points on the largest horizon")
    p.add_argument("--pickands-budget", type=float, default=None, help="wall-clock seconds")


def _add_mc(p):
    p.add_argument("--u", type=_float_list, required=True, help="comma-separated levels")
    p.add_argument("--samples", type=_positive_int, default=10_000)
    p.add_argument("--method", choices=METHODS, default="mean-shift-IS")
    p.add_argument("--horizon-mult", type=float, default=HORIZON_MULT)
    p.add_argument("--grid-n", type=_positive_int, default=GRID_N)
    p.add_argument("--refine", type=_positive_int, default=REFINE)
    p.add_argument("--window-mult", type=float, default=WINDOW_MULT)
    p.add_argument("--shifts", type=int, default=SHIFTS,
                   help="IS mixture has 2*shifts+1 centres; 0 = single shift at t0")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fbm-orthant", description="Orthant-entry asymptotics for drifted fBm.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="critical point, constants and asymptotics (JSON report)")
    p.add_argument("config")
    _add_common(p, "json")
    _add_case(p)
    _add_pickands_budget(p)
    p.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pickands", help="H_I(T)/T table")
    p.add_argument("config")
    _add_common(p, "csv")
    _add_case(p)
    p.add_argument("--T", type=_float_list, default=None, help="comma-separated horizons")
    p.add_argument("--delta", type=float, default=None, help="grid step (default T_max / grid)")
    p.add_argument("--grid", type=_positive_int, default=DEFAULT_GRID)
    p.add_argument("--samples", type=_positive_int, default=10_000)
    p.add_argument("--pickands-budget", type=float, default=None, help="wall-clock seconds")
    p.set_defaults(func=cmd_pickands)

    p = sub.add_parser("estimate", help="Monte Carlo estimates of P(u)")
    p.add_argument("config")
    _add_common(p, "csv")
    _add_mc(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("compare", help="Monte Carlo against the asymptotic formula")
    p.add_argument("config")
    _add_common(p, "csv")
    _add_case(p)
    _add_pickands_budget(p)
    _add_mc(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("example1", help="built-in four-dimensional scenario with a non-empty K")
    _add_common(p, "json")
    _add_case(p)
    _add_pickands_budget(p)
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_example1)
    return parser


def _classify_error(exc: BaseException) -> str:
    if isinstance(exc, UsageError):
        return "usage"
    if isinstance(exc, UnsupportedCaseError):
        return "unsupported"
    if isinstance(exc, BudgetExceeded):
        return "budget"
    if isinstance(exc, ModelError):
        return "model"
    if isinstance(exc, (QPError, CriticalPointError, ConstantsError, MissingPickandsError,
                        PickandsError, FbmError, MonteCarloError, FloatingPointError,
                        np.linalg.LinAlgError)):
        return "numerical"
    return "other"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.output:
            with open(args.output, "w") as fh:
                args.out = fh
                return args.func(args)
        args.out = sys.stdout
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a coded JSON error
        kind = _classify_error(exc)
        err = {"error": kind, "type": type(exc).__name__, "message": str(exc),
               "exit_code": EXIT_CODES[kind]}
        sys.stderr.write(json.dumps(err) + "\n")
        return EXIT_CODES[kind]


if __name__ == "__main__":
    sys.exit(main())
