"""Command-line entry point: ``pfadvantage <command> ...``.

Exit codes are 0 on success, 1 when a computation fails (bad case data,
non-convergence, failed rows in a batch) and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .complexity import (
    DEFAULT_PQA_THRESHOLD,
    ComplexityModel,
    ComplexityParams,
    PQAVariant,
    curve_point,
    fit_exponent,
    geometric_grid,
    kappa_upper_bound,
)
from .hhl_sim import MAX_SIM_DIM, HHLConfig, default_c_rot, default_t0, hermitize, hhl_run
from .log import config_pfadvantage_logging, default_level
from .netmodel import build_reduced_system, load_case, solve_angles
from .sparsela import (
    DEFAULT_MAX_ITER,
    DEFAULT_REL_TOL,
    SparseMatrix,
    cg_solve,
    injection_sweep,
    read_matrix,
    read_vector,
)
from .spectra import (
    DEFAULT_EIG_TOL,
    REPORT_COLUMNS,
    Tolerances,
    condition_number,
    extreme_eigs,
    report_row,
    spectral_report,
)
from .units import radians_to_degrees
from .utils import (
    ConvergenceError,
    DomainError,
    ExceptionBundle,
    PFAException,
    SimulationSizeError,
    UnknownBusError,
    UsageError,
    check_open_unit,
)

logger = logging.getLogger(__name__)

DEFAULT_MODELS = "CG,HHL_OPTIMISTIC,VTAA_OPTIMISTIC"


@dataclass(frozen=True)
class RunConfig:
    """Flags shared by every subcommand, validated once."""

    command: str
    out: Optional[Path] = None
    fmt: str = "csv"
    seed: int = 0
    jobs: int = 1
    log_level: str = "WARNING"
    rel_tol: float = DEFAULT_REL_TOL
    max_iter: int = DEFAULT_MAX_ITER
    eig_tol: float = DEFAULT_EIG_TOL

    def __post_init__(self):
        if self.fmt not in ("csv", "json"):
            raise UsageError(f"unknown output format {self.fmt!r}")
        if self.jobs < 1:
            raise UsageError(f"--jobs must be >= 1, got {self.jobs}")
        if self.max_iter < 0:
            raise UsageError(f"--max-iter must be >= 0, got {self.max_iter}")
        with validating_flags():
            check_open_unit("--tol", self.rel_tol)
            check_open_unit("--eig-tol", self.eig_tol)

    @classmethod
    def from_namespace(cls, ns: argparse.Namespace) -> RunConfig:
        return cls(
            command=ns.command,
            out=Path(ns.out) if ns.out else None,
            fmt=ns.format,
            seed=ns.seed,
            jobs=ns.jobs,
            log_level=ns.log_level,
            rel_tol=getattr(ns, "tol", DEFAULT_REL_TOL),
            max_iter=getattr(ns, "max_iter", DEFAULT_MAX_ITER),
            eig_tol=ns.eig_tol,
        )

    @property
    def tolerances(self) -> Tolerances:
        return Tolerances(eig_tol=self.eig_tol, seed=self.seed)


@contextlib.contextmanager
def validating_flags():
    """Report domain violations in flag values as usage errors."""
    try:
        yield
    except DomainError as ex:
        raise UsageError(str(ex)) from ex


# Output


@contextlib.contextmanager
def _output(path: Optional[Path]):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def write_table(rows: List[Dict[str, object]], columns: Sequence[str], cfg: RunConfig):
    """One CSV row (with header) or one JSON object per entry of ``rows``."""
    with _output(cfg.out) as f:
        if cfg.fmt == "json":
            json.dump([{c: row.get(c) for c in columns} for row in rows], f, indent=2)
            f.write("\n")
        else:
            writer = csv.DictWriter(
                f, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore"
            )
            writer.writeheader()
            writer.writerows(rows)


def write_json(payload, path: Optional[Path]):
    with _output(path) as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


# Input tables


def read_table(path, required: Iterable[str]) -> List[Dict[str, str]]:
    """Rows of a CSV file that must carry the ``required`` columns."""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(required) - set(reader.fieldnames or ())
        if missing:
            raise UsageError(f"columns {sorted(missing)} not in {path}")
        return list(reader)


def _cell(row: Dict[str, str], column: str, path, kind=float):
    try:
        return kind(row[column])
    except (TypeError, ValueError):
        raise UsageError(f"{path}: {column}={row[column]!r} is not a number") from None


# analyze


def _case_files(paths: Iterable[str]) -> List[Path]:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.m")))
        else:
            files.append(p)
    return files


def _analyze_one(path: Path, tolerances: Tolerances):
    row = {"file": str(path)}
    try:
        report = spectral_report(load_case(path), tolerances=tolerances)
    except (PFAException, OSError) as ex:
        logging.LoggerAdapter(logger, {"case_name": path.name}).error("analysis failed: %s", ex)
        row.update(status="failed", error=str(ex))
        return row, ex
    row.update(report_row(report), status="ok", error="")
    return row, None


def cmd_analyze(ns, cfg: RunConfig) -> int:
    files = _case_files(ns.paths)
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        results = list(pool.map(lambda p: _analyze_one(p, cfg.tolerances), files))
    write_table([row for row, _ in results], ("file",) + REPORT_COLUMNS + ("status", "error"), cfg)
    failures = [ex for _, ex in results if ex is not None]
    if failures:
        raise ExceptionBundle(f"{len(failures)} of {len(files)} cases failed", failures)
    return 0


# solve


def _read_warm_start(path, reduced) -> np.ndarray:
    x0 = np.zeros(reduced.n)
    index = reduced.index_map
    for row in read_table(path, ("bus_id", "angle")):
        bus_id = _cell(row, "bus_id", path, int)
        if bus_id == reduced.slack_id:
            continue
        if bus_id not in index:
            raise UnknownBusError(f"warm start names unknown bus {bus_id}")
        x0[index[bus_id]] = _cell(row, "angle", path)
    return x0


def _solver_kappa(a: SparseMatrix, cfg: RunConfig) -> Optional[float]:
    if not a.n:
        return None
    try:
        return condition_number(a, cfg.eig_tol, seed=cfg.seed)
    except ConvergenceError as ex:
        logger.warning("no kappa estimate (%s); solving without the iteration bound", ex)
        return None


def cmd_solve(ns, cfg: RunConfig) -> int:
    case = load_case(ns.case)
    reduced = build_reduced_system(case, ns.slack)
    x0 = _read_warm_start(ns.warm, reduced) if ns.warm else None
    kappa = _solver_kappa(reduced.a, cfg)
    res = cg_solve(
        reduced.a, reduced.b, x0, rel_tol=cfg.rel_tol, max_iter=cfg.max_iter, kappa=kappa
    )
    angles = solve_angles(reduced, res.x)
    values = list(angles.values())
    if ns.degrees:
        values = [float(v) for v in radians_to_degrees(values)]
    rows = [{"bus_id": bus_id, "angle": value} for bus_id, value in zip(angles, values)]
    write_table(rows, ("bus_id", "angle"), cfg)

    stats = {
        "case": case.name,
        "n": reduced.n,
        "iterations": res.iterations,
        "converged": res.converged,
        "final_residual": res.final_residual,
        "residual_history": list(res.residual_history),
        "bound_iterations": res.bound_iterations,
        "kappa": kappa,
    }
    if ns.stats:
        write_json(stats, Path(ns.stats))
    else:
        json.dump(stats, sys.stderr, indent=2)
        sys.stderr.write("\n")
    return 0 if res.converged else 1


# complexity


def _model_list(text: str) -> List[ComplexityModel]:
    try:
        return [ComplexityModel.parse(name) for name in text.split(",") if name.strip()]
    except DomainError as ex:
        raise argparse.ArgumentTypeError(str(ex))


def _grid_params(ns) -> List[Tuple[str, ComplexityParams]]:
    with validating_flags():
        grid = geometric_grid(ns.n_min, ns.n_max, ns.n_steps)
        beta = None if ns.kappa is not None else ns.beta
        template = ComplexityParams(
            n=grid[-1], s=ns.s, kappa=ns.kappa, eps=ns.eps, d=ns.d, qram=ns.qram, beta=beta
        )
        return [("", template.at(n)) for n in grid]


def _report_params(ns) -> List[Tuple[str, ComplexityParams]]:
    """Model inputs from the measured ``n``, sparsity and ``kappa`` of each
    successful row of an ``analyze`` report."""
    path = ns.from_report
    s_col = f"s_{ns.sparsity}"
    cases = []
    for row in read_table(path, ("name", "n", s_col, "kappa")):
        if row.get("status", "ok") != "ok":
            logger.warning("skipping %s: analysis failed", row.get("file") or row["name"])
            continue
        p = ComplexityParams(
            n=_cell(row, "n", path),
            s=_cell(row, s_col, path),
            kappa=_cell(row, "kappa", path),
            eps=ns.eps,
            d=ns.d,
            qram=ns.qram,
        )
        cases.append((row["name"], p))
    return cases


def cmd_complexity(ns, cfg: RunConfig) -> int:
    cases = _report_params(ns) if ns.from_report else _grid_params(ns)
    rows = []
    # measured report rows are data; grid points come from flags
    with contextlib.nullcontext() if ns.from_report else validating_flags():
        for model in ns.models:
            for name, p in cases:
                rows.append(
                    {
                        "case": name,
                        "model": model.name,
                        "N": p.n,
                        "s": p.s,
                        "kappa": p.effective_kappa,
                        "eps": p.eps,
                        "D": p.readout,
                        "cost": curve_point(model, p).cost,
                    }
                )
    columns = ("model", "N", "s", "kappa", "eps", "D", "cost")
    write_table(rows, ("case",) + columns if ns.from_report else columns, cfg)
    return 0


# pqa


def cmd_pqa(ns, cfg: RunConfig) -> int:
    variants = list(PQAVariant) if ns.variant == "both" else [PQAVariant(ns.variant)]
    with validating_flags():
        grid = geometric_grid(ns.n_min, ns.n_max, ns.n_steps)
        for value in [ns.s, ns.threshold, *ns.d]:
            if not value > 0:
                raise DomainError(f"--s, --d and --threshold must be positive, got {value!r}")
    rows = []
    for variant in variants:
        for d in ns.d:
            for n in grid:
                try:
                    kappa_max = kappa_upper_bound(n, d, ns.s, variant, ns.threshold)
                except DomainError as ex:
                    logger.info("%s", ex)
                    kappa_max = None
                rows.append(
                    {"model": variant.value, "N": n, "D": d, "s": ns.s, "kappa_max": kappa_max}
                )
    write_table(rows, ("model", "N", "D", "s", "kappa_max"), cfg)
    return 0


# hhlsim


def _hhl_inputs(ns):
    if ns.case and (ns.matrix or ns.rhs):
        raise UsageError("give either a case file or --matrix/--rhs, not both")
    if ns.case:
        reduced = build_reduced_system(load_case(ns.case))
        return reduced.a.to_dense(), np.asarray(reduced.b)
    if not (ns.matrix and ns.rhs):
        raise UsageError("hhlsim needs a case file or both --matrix and --rhs")
    return read_matrix(ns.matrix).to_dense(), read_vector(ns.rhs)


def cmd_hhlsim(ns, cfg: RunConfig) -> int:
    a, b = _hhl_inputs(ns)
    if a.shape[0] > MAX_SIM_DIM:
        raise SimulationSizeError(
            f"dimension {a.shape[0]} exceeds the statevector limit of {MAX_SIM_DIM}"
        )
    a_h, b_h = hermitize(a, b)
    t0, c_rot = ns.t0, ns.c_rot
    if t0 is None or c_rot is None:
        lambda_min, lambda_max = extreme_eigs(
            SparseMatrix.from_dense(a_h), cfg.eig_tol, seed=cfg.seed
        )
        if t0 is None:
            t0 = default_t0(lambda_max)
            logger.info("using t0 = pi / lambda_max = %r", t0)
        if c_rot is None:
            c_rot = default_c_rot(ns.n_clock, t0, lambda_min)
    with validating_flags():
        hhl_cfg = HHLConfig(n_clock=ns.n_clock, t0=t0, c_rot=c_rot)
    result = hhl_run(a_h, b_h, hhl_cfg)
    payload = result.to_dict()
    payload["t0_auto"] = ns.t0 is None
    write_json(payload, cfg.out)
    return 0


# fit


def _parse_filters(filters: Sequence[str]) -> Dict[str, str]:
    parsed = {}
    for item in filters:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"--filter expects column=value, got {item!r}")
        parsed[key] = value
    return parsed


def cmd_fit(ns, cfg: RunConfig) -> int:
    filters = _parse_filters(ns.filter)
    table = read_table(ns.csv, (ns.x_col, ns.y_col, *filters))
    rows = [r for r in table if all(r[k] == v for k, v in filters.items())]
    if len(rows) < 3:
        raise UsageError(f"need at least 3 rows to fit an exponent, got {len(rows)}")
    points = [(_cell(r, ns.x_col, ns.csv), _cell(r, ns.y_col, ns.csv)) for r in rows]
    beta, r_squared = fit_exponent(points, log_power=ns.log_power)
    write_table(
        [{"beta": beta, "r_squared": r_squared, "points": len(points)}],
        ("beta", "r_squared", "points"),
        cfg,
    )
    return 0


# sweep


def cmd_sweep(ns, cfg: RunConfig) -> int:
    reduced = build_reduced_system(load_case(ns.case))
    with validating_flags():
        if ns.samples < 1:
            raise DomainError(f"--samples must be >= 1, got {ns.samples}")
        if not 0 <= ns.spread < 1:
            raise DomainError(f"--spread must be in [0, 1), got {ns.spread}")
    rows = []
    for warm in (False, True):
        sweep = injection_sweep(
            reduced.a,
            reduced.b,
            ns.samples,
            ns.spread,
            seed=cfg.seed,
            warm=warm,
            rel_tol=cfg.rel_tol,
            max_iter=cfg.max_iter,
        )
        rows.append(
            {
                "mode": "warm" if warm else "cold",
                "samples": ns.samples,
                "total_iterations": sweep.total_iterations,
                "mean_iterations": sweep.mean_iterations,
                "all_converged": sweep.all_converged,
            }
        )
    write_table(rows, ("mode", "samples", "total_iterations", "mean_iterations", "all_converged"), cfg)
    return 0 if all(r["all_converged"] for r in rows) else 1


# Parser


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write output here instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--eig-tol", type=float, default=DEFAULT_EIG_TOL)
    common.add_argument(
        "--log-level",
        default=default_level(),
        help="logging level (default from $PFADVANTAGE_LOG_LEVEL, else WARNING)",
    )
    return common


def _add_solver_flags(parser):
    parser.add_argument("--tol", type=float, default=DEFAULT_REL_TOL)
    parser.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)


def _add_grid_flags(parser, n_min, n_max, n_steps):
    parser.add_argument("--n-min", type=float, default=n_min)
    parser.add_argument("--n-max", type=float, default=n_max)
    parser.add_argument("--n-steps", type=int, default=n_steps)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pfadvantage",
        description="Classical and quantum power-flow complexity toolkit.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_parser()

    p = subparsers.add_parser(
        "analyze", parents=[common], help="Spectral report for case files or directories."
    )
    p.add_argument("paths", nargs="*")
    p.set_defaults(func=cmd_analyze)

    p = subparsers.add_parser("solve", parents=[common], help="Solve DC power flow with CG.")
    p.add_argument("case")
    p.add_argument("--warm", help="CSV of bus_id,angle used as the starting point")
    p.add_argument("--slack", type=int)
    p.add_argument("--degrees", action="store_true", help="report angles in degrees")
    p.add_argument("--stats", help="write solver statistics JSON here (default stderr)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = subparsers.add_parser(
        "complexity", parents=[common], help="Cost curves of the complexity models."
    )
    p.add_argument("--models", type=_model_list, default=_model_list(DEFAULT_MODELS))
    _add_grid_flags(p, 1e2, 1e6, 9)
    p.add_argument("--beta", type=float, default=2.0, help="kappa = N**beta")
    p.add_argument("--kappa", type=float, help="fixed kappa (overrides --beta)")
    p.add_argument("--s", type=float, default=10.0)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--d", type=float, help="readout entries (default N)")
    p.add_argument("--qram", action="store_true")
    p.add_argument(
        "--from-report",
        help="evaluate at the measured n, sparsity and kappa of each row of an analyze report",
    )
    p.add_argument("--sparsity", choices=("max", "avg"), default="max", help="report column used for s")
    p.set_defaults(func=cmd_complexity)

    p = subparsers.add_parser(
        "pqa", parents=[common], help="Largest kappa allowing a quantum advantage."
    )
    p.add_argument("--d", type=float, nargs="+", default=[1.0])
    p.add_argument("--s", type=float, default=10.0)
    _add_grid_flags(p, 1e3, 1e9, 7)
    p.add_argument("--variant", choices=("HHL", "VTAA", "both"), default="both")
    p.add_argument("--threshold", type=float, default=DEFAULT_PQA_THRESHOLD)
    p.set_defaults(func=cmd_pqa)

    p = subparsers.add_parser("hhlsim", parents=[common], help="Statevector HHL simulation.")
    p.add_argument("case", nargs="?")
    p.add_argument("--matrix", help="Matrix Market file")
    p.add_argument("--rhs", help="right-hand side, one value per line")
    p.add_argument("--n-clock", type=int, default=6)
    p.add_argument("--t0", type=float)
    p.add_argument("--c-rot", type=float)
    p.set_defaults(func=cmd_hhlsim)

    p = subparsers.add_parser("fit", parents=[common], help="Fit a power-law exponent.")
    p.add_argument("csv")
    p.add_argument("--x-col", default="N")
    p.add_argument("--y-col", default="cost")
    p.add_argument("--filter", action="append", default=[], metavar="COL=VALUE")
    p.add_argument("--log-power", type=int, default=0, help="divide y by ln(x)**k first")
    p.set_defaults(func=cmd_fit)

    p = subparsers.add_parser(
        "sweep", parents=[common], help="Cold vs warm-started CG over perturbed injections."
    )
    p.add_argument("case")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--spread", type=float, default=0.05)
    _add_solver_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as ex:
        return ex.code if isinstance(ex.code, int) else 2

    try:
        config_pfadvantage_logging(file=sys.stderr, level=ns.log_level)
    except ValueError as ex:
        print(f"pfadvantage: error: {ex}", file=sys.stderr)
        return 2

    try:
        cfg = RunConfig.from_namespace(ns)
        return int(ns.func(ns, cfg))
    except UsageError as ex:
        print(f"pfadvantage {ns.command}: error: {ex}", file=sys.stderr)
        return 2
    except (PFAException, OSError) as ex:
        logger.error("%s failed: %s", ns.command, ex)
        print(f"pfadvantage {ns.command}: {ex}", file=sys.stderr)
        return 1
