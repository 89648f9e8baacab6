"""Spectral and sparsity measurements of reduced DCPF matrices.

Everything here is matrix-free apart from ``A`` itself: the largest
eigenvalue comes from Lanczos (ARPACK), the smallest from zero-shift inverse
iteration whose inner solves are :func:`pfadvantage.sparsela.cg_solve`.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse.linalg

from .complexity import fit_exponent
from .log import solver_logger
from .netmodel import NetworkCase, build_reduced_system, injection_density
from .sparsela import DEFAULT_MAX_ITER, SparseMatrix, cg_solve
from .utils import ConvergenceError, DomainError, NotPositiveDefiniteError, check_open_unit

logger = logging.getLogger(__name__)

DEFAULT_EIG_TOL = 1e-8
DEFAULT_EIG_MAX_ITER = 500
# inverse iteration solves to this fraction of the eigenvalue tolerance
INNER_TOL_FACTOR = 1e-2
# below this dimension both extremes come from a dense eigensolve
DENSE_EIG_DIM = 3


@dataclass(frozen=True)
class Tolerances:
    """Iteration controls used for one spectral measurement."""

    eig_tol: float = DEFAULT_EIG_TOL
    eig_max_iter: int = DEFAULT_EIG_MAX_ITER
    cg_max_iter: int = DEFAULT_MAX_ITER
    seed: int = 0

    def __post_init__(self):
        check_open_unit("eig_tol", self.eig_tol)
        if self.eig_max_iter < 1 or self.cg_max_iter < 1:
            raise DomainError("iteration caps must be >= 1")

    @property
    def inner_tol(self) -> float:
        return self.eig_tol * INNER_TOL_FACTOR

    def as_dict(self) -> Dict[str, float]:
        return dict(asdict(self), inner_tol=self.inner_tol)


@dataclass(frozen=True)
class SpectralReport:
    name: str
    n: int
    lambda_min: float
    lambda_max: float
    kappa: float
    kappa_lower_bound_1norm: float
    s_max: int
    s_avg: float
    injection_density: float
    method_tolerances: Tolerances


REPORT_COLUMNS = (
    "name",
    "n",
    "s_max",
    "s_avg",
    "lambda_min",
    "lambda_max",
    "kappa",
    "kappa_1norm_bound",
    "injection_density",
)


def report_row(report: SpectralReport) -> Dict[str, object]:
    """One output row, keyed by :data:`REPORT_COLUMNS`."""
    return {
        "name": report.name,
        "n": report.n,
        "s_max": report.s_max,
        "s_avg": report.s_avg,
        "lambda_min": report.lambda_min,
        "lambda_max": report.lambda_max,
        "kappa": report.kappa,
        "kappa_1norm_bound": report.kappa_lower_bound_1norm,
        "injection_density": report.injection_density,
    }


def _check_nonempty(a: SparseMatrix):
    if a.n < 1:
        raise DomainError("spectral measurements need a matrix of dimension >= 1")


def _rayleigh_residual(a: SparseMatrix, v: np.ndarray) -> Tuple[float, float]:
    av = a.csr @ v
    mu = float(v @ av)
    return mu, float(np.linalg.norm(av - mu * v))


def _power_iteration(a: SparseMatrix, tol, max_iter, rng) -> float:
    v = rng.standard_normal(a.n)
    v /= np.linalg.norm(v)
    for i in range(max_iter):
        w = a.csr @ v
        norm = float(np.linalg.norm(w))
        if norm == 0:
            raise NotPositiveDefiniteError("power iteration reached the null space")
        v = w / norm
        mu, residual = _rayleigh_residual(a, v)
        solver_logger.debug("power iteration %d: mu=%.12g residual=%.3e", i, mu, residual)
        if residual <= tol * abs(mu):
            return mu
    raise ConvergenceError(
        f"power iteration did not reach tol={tol:g} in {max_iter} steps",
        iterations=max_iter,
    )


def _dense_extremes(a: SparseMatrix) -> Tuple[float, float]:
    vals = np.linalg.eigvalsh(a.to_dense())
    return float(vals[0]), float(vals[-1])


def _largest_eig(a: SparseMatrix, tol, max_iter, rng) -> float:
    v0 = rng.standard_normal(a.n)
    try:
        vals = scipy.sparse.linalg.eigsh(
            a.csr, k=1, which="LA", v0=v0, tol=tol, maxiter=max_iter * a.n
        )[0]
    except scipy.sparse.linalg.ArpackNoConvergence as ex:
        raise ConvergenceError(f"Lanczos did not converge: {ex}") from ex
    except scipy.sparse.linalg.ArpackError as ex:
        logger.info("Lanczos failed (%s); falling back to power iteration", ex)
        return _power_iteration(a, tol, max_iter, rng)
    return float(vals[0])


def _inverse_iteration(a: SparseMatrix, v, tol, max_iter, inner_tol, cg_max_iter):
    v = v / np.linalg.norm(v)
    for i in range(max_iter):
        res = cg_solve(a, v, rel_tol=inner_tol, max_iter=cg_max_iter)
        if not res.converged:
            raise ConvergenceError(
                f"inner CG solve stopped at relative residual {res.final_residual:.3e}",
                iterations=res.iterations,
            )
        norm = float(np.linalg.norm(res.x))
        if norm == 0:
            raise NotPositiveDefiniteError("inverse iteration produced a zero vector")
        v = res.x / norm
        mu, residual = _rayleigh_residual(a, v)
        if mu <= 0:
            raise NotPositiveDefiniteError(f"Rayleigh quotient {mu!r} is not positive")
        solver_logger.debug(
            "inverse iteration %d: mu=%.12g residual=%.3e (inner CG %d)",
            i,
            mu,
            residual,
            res.iterations,
        )
        if residual <= tol * mu:
            return mu
    return None


def _smallest_eig(a: SparseMatrix, tol, max_iter, cg_max_iter, rng) -> float:
    inner_tol = tol * INNER_TOL_FACTOR
    # the lowest eigenvector of an irreducible M-matrix is positive, so it
    # is never orthogonal to the all-ones start
    starts = (np.ones(a.n), rng.standard_normal(a.n))
    for k, start in enumerate(starts):
        if k:
            logger.info("inverse iteration stagnated; restarting from a random vector")
        mu = _inverse_iteration(a, start, tol, max_iter, inner_tol, cg_max_iter)
        if mu is not None:
            return mu
    raise ConvergenceError(
        f"inverse iteration did not reach tol={tol:g} in {max_iter} steps",
        iterations=max_iter,
    )


def extreme_eigs(
    a: SparseMatrix,
    tol: float = DEFAULT_EIG_TOL,
    *,
    max_iter: int = DEFAULT_EIG_MAX_ITER,
    cg_max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Smallest and largest eigenvalue of a symmetric positive definite ``a``.

    Both are computed to relative accuracy ``tol``: the Ritz residual
    ``||A v - mu v||`` is at most ``tol * mu``. Random start vectors come
    from ``numpy.random.default_rng(seed)``, so results are reproducible.
Below dimension :data:`DENSE_EIG_DIM` both come from a dense eigensolve.

    Raises
    ------
    ConvergenceError
        An iteration cap was hit, including inside a CG inner solve.
    NotPositiveDefiniteError
        A non-positive curvature or Rayleigh quotient was encountered.
    """
    _check_nonempty(a)
    tol = check_open_unit("tol", tol)
    rng = np.random.default_rng(seed)
    if a.n < DENSE_EIG_DIM:
        lambda_min, lambda_max = _dense_extremes(a)
        if lambda_min <= 0:
            raise NotPositiveDefiniteError(f"smallest eigenvalue {lambda_min!r} is not positive")
        return lambda_min, lambda_max
    lambda_max = _largest_eig(a, tol, max_iter, rng)
    if lambda_max <= 0:
        raise NotPositiveDefiniteError(f"largest eigenvalue {lambda_max!r} is not positive")
    lambda_min = _smallest_eig(a, tol, max_iter, cg_max_iter, rng)
    # both iterations can land within tol of one another on a flat spectrum
    lambda_min = min(lambda_min, lambda_max)
    return lambda_min, lambda_max


def condition_number(a: SparseMatrix, tol: float = DEFAULT_EIG_TOL, **kwargs) -> float:
    """Spectral condition number ``lambda_max / lambda_min``."""
    lambda_min, lambda_max = extreme_eigs(a, tol, **kwargs)
    return lambda_max / lambda_min


def one_norm_kappa_bound(
    a: SparseMatrix, *, rel_tol: float = 1e-10, cg_max_iter: int = DEFAULT_MAX_ITER
) -> float:
    """
    ``||A||_1 * est(||A^-1||_1)``, the 1-norm condition number estimate.

    ``||A^-1||_1`` comes from the block 1-norm estimator
    (:func:`scipy.sparse.linalg.onenormest`) applied to an operator whose
    products are CG solves. Up to 4 dimensions the estimate is exact. Above
    that a single column is used, which keeps the estimator free of random
    resampling. Unlike :func:`condition_number`, no eigen-iteration is
    needed.

    Raises
    ------
    ConvergenceError
        If an inner CG solve does not converge.
    """
    _check_nonempty(a)

    def solve(v):
        res = cg_solve(a, np.ravel(v), rel_tol=rel_tol, max_iter=cg_max_iter)
        if not res.converged:
            raise ConvergenceError(
                "inner CG solve failed inside the 1-norm estimator",
                iterations=res.iterations,
            )
        return res.x

    inverse = scipy.sparse.linalg.LinearOperator(
        (a.n, a.n), matvec=solve, rmatvec=solve, dtype=float
    )
    t = a.n if a.n <= 4 else 1
    inv_norm = float(scipy.sparse.linalg.onenormest(inverse, t=t))
    a_norm = float(scipy.sparse.linalg.norm(a.csr, 1))
    return a_norm * inv_norm


def row_sparsity(a: SparseMatrix) -> Tuple[int, float]:
    """Largest and mean number of stored entries per row."""
    _check_nonempty(a)
    counts = a.row_counts
    return int(counts.max()), float(counts.mean())


def spectral_report(
    case: NetworkCase, slack: Optional[int] = None, tolerances: Tolerances = Tolerances()
) -> SpectralReport:
    """Measure every spectral and sparsity parameter of one case."""
    log = logging.LoggerAdapter(logger, {"case_name": case.name})
    reduced = build_reduced_system(case, slack)
    a = reduced.a
    lambda_min, lambda_max = extreme_eigs(
        a,
        tolerances.eig_tol,
        max_iter=tolerances.eig_max_iter,
        cg_max_iter=tolerances.cg_max_iter,
        seed=tolerances.seed,
    )
    kappa_1norm = one_norm_kappa_bound(
        a, rel_tol=tolerances.inner_tol, cg_max_iter=tolerances.cg_max_iter
    )
    s_max, s_avg = row_sparsity(a)
    report = SpectralReport(
        name=case.name,
        n=a.n,
        lambda_min=lambda_min,
        lambda_max=lambda_max,
        kappa=lambda_max / lambda_min,
        kappa_lower_bound_1norm=kappa_1norm,
        s_max=s_max,
        s_avg=s_avg,
        injection_density=injection_density(case, reduced.slack_id),
        method_tolerances=tolerances,
    )
    log.info("n=%d kappa=%.6g s_max=%d", report.n, report.kappa, report.s_max)
    return report


class ScalingPoint(NamedTuple):
    n: int
    lambda_min: float
    kappa: float


def scaling_study(
    sizes: Sequence[int],
    builder: Callable[[int], NetworkCase],
    tolerances: Tolerances = Tolerances(),
) -> List[ScalingPoint]:
    """
    Measure ``lambda_min`` and ``kappa`` for ``builder(n)`` at each size.

    The recorded ``n`` is the dimension of the reduced system.
    """
    points = []
    for size in sizes:
        a = build_reduced_system(builder(size)).a
        lambda_min, lambda_max = extreme_eigs(
            a,
            tolerances.eig_tol,
            max_iter=tolerances.eig_max_iter,
            cg_max_iter=tolerances.cg_max_iter,
            seed=tolerances.seed,
        )
        points.append(ScalingPoint(a.n, lambda_min, lambda_max / lambda_min))
    return points


def kappa_growth_exponent(points: Sequence[ScalingPoint]) -> Tuple[float, float]:
    """Fitted exponent of ``kappa ~ n**beta``, with its r-squared."""
    return fit_exponent([(p.n, p.kappa) for p in points])


def lambda_min_decay_exponent(points: Sequence[ScalingPoint]) -> Tuple[float, float]:
    """Fitted exponent of ``lambda_min ~ n**beta`` (negative for decay)."""
    return fit_exponent([(p.n, p.lambda_min) for p in points])
