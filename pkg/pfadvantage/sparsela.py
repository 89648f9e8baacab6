"""Sparse symmetric storage and the conjugate-gradient solver.

The solver is unpreconditioned; its iteration counts are the quantity the
complexity models in :mod:`pfadvantage.complexity` describe.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import scipy.io
import scipy.sparse

from .log import solver_logger
from .utils import (
    DimensionMismatchError,
    DomainError,
    NotPositiveDefiniteError,
    check_open_unit,
)

logger = logging.getLogger(__name__)

DEFAULT_REL_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Square matrix in compressed-row form.

    Symmetric matrices store both triangles, so per-row nonzero counts are
    the row sparsities of the full matrix.

    Parameters
    ----------
    n : int
        Dimension.
    row_starts : array of int, length ``n + 1``
        Offsets into ``col_indices``/``values``; ``row_starts[n] == nnz``.
    col_indices : array of int
        Column of each stored entry, strictly increasing within a row.
    values : array of float
    """

    n: int
    row_starts: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_starts = np.asarray(self.row_starts, dtype=np.int64)
        col_indices = np.asarray(self.col_indices, dtype=np.int64)
        values = np.asarray(self.values, dtype=float)
        n = int(self.n)
        if n < 0 or row_starts.shape != (n + 1,):
            raise DimensionMismatchError(
                f"row_starts must have length n + 1 = {n + 1}, got {row_starts.shape}"
            )
        nnz = int(row_starts[-1]) if n >= 0 else 0
        if row_starts[0] != 0 or np.any(np.diff(row_starts) < 0):
            raise DimensionMismatchError("row_starts must be non-decreasing from 0")
        if col_indices.shape != (nnz,) or values.shape != (nnz,):
            raise DimensionMismatchError(
                f"expected {nnz} stored entries, got {col_indices.shape[0]} "
                f"column indices and {values.shape[0]} values"
            )
        if nnz and (col_indices.min() < 0 or col_indices.max() >= n):
            raise DimensionMismatchError(f"column index outside [0, {n})")
        rows = np.repeat(np.arange(n), np.diff(row_starts))
        same_row = rows[1:] == rows[:-1]
        if np.any(np.diff(col_indices)[same_row] <= 0):
            raise DimensionMismatchError(
                "column indices must be strictly increasing within each row"
            )
        for arr in (row_starts, col_indices, values):
            arr.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "row_starts", row_starts)
        object.__setattr__(self, "col_indices", col_indices)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_scipy(cls, mat) -> SparseMatrix:
        csr = scipy.sparse.csr_array(mat, dtype=float)
        if csr.shape[0] != csr.shape[1]:
            raise DimensionMismatchError(f"matrix must be square, got {csr.shape}")
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_coo(cls, n, rows, cols, values) -> SparseMatrix:
        """Assemble from coordinate triplets; duplicates are summed."""
        coo = scipy.sparse.coo_array(
            (np.asarray(values, dtype=float), (np.asarray(rows), np.asarray(cols))),
            shape=(n, n),
        )
        return cls.from_scipy(coo)

    @classmethod
    def from_dense(cls, dense) -> SparseMatrix:
        dense = np.atleast_2d(np.asarray(dense, dtype=float))
        if dense.shape[0] != dense.shape[1]:
            raise DimensionMismatchError(f"matrix must be square, got {dense.shape}")
        return cls.from_scipy(scipy.sparse.csr_array(dense))

    @classmethod
    def identity(cls, n) -> SparseMatrix:
        return cls.from_scipy(scipy.sparse.identity(n, format="csr"))

    @classmethod
    def diag(cls, diagonal) -> SparseMatrix:
        return cls.from_scipy(scipy.sparse.diags(np.asarray(diagonal, dtype=float)))

    @cached_property
    def csr(self) -> scipy.sparse.csr_array:
        """Read-only scipy view used for products."""
        return scipy.sparse.csr_array(
            (self.values.copy(), self.col_indices.copy(), self.row_starts.copy()),
            shape=(self.n, self.n),
        )

    @property
    def nnz(self) -> int:
        return int(self.row_starts[-1])

    @property
    def row_counts(self) -> np.ndarray:
        return np.diff(self.row_starts)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def scaled(self, c) -> SparseMatrix:
        return SparseMatrix(self.n, self.row_starts, self.col_indices, self.values * c)

    def is_symmetric(self) -> bool:
        diff = self.csr - self.csr.T
        return diff.count_nonzero() == 0


@dataclass(frozen=True, eq=False)
class CGResult:
    """Outcome of :func:`cg_solve`.

    ``residual_history[i]`` is ``||r_i||_2 / ||b||_2``; it always has
    ``iterations + 1`` entries.
    """

    x: np.ndarray
    iterations: int
    residual_history: Tuple[float, ...]
    converged: bool
    bound_iterations: Optional[int] = None

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]


def _check_vector(a: SparseMatrix, v, name="v") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != a.n:
        raise DimensionMismatchError(
            f"{name} has shape {v.shape}, expected ({a.n},) to match the matrix"
        )
    return v


def matvec(a: SparseMatrix, v) -> np.ndarray:
    """Sparse product ``a @ v``; cost proportional to ``a.nnz``."""
    return a.csr @ _check_vector(a, v)


def cg_iteration_bound(kappa, eps_c) -> int:
    """
    Worst-case CG iterations to shrink the energy-norm error by ``eps_c``.

    ``ceil(0.5 * sqrt(kappa) * ln(2 / eps_c))`` from the Chebyshev
    convergence analysis of CG (natural logarithm).

    >>> cg_iteration_bound(100, 1e-6)
    73
    """
    if not kappa >= 1:
        raise DomainError(f"kappa must be >= 1, got {kappa!r}")
    eps_c = check_open_unit("eps_c", eps_c, closed_right=True)
    return math.ceil(0.5 * math.sqrt(kappa) * math.log(2.0 / eps_c))


def cg_solve(
    a: SparseMatrix,
    b,
    x0=None,
    rel_tol: float = DEFAULT_REL_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    kappa: Optional[float] = None,
    callback: Optional[Callable[[np.ndarray], None]] = None,
) -> CGResult:
    """
    Conjugate gradient for a symmetric positive definite ``a``.

    Parameters
    ----------
    a : SparseMatrix
        Caller asserts symmetry and positive definiteness.
    b : array_like
    x0 : array_like, optional
        Warm start; defaults to the zero vector.
    rel_tol : float
        Stop once ``||r||_2 / ||b||_2 <= rel_tol``.
    max_iter : int
        Iteration cap. Hitting it is reported through ``converged=False``.
    kappa : float, optional
        If given, ``bound_iterations`` is ``cg_iteration_bound(kappa, rel_tol)``.
    callback : callable, optional
        Called with a copy of each iterate ``x_i`` (``i >= 1``).

    Raises
    ------
    NotPositiveDefiniteError
        If ``p^T A p <= 0`` for some search direction.
    """
    b = _check_vector(a, b, "b")
    rel_tol = check_open_unit("rel_tol", rel_tol)
    if max_iter < 0:
        raise DomainError(f"max_iter must be >= 0, got {max_iter!r}")
    x = np.zeros(a.n) if x0 is None else _check_vector(a, x0, "x0").copy()
    bound = cg_iteration_bound(kappa, rel_tol) if kappa is not None else None

    b_norm = float(np.linalg.norm(b))
    scale = b_norm if b_norm > 0 else 1.0
    r = b - matvec(a, x)
    rs = float(r @ r)
    history = [math.sqrt(rs) / scale]
    converged = history[0] <= rel_tol

    p = r.copy()
    i = 0
    while not converged and i < max_iter:
        ap = a.csr @ p
        pap = float(p @ ap)
        if pap <= 0:
            raise NotPositiveDefiniteError(
                f"CG breakdown at iteration {i}: p^T A p = {pap!r}"
            )
        alpha = rs / pap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        i += 1
        history.append(math.sqrt(rs_new) / scale)
        if callback is not None:
            callback(x.copy())
        converged = history[-1] <= rel_tol
        p = r + (rs_new / rs) * p
        rs = rs_new

    solver_logger.debug(
        "CG n=%d iterations=%d residual=%.3e converged=%s",
        a.n,
        i,
        history[-1],
        converged,
    )
    if not converged:
        logger.info(
            "CG stopped at max_iter=%d with relative residual %.3e > %.1e",
            max_iter,
            history[-1],
            rel_tol,
        )
    return CGResult(
        x=x,
        iterations=i,
        residual_history=tuple(history),
        converged=converged,
        bound_iterations=bound,
    )


def energy_norm_error(a: SparseMatrix, x, x_star) -> float:
    """
    ``||x_star - x||_A = sqrt(e^T A e)``.

    Raises
    ------
    NotPositiveDefiniteError
        If the quadratic form is negative beyond round-off.
    """
    e = _check_vector(a, x_star, "x_star") - _check_vector(a, x, "x")
    quad = float(e @ (a.csr @ e))
    if quad < 0:
        size = float(e @ e) * (np.abs(a.values).max() if a.nnz else 0.0)
        if quad < -1e-12 * size:
            raise NotPositiveDefiniteError(
                f"negative energy quadratic form e^T A e = {quad!r}"
            )
        quad = 0.0
    return math.sqrt(quad)


@dataclass(frozen=True)
class SweepResult:
    """Iteration counts of a batch of perturbed-injection solves."""

    warm: bool
    iterations: Tuple[int, ...]
    converged: Tuple[bool, ...] = field(repr=False)

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))

    @property
    def mean_iterations(self) -> float:
        return self.total_iterations / len(self.iterations) if self.iterations else 0.0

    @property
    def all_converged(self) -> bool:
        return all(self.converged)


def injection_sweep(
    a: SparseMatrix,
    base_b,
    n_samples: int,
    spread: float,
    *,
    seed: int = 0,
    warm: bool = True,
    rel_tol: float = DEFAULT_REL_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SweepResult:
    """
    Solve ``n_samples`` systems whose injections are ``base_b`` scaled
    entrywise by uniform noise in ``[1 - spread, 1 + spread]``.

    With ``warm=True`` each solve starts from the previous sample's
    solution; otherwise from zero. The same ``seed`` draws the same samples,
    so warm and cold sweeps are directly comparable.
    """
    base_b = _check_vector(a, base_b, "base_b")
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples!r}")
    if not 0 <= spread < 1:
        raise DomainError(f"spread must lie in [0, 1), got {spread!r}")
    rng = np.random.default_rng(seed)
    iterations = []
    converged = []
    previous = None
    for _ in range(n_samples):
        factors = rng.uniform(1.0 - spread, 1.0 + spread, size=a.n)
        x0 = previous if warm else None
        result = cg_solve(a, base_b * factors, x0, rel_tol, max_iter)
        iterations.append(result.iterations)
        converged.append(result.converged)
        previous = result.x
    logger.debug(
        "%s sweep of %d samples: %d total iterations",
        "warm" if warm else "cold",
        n_samples,
        sum(iterations),
    )
    return SweepResult(warm=warm, iterations=tuple(iterations), converged=tuple(converged))


def read_matrix(path) -> SparseMatrix:
    """Read a square Matrix Market coordinate file (1-based indices)."""
    mat = scipy.io.mmread(str(path))
    return SparseMatrix.from_scipy(scipy.sparse.coo_array(mat))


def write_matrix(path, a: SparseMatrix) -> None:
    """Write every stored entry as ``i j value`` in Matrix Market coordinates."""
    scipy.io.mmwrite(
        str(path), scipy.sparse.coo_matrix(a.csr), field="real", symmetry="general"
    )


def read_vector(path) -> np.ndarray:
    """One real per line; blank lines and ``%``/``#`` comments are skipped."""
    values = []
    for line in Path(path).read_text().splitlines():
        line = line.split("%", 1)[0].split("#", 1)[0].strip()
        if line:
            values.append(float(line))
    return np.asarray(values, dtype=float)


def write_vector(path, v: Sequence[float]) -> None:
    text = "".join(f"{float(value)!r}\n" for value in v)
    Path(path).write_text(text)
