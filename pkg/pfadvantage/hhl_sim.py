"""
Exact statevector simulation of HHL on small dense systems.

The state is held as a tensor of shape ``(M, N, 2)`` for the clock
(``M = 2**n_clock``), value and ancilla registers, clock most significant.
Controlled evolutions are built from :func:`scipy.linalg.expm`. The quantum
Fourier transform is an orthonormal FFT along the clock axis.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
import scipy.linalg

from .sparsela import SparseMatrix
from .utils import (
    DimensionMismatchError,
    DomainError,
    PostselectionError,
    SimulationSizeError,
    SingularMatrixError,
    check_open_unit,
    check_positive,
    is_power_of_two,
    next_power_of_two,
)

logger = logging.getLogger(__name__)

MAX_SIM_DIM = 16
MAX_CLOCK_QUBITS = 12
NORM_TOL = 1e-12


def _as_dense(a) -> np.ndarray:
    if isinstance(a, SparseMatrix):
        return a.to_dense()
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a


def _is_symmetric(a: np.ndarray) -> bool:
    scale = float(np.abs(a).max()) if a.size else 0.0
    return np.allclose(a, a.T, rtol=0, atol=1e-12 * max(scale, 1.0))


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Normalized amplitudes over ``(clock, value, ancilla)`` registers."""

    amplitudes: np.ndarray
    n_clock: int = 0
    n_value: int = 0
    n_ancilla: int = 0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.size != 2**self.num_qubits:
            raise DimensionMismatchError(
                f"{amps.size} amplitudes do not fill {self.num_qubits} qubits"
            )
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"state is not normalized: norm = {norm!r}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_qubits(self) -> int:
        return self.n_clock + self.n_value + self.n_ancilla

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to ``(2**n_clock, 2**n_value, 2**n_ancilla)``."""
        return self.amplitudes.reshape(
            2**self.n_clock, 2**self.n_value, 2**self.n_ancilla
        )


@dataclass(frozen=True)
class HHLConfig:
    """
    Parameters
    ----------
    n_clock : int
        Clock (phase-estimation) qubits.
    t0 : float
        Evolution time; eigenvalue ``lam`` maps to phase ``lam * t0 / (2 pi)``.
    c_rot : float
        Rotation constant; the ancilla amplitude is ``c_rot / lam``.
    """

    n_clock: int
    t0: float
    c_rot: float

    def __post_init__(self):
        if not 1 <= self.n_clock <= MAX_CLOCK_QUBITS:
            raise SimulationSizeError(
                f"n_clock must be in [1, {MAX_CLOCK_QUBITS}], got {self.n_clock!r}"
            )
        check_positive("t0", self.t0)
        check_positive("c_rot", self.c_rot)

    @property
    def clock_size(self) -> int:
        return 2**self.n_clock

    def clock_eigenvalues(self) -> np.ndarray:
        """Eigenvalue estimate attached to each clock value."""
        m = self.clock_size
        return 2 * np.pi * np.arange(m) / (m * self.t0)


@dataclass(frozen=True, eq=False)
class HHLResult:
    n: int
    n_clock: int
    t0: float
    c_rot: float
    x_tilde: np.ndarray
    success_prob: float
    eps_h: float
    classical_x: np.ndarray
    repetitions_naive: float
    repetitions_boosted: int
    stage_norms: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "n_clock": self.n_clock,
            "t0": self.t0,
            "c_rot": self.c_rot,
            "success_prob": self.success_prob,
            "eps_h": self.eps_h,
            "repetitions_naive": self.repetitions_naive,
            "repetitions_boosted": self.repetitions_boosted,
            "x_tilde": [float(v) for v in self.x_tilde.real],
            "x_tilde_imag": [float(v) for v in self.x_tilde.imag],
            "classical_x": [float(v) for v in self.classical_x],
        }


def hermitize(a, b) -> Tuple[np.ndarray, np.ndarray]:
    """
    Return ``(a, b)`` if ``a`` is symmetric, else the normal equations
    ``(a.T @ a, a.T @ b)``.

    Raises
    ------
    SingularMatrixError
        If ``a`` is rank deficient.
    """
    a = _as_dense(a)
    b = np.asarray(b, dtype=float)
    if b.shape != (a.shape[0],):
        raise DimensionMismatchError(f"b has shape {b.shape}, expected ({a.shape[0]},)")
    if np.linalg.matrix_rank(a) < a.shape[0]:
        raise SingularMatrixError("matrix is singular; the linear system has no unique solution")
    if _is_symmetric(a):
        return a, b
    return a.T @ a, a.T @ b


def pad_system(a, b) -> Tuple[np.ndarray, np.ndarray]:
    """Pad to a power-of-two dimension with decoupled unit rows and zero right-hand side."""
    a = _as_dense(a)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if b.shape != (n,):
        raise DimensionMismatchError(f"b has shape {b.shape}, expected ({n},)")
    size = next_power_of_two(n)
    if size == n:
        return a, b
    a_p = np.eye(size)
    a_p[:n, :n] = a
    b_p = np.zeros(size)
    b_p[:n] = b
    return a_p, b_p


def amplitude_encode(b) -> QuantumState:
    """``b / ||b||`` on a value register, zero padded to a power of two."""
    b = np.asarray(b, dtype=complex).ravel()
    norm = float(np.linalg.norm(b))
    if b.size == 0 or norm == 0:
        raise DomainError("cannot encode the zero vector")
    size = next_power_of_two(b.size)
    amps = np.zeros(size, dtype=complex)
    amps[: b.size] = b / norm
    return QuantumState(amps, n_value=size.bit_length() - 1)


def default_t0(lambda_max_est: float) -> float:
    """``2 pi / (2 lambda_max)``: the largest eigenvalue lands at phase 1/2."""
    check_positive("lambda_max_est", lambda_max_est)
    return math.pi / lambda_max_est


def default_c_rot(n_clock: int, t0: float, lambda_min_est: float) -> float:
    """Largest clock eigenvalue not above ``lambda_min_est`` (or the estimate
    itself when that falls below the first nonzero clock value)."""
    check_positive("t0", t0)
    check_positive("lambda_min_est", lambda_min_est)
    m = 2**n_clock
    # relative slack absorbs eigenvalue estimates a few ulp below a grid point
    k = math.floor(lambda_min_est * m * t0 / (2 * math.pi) * (1 + 1e-9))
    if k >= 1:
        return 2 * math.pi * k / (m * t0)
    return lambda_min_est


def analytic_success_prob(a, b, c_rot: float) -> float:
    """``sum_j |beta_j|**2 (c_rot / lambda_j)**2`` over the eigenbasis of ``a``."""
    a = _as_dense(a)
    b = np.asarray(b, dtype=float)
    b = b / np.linalg.norm(b)
    lam, vecs = np.linalg.eigh(a)
    beta = vecs.T @ b
    return float(np.sum(np.abs(beta) ** 2 * (c_rot / lam) ** 2))


def fidelity(u, v) -> float:
    """``|<u|v>|**2`` of the normalized vectors."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape:
        raise DimensionMismatchError(f"shapes {u.shape} and {v.shape} differ")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DomainError("fidelity is undefined for the zero vector")
    return float(abs(np.vdot(u, v)) ** 2 / (nu * nv) ** 2)


def expectation(x_tilde, m_diag) -> float:
    """``<x|M|x>`` for a diagonal observable ``M = diag(m_diag)``."""
    x = np.asarray(x_tilde, dtype=complex)
    m = np.asarray(m_diag, dtype=float)
    if x.shape != m.shape:
        raise DimensionMismatchError(f"state has shape {x.shape}, observable {m.shape}")
    return float(np.sum(m * np.abs(x) ** 2))


def tomography_cost(n: int, eps_t: float) -> float:
    """Copies needed to read out all ``n`` entries to accuracy ``eps_t``: ``n / eps_t``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n!r}")
    eps_t = check_open_unit("eps_t", eps_t, closed_right=True)
    return n / eps_t


def repetition_counts(success_prob: float) -> Tuple[float, int]:
    """Naive ``1/p`` repetitions and the amplitude-amplified count
    ``ceil(pi / (4 asin(sqrt(p))))``."""
    if not 0 < success_prob <= 1 + NORM_TOL:
        raise DomainError(f"success probability must be in (0, 1], got {success_prob!r}")
    p = min(success_prob, 1.0)
    return 1.0 / p, math.ceil(math.pi / (4 * math.asin(math.sqrt(p))) - 1e-12)


# Circuit stages on the (clock, value, ancilla) tensor


def _walsh_hadamard(psi):
    m = psi.shape[0]
    h = scipy.linalg.hadamard(m) / math.sqrt(m)
    return np.einsum("yk,kva->yva", h, psi)


def _controlled_evolution(psi, u, n_clock, inverse=False):
    clock = np.arange(psi.shape[0])
    power = u.conj().T if inverse else u
    for j in range(n_clock):
        mask = ((clock >> j) & 1).astype(bool)
        psi[mask] = np.einsum("wv,kva->kwa", power, psi[mask])
        power = power @ power
    return psi


def _rotate_ancilla(psi, amplitudes):
    c = amplitudes[:, None]
    s = np.sqrt(1.0 - c**2)
    zero, one = psi[:, :, 0].copy(), psi[:, :, 1].copy()
    psi[:, :, 0] = s * zero - c * one
    psi[:, :, 1] = c * zero + s * one
    return psi


def _rotation_amplitudes(cfg: HHLConfig) -> np.ndarray:
    lam = cfg.clock_eigenvalues()
    amps = np.zeros_like(lam)
    # clock value zero would invert zero; leave the ancilla untouched
    amps[1:] = cfg.c_rot / lam[1:]
    # clock values below c_rot only carry amplitude when c_rot > lambda_min,
    # which hhl_run reports
    return np.minimum(amps, 1.0)


def _check_phase_window(lam: np.ndarray, cfg: HHLConfig):
    phases = lam * cfg.t0 / (2 * np.pi)
    outside = (phases <= 0) | (phases >= 1)
    if np.any(outside):
        logger.warning(
            "eigenvalues %s fall outside the phase-estimation window (0, %g); "
            "the solution will be degraded",
            np.round(lam[outside], 12).tolist(),
            2 * np.pi / cfg.t0,
        )


def hhl_run(a_h, b, cfg: HHLConfig) -> HHLResult:
    """
    Simulate HHL on ``a_h x = b`` and compare with the classical solution.

    Stages: encode ``b``; phase estimation with controlled powers of
    ``exp(i A t0)``; ancilla rotation to ``c_rot / lam``; uncompute the
    phase estimation; post-select clock ``0`` and ancilla ``1``.
    Systems whose dimension is not a power of two are padded with
    :func:`pad_system` and the result is truncated back.

    ``eps_h`` is measured after removing the unobservable global phase of
    ``x_tilde`` relative to the normalized classical solution.

    Raises
    ------
    SimulationSizeError
        If the dimension exceeds :data:`MAX_SIM_DIM`.
    PostselectionError
        If the success branch has zero amplitude.
    """
    a = _as_dense(a_h)
    n = a.shape[0]
    if n > MAX_SIM_DIM:
        raise SimulationSizeError(
            f"dimension {n} exceeds the statevector limit of {MAX_SIM_DIM}"
        )
    if not _is_symmetric(a):
        raise DomainError("hhl_run needs a symmetric matrix; call hermitize first")
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise DimensionMismatchError(f"b has shape {b.shape}, expected ({n},)")

    lam = np.linalg.eigvalsh(a)
    if lam[0] <= 0:
        raise DomainError(f"matrix is not positive definite (lambda_min={lam[0]!r})")
    _check_phase_window(lam, cfg)
    if cfg.c_rot > lam[0] * (1 + 1e-8):
        logger.warning("c_rot=%g exceeds lambda_min=%g", cfg.c_rot, lam[0])

    a_p, b_p = pad_system(a, b)
    if not is_power_of_two(a_p.shape[0]):
        raise DimensionMismatchError("padding failed to reach a power of two")
    value = amplitude_encode(b_p)
    m = cfg.clock_size
    psi = np.zeros((m, a_p.shape[0], 2), dtype=complex)
    psi[0, :, 0] = value.amplitudes
    norms = {"encode": float(np.linalg.norm(psi))}

    u = scipy.linalg.expm(1j * a_p * cfg.t0)
    psi = _walsh_hadamard(psi)
    psi = _controlled_evolution(psi, u, cfg.n_clock)
    psi = np.fft.fft(psi, axis=0, norm="ortho")
    norms["phase_estimation"] = float(np.linalg.norm(psi))

    psi = _rotate_ancilla(psi, _rotation_amplitudes(cfg))
    norms["rotation"] = float(np.linalg.norm(psi))

    psi = np.fft.ifft(psi, axis=0, norm="ortho")
    psi = _controlled_evolution(psi, u, cfg.n_clock, inverse=True)
    psi = _walsh_hadamard(psi)
    norms["uncompute"] = float(np.linalg.norm(psi))
    logger.debug("stage norms: %s", norms)

    branch = psi[0, :n, 1]
    success_prob = float(np.vdot(branch, branch).real)
    if success_prob <= 0:
        raise PostselectionError("post-selected branch has zero amplitude")
    x_tilde = branch / math.sqrt(success_prob)

    classical_x = np.linalg.solve(a, b)
    classical_x = classical_x / np.linalg.norm(classical_x)
    overlap = np.vdot(classical_x, x_tilde)
    if abs(overlap) > 0:
        x_tilde = x_tilde * (abs(overlap) / overlap)
    eps_h = float(np.linalg.norm(x_tilde - classical_x))
    naive, boosted = repetition_counts(success_prob)
    return HHLResult(
        n=n,
        n_clock=cfg.n_clock,
        t0=cfg.t0,
        c_rot=cfg.c_rot,
        x_tilde=x_tilde,
        success_prob=success_prob,
        eps_h=eps_h,
        classical_x=classical_x,
        repetitions_naive=naive,
        repetitions_boosted=boosted,
        stage_norms=norms,
    )
