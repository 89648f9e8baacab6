"""Asymptotic cost models for classical and quantum power flow.

Every formula is evaluated with its hidden constant set to 1 and natural
logarithms. The values compare scalings and are not runtimes.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.optimize

from .utils import DomainError, check_open_unit, check_positive

logger = logging.getLogger(__name__)

DEFAULT_PQA_THRESHOLD = 0.1
VTAA_KAPPA_CEILING = 1e15


class ComplexityModel(enum.Enum):
    CG = "CG"
    CG_E2E = "CG_E2E"
    HHL_E2E = "HHL_E2E"
    HHL_OPTIMISTIC = "HHL_OPTIMISTIC"
    VTAA_E2E = "VTAA_E2E"
    VTAA_OPTIMISTIC = "VTAA_OPTIMISTIC"
    QUANTUM_LOWER_BOUND = "QUANTUM_LOWER_BOUND"
    FDLF_CLASSICAL = "FDLF_CLASSICAL"

    @classmethod
    def parse(cls, name: str) -> ComplexityModel:
        try:
            return cls[name.strip().upper()]
        except KeyError:
            known = ", ".join(m.name for m in cls)
            raise DomainError(f"unknown model {name!r}; choose from {known}")


class PQAVariant(enum.Enum):
    HHL = "HHL"
    VTAA = "VTAA"


@dataclass(frozen=True)
class ComplexityParams:
    """Inputs of the cost formulas.

    Parameters
    ----------
    n : float
        System dimension N.
    s : float
        Sparsity, the largest number of nonzeros in a row.
    kappa : float, optional
        Condition number. Ignored when ``beta`` is set.
    eps : float
        Target error in (0, 1].
    d : float, optional
        Number of solution entries read out; ``None`` means all N.
    qram : bool
        Whether state preparation costs ``ln N`` (QRAM) instead of ``N``.
    beta : float, optional
        Substitute ``kappa = N ** beta``.
    """

    n: float
    s: float
    kappa: Optional[float] = None
    eps: float = 1e-6
    d: Optional[float] = None
    qram: bool = False
    beta: Optional[float] = None

    def __post_init__(self):
        check_positive("n", self.n)
        check_positive("s", self.s)
        check_open_unit("eps", self.eps, closed_right=True)
        if self.beta is None:
            if self.kappa is None:
                raise DomainError("either kappa or beta must be given")
            check_positive("kappa", self.kappa)
        elif self.beta < 0:
            raise DomainError(f"beta must be non-negative, got {self.beta!r}")
        if self.d is not None:
            check_positive("d", self.d)
            if self.d > self.n:
                raise DomainError(f"readout level d={self.d} exceeds n={self.n}")

    @property
    def effective_kappa(self) -> float:
        return self.n**self.beta if self.beta is not None else float(self.kappa)

    @property
    def readout(self) -> float:
        return self.n if self.d is None else self.d

    def at(self, n: float) -> ComplexityParams:
        """Same parameters at dimension ``n``; a full readout follows ``n``."""
        return replace(self, n=n)


class CurvePoint(NamedTuple):
    n: float
    cost: float


class E2EBreakdown(NamedTuple):
    """HHL end-to-end cost split into state preparation ``t_b``, one
    linear-system simulation ``t_s`` and readout copies ``t_r``."""

    t_b: float
    t_s: float
    t_r: float
    total: float


def _ln3(kappa):
    return kappa * math.log(kappa) ** 3


def eval_model(model: ComplexityModel, p: ComplexityParams) -> float:
    """
    Leading-order cost of ``model`` at ``p``.

    The quantum models read out ``D`` entries (``p.readout``) with
    ``D / eps`` copies. The CG and FDLF costs do not depend on ``D``.

    The log factors make some costs vanish on the domain boundary: every
    model with ``ln N`` at ``N = 1``, CG, FDLF and the lower bound at
    ``eps = 1``, and the VTAA models at ``kappa = 1``. Use
    :func:`curve_point` where a positive cost is required.
    """
    n, s, eps, d = p.n, p.s, p.eps, p.readout
    kappa = p.effective_kappa
    ln_n = math.log(n)
    if model is ComplexityModel.CG:
        return s * n * math.sqrt(kappa) * ln_n * math.log(1 / eps)
    elif model is ComplexityModel.CG_E2E:
        return n * s + s * n * math.sqrt(kappa) * math.log(1 / eps) + n
    elif model is ComplexityModel.HHL_E2E:
        return e2e_breakdown(p).total
    elif model is ComplexityModel.HHL_OPTIMISTIC:
        return s**2 * kappa**2 * d * ln_n / eps**2
    elif model is ComplexityModel.VTAA_E2E:
        t_b = ln_n if p.qram else n
        return (d / eps) * (t_b * kappa + ln_n * _ln3(kappa) * s**2 / eps)
    elif model is ComplexityModel.VTAA_OPTIMISTIC:
        return s**2 * d * ln_n * _ln3(kappa) / eps**2
    elif model is ComplexityModel.QUANTUM_LOWER_BOUND:
        return kappa * d * math.log(1 / eps) / eps
    elif model is ComplexityModel.FDLF_CLASSICAL:
        return n * ln_n * math.sqrt(kappa) * s * math.log(1 / eps)
    raise DomainError(f"unknown complexity model {model!r}")


def eval_solving(model: ComplexityModel, p: ComplexityParams) -> float:
    """Cost of the linear solve alone, without state preparation or readout."""
    n, s, eps = p.n, p.s, p.eps
    kappa = p.effective_kappa
    if model in (ComplexityModel.CG, ComplexityModel.CG_E2E):
        return s * n * math.sqrt(kappa) * math.log(1 / eps)
    elif model in (ComplexityModel.HHL_E2E, ComplexityModel.HHL_OPTIMISTIC):
        return s**2 * kappa**2 * math.log(n) / eps
    elif model in (ComplexityModel.VTAA_E2E, ComplexityModel.VTAA_OPTIMISTIC):
        return s**2 * math.log(n) * _ln3(kappa) / eps
    elif model is ComplexityModel.QUANTUM_LOWER_BOUND:
        return kappa * math.log(1 / eps)
    elif model is ComplexityModel.FDLF_CLASSICAL:
        return eval_model(model, p)
    raise DomainError(f"unknown complexity model {model!r}")


def e2e_breakdown(p: ComplexityParams) -> E2EBreakdown:
    """HHL end-to-end cost ``T_r * kappa * (T_b + T_s)``."""
    kappa = p.effective_kappa
    ln_n = math.log(p.n)
    t_b = ln_n if p.qram else p.n
    t_s = ln_n * kappa * p.s**2 / p.eps
    t_r = p.readout / p.eps
    return E2EBreakdown(t_b, t_s, t_r, t_r * kappa * (t_b + t_s))


_LEADING_EXPONENTS = {
    ComplexityModel.CG: lambda beta: 1 + 0.5 * beta,
    ComplexityModel.CG_E2E: lambda beta: 1 + 0.5 * beta,
    ComplexityModel.HHL_E2E: lambda beta: max(2 + beta, 1 + 2 * beta),
    ComplexityModel.HHL_OPTIMISTIC: lambda beta: 1 + 2 * beta,
    ComplexityModel.VTAA_E2E: lambda beta: 2 + beta,
    ComplexityModel.VTAA_OPTIMISTIC: lambda beta: 1 + beta,
    ComplexityModel.QUANTUM_LOWER_BOUND: lambda beta: 1 + beta,
    ComplexityModel.FDLF_CLASSICAL: lambda beta: 1 + 0.5 * beta,
}

# power of ln N multiplying the leading term when kappa = N**beta, D = N
_POLYLOG_POWERS = {
    ComplexityModel.CG: 1,
    ComplexityModel.CG_E2E: 0,
    ComplexityModel.HHL_E2E: 0,
    ComplexityModel.HHL_OPTIMISTIC: 1,
    ComplexityModel.VTAA_E2E: 0,
    ComplexityModel.VTAA_OPTIMISTIC: 4,
    ComplexityModel.QUANTUM_LOWER_BOUND: 0,
    ComplexityModel.FDLF_CLASSICAL: 1,
}


def leading_exponent(model: ComplexityModel, beta: float) -> float:
    """Power of N in ``model`` with ``kappa = N**beta`` and full readout."""
    return _LEADING_EXPONENTS[model](beta)


def polylog_power(model: ComplexityModel) -> int:
    """Power of ``ln N`` riding on the leading term (full readout, ``beta > 0``)."""
    return _POLYLOG_POWERS[model]


CostFunction = Callable[[ComplexityParams], float]


def _as_cost_function(model: Union[ComplexityModel, CostFunction]) -> CostFunction:
    if isinstance(model, ComplexityModel):
        return lambda p: eval_model(model, p)
    return model


def geometric_grid(n_min: float, n_max: float, n_steps: int) -> List[int]:
    """Ascending, de-duplicated integer grid spaced geometrically."""
    if n_steps < 1:
        raise DomainError(f"n_steps must be >= 1, got {n_steps!r}")
    if not 1 <= n_min <= n_max:
        raise DomainError(f"need 1 <= n_min <= n_max, got {n_min!r}, {n_max!r}")
    if n_steps == 1:
        return [int(round(n_min))]
    grid = np.unique(np.rint(np.geomspace(n_min, n_max, n_steps)).astype(np.int64))
    return [int(n) for n in grid]


def curve_point(model: Union[ComplexityModel, CostFunction], p: ComplexityParams) -> CurvePoint:
    """Cost of ``model`` at ``p``, refused when it is not positive."""
    cost = _as_cost_function(model)(p)
    if not cost > 0:
        raise DomainError(
            f"cost {cost!r} at N={p.n:g}, kappa={p.effective_kappa:g}, eps={p.eps:g} is not "
            "positive (the formula has a vanishing log factor there)"
        )
    return CurvePoint(p.n, cost)


def model_curve(
    model: Union[ComplexityModel, CostFunction],
    template: ComplexityParams,
    ns: Iterable[float],
) -> List[CurvePoint]:
    return [curve_point(model, template.at(n)) for n in ns]


def crossover(
    model_a: Union[ComplexityModel, CostFunction],
    model_b: Union[ComplexityModel, CostFunction],
    p_template: ComplexityParams,
    n_range: Sequence[float],
) -> Optional[float]:
    """
    Smallest ``N`` in ``n_range`` where ``model_b`` is strictly cheaper than
    ``model_a``; ``None`` if there is no such point.

    Models are :class:`ComplexityModel` members or callables taking a
    :class:`ComplexityParams`. Tie kappa to N through ``p_template.beta``.
    """
    ns = list(n_range)
    if not ns:
        raise DomainError("crossover needs a non-empty range of N")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("n_range must be strictly ascending")
    cost_a = _as_cost_function(model_a)
    cost_b = _as_cost_function(model_b)
    for n in ns:
        p = p_template.at(n)
        if cost_b(p) < cost_a(p):
            return n
    return None


def _check_pqa_inputs(**values):
    for name, value in values.items():
        check_positive(name, value)


def pqa_ratio(variant: PQAVariant, d, kappa, n, s) -> float:
    """
    Left side over right side of the advantage condition.

    HHL: ``D * kappa**1.5 * s / N``; VTAA: ``D * sqrt(kappa) * ln(kappa)**3 * s / N``.
    """
    _check_pqa_inputs(d=d, kappa=kappa, n=n, s=s)
    variant = PQAVariant(variant)
    if variant is PQAVariant.HHL:
        return d * kappa**1.5 * s / n
    return d * math.sqrt(kappa) * math.log(kappa) ** 3 * s / n


def pqa_condition(
    variant: PQAVariant, d, kappa, n, s, threshold: float = DEFAULT_PQA_THRESHOLD
) -> Tuple[float, bool]:
    """
    Evaluate the "much less than" advantage condition as ``ratio < threshold``.

    The condition compares leading terms with the error factors dropped.
    At a common ``eps`` it implies ``HHL_OPTIMISTIC < CG`` whenever
    ``eps**2 * ln(1 / eps) >= threshold``.
    """
    check_positive("threshold", threshold)
    ratio = pqa_ratio(variant, d, kappa, n, s)
    return ratio, ratio < threshold


def kappa_upper_bound(
    n, d, s, variant: PQAVariant = PQAVariant.HHL, threshold: float = DEFAULT_PQA_THRESHOLD
) -> float:
    """
    Largest kappa with ``pqa_ratio == threshold`` at the given N, D and s.

    Closed form for HHL. For VTAA, ``sqrt(kappa) * ln(kappa)**3`` is solved
    by bracketing root finding on ``ln(kappa)`` over ``(1, 1e15)``.

    Raises
    ------
    DomainError
        If the VTAA target lies beyond the bracket.
    """
    _check_pqa_inputs(n=n, d=d, s=s, threshold=threshold)
    target = threshold * n / (d * s)
    variant = PQAVariant(variant)
    if variant is PQAVariant.HHL:
        return target ** (2.0 / 3.0)

    upper = math.log(VTAA_KAPPA_CEILING)

    def residual(u):
        return math.exp(u / 2) * u**3 - target

    if residual(upper) < 0:
        raise DomainError(
            f"no kappa in (1, {VTAA_KAPPA_CEILING:g}) reaches the VTAA threshold "
            f"for N={n}, D={d}, s={s}"
        )
    u = scipy.optimize.brentq(residual, 0.0, upper, xtol=1e-14, rtol=1e-14)
    return math.exp(u)


def fit_exponent(points: Sequence[CurvePoint], log_power: int = 0) -> Tuple[float, float]:
    """
    Least-squares slope of ``ln(cost)`` against ``ln(n)``.

    ``log_power`` divides each cost by ``ln(n) ** log_power`` first, which
    strips a known polylogarithmic factor.

    Returns
    -------
    beta, r_squared
    """
    if len(points) < 3:
        raise DomainError(f"need at least 3 points to fit an exponent, got {len(points)}")
    n = np.array([float(p[0]) for p in points])
    cost = np.array([float(p[1]) for p in points])
    if np.any(n <= 0) or np.any(cost <= 0):
        raise DomainError("fit_exponent needs positive n and cost values")
    if log_power:
        if np.any(n <= 1):
            raise DomainError("stripping ln(n) factors needs n > 1")
        cost = cost / np.log(n) ** log_power
    x, y = np.log(n), np.log(cost)
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r_squared
