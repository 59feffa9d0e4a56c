"""
Closed-form right-hand sides of the correlation and commutator bounds.

All functions are pure scalar evaluations on a BoundParams instance; the
exponential envelope is always formed with expm1 so both sides of the
acceptance comparisons stay meaningful near t = 0.
"""

import logging
import math
from typing import Optional

from app.domain.models import BoundParams, SweepLayout


logger = logging.getLogger(__name__)


def _check_time(t: float) -> None:
    if not t >= 0:
        raise ValueError(f"time must be non-negative, got {t}")


# ============================================================================
# Bound Right-Hand Sides
# ============================================================================

def theorem1_rhs(params: BoundParams, t: float) -> float:
    """alpha / (c^2 N) * L * (exp(Vbig t) - 1)"""
    _check_time(t)
    prefactor = params.alpha / (params.c ** 2 * params.N)
    return prefactor * params.opnorm_product * math.expm1(params.Vbig * t)


def theorem2_rhs(params: BoundParams, layout: SweepLayout, t: float) -> float:
    """L * (m1 + m2)(n1 + n2) / (3 c N) * (exp(Vcal t) - 1)"""
    _check_time(t)
    slots = (layout.m1 + layout.m2) * (layout.n1 + layout.n2)
    prefactor = slots / (3.0 * params.c * params.N)
    return prefactor * params.opnorm_product * math.expm1(params.Vcal * t)


def symmetric_lr_rhs(params: BoundParams, n: int, m: int, t: float) -> float:
    """Commutator bound for n1 = n2 = n, m1 = m2 = m: 4mn / (3cN) * L * (exp(Vcal t) - 1)."""
    _check_time(t)
    return 4.0 * m * n / (3.0 * params.c * params.N) * params.opnorm_product * math.expm1(params.Vcal * t)


def validity_horizon(params: BoundParams, epsilon: float) -> float:
    """Largest time (1 - eps) log(N) / Vbig at which theorem1_rhs is still O(N^-eps)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    if params.Vbig == 0:
        return math.inf
    return (1.0 - epsilon) * math.log(params.N) / params.Vbig


# ============================================================================
# Trivial Bound
# ============================================================================

def trivial_bound(params: BoundParams) -> float:
    """Both left-hand sides never exceed twice the product of the operator norms."""
    return 2.0 * params.opnorm_product


def effective_bound(rhs: float, params: BoundParams) -> float:
    return min(rhs, trivial_bound(params))


def crossover_time(params: BoundParams, layout: Optional[SweepLayout] = None) -> float:
    """
    Time at which a bound first exceeds the trivial bound.

    Without a layout this is the correlation bound, with one the commutator bound.
    Returns inf when the bound never grows (zero prefactor or zero rate).
    """
    if layout is None:
        prefactor = params.alpha / (params.c ** 2 * params.N)
        rate = params.Vbig
    else:
        slots = (layout.m1 + layout.m2) * (layout.n1 + layout.n2)
        prefactor = slots / (3.0 * params.c * params.N)
        rate = params.Vcal

    if prefactor == 0 or rate == 0:
        return math.inf
    # L cancels: prefactor * L * expm1(rate t) = 2 L
    return math.log1p(2.0 / prefactor) / rate


def bound_ratio(measured: float, bound: float, floor: float = 1e-12) -> float:
    """measured / bound; 0 when both sides vanish, inf when only the bound does."""
    if bound <= floor:
        return 0.0 if measured <= floor else math.inf
    return measured / bound
