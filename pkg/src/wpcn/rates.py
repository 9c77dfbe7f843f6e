"""Achievable-rate expressions for the two-user cooperative uplink.

Every rate in the network is an instance of one concave template: the
time-shared Shannon rate ``x1 * log2(1 + a * x2 / x1)`` extended by zero at
``x1 = 0``.  This module evaluates the four link rates both from the pure
time parameterization (charging time driving transmit energy) and from the
raw time/power parameterization, and exposes the curvature identity used to
verify joint concavity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, types only
    from .model import Allocation, PowerAllocation, SystemParams

_LN2 = math.log(2.0)

# Below this the time share is treated as exactly zero: keeps x2/x1 from
# overflowing while preserving the continuous extension.
_X1_FLOOR = 1e-300


class RateDomainError(ValueError):
    """Inputs outside the domain of a rate expression."""


@dataclass(frozen=True, slots=True)
class RhoParams:
    """Effective SNR coefficients of the three links (dimensionless)."""

    rho1_10: float  # far user -> access point, direct
    rho1_12: float  # far user -> near user hop
    rho2: float     # near user -> access point

    def __post_init__(self) -> None:
        for name in ("rho1_10", "rho1_12", "rho2"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise RateDomainError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True, slots=True)
class RateBundle:
    """All link rates of one block, bit/s/Hz over the unit block."""

    r1_10: float    # far user direct
    r1_12: float    # far user to near user
    r1_20: float    # relayed forwarding by the near user
    r2: float       # near user's own data
    r1_total: float  # decode-and-forward rate of the far user
    r_bar: float     # min-form auxiliary rate (equals r1_total)


def perspective_rate(x1: float, x2: float, alpha: float) -> float:
    """Time-shared rate ``x1 * log2(1 + alpha * x2 / x1)``, zero at ``x1 = 0``.

    Evaluated through ``log1p`` on the natural log for accuracy when
    ``alpha * x2 / x1`` is tiny.
    """
    if x1 < 0 or x2 < 0 or alpha < 0:
        raise RateDomainError(f"negative input: x1={x1}, x2={x2}, alpha={alpha}")
    if x1 <= _X1_FLOOR:
        return 0.0
    q = alpha * x2 / x1
    if math.isinf(q):
        # x1 positive but far below alpha*x2: log2(q) form avoids the overflow
        return x1 * (math.log2(alpha * x2) - math.log2(x1))
    return x1 * math.log1p(q) / _LN2


def rates(t: "Allocation", rho: RhoParams, tol: float = 1e-9) -> RateBundle:
    """Link rates from the time-domain allocation.

    Raises
    ------
    RateDomainError
        If the allocation violates feasibility by more than ``tol``.
    """
    from .model import validate_allocation

    report = validate_allocation(t, tol=tol)
    if not report.ok:
        raise RateDomainError(f"infeasible allocation: {report.violations}")
    r1_10 = perspective_rate(t.tau1, t.tau0, rho.rho1_10)
    r1_12 = perspective_rate(t.tau1, t.tau0, rho.rho1_12)
    r1_20 = perspective_rate(t.tau21, t.t21, rho.rho2)
    r2 = perspective_rate(t.tau22, t.t22, rho.rho2)
    r1_total = min(r1_10 + r1_20, r1_12)
    return RateBundle(r1_10=r1_10, r1_12=r1_12, r1_20=r1_20, r2=r2,
                      r1_total=r1_total, r_bar=r1_total)


def rates_raw(tau: Sequence[float], p: "PowerAllocation",
              params: "SystemParams") -> RateBundle:
    """Link rates from slot durations and average transmit powers.

    ``tau`` is ``(tau0, tau1, tau21, tau22)``.  Agrees with :func:`rates`
    after the exact substitution between transmit powers and energy shares.
    """
    tau0, tau1, tau21, tau22 = tau
    g = params.gains
    r1_10 = perspective_rate(tau1, tau1 * p.p1 * g.h10 / params.sigma0_sq, 1.0)
    r1_12 = perspective_rate(tau1, tau1 * p.p1 * g.h12 / params.sigma2_sq, 1.0)
    r1_20 = perspective_rate(tau21, tau21 * p.p21 * g.h20 / params.sigma0_sq, 1.0)
    r2 = perspective_rate(tau22, tau22 * p.p22 * g.h20 / params.sigma0_sq, 1.0)
    r1_total = min(r1_10 + r1_20, r1_12)
    return RateBundle(r1_10=r1_10, r1_12=r1_12, r1_20=r1_20, r2=r2,
                      r1_total=r1_total, r_bar=r1_total)


def wsr_objective(t: "Allocation", rho: RhoParams,
                  weights: tuple[float, float]) -> float:
    """Weighted sum rate ``w1 * min-form + w2 * r2``."""
    w1, w2 = weights
    if w1 < 0 or w2 < 0:
        raise RateDomainError(f"weights must be >= 0, got {weights}")
    b = rates(t, rho)
    return w1 * b.r1_total + w2 * b.r2


def hessian_quadratic_form(x1: float, x2: float, alpha: float,
                           v: Sequence[float]) -> float:
    """Quadratic form of the perspective rate's Hessian along direction ``v``.

    Equals ``-(alpha^2 / (x1 * (1 + alpha*x2/x1)^2)) * ((x2/x1)*v1 - v2)^2``,
    which is never positive: the radial direction ``v || (x1, x2)`` spans the
    null space, every other direction curves down.
    """
    if x1 <= 0:
        raise RateDomainError("Hessian undefined at x1 <= 0")
    if x2 < 0 or alpha < 0:
        raise RateDomainError(f"negative input: x2={x2}, alpha={alpha}")
    v1, v2 = v
    z = x2 / x1
    denom = x1 * (1.0 + alpha * z) ** 2
    return -(alpha * alpha / denom) * (z * v1 - v2) ** 2
