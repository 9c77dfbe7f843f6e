"""Physical scenario model for a two-user wireless powered network.

One hybrid access point broadcasts energy downlink; two energy-harvesting
users transmit uplink data over TDMA, with the near user optionally relaying
the far user's message.  This module holds the scenario types (geometry,
channel gains, system constants), the block-time allocation variable, and the
bookkeeping operations between them: channel gains from geometry, harvested
energy, effective SNR coefficients, power recovery from an allocation, and
feasibility checking.

All computation is in SI units (watts, seconds, Hz).  Rates elsewhere are in
bit/s/Hz over the normalized unit block; bandwidth is applied only when
reporting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .rates import RhoParams


class InvalidGeometryError(ValueError):
    """Geometry fields violate the placement assumptions."""


class InvalidParamsError(ValueError):
    """System parameters out of their physical range."""


@dataclass(frozen=True, slots=True)
class Geometry:
    """Line placement: access point, near user at kappa*d10, far user at d10.

    ``d20 = kappa * d10`` and ``d12 = (1 - kappa) * d10``, so both users'
    links are never longer than the far user's direct link.
    """

    d10: float                  # access point to far user, meters
    kappa: float                # near-user position as a fraction of d10, in (0, 1)
    alpha: float                # path-loss exponent
    ref_loss_db: float = 30.0   # attenuation at 1 m reference distance, dB

    def __post_init__(self) -> None:
        if not (self.d10 > 0 and math.isfinite(self.d10)):
            raise InvalidGeometryError(f"d10 must be positive, got {self.d10}")
        if not 0 < self.kappa < 1:
            raise InvalidGeometryError(f"kappa must be in (0, 1), got {self.kappa}")
        if not self.alpha >= 1:
            raise InvalidGeometryError(f"alpha must be >= 1, got {self.alpha}")

    @property
    def d20(self) -> float:
        return self.kappa * self.d10

    @property
    def d12(self) -> float:
        return (1.0 - self.kappa) * self.d10


@dataclass(frozen=True, slots=True)
class ChannelGains:
    """Linear power gains of the three links."""

    h10: float  # far user <-> access point
    h20: float  # near user <-> access point
    h12: float  # far user -> near user

    def __post_init__(self) -> None:
        for name in ("h10", "h20", "h12"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParamsError(f"{name} must be positive and finite, got {v}")


@dataclass(frozen=True, slots=True)
class FadingDraw:
    """Multiplicative short-term fading factors; all ones in deterministic mode."""

    theta10: float = 1.0
    theta20: float = 1.0
    theta12: float = 1.0

    def __post_init__(self) -> None:
        for name in ("theta10", "theta20", "theta12"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParamsError(f"{name} must be >= 0 and finite, got {v}")


@dataclass(frozen=True, slots=True)
class SystemParams:
    """Full physical description of one quasi-static block."""

    p0: float             # access point transmit power, W
    sigma0_sq: float      # noise power at the access point receiver, W
    sigma2_sq: float      # noise power at the near user's receiver, W
    bandwidth_hz: float
    eta1: float           # fraction of harvested energy the far user spends on uplink
    eta2: float
    zeta1: float          # energy conversion efficiency, far user
    zeta2: float
    gains: ChannelGains

    def __post_init__(self) -> None:
        for name in ("p0", "sigma0_sq", "sigma2_sq", "bandwidth_hz"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise InvalidParamsError(f"{name} must be positive, got {v}")
        for name in ("eta1", "eta2", "zeta1", "zeta2"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise InvalidParamsError(f"{name} must be in (0, 1], got {v}")


@dataclass(frozen=True, slots=True)
class Allocation:
    """Block-time split: downlink charging, three uplink slots, and the two
    energy-equivalent time shares of the near user's harvested budget.

    Instances may be infeasible; use :func:`validate_allocation` to check.
    """

    tau0: float   # downlink energy transfer
    tau1: float   # far user's own uplink slot
    tau21: float  # near user relaying the far user's message
    tau22: float  # near user's own uplink slot
    t21: float    # share of the charging slot whose energy feeds relaying
    t22: float    # share feeding the near user's own transmission

    def tau_sum(self) -> float:
        return self.tau0 + self.tau1 + self.tau21 + self.tau22

    def as_tuple(self) -> tuple[float, float, float, float, float, float]:
        return (self.tau0, self.tau1, self.tau21, self.tau22, self.t21, self.t22)


@dataclass(frozen=True, slots=True)
class PowerAllocation:
    """Average uplink transmit powers implied by an allocation, watts."""

    p1: float
    p21: float
    p22: float


@dataclass(frozen=True, slots=True)
class FeasibilityReport:
    """Per-constraint violation magnitudes for an allocation."""

    violations: dict[str, float]
    tol: float

    @property
    def ok(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())

    @property
    def max_violation(self) -> float:
        return max(self.violations.values())


def channel_gains(geometry: Geometry, fading: FadingDraw = FadingDraw()) -> ChannelGains:
    """Distance-law channel gains h = 10^(-ref_loss/10) * theta * d^(-alpha)."""
    scale = 10.0 ** (-geometry.ref_loss_db / 10.0)

    def gain(theta: float, d: float) -> float:
        if d <= 0:
            raise InvalidGeometryError(f"non-positive link distance {d}")
        return scale * theta * d ** (-geometry.alpha)

    return ChannelGains(
        h10=gain(fading.theta10, geometry.d10),
        h20=gain(fading.theta20, geometry.d20),
        h12=gain(fading.theta12, geometry.d12),
    )


def harvested_energy(params: SystemParams, tau0: float) -> tuple[float, float]:
    """Energy each user harvests during the charging slot (unit block time)."""
    if not 0 <= tau0 <= 1:
        raise ValueError(f"tau0 must be in [0, 1], got {tau0}")
    e1 = params.zeta1 * params.p0 * params.gains.h10 * tau0
    e2 = params.zeta2 * params.p0 * params.gains.h20 * tau0
    return e1, e2


def rho_params(params: SystemParams) -> RhoParams:
    """Effective SNR coefficients absorbing channels, efficiencies, power and noise.

    These three constants are all the optimizer needs:

    * ``rho1_10`` drives the far user's direct uplink,
    * ``rho1_12`` the far-to-near hop,
    * ``rho2`` both transmissions of the near user.
    """
    g = params.gains
    k1 = params.eta1 * params.zeta1 * params.p0
    k2 = params.eta2 * params.zeta2 * params.p0
    return RhoParams(
        rho1_10=g.h10 * g.h10 * k1 / params.sigma0_sq,
        rho1_12=g.h10 * g.h12 * k1 / params.sigma2_sq,
        rho2=g.h20 * g.h20 * k2 / params.sigma0_sq,
    )


def recover_powers(params: SystemParams, alloc: Allocation) -> PowerAllocation:
    """Average uplink powers implied by the time allocation.

    Zero-duration slots map to zero power.  When the near user's energy budget
    is fully assigned (``t21 + t22 == tau0``), the recovered powers exhaust
    the harvested uplink energy exactly.
    """
    g = params.gains
    k1 = params.eta1 * params.zeta1 * params.p0 * g.h10
    k2 = params.eta2 * params.zeta2 * params.p0 * g.h20
    p1 = k1 * alloc.tau0 / alloc.tau1 if alloc.tau1 > 0 else 0.0
    p21 = k2 * alloc.t21 / alloc.tau21 if alloc.tau21 > 0 else 0.0
    p22 = k2 * alloc.t22 / alloc.tau22 if alloc.tau22 > 0 else 0.0
    return PowerAllocation(p1=p1, p21=p21, p22=p22)


def validate_allocation(alloc: Allocation, tol: float = 1e-9) -> FeasibilityReport:
    """Report the violation magnitude of every feasibility constraint."""
    nonneg = {
        f"nonneg_{name}": max(0.0, -value)
        for name, value in zip(
            ("tau0", "tau1", "tau21", "tau22", "t21", "t22"), alloc.as_tuple()
        )
    }
    violations = dict(nonneg)
    violations["time_budget"] = max(0.0, alloc.tau_sum() - 1.0)
    violations["energy_budget"] = max(0.0, alloc.t21 + alloc.t22 - alloc.tau0)
    return FeasibilityReport(violations=violations, tol=tol)
