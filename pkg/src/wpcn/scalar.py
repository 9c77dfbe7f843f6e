"""Monotone scalar equations behind the dual solver's closed forms.

The stationarity system of the uplink allocation problem reduces to three
kinds of scalar solves, all built on the strictly increasing curvature
function ``f(z) = ln(1+z) - z/(1+z)``:

* inverting ``f`` at a given level,
* the weighted two-term equation ``c10*f(r10*z) + c12*f(r12*z) = target``,
* the quadratic in ``z`` obtained from the charging-time stationarity.

Everything here works on plain floats; typed wrappers live in the solver
module.
"""

from __future__ import annotations

import math

LN2 = math.log(2.0)

# f(z) overflows float64 once z ~ exp(709); treat larger targets as +inf.
_F_TARGET_MAX = 709.0


class NoRootError(ValueError):
    """The scalar equation has no root for these coefficients."""


def f_curv(z: float) -> float:
    """``ln(1+z) - z/(1+z)``: zero at zero, strictly increasing, unbounded.

    A series is used for small ``z`` where the direct difference cancels.
    """
    if z < 0:
        raise ValueError(f"f requires z >= 0, got {z}")
    if math.isinf(z):
        return math.inf
    if z < 1e-4:
        # sum_{k>=2} (-1)^k (k-1)/k z^k, truncation error < z^6
        return z * z * (0.5 + z * (-2.0 / 3.0 + z * (0.75 - z * 0.8)))
    return math.log1p(z) - z / (1.0 + z)


def f_curv_prime(z: float) -> float:
    """Derivative ``z / (1+z)^2`` of :func:`f_curv`."""
    u = 1.0 + z
    return z / (u * u)


def invert_f(target: float) -> float:
    """Solve ``f(z) = target`` for ``z >= 0``.

    Returns 0 at target 0 and ``inf`` for targets beyond the float64 range of
    ``f``.  Accuracy: ``|f(z) - target| <= 1e-12 * max(1, target)``.
    """
    if math.isnan(target) or target < 0:
        raise ValueError(f"target must be >= 0, got {target}")
    if math.isinf(target):
        raise NoRootError("target +inf is out of range")
    if target == 0.0:
        return 0.0
    if target > _F_TARGET_MAX:
        return math.inf

    # Initial guess from the two asymptotics f ~ z^2/2 and f ~ ln z - 1.
    z = math.sqrt(2.0 * target) if target < 0.5 else math.exp(target + 1.0) - 1.0

    # Safeguarded Newton on the strictly increasing f.
    lo, hi = 0.0, math.inf
    tol = 1e-13 * max(1.0, target)
    for _ in range(200):
        err = f_curv(z) - target
        if abs(err) <= tol:
            return z
        if err > 0:
            hi = z
        else:
            lo = z
        step = err / f_curv_prime(z)
        z_new = z - step
        if not (lo < z_new < hi):
            z_new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * z + 1.0
        z = z_new
    return z


def two_term_curv_root(c10: float, c12: float, r10: float, r12: float,
                       target: float) -> float:
    """Root of ``c10*f(r10*z) + c12*f(r12*z) = target`` over ``z >= 0``.

    The left side increases strictly from 0, so the root exists and is unique
    for any ``target >= 0`` provided some term actually grows.
    """
    if target < 0:
        raise ValueError(f"target must be >= 0, got {target}")
    if target == 0.0:
        return 0.0
    pull10 = c10 if r10 > 0 else 0.0
    pull12 = c12 if r12 > 0 else 0.0
    if pull10 <= 0 and pull12 <= 0:
        raise NoRootError("both coefficients vanish; the equation has no root")

    def g(z: float) -> float:
        total = -target
        if pull10 > 0:
            total += c10 * f_curv(r10 * z)
        if pull12 > 0:
            total += c12 * f_curv(r12 * z)
        return total

    def g_prime(z: float) -> float:
        total = 0.0
        if pull10 > 0:
            total += c10 * r10 * f_curv_prime(r10 * z)
        if pull12 > 0:
            total += c12 * r12 * f_curv_prime(r12 * z)
        return total

    # Bracket by doubling, then safeguarded Newton.
    hi = 1.0
    for _ in range(1100):
        if g(hi) >= 0:
            break
        hi *= 2.0
    else:  # pragma: no cover - growth of f makes this unreachable
        return math.inf
    lo = 0.0
    z = 0.5 * hi
    tol = 1e-13 * max(1.0, target)
    for _ in range(200):
        err = g(z)
        if abs(err) <= tol:
            return z
        if err > 0:
            hi = z
        else:
            lo = z
        gp = g_prime(z)
        z_new = z - err / gp if gp > 0 else 0.5 * (lo + hi)
        if not (lo < z_new < hi):
            z_new = 0.5 * (lo + hi)
        z = z_new
    return z


def charging_stationary_ratio(l1: float, l2: float, c10: float, c12: float,
                              r10: float, r12: float) -> float:
    """Argmax over ``z >= 0`` of the per-unit charging-slot value.

    Maximizes ``c10*log2(1+r10*z) + c12*log2(1+r12*z) - (l1-l2)*z`` by the
    stationarity quadratic; returns ``inf`` when the value grows without
    bound (``l1 <= l2`` with positive rate pull).  Root pairing is the
    numerically stable one, which also covers the degenerate single-log case
    where the quadratic coefficient vanishes.
    """
    pull = c10 * r10 + c12 * r12
    k = (l1 - l2) * LN2
    if pull <= 0:
        return 0.0 if k > 0 else math.inf
    if k <= 0:
        return math.inf
    c = k - c10 * r10 - c12 * r12
    if c >= 0:
        # derivative at 0 already non-positive
        return 0.0
    a = k * r10 * r12
    b = k * (r10 + r12) - (c10 + c12) * r10 * r12
    if a == 0.0:
        # one of the links is absent: linear stationarity
        return -c / b if b > 0 else math.inf
    disc = b * b - 4.0 * a * c
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    root1 = q / a
    root2 = c / q if q != 0.0 else -math.inf
    return max(root1, root2)
