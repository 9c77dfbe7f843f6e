"""Numerical engine for the dual decomposition solver.

The relaxed objective separates into three two-variable blocks, each a
degree-1 homogeneous concave function (a perspective rate minus linear time
and energy prices).  Over the nonnegative orthant such a block's supremum is
0 or +inf, so the dual is evaluated over the unit box [0, 1]^6 instead; the
box is redundant for the primal (every feasible allocation already lies in
it) and keeps every inner maximization finite with a closed-form solution on
the box boundary.

Built on that evaluation:

* an ellipsoid search over the multipliers (deep feasibility cuts, central
  objective cuts),
* structured primal recovery that rebuilds a feasible allocation from the
  stationary slot ratios with the budget constraints tight,
* damped-Newton refinement of the full stationarity system for the active
  pattern, which drives KKT residuals and the duality gap to roundoff.

Everything here works on plain floats / tuples; the typed public surface
lives in :mod:`wpcn.solver` and :mod:`wpcn.baseline`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scalar import (
    LN2,
    NoRootError,
    charging_stationary_ratio,
    f_curv,
    invert_f,
    two_term_curv_root,
)

_INF = math.inf


def _lg1p(x: float) -> float:
    return math.log1p(x) / LN2


def persp(x1: float, x2: float, a: float) -> float:
    """Unchecked perspective rate for engine-internal use."""
    if x1 <= 1e-300:
        return 0.0
    q = a * x2 / x1
    if math.isinf(q):
        return x1 * (math.log2(a * x2) - math.log2(x1))
    return x1 * math.log1p(q) / LN2


# ---------------------------------------------------------------------------
# block maximization over the unit box
# ---------------------------------------------------------------------------

def block1_box_max(l1: float, l2: float, c10: float, c12: float,
                   r10: float, r12: float) -> tuple[float, float, float]:
    """Max of the charging/far-user block over (tau0, tau1) in [0, 1]^2.

    Block value: ``c10*R10 + c12*R12 - l1*(tau0 + tau1) + l2*tau0`` with
    ``R1x = tau1 * log2(1 + r1x * tau0 / tau1)``.  Homogeneous of degree 1,
    so the maximum is at the origin or on the two outer edges of the box;
    each edge is a 1-D concave problem solved in closed form.

    Returns ``(value, tau0, tau1)`` with value >= 0 (0 means the block is
    inactive).
    """
    best_v, best_t0, best_t1 = 0.0, 0.0, 0.0

    # edge tau1 = 1, tau0 = z in [0, 1]
    z = charging_stationary_ratio(l1, l2, c10, c12, r10, r12)
    z = min(max(z, 0.0), 1.0)
    v = c10 * _lg1p(r10 * z) + c12 * _lg1p(r12 * z) - l1 * (1.0 + z) + l2 * z
    if v > best_v:
        best_v, best_t0, best_t1 = v, z, 1.0

    # edge tau0 = 1, tau1 = w in [0, 1]; stationarity is the curvature equation
    try:
        zt = two_term_curv_root(c10, c12, r10, r12, l1 * LN2)
    except NoRootError:
        zt = _INF
    if math.isinf(zt):
        w = 0.0
        v = l2 - l1
    else:
        w = 1.0 if zt <= 1.0 else 1.0 / zt
        v = (c10 * w * _lg1p(r10 / w) + c12 * w * _lg1p(r12 / w)
             - l1 * (1.0 + w) + l2)
    if v > best_v:
        best_v, best_t0, best_t1 = v, 1.0, w

    return best_v, best_t0, best_t1


def block2_box_max(l1: float, l2: float, coef: float,
                   rho2: float) -> tuple[float, float, float]:
    """Max of one near-user block over (tau, tshare) in [0, 1]^2.

    Block value: ``coef * tau * log2(1 + rho2 * tshare / tau) - l1*tau -
    l2*tshare``.  Returns ``(value, tau, tshare)`` with value >= 0.
    """
    if coef <= 0.0 or rho2 <= 0.0:
        return 0.0, 0.0, 0.0
    best_v, best_tau, best_t = 0.0, 0.0, 0.0

    # edge tau = 1, tshare = beta in [0, 1]
    beta = coef / (l2 * LN2) - 1.0 / rho2 if l2 > 0 else _INF
    beta = min(max(beta, 0.0), 1.0)
    v = coef * _lg1p(rho2 * beta) - l1 - l2 * beta
    if v > best_v:
        best_v, best_tau, best_t = v, 1.0, beta

    # edge tshare = 1, tau = u in [0, 1]; u = rho2 / z at the stationary SNR z
    z = invert_f(min(l1 * LN2 / coef, 1e300)) if l1 > 0 else 0.0
    if math.isinf(z):
        u, v = 0.0, -l2
    else:
        u = 1.0 if z <= rho2 else rho2 / z
        v = coef * u * _lg1p(rho2 / u) - l1 * u - l2
    if v > best_v:
        best_v, best_tau, best_t = v, u, 1.0

    return best_v, best_tau, best_t


# ---------------------------------------------------------------------------
# dual evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class DualEval:
    """One evaluation of the box-bounded dual."""

    value: float
    t6: tuple[float, float, float, float, float, float]
    block_values: tuple[float, float, float]


def dual_eval(lams: tuple[float, float, float, float],
              rho3: tuple[float, float, float],
              weights: tuple[float, float], relay: bool) -> DualEval:
    """Evaluate the dual at multipliers ``lams`` and return a maximizer.

    The epigraph variable's coefficient is nonpositive on the dual-feasible
    set, so its maximizing value is 0 and only the allocation blocks remain.
    """
    l1, l2, l3, l4 = lams
    r10, r12, rho2 = rho3
    w1, w2 = weights
    if relay:
        v1, tau0, tau1 = block1_box_max(l1, l2, l3, l4, r10, r12)
        v21, tau21, t21 = block2_box_max(l1, l2, l3, rho2)
    else:
        v1, tau0, tau1 = block1_box_max(l1, l2, w1, 0.0, r10, 0.0)
        v21, tau21, t21 = 0.0, 0.0, 0.0
    v22, tau22, t22 = block2_box_max(l1, l2, w2, rho2)
    return DualEval(value=l1 + v1 + v21 + v22,
                    t6=(tau0, tau1, tau21, tau22, t21, t22),
                    block_values=(v1, v21, v22))


def constraint_violations(t6, rho3) -> tuple[float, float, float, float]:
    """Signed constraint values at an inner maximizer (epigraph variable 0).

    Componentwise: time budget, energy budget, and the two decode-and-forward
    rate couplings.  The negatives of these form a subgradient of the dual.
    """
    tau0, tau1, tau21, tau22, t21, t22 = t6
    r10, r12, rho2 = rho3
    a110 = persp(tau1, tau0, r10)
    a112 = persp(tau1, tau0, r12)
    a120 = persp(tau21, t21, rho2)
    return (tau0 + tau1 + tau21 + tau22 - 1.0,
            t21 + t22 - tau0,
            -(a110 + a120),
            -a112)


def wsr_value(t6, rho3, weights, relay: bool) -> float:
    """Primal objective at an allocation 6-tuple (no feasibility check)."""
    tau0, tau1, tau21, tau22, t21, t22 = t6
    r10, r12, rho2 = rho3
    w1, w2 = weights
    r2 = persp(tau22, t22, rho2)
    if relay:
        r1 = min(persp(tau1, tau0, r10) + persp(tau21, t21, rho2),
                 persp(tau1, tau0, r12))
    else:
        r1 = persp(tau1, tau0, r10)
    return w1 * r1 + w2 * r2


# ---------------------------------------------------------------------------
# structured primal recovery
# ---------------------------------------------------------------------------

def _golden_max(fun, lo: float, hi: float, tol: float = 1e-13) -> tuple[float, float]:
    """Golden-section maximization of a unimodal function on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(200):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    xm = 0.5 * (a + b)
    return xm, fun(xm)


def _assemble(z1: float, s1: float, u: float, z21: float, s22: float,
              z22: float, rho2: float):
    t6 = (s1 * z1, s1, u, s22,
          u * z21 / rho2 if z21 > 0 else 0.0,
          s22 * z22 / rho2 if z22 > 0 else 0.0)
    if any(x < -1e-12 for x in t6):
        return None
    t6 = tuple(max(x, 0.0) for x in t6)
    total = t6[0] + t6[1] + t6[2] + t6[3]
    if total > 1.0:
        t6 = tuple(x / total for x in t6)
    return t6


def recover_primal(lams, rho3, weights, relay: bool):
    """Rebuild a feasible allocation from the stationary slot ratios.

    Uses the tightness structure of the optimum: full time budget, full
    near-user energy budget.  The remaining degree of freedom (how much of
    the near user's slot goes to relaying) is resolved by a 1-D concave
    search on the true objective, so the result is feasible by construction
    and optimal once the multipliers are.

    Returns ``(t6, wsr)`` or ``None`` when no finite recovery exists at these
    multipliers.
    """
    l1, l2, l3, l4 = lams
    r10, r12, rho2 = rho3
    w1, w2 = weights
    if l2 <= 0.0 or rho2 <= 0.0:
        return None
    c10, c12 = (l3, l4) if relay else (w1, 0.0)
    z1 = charging_stationary_ratio(l1, l2, c10, c12, r10, r12 if relay else 0.0)

    z22 = w2 * rho2 / (l2 * LN2) - 1.0
    if z22 <= 0.0:
        z22 = 0.0
    z21 = l3 * rho2 / (l2 * LN2) - 1.0 if relay else 0.0
    if z21 <= 0.0:
        z21 = 0.0

    best = None

    def consider(t6):
        nonlocal best
        if t6 is None:
            return
        v = wsr_value(t6, rho3, weights, relay)
        if best is None or v > best[1]:
            best = (t6, v)

    if z22 > 0.0:
        # near user alone: charging plus its own slot, far user idle
        s0 = 1.0 / (1.0 + rho2 / z22)
        consider((s0, 0.0, 0.0, 1.0 - s0, 0.0, s0))

    if not (z1 > 0.0 and math.isfinite(z1)):
        return best

    if z22 > 0.0 and z21 > 0.0:
        # family over u = relay slot length; time and energy stay tight
        denom = (1.0 + z1) + z1 * rho2 / z22
        u_hi = z1 * rho2 / (z21 * (1.0 + z1) + z1 * rho2)

        def build(u):
            s1 = (1.0 - u * (1.0 - z21 / z22)) / denom
            s22 = (s1 * z1 * rho2 - u * z21) / z22
            return _assemble(z1, s1, u, z21, s22, z22, rho2)

        def score(u):
            t6 = build(u)
            return -_INF if t6 is None else wsr_value(t6, rho3, weights, relay)

        u_star, _ = _golden_max(score, 0.0, u_hi)
        for u in (0.0, u_star, u_hi):
            consider(build(u))
    elif z22 > 0.0:
        # no relaying: all harvested energy feeds the near user's own data
        s1 = 1.0 / ((1.0 + z1) + z1 * rho2 / z22)
        s22 = s1 * z1 * rho2 / z22
        consider(_assemble(z1, s1, 0.0, 0.0, s22, z22, rho2))
    elif z21 > 0.0:
        # all energy relayed, near user sends no own data
        s1 = 1.0 / ((1.0 + z1) + z1 * rho2 / z21)
        u = s1 * z1 * rho2 / z21
        consider(_assemble(z1, s1, u, z21, 0.0, 0.0, rho2))
    else:
        # near user idle: charging plus the far user's slot only
        s1 = 1.0 / (1.0 + z1)
        consider(_assemble(z1, s1, 0.0, 0.0, 0.0, 0.0, rho2))

    return best


# ---------------------------------------------------------------------------
# damped Newton on the pattern stationarity systems
# ---------------------------------------------------------------------------

def _num_jac(fun, x: np.ndarray) -> np.ndarray | None:
    n = x.size
    f0 = fun(x)
    if f0 is None:
        return None
    m = f0.size
    jac = np.empty((m, n))
    for j in range(n):
        h = 1e-7 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        fp, fm = fun(xp), fun(xm)
        if fp is not None and fm is not None:
            jac[:, j] = (fp - fm) / (2.0 * h)
        elif fp is not None:
            jac[:, j] = (fp - f0) / h
        elif fm is not None:
            jac[:, j] = (f0 - fm) / h
        else:
            return None
    return jac


def damped_newton(fun, x0: np.ndarray, tol: float = 1e-11,
                  max_iter: int = 60) -> np.ndarray | None:
    """Newton iteration with step halving; ``fun`` returns None off-domain."""
    x = np.asarray(x0, dtype=float).copy()
    fx = fun(x)
    if fx is None:
        return None
    norm = float(np.max(np.abs(fx)))
    for _ in range(max_iter):
        if norm <= tol:
            return x
        jac = _num_jac(fun, x)
        if jac is None:
            return None
        try:
            dx = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            return None
        step = 1.0
        while step >= 1e-8:
            xn = x + step * dx
            fn = fun(xn)
            if fn is not None:
                norm_n = float(np.max(np.abs(fn)))
                if norm_n < norm * (1.0 - 0.25 * step) + 1e-15:
                    x, fx, norm = xn, fn, norm_n
                    break
            step *= 0.5
        else:
            return None
    return x if norm <= tol else None


# ---------------------------------------------------------------------------
# stationarity systems per active pattern
# ---------------------------------------------------------------------------
#
# At the optimum the allocation splits into at most three active blocks; each
# combination of active blocks yields a small square system in the
# multipliers, the charging ratio z1 = tau0/tau1 and the block scales s.
# Refining the ellipsoid output through the matching system drives the KKT
# residuals and duality gap to roundoff.

def _F_charge(l1, l2, c10, c12, r10, r12, z1):
    """Charging-slot stationarity (derivative of the relaxed objective in tau0)."""
    return (c10 * r10 / (1.0 + r10 * z1) + c12 * r12 / (1.0 + r12 * z1)
            - (l1 - l2) * LN2)


def _F_farslot(l1, c10, c12, r10, r12, z1):
    """Far-user slot stationarity (derivative in tau1)."""
    return c10 * f_curv(r10 * z1) + c12 * f_curv(r12 * z1) - l1 * LN2


def _z2(coef, l2, rho2):
    """Near-user block SNR pinned by the energy-share stationarity."""
    return coef * rho2 / (l2 * LN2) - 1.0


_COMMON_SUFFIX = "_c"


def _pattern_residual(pattern: str, rho3, weights, x: np.ndarray):
    """Residual vector of the stationarity system for one pattern.

    Returns None when ``x`` leaves the domain (nonpositive multipliers,
    ratios or block SNRs), which makes the damped Newton backtrack.
    Patterns ending in ``_c`` carry the weight w1 as the last unknown and a
    rate-equality row (used for the max-min common-throughput point).
    """
    r10, r12, rho2 = rho3
    common = pattern.endswith(_COMMON_SUFFIX)
    if common:
        w1 = x[-1]
        if not 0.0 < w1 < 1.0:
            return None
        w2 = 1.0 - w1
        base = pattern[: -len(_COMMON_SUFFIX)]
    else:
        w1, w2 = weights
        base = pattern

    if base == "full":
        l1, l2, l3, l4, z1, s1, s21, s22 = x[:8]
        if min(l1, l2, l3, z1) <= 0.0 or l4 < 0.0:
            return None
        z21 = _z2(l3, l2, rho2)
        z22 = _z2(w2, l2, rho2)
        if z21 <= 0.0 or z22 <= 0.0:
            return None
        rows = [
            _F_charge(l1, l2, l3, l4, r10, r12, z1),
            _F_farslot(l1, l3, l4, r10, r12, z1),
            l3 * f_curv(z21) - l1 * LN2,
            w2 * f_curv(z22) - l1 * LN2,
            l3 + l4 - w1,
            s1 * (1.0 + z1) + s21 + s22 - 1.0,
            (s21 * z21 + s22 * z22) / rho2 - s1 * z1,
            s1 * (_lg1p(r10 * z1) - _lg1p(r12 * z1)) + s21 * _lg1p(z21),
        ]
        if common:
            rows.append(s1 * _lg1p(r10 * z1) + s21 * _lg1p(z21)
                        - s22 * _lg1p(z22))
        return np.array(rows)

    if base in ("norelay_direct", "norelay_hop"):
        l1, l2, z1, s1, s22 = x[:5]
        if min(l1, l2, z1) <= 0.0:
            return None
        z22 = _z2(w2, l2, rho2)
        if z22 <= 0.0:
            return None
        r = r10 if base == "norelay_direct" else r12
        rows = [
            _F_charge(l1, l2, w1, 0.0, r, 0.0, z1),
            _F_farslot(l1, w1, 0.0, r, 0.0, z1),
            w2 * f_curv(z22) - l1 * LN2,
            s1 * (1.0 + z1) + s22 - 1.0,
            s22 * z22 / rho2 - s1 * z1,
        ]
        if common:
            rows.append(s1 * _lg1p(r * z1) - s22 * _lg1p(z22))
        return np.array(rows)

    if base == "relay_only":
        l1, l2, l3, l4, z1, s1, s21 = x[:7]
        if min(l1, l2, l3, z1) <= 0.0 or l4 < 0.0:
            return None
        z21 = _z2(l3, l2, rho2)
        if z21 <= 0.0:
            return None
        return np.array([
            _F_charge(l1, l2, l3, l4, r10, r12, z1),
            _F_farslot(l1, l3, l4, r10, r12, z1),
            l3 * f_curv(z21) - l1 * LN2,
            l3 + l4 - w1,
            s1 * (1.0 + z1) + s21 - 1.0,
            s21 * z21 / rho2 - s1 * z1,
            s1 * (_lg1p(r10 * z1) - _lg1p(r12 * z1)) + s21 * _lg1p(z21),
        ])

    if base == "u2_only":
        l1, s0 = x[:2]
        if l1 <= 0.0 or not 0.0 < s0 < 1.0:
            return None
        z22 = _z2(w2, l1, rho2)  # l2 = l1 on this face
        if z22 <= 0.0:
            return None
        return np.array([
            w2 * f_curv(z22) - l1 * LN2,
            s0 * (1.0 + rho2 / z22) - 1.0,
        ])

    if base in ("u1_only_direct", "u1_only_hop"):
        l1, z1, s1 = x[:3]
        if min(l1, z1) <= 0.0:
            return None
        r = r10 if base == "u1_only_direct" else r12
        return np.array([
            w1 * r / (1.0 + r * z1) - l1 * LN2,  # lambda2 = 0 on this face
            w1 * f_curv(r * z1) - l1 * LN2,
            s1 * (1.0 + z1) - 1.0,
        ])

    raise ValueError(f"unknown pattern {pattern!r}")


def _pattern_unpack(pattern: str, rho3, weights, x: np.ndarray):
    """Multipliers and allocation 6-tuple from a converged pattern vector."""
    r10, r12, rho2 = rho3
    common = pattern.endswith(_COMMON_SUFFIX)
    if common:
        w1 = float(x[-1])
        weights = (w1, 1.0 - w1)
        base = pattern[: -len(_COMMON_SUFFIX)]
    else:
        base = pattern
    w1, w2 = weights

    if base == "full":
        l1, l2, l3, l4, z1, s1, s21, s22 = (float(v) for v in x[:8])
        z21, z22 = _z2(l3, l2, rho2), _z2(w2, l2, rho2)
        lams = (l1, l2, l3, l4)
        t6 = (s1 * z1, s1, s21, s22, s21 * z21 / rho2, s22 * z22 / rho2)
    elif base in ("norelay_direct", "norelay_hop"):
        l1, l2, z1, s1, s22 = (float(v) for v in x[:5])
        z22 = _z2(w2, l2, rho2)
        lams = (l1, l2, w1, 0.0) if base == "norelay_direct" else (l1, l2, 0.0, w1)
        t6 = (s1 * z1, s1, 0.0, s22, 0.0, s22 * z22 / rho2)
    elif base == "relay_only":
        l1, l2, l3, l4, z1, s1, s21 = (float(v) for v in x[:7])
        z21 = _z2(l3, l2, rho2)
        lams = (l1, l2, l3, l4)
        t6 = (s1 * z1, s1, s21, 0.0, s21 * z21 / rho2, 0.0)
    elif base == "u2_only":
        l1, s0 = (float(v) for v in x[:2])
        lams = (l1, l1, 0.0, w1)
        t6 = (s0, 0.0, 0.0, 1.0 - s0, 0.0, s0)
    elif base in ("u1_only_direct", "u1_only_hop"):
        l1, z1, s1 = (float(v) for v in x[:3])
        lams = (l1, 0.0, w1, 0.0) if base == "u1_only_direct" else (l1, 0.0, 0.0, w1)
        t6 = (s1 * z1, s1, 0.0, 0.0, 0.0, 0.0)
    else:  # pragma: no cover
        raise ValueError(f"unknown pattern {pattern!r}")

    t6 = tuple(max(v, 0.0) for v in t6)
    return lams, t6, weights


@dataclass(frozen=True, slots=True)
class PolishResult:
    lams: tuple[float, float, float, float]
    t6: tuple[float, float, float, float, float, float]
    weights: tuple[float, float]
    wsr: float
    gap: float
    pattern: str
    x: np.ndarray


def _pattern_seed(pattern: str, lams, rho3, weights, t6):
    """Initial Newton vector for a pattern from the current dual iterate."""
    r10, r12, rho2 = rho3
    l1, l2, l3, l4 = lams
    w1, w2 = weights
    common = pattern.endswith(_COMMON_SUFFIX)
    base = pattern[: -len(_COMMON_SUFFIX)] if common else pattern
    l1 = max(l1, 1e-6)
    l2 = max(l2, 1e-6)
    tau0, tau1, tau21, tau22 = t6[:4]
    z1 = tau0 / tau1 if tau1 > 1e-12 else 1.0
    s1 = max(tau1, 1e-8)

    if base == "full":
        l3s = min(max(l3, 1e-6 * max(w1, 1.0)), w1 * (1 - 1e-9))
        # keep the implied block SNRs positive at the seed
        l2s = min(l2, l3s * rho2 / (2.0 * LN2), w2 * rho2 / (2.0 * LN2))
        x = [l1, max(l2s, 1e-12), l3s, max(w1 - l3s, 1e-9), z1, s1,
             max(tau21, 1e-8), max(tau22, 1e-8)]
    elif base in ("norelay_direct", "norelay_hop"):
        l2s = min(l2, w2 * rho2 / (2.0 * LN2))
        x = [l1, max(l2s, 1e-12), z1, s1, max(tau22, 1e-8)]
    elif base == "relay_only":
        l3s = min(max(l3, w1 * 0.5), w1 * (1 - 1e-9))
        l2s = min(l2, l3s * rho2 / (2.0 * LN2))
        x = [l1, max(l2s, 1e-12), l3s, max(w1 - l3s, 1e-9), z1, s1,
             max(tau21, 1e-8)]
    elif base == "u2_only":
        l1s = min(l1, w2 * rho2 / (2.0 * LN2))
        x = [max(l1s, 1e-12), min(max(tau0, 1e-6), 1 - 1e-6)]
    elif base in ("u1_only_direct", "u1_only_hop"):
        x = [l1, z1, s1]
    else:  # pragma: no cover
        raise ValueError(f"unknown pattern {pattern!r}")

    if common:
        x.append(min(max(w1, 1e-6), 1.0 - 1e-6))
    return np.array(x, dtype=float)


_PATTERNS_RELAY = ("full", "relay_only", "norelay_direct", "norelay_hop",
                   "u2_only", "u1_only_direct", "u1_only_hop")
_PATTERNS_NOCOOP = ("norelay_direct", "u2_only", "u1_only_direct")


def _pattern_order(relay: bool, rho3, t6) -> list[str]:
    r10, r12, rho2 = rho3
    relay_on = t6 is not None and t6[2] > 1e-7 and t6[4] > 1e-10
    u1_on = t6 is None or t6[1] > 1e-7
    u2_on = t6 is None or t6[3] > 1e-7
    if not relay:
        order = ["norelay_direct"] if (u1_on and u2_on) else []
        order += ["u2_only", "u1_only_direct"]
        order += [p for p in _PATTERNS_NOCOOP if p not in order]
        return order
    order: list[str] = []
    if relay_on and u2_on:
        order.append("full")
    if relay_on and not u2_on:
        order.append("relay_only")
    if not relay_on:
        order.append("norelay_direct" if r12 >= r10 else "norelay_hop")
    if not u1_on:
        order.insert(0, "u2_only")
    order += [p for p in _PATTERNS_RELAY if p not in order]
    return order


def polish(lams, rho3, weights, relay: bool, t6_hint=None,
           gap_tol: float = 1e-9) -> PolishResult | None:
    """Refine an approximate dual point to a KKT-exact solution.

    Tries the stationarity systems in order of the activity pattern implied
    by ``t6_hint`` and accepts the first converged candidate whose duality
    gap certifies global optimality.
    """
    best: PolishResult | None = None
    for pattern in _pattern_order(relay, rho3, t6_hint):
        x0 = _pattern_seed(pattern, lams, rho3, weights, t6_hint or (0.2, 0.2, 0.2, 0.2))
        fun = lambda v: _pattern_residual(pattern, rho3, weights, v)
        x = damped_newton(fun, x0)
        if x is None:
            continue
        lam_s, t6, w_s = _pattern_unpack(pattern, rho3, weights, x)
        if any(v < -1e-10 for v in lam_s) or any(v < 0.0 for v in t6):
            continue
        if t6[0] + t6[1] + t6[2] + t6[3] > 1.0 + 1e-9:
            continue
        wsr = wsr_value(t6, rho3, w_s, relay)
        gval = dual_eval(lam_s, rho3, w_s, relay).value
        gap = gval - wsr
        cand = PolishResult(lams=lam_s, t6=t6, weights=w_s, wsr=wsr,
                            gap=gap, pattern=pattern, x=x)
        if gap <= gap_tol * max(1.0, abs(wsr)):
            return cand
        if best is None or cand.gap < best.gap:
            best = cand
    return None if best is None or best.gap > 1e-6 * max(1.0, abs(best.wsr)) else best


# ---------------------------------------------------------------------------
# ellipsoid search
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class EngineOptions:
    outer_tol: float = 1e-7
    max_outer: int = 2000
    radius: float = 2000.0
    inner_tol: float = 1e-10
    max_inner: int = 500
    recover_every: int = 5


@dataclass(frozen=True, slots=True)
class RawSolution:
    lams: tuple[float, float, float, float]
    t6: tuple[float, float, float, float, float, float]
    wsr: float
    dual_value: float
    gap: float
    outer_iters: int
    converged: bool
    polished: bool
    pattern: str | None


def _ellipsoid_update(x, P, g, depth):
    """Deep-cut update; keeps {y : g.(y - x) <= -depth}."""
    n = x.size
    Pg = P @ g
    gamma = float(math.sqrt(max(g @ Pg, 0.0)))
    if not math.isfinite(gamma) or gamma <= 0.0:
        return None
    alpha = min(depth / gamma, 1.0 - 1e-12)
    b = Pg / gamma
    x_new = x - ((1.0 + n * alpha) / (n + 1.0)) * b
    scale = (n * n / (n * n - 1.0)) * (1.0 - alpha * alpha)
    P_new = scale * (P - (2.0 * (1.0 + n * alpha)
                          / ((n + 1.0) * (1.0 + alpha))) * np.outer(b, b))
    P_new = 0.5 * (P_new + P_new.T)
    return x_new, P_new, gamma


def solve_dual(rho3, weights, relay: bool,
               opts: EngineOptions = EngineOptions()) -> RawSolution:
    """Minimize the dual over the multiplier cone by the ellipsoid method.

    Feasibility cuts enforce nonnegativity (and, with relaying, the weight
    coupling of the two rate multipliers); objective cuts come from the
    constraint values at the inner maximizer.  A structured primal recovery
    runs alongside to bound the duality gap, and the loop hands over to the
    Newton refinement as soon as the incumbent localizes the active pattern.
    """
    w1, w2 = weights
    n = 4 if relay else 2
    x = np.array([1.0, 1.0, max(w1, 1.0), max(w1, 1.0)][:n])
    P = np.eye(n) * opts.radius ** 2

    best_dual = _INF
    best_dual_lams = None
    best_primal = -_INF
    best_t6 = None
    polish_res: PolishResult | None = None
    iters = 0
    next_polish = 40

    for k in range(opts.max_outer):
        iters = k + 1
        lams = ((float(x[0]), float(x[1]), float(x[2]), float(x[3])) if relay
                else (float(x[0]), float(x[1]), w1, 0.0))

        # feasibility cuts
        cut = None
        for i in range(n):
            if x[i] < 0.0:
                e = np.zeros(n)
                e[i] = -1.0
                cut = (e, -float(x[i]))
                break
        if cut is None and relay and x[2] + x[3] < w1:
            e = np.zeros(n)
            e[2] = e[3] = -1.0
            cut = (e, float(w1 - x[2] - x[3]))
        if cut is not None:
            upd = _ellipsoid_update(x, P, cut[0], cut[1])
            if upd is None:
                break
            x, P, _ = upd
            continue

        ev = dual_eval(lams, rho3, weights, relay)
        improved = ev.value < best_dual
        if improved:
            best_dual = ev.value
            best_dual_lams = lams
        if improved or k % opts.recover_every == 0:
            rec = recover_primal(lams, rho3, weights, relay)
            if rec is not None and rec[1] > best_primal:
                best_t6, best_primal = rec
        gap = best_dual - best_primal

        ready = best_t6 is not None and best_dual_lams is not None
        if ready and (gap <= 1e-2 * max(1.0, abs(best_dual)) and k >= next_polish
                      or gap <= opts.outer_tol):
            polish_res = polish(best_dual_lams, rho3, weights, relay, best_t6)
            if polish_res is not None:
                break
            next_polish = k + 80

        nu = constraint_violations(ev.t6, rho3)
        g = -np.array(nu[:n])
        upd = _ellipsoid_update(x, P, g, 0.0)
        if upd is None:
            break
        x, P, gamma = upd
        if gamma <= 1e-12 * max(1.0, abs(best_dual)):
            break

    if polish_res is None and best_dual_lams is not None:
        polish_res = polish(best_dual_lams, rho3, weights, relay, best_t6)

    if polish_res is not None:
        return RawSolution(lams=polish_res.lams, t6=polish_res.t6,
                           wsr=polish_res.wsr, dual_value=polish_res.wsr + polish_res.gap,
                           gap=polish_res.gap, outer_iters=iters, converged=True,
                           polished=True, pattern=polish_res.pattern)

    gap = best_dual - best_primal
    converged = (best_t6 is not None and math.isfinite(gap)
                 and gap <= opts.outer_tol * max(1.0, abs(best_dual)))
    return RawSolution(
        lams=best_dual_lams or ((1.0, 1.0, max(w1, 1.0), max(w1, 1.0)) if relay
                                else (1.0, 1.0, w1, 0.0)),
        t6=best_t6 or (0.0,) * 6,
        wsr=best_primal if best_t6 is not None else 0.0,
        dual_value=best_dual, gap=gap, outer_iters=iters,
        converged=converged, polished=False, pattern=None)


# ---------------------------------------------------------------------------
# common throughput (max-min rate point)
# ---------------------------------------------------------------------------

def split_rates(t6, rho3, relay: bool) -> tuple[float, float]:
    """Per-user rates at an allocation 6-tuple."""
    tau0, tau1, tau21, tau22, t21, t22 = t6
    r10, r12, rho2 = rho3
    r2 = persp(tau22, t22, rho2)
    if relay:
        r1 = min(persp(tau1, tau0, r10) + persp(tau21, t21, rho2),
                 persp(tau1, tau0, r12))
    else:
        r1 = persp(tau1, tau0, r10)
    return r1, r2


@dataclass(frozen=True, slots=True)
class CommonOut:
    value: float
    w1: float
    lams: tuple[float, float, float, float]
    t6: tuple[float, float, float, float, float, float]
    rate_gap: float
    gap: float
    pattern: str | None
    used_fallback: bool


_COMMON_PATTERNS_RELAY = ("full_c", "norelay_direct_c", "norelay_hop_c")
_COMMON_PATTERNS_NOCOOP = ("norelay_direct_c",)


def solve_common_newton(rho3, relay: bool, pattern: str, x0: np.ndarray):
    """One Newton attempt on the equal-rate stationarity system.

    Returns ``(CommonOut, x)`` on success, else None.  The weight is an
    unknown of the system, so the placeholder weights passed to the residual
    are ignored.
    """
    fun = lambda v: _pattern_residual(pattern, rho3, (0.0, 0.0), v)
    x = damped_newton(fun, x0)
    if x is None:
        return None
    lam_s, t6, w_s = _pattern_unpack(pattern, rho3, (0.0, 0.0), x)
    if any(v < -1e-10 for v in lam_s) or any(v < 0.0 for v in t6):
        return None
    if t6[0] + t6[1] + t6[2] + t6[3] > 1.0 + 1e-9:
        return None
    r1, r2 = split_rates(t6, rho3, relay)
    wsr = w_s[0] * r1 + w_s[1] * r2
    gap = dual_eval(lam_s, rho3, w_s, relay).value - wsr
    if gap > 1e-9 * max(1.0, abs(wsr)) or abs(r1 - r2) > 1e-9 * max(1.0, r1):
        return None
    out = CommonOut(value=min(r1, r2), w1=w_s[0], lams=lam_s, t6=t6,
                    rate_gap=abs(r1 - r2), gap=gap, pattern=pattern,
                    used_fallback=False)
    return out, x


def _common_base_pattern(raw: RawSolution, rho3, relay: bool) -> str:
    if relay and raw.t6[2] > 1e-7 and raw.t6[4] > 1e-10:
        return "full"
    r10, r12, _ = rho3
    return "norelay_direct" if (not relay or r12 >= r10) else "norelay_hop"


def common_point(rho3, relay: bool, opts: EngineOptions = EngineOptions(),
                 warm=None, weight_floor: float = 1e-9):
    """Equal-rate (max-min) throughput point.

    Tries a warm Newton solve of the equal-rate stationarity system first,
    then falls back to bracketing the weight by the sign of r1 - r2 at the
    weighted optimum; a non-bracketing sign profile falls back to a fine
    weight sweep, keeping the max-min incumbent.

    Returns ``(CommonOut, warm_token)``; pass the token back in for the next
    nearby instance.
    """
    if warm is not None:
        pattern, x0 = warm
        hit = solve_common_newton(rho3, relay, pattern, x0)
        if hit is not None:
            out, x = hit
            return out, (pattern, x)

    from scipy.optimize import brentq

    lo, hi = weight_floor, 1.0 - weight_floor
    cache: dict[float, RawSolution] = {}

    def diff(w1: float) -> float:
        raw = solve_dual(rho3, (w1, 1.0 - w1), relay, opts)
        cache[w1] = raw
        r1, r2 = split_rates(raw.t6, rho3, relay)
        return r1 - r2

    used_fallback = False
    d_lo, d_hi = diff(lo), diff(hi)
    bracket_ok = d_lo <= 0.0 <= d_hi

    def refine(w_star: float, raw: RawSolution):
        first = _common_base_pattern(raw, rho3, relay) + _COMMON_SUFFIX
        candidates = [first] + [p for p in (_COMMON_PATTERNS_RELAY if relay else
                                            _COMMON_PATTERNS_NOCOOP) if p != first]
        for pattern in candidates:
            x0 = _pattern_seed(pattern, raw.lams, rho3,
                               (w_star, 1.0 - w_star), raw.t6)
            hit = solve_common_newton(rho3, relay, pattern, x0)
            if hit is not None:
                return hit
        return None

    if bracket_ok:
        # a loose bracket suffices: the Newton refinement pins the point
        for xtol in (1e-5, 1e-13):
            w_star = float(brentq(diff, lo, hi, xtol=xtol, maxiter=200))
            raw = cache.get(w_star) or solve_dual(rho3, (w_star, 1.0 - w_star),
                                                  relay, opts)
            hit = refine(w_star, raw)
            if hit is not None:
                out, x = hit
                out = CommonOut(value=out.value, w1=out.w1, lams=out.lams,
                                t6=out.t6, rate_gap=out.rate_gap, gap=out.gap,
                                pattern=out.pattern, used_fallback=False)
                return out, (out.pattern, x)
    else:
        used_fallback = True
        best_w, best_val, raw = lo, -_INF, None
        for w1 in np.linspace(lo, hi, 65):
            r = solve_dual(rho3, (float(w1), 1.0 - float(w1)), relay, opts)
            r1, r2 = split_rates(r.t6, rho3, relay)
            if min(r1, r2) > best_val:
                best_w, best_val, raw = float(w1), min(r1, r2), r
        w_star = best_w
        hit = refine(w_star, raw)
        if hit is not None:
            out, x = hit
            out = CommonOut(value=out.value, w1=out.w1, lams=out.lams,
                            t6=out.t6, rate_gap=out.rate_gap, gap=out.gap,
                            pattern=out.pattern, used_fallback=True)
            return out, (out.pattern, x)

    r1, r2 = split_rates(raw.t6, rho3, relay)
    out = CommonOut(value=min(r1, r2), w1=w_star, lams=raw.lams, t6=raw.t6,
                    rate_gap=abs(r1 - r2), gap=raw.gap, pattern=raw.pattern,
                    used_fallback=True)
    return out, None
