"""Finite detection efficiency for two-outcome photonic Bell tests.

A photon is registered with probability ``eta``; lost photons are counted
as outcome 1. This module provides the resulting linear map on behaviours,
the closed-form CHSH optimum under that map, the analytic Hardy family, and
log-log scaling fits near the critical efficiency 2/3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .scenario import Behaviour
from .statistics import kl_divergence, statistical_power

ETA_CRIT = 2.0 / 3.0
Z0 = (math.sqrt(5.0) - 1.0) / 2.0
CHSH_LOCAL = 0.75
HARDY_LOCAL = 0.5


@dataclass(frozen=True)
class EfficiencyParams:
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must lie in [0, 1], got {self.eta}")

    @property
    def detuning(self) -> float:
        """``2 (1 - eta) / eta``; below one exactly when eta > 2/3."""
        return math.inf if self.eta == 0 else 2.0 * (1.0 - self.eta) / self.eta


def apply_efficiency_array(p: np.ndarray, eta: float, n_pairs: int) -> np.ndarray:
    """Efficiency map on a flat two-outcome behaviour vector (no validation)."""
    t = np.asarray(p, dtype=float).reshape(n_pairs, 2, 2)
    p00, p01, p10, p11 = t[:, 0, 0], t[:, 0, 1], t[:, 1, 0], t[:, 1, 1]
    loss = 1.0 - eta
    out = np.empty_like(t)
    out[:, 0, 0] = eta * eta * p00
    out[:, 0, 1] = eta * p01 + eta * loss * p00
    out[:, 1, 0] = eta * p10 + eta * loss * p00
    out[:, 1, 1] = p11 + loss * (p01 + p10) + loss * loss * p00
    return out.reshape(-1)


def apply_efficiency(P: Behaviour, eta: float) -> Behaviour:
    sc = P.scenario
    if sc.oa != 2 or sc.ob != 2:
        raise ShapeError("the efficiency model is defined for two outcomes per party")
    EfficiencyParams(eta)
    q = apply_efficiency_array(P.p, eta, sc.ma * sc.mb)
    if not P.unnormalized:
        # the all-lost entry sums four terms and can round just above one
        q = np.minimum(q, 1.0)
    return Behaviour(sc, q, P.unnormalized)


# -- CHSH optimum under losses --------------------------------------------------


def chsh_quartic(detuning: float) -> np.ndarray:
    """Coefficients (highest degree first) of the quartic whose largest root
    gives the optimal CHSH score at efficiency ``eta``; ``detuning = 2(1-eta)/eta``."""
    s2 = detuning * detuning
    s4 = s2 * s2
    s6 = s4 * s2
    return np.array([
        1.0,
        4.0 - s2,
        2.75 * s4 - 12.0 * s2 - 4.0,
        2.0 * s6 - s4 - 20.0 * s2 - 32.0,
        5.0 * s6 - 21.0 * s4 + 16.0 * s2 - 32.0,
    ])


def _polyval(coeffs: np.ndarray, x: float) -> float:
    acc = 0.0
    for c in coeffs:
        acc = acc * x + c
    return acc


def largest_real_root(coeffs: Sequence[float]) -> float:
    """Largest real root of a quartic via companion-matrix eigenvalues plus Newton polish."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (5,) or c[0] == 0:
        raise ParameterError("expected 5 coefficients with a nonzero leading one")
    c = c / c[0]
    companion = np.zeros((4, 4))
    companion[0, :] = -c[1:]
    companion[1:, :-1] = np.eye(3)
    roots = np.linalg.eigvals(companion)
    scale = max(1.0, float(np.max(np.abs(roots))))
    # a double root may come back as a pair with tiny imaginary parts
    real = roots[np.abs(roots.imag) <= 1e-6 * scale].real
    if real.size == 0:
        raise ParameterError("polynomial has no real root")
    r = float(real.max())
    deriv = np.polyder(c)
    for _ in range(50):
        f = _polyval(c, r)
        df = _polyval(deriv, r)
        if df == 0 or f == 0:
            break
        step = f / df
        r_new = r - step
        if abs(_polyval(c, r_new)) >= abs(f):
            break
        r = r_new
    cmax = float(np.max(np.abs(np.asarray(coeffs, dtype=float))))
    if abs(_polyval(np.asarray(coeffs, dtype=float), r)) > 1e-9 * cmax:
        raise ParameterError("root polish failed to reach the residual tolerance")
    return r


@dataclass(frozen=True)
class ChshBound:
    value: float
    root: float
    at_boundary: bool = False

    def __float__(self) -> float:
        return self.value


def chsh_efficiency_bound(eta: float, allow_boundary: bool = False) -> ChshBound:
    """Largest CHSH win probability reachable at detection efficiency ``eta``.

    Defined for ``eta`` in (2/3, 1]. At ``eta = 2/3`` the quantum and local
    values coincide at 3/4; that value is returned with ``at_boundary`` set
    only when ``allow_boundary`` is true, otherwise a domain error is raised.
    """
    if allow_boundary and abs(eta - ETA_CRIT) <= 1e-15:
        return ChshBound(CHSH_LOCAL, 4.0, at_boundary=True)
    if not ETA_CRIT < eta <= 1.0:
        raise ParameterError(f"eta must lie in (2/3, 1], got {eta}; the bound equals 3/4 at eta = 2/3")
    s = 2.0 * (1.0 - eta) / eta
    r = largest_real_root(chsh_quartic(s))
    return ChshBound((eta * eta * r + 2.0 * (1.0 - eta) ** 2 + 4.0) / 8.0, r)


def chsh_power(eta: float) -> float:
    return kl_divergence(chsh_efficiency_bound(eta).value, CHSH_LOCAL)


# -- analytic Hardy family ------------------------------------------------------


@dataclass(frozen=True)
class HardyFamilyValue:
    gamma: float
    omega: float

    @property
    def nonlocal_(self) -> bool:
        return self.omega > HARDY_LOCAL

    @property
    def power(self) -> float:
        return statistical_power(self.gamma, self.omega, HARDY_LOCAL).value


def hardy_family_analytic(eta: float, z: float) -> HardyFamilyValue:
    if not 0.0 < eta <= 1.0:
        raise ParameterError(f"eta must lie in (0, 1], got {eta}")
    if not 0.0 <= z < 1.0:
        raise ParameterError(f"z must lie in [0, 1), got {z}")
    den = 2.0 - eta - eta * z
    gamma = eta * z * z * den / (4.0 * (1.0 + z))
    omega = eta * (1.0 - z) / den
    return HardyFamilyValue(gamma, omega)


def z_of_eta(eta: float) -> float:
    """Linear interpolation from z=0 at eta=2/3 to the ideal z0 at eta=1."""
    if not ETA_CRIT - 1e-15 <= eta <= 1.0:
        raise ParameterError(f"eta must lie in [2/3, 1], got {eta}")
    return max(0.0, 3.0 * Z0 * (eta - ETA_CRIT))


def hardy_family_power(eta: float) -> float:
    return hardy_family_analytic(eta, z_of_eta(eta)).power


# -- curves and scaling -----------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    eta: float
    w_hardy: float
    w_chsh: float

    @property
    def ratio(self) -> float:
        return self.w_hardy / self.w_chsh if self.w_chsh > 0 else math.inf


def power_curves(etas: Sequence[float], mode: Literal["family", "optimized"] = "family",
                 options=None, dim: int = 2) -> list[CurvePoint]:
    """Hardy and CHSH power at each efficiency.

    ``family`` uses the analytic Hardy family with ``z_of_eta``;
    ``optimized`` maximises the Hardy power numerically at every point,
    warm-starting each point from the previous optimum.
    """
    etas = [float(e) for e in etas]
    if not etas:
        raise ParameterError("empty efficiency grid")
    for e in etas:
        if not ETA_CRIT < e <= 1.0:
            raise ParameterError(f"grid point {e} outside (2/3, 1]")
    if mode == "family":
        return [CurvePoint(e, hardy_family_power(e), chsh_power(e)) for e in etas]
    if mode != "optimized":
        raise ParameterError(f"unknown mode {mode!r}")
    from .quantum import OptimizerOptions, scan_power
    from .scenario import hardy_game

    opts = options or OptimizerOptions(restarts=3)
    results = scan_power(hardy_game(), etas, dim=dim, options=opts, omega_l=HARDY_LOCAL)
    return [CurvePoint(e, r.power, chsh_power(e)) for e, r in zip(etas, results)]


def crossing(points: Sequence[CurvePoint]) -> Optional[float]:
    """Efficiency where Hardy overtakes CHSH, by linear interpolation of the difference."""
    pts = sorted(points, key=lambda p: p.eta)
    for lo, hi in zip(pts, pts[1:]):
        d0 = lo.w_hardy - lo.w_chsh
        d1 = hi.w_hardy - hi.w_chsh
        if d0 > 0 >= d1:
            return lo.eta + (hi.eta - lo.eta) * d0 / (d0 - d1)
    return None


@dataclass(frozen=True)
class ScalingFit:
    """Power-law fit ``w ~ coefficient * delta**order`` near the endpoint.

    ``exponent`` and ``free_coefficient`` come from the unconstrained
    two-parameter fit. ``coefficient`` is the leading Taylor coefficient:
    the least-squares intercept with the exponent pinned to the nearest
    integer ``order``. Over a finite window the free fit trades exponent
    against coefficient, so only the pinned value is comparable to
    ``w^(k)(endpoint) / k!``.
    """

    exponent: float
    coefficient: float
    window: tuple[float, float]
    residual: float
    free_coefficient: float = math.nan

    @property
    def order(self) -> int:
        return round(self.exponent)

    def derivative_constant(self) -> float:
        """``order! * coefficient``, the estimated ``order``-th derivative at the endpoint."""
        return math.factorial(self.order) * self.coefficient


def scaling_fit_points(deltas: Sequence[float], values: Sequence[float],
                       max_residual: float = 0.1) -> ScalingFit:
    """Fit ``log w = log c + p log delta`` to sampled points (see ``ScalingFit``)."""
    deltas = np.asarray(deltas, dtype=float)
    values = np.asarray(values, dtype=float)
    if deltas.shape != values.shape or deltas.size < 2:
        raise ParameterError("need at least two (delta, value) pairs")
    if np.any(deltas <= 0):
        raise ParameterError("offsets from the endpoint must be positive")
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise ParameterError("curve must be positive and finite on the fit window")
    logd, logw = np.log(deltas), np.log(values)
    X = np.column_stack([np.ones_like(deltas), logd])
    coef = np.linalg.lstsq(X, logw, rcond=None)[0]
    resid = float(np.sqrt(np.mean((X @ coef - logw) ** 2)))
    if resid > max_residual:
        raise ParameterError(f"log-log residual {resid:.3g} exceeds {max_residual}; not a power law")
    order = round(float(coef[1]))
    pinned = math.exp(float(np.mean(logw - order * logd)))
    window = (float(deltas.min()), float(deltas.max()))
    return ScalingFit(float(coef[1]), pinned, window, resid, float(math.exp(coef[0])))


def scaling_fit(curve, window: tuple[float, float] = (1e-3, 5e-2), n_points: int = 40,
                endpoint: float = ETA_CRIT, max_residual: float = 0.1) -> ScalingFit:
    """Sample ``curve`` (a callable of eta) at ``endpoint + delta`` on a
    log-spaced window and fit the leading power law."""
    lo, hi = window
    if not 0 < lo < hi:
        raise ParameterError("window must satisfy 0 < lo < hi")
    deltas = np.geomspace(lo, hi, n_points)
    values = [curve(endpoint + d) for d in deltas]
    return scaling_fit_points(deltas, values, max_residual)


def write_two_column(path, xs, ys) -> None:
    with open(path, "w") as fh:
        for x, y in zip(xs, ys):
            fh.write(f"{float(x)!r} {float(y)!r}\n")
