"""Low-k sweeps and effective-range-expansion fits.

With D_l(k) = tan(delta_l)/k^(2l+1) = -a_l(k, infinity), the expansion

    1/D_l(k) = -1/a_l + (r_l/2) k^2 - P_l r_l^3 k^4

is linear in the three coefficients, so the fit is an ordinary least squares
of 1/D_l against {1, k^2, k^4} (solved on a k_max-scaled design matrix for
conditioning).  95% confidence half-widths come from the residual covariance
with a Student-t quantile; the (a, r, P) half-widths follow by the delta
method.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import eval_legendre

from .vpa import IntegrationOptions, VpaProblem, integrate_theta

CONDITION_LIMIT = 1e10
# summed relative half-widths below this are treated as exact ties in the
# window scan (tie-break: smallest k_max)
PERFECT_SCORE = 1e-9


@dataclass(frozen=True)
class EreParams:
    """Expansion parameters for one partial wave."""

    a: float   # length^(2l+1)
    r: float   # length^(-2l+1)
    p: float   # dimensionless for l = 0
    l: int

    def dimension_labels(self, unit: str = "L") -> tuple:
        e1 = 2 * self.l + 1
        e2 = -2 * self.l + 1
        lab = lambda e: "1" if e == 0 else (unit if e == 1 else f"{unit}^{e}")
        return lab(e1), lab(e2), "1" if self.l == 0 else f"{unit}^{4 * self.l}"


@dataclass(frozen=True)
class SweepPoint:
    k: float
    a_infinity: float
    at_resonance: bool = False

    @property
    def d(self) -> float:
        """Tangent function D_l(k) = -a_l(k, infinity)."""
        return -self.a_infinity


@dataclass
class FitReport:
    params: EreParams
    half_widths_95: tuple          # (da, dr, dP)
    k_window: tuple                # (k_min, k_max, n_points)
    residual_rms: float
    condition_warning: bool
    condition_number: float
    n_excluded: int = 0
    coefficients: tuple = field(default=None)  # (c0, c1, c2) of 1/D fit

    @property
    def score(self) -> float:
        """Summed relative half-widths (window-selection objective)."""
        hw = self.half_widths_95
        vals = (self.params.a, self.params.r, self.params.p)
        return sum(h / max(abs(v), 1e-300) for h, v in zip(hw, vals))


def sweep_k(problem: VpaProblem, k_values: Sequence[float],
            opts: IntegrationOptions = None) -> list:
    """One compactified integration per k; k = 0 is not allowed here."""
    opts = opts or IntegrationOptions()
    out = []
    for k in k_values:
        if k <= 0:
            raise ValueError("sweep_k needs strictly positive k")
        trace = integrate_theta(
            VpaProblem(problem.potential, problem.channel, k=float(k),
                       scale_length=problem.scale_length), opts)
        out.append(SweepPoint(k=float(k), a_infinity=trace.a_infinity,
                              at_resonance=trace.at_resonance))
    return out


def usable_points(points: Sequence[SweepPoint]) -> list:
    """Drop at-resonance and D = 0 points (both unusable in 1/D space)."""
    return [p for p in points if not p.at_resonance and p.d != 0.0]


def fit_ere(points, l: int) -> FitReport:
    """Least squares of 1/D_l on {1, k^2, k^4}.

    points: sequence of (k, D_l) pairs or SweepPoints.  Points with D = 0
    are excluded (counted in the report); fewer than 5 usable points or
    fewer than 3 distinct k^2 values raise ValueError.
    """
    ks, ds, n_excluded = [], [], 0
    for p in points:
        k, d = (p.k, p.d) if isinstance(p, SweepPoint) else (float(p[0]), float(p[1]))
        if d == 0.0:
            n_excluded += 1
            continue
        ks.append(k)
        ds.append(d)
    ks = np.asarray(ks)
    ds = np.asarray(ds)
    if ks.size < 5:
        raise ValueError(f"need at least 5 usable points, got {ks.size}")
    if np.unique(ks**2).size < 3:
        raise ValueError("need at least 3 distinct k^2 values")

    y = 1.0 / ds
    s = ks.max()
    x = (ks / s) ** 2
    design = np.column_stack([np.ones_like(x), x, x * x])
    cond = float(np.linalg.cond(design))
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = ks.size - 3
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(design.T @ design)
        tq = float(stats.t.ppf(0.975, dof))
        hw_scaled = tq * np.sqrt(np.diag(cov))
    else:
        hw_scaled = np.zeros(3)
    unscale = np.array([1.0, s**2, s**4])
    c = coef / unscale
    hw = hw_scaled / unscale

    a = -1.0 / c[0]
    r = 2.0 * c[1]
    p = -c[2] / r**3 if r != 0.0 else math.nan
    # delta-method propagation
    da = hw[0] / c[0] ** 2
    dr = 2.0 * hw[1]
    if c[1] != 0.0:
        dp = math.hypot(hw[2] / (8.0 * c[1] ** 3),
                        3.0 * c[2] / (8.0 * c[1] ** 4) * hw[1])
    else:
        dp = math.inf
    return FitReport(params=EreParams(a=a, r=r, p=p, l=l),
                     half_widths_95=(float(da), float(dr), float(dp)),
                     k_window=(float(ks.min()), float(ks.max()), int(ks.size)),
                     residual_rms=float(np.sqrt(np.mean(resid**2))),
                     condition_warning=cond > CONDITION_LIMIT,
                     condition_number=cond,
                     n_excluded=n_excluded,
                     coefficients=(float(c[0]), float(c[1]), float(c[2])))


def auto_window(sweep: Callable, l: int, k_min: float, k_max: float,
                n_points: int = 20, min_points: int = 6) -> FitReport:
    """Pick the fit window that minimizes the summed relative half-widths.

    sweep(k_array) must return the D_l values (or SweepPoints) for the
    requested wavenumbers.  The master grid is geometric between k_min and
    k_max; candidate windows are its prefixes, i.e. a geometric ladder of
    k_max values.  Near-exact fits (score below PERFECT_SCORE) tie, and ties
    go to the smallest window.
    """
    if not (0 < k_min < k_max):
        raise ValueError("need 0 < k_min < k_max")
    grid = np.geomspace(k_min, k_max, n_points)
    raw = sweep(grid)
    pts = []
    for k, item in zip(grid, raw):
        if isinstance(item, SweepPoint):
            pts.append(item)
        else:
            pts.append(SweepPoint(k=float(k), a_infinity=-float(item)))
    pts = usable_points(pts)
    best = None
    for n in range(min_points, len(pts) + 1):
        try:
            rep = fit_ere(pts[:n], l)
        except ValueError:
            continue
        score = max(rep.score, PERFECT_SCORE)
        if best is None or score < best[0]:
            best = (score, rep)
    if best is None:
        raise ValueError("no usable fit window (all windows degenerate)")
    return best[1]


def amplitude(delta0: float, k: float) -> complex:
    """Forward low-energy amplitude f(k, 0) = e^(i delta0) sin(delta0)/k."""
    if k <= 0:
        raise ValueError("k must be positive")
    return cmath.exp(1j * delta0) * math.sin(delta0) / k


def partial_wave_sum(deltas: Sequence[float], k: float, theta: float) -> complex:
    """f(k, theta) = sum_l (2l+1)(e^(2 i delta_l) - 1) P_l(cos theta)/(2ik).

    deltas[l] is the l-th phase shift; the series is truncated at len(deltas).
    """
    if k <= 0:
        raise ValueError("k must be positive")
    x = math.cos(theta)
    total = 0j
    for l, d in enumerate(deltas):
        total += (2 * l + 1) * (cmath.exp(2j * d) - 1.0) * eval_legendre(l, x)
    return total / (2j * k)


def synthetic_tangent(params: EreParams, k) -> np.ndarray:
    """Exact D_l(k) generated from given expansion parameters."""
    k = np.asarray(k, dtype=float)
    inv = -1.0 / params.a + 0.5 * params.r * k**2 - params.p * params.r**3 * k**4
    return 1.0 / inv


def model_inverse_tangent(report: FitReport, k) -> np.ndarray:
    """Fitted 1/D_l(k) curve."""
    c0, c1, c2 = report.coefficients
    k = np.asarray(k, dtype=float)
    return c0 + c1 * k**2 + c2 * k**4


def format_fit_report(report: FitReport, length_unit: str = "a.u.") -> str:
    """Human-readable summary block for one fitted partial wave."""
    p = report.params
    da, dr, dp = report.half_widths_95
    la, lr, lp = p.dimension_labels(length_unit)
    kmin, kmax, n = report.k_window
    lines = [
        f"partial wave l = {p.l}",
        f"  scattering length   a = {p.a:.6g} +- {da:.2g}  [{la}]",
        f"  effective range     r = {p.r:.6g} +- {dr:.2g}  [{lr}]",
        f"  shape parameter     P = {p.p:.6g} +- {dp:.2g}  [{lp}]",
        f"  k window: [{kmin:.6g}, {kmax:.6g}] 1/{length_unit}, "
        f"{n} points, residual rms {report.residual_rms:.2g}",
        "  (uncertainties are 95% confidence half-widths of the fit)",
    ]
    if report.n_excluded:
        lines.append(f"  excluded points: {report.n_excluded}")
    if report.condition_warning:
        lines.append(f"  WARNING: design matrix condition number "
                     f"{report.condition_number:.2g} exceeds {CONDITION_LIMIT:.0g}")
    return "\n".join(lines)
