"""Phase-function (variable phase) integrators.

The scattering-length function a_l(k, r) obeys the first-order equation

    da_l/dr = U(r)/k^(2l+2) * (u_l(kr) - k^(2l+1) v_l(kr) a_l)^2

with a_l(k, 0) = 0; its r -> infinity limit is -tan(delta_l)/k^(2l+1).  At
k = 0 the Riccati functions collapse to their leading powers and the
equation family becomes

    da_l/dr = U(r) * (r^(l+1)/(2l+1)!! - (2l-1)!! a_l / r^l)^2 .

Direct integration hits poles of a_l wherever the truncated potential gains
a bound state, so the production path integrates the compactified variables
theta = atan(a/scale), phi = atan(r), which are regular through the poles.
Every right-hand side here has the quadratic form pref*(A - B*a)^2, which in
theta variables becomes pref*(A cos(theta) - B scale sin(theta))^2 *
sec^2(phi)/scale -- no tangents, hence no overflow near poles.

The zero-energy effective-range and shape-parameter functions r0(r), p0(r)
are integrated as a coupled system in two alternating charts:

* chart T: (theta1, theta2, theta3) = atan(a0), atan(r0), atan(p0/s_p) --
  regular at poles of a0 (bound states) but spiky where a0 crosses zero;
* chart P: the k^2-Taylor coefficients (a0, a2, a4) of a(k, r), whose
  right-hand sides are polynomial -- regular at zeros of a0 (where r0 and
  p0 have genuine poles) and at the r = 0 start.

The charts are exactly equivalent (r0 = 2 a2/a0^2, p0 = a2^2/a0^3 - a4/a0^2)
and the integrator switches on |a0| vs r with hysteresis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .potentials import ReducedPotential, Channel
from .specfun import double_factorial, riccati_uv

HALF_PI = 0.5 * math.pi

OK = "ok"
LONG_RANGE_WARNING = "long_range_warning"


class StiffnessError(RuntimeError):
    """Adaptive step size underflowed; carries the radius of failure."""

    def __init__(self, r: float, detail: str = ""):
        self.r = r
        super().__init__(f"integration stalled near r = {r:.6g} {detail}".rstrip())


class PoleEncounteredError(RuntimeError):
    """Raw-variable integration hit a divergence of a(r)."""

    def __init__(self, bracket: tuple):
        self.bracket = bracket
        super().__init__(
            f"scattering-length function diverges in r-interval "
            f"({bracket[0]:.6g}, {bracket[1]:.6g})")


@dataclass
class IntegrationOptions:
    rtol: float = 1e-11
    atol: float = 1e-13
    method: str = "DOP853"
    phi_margin: float = 1e-6       # pi/2 - phi_end for k = 0
    tail_abs_tol: float = 1e-9     # theta-units error budget for k > 0 truncation
    pole_tol: float = 1e-8         # |cos theta*| below this flags a resonance
    n_trace: int = 1200
    divergence_guard: float = 1e6  # |a|/scale limit for raw integration
    r_start: Optional[float] = None    # override potential.r_core start
    extrapolate: bool = True
    p0_drift_tol: float = 0.01     # relative tail drift marking p0 unreliable


@dataclass
class VpaProblem:
    potential: ReducedPotential
    channel: Channel
    k: float = 0.0
    scale_length: Optional[float] = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.scale_length is not None and self.scale_length <= 0:
            raise ValueError("scale_length must be positive")

    def resolved_scale(self) -> float:
        """a-compactification scale: scale_length^(2l+1).

        The default scale_length for l >= 1 is the radius where |U| r^2 drops
        to 1e-3 of its peak.  (A much tighter threshold makes the scale so
        large that pole transits of theta become narrower than the floating
        point grid and the integrator stalls.)
        """
        l = self.channel.l
        if self.scale_length is not None:
            s = self.scale_length
        elif l == 0:
            s = 1.0
        else:
            s = range_estimate(self.potential, threshold=1e-3)
        return s ** (2 * l + 1)


@dataclass
class VpaTrace:
    phi_grid: np.ndarray
    theta: np.ndarray
    pole_crossings: int
    a_infinity: float
    theta_infinity: float
    scale: float
    at_resonance: bool
    l: int = 0
    k: float = 0.0

    @property
    def r(self) -> np.ndarray:
        return np.tan(self.phi_grid)

    @property
    def a(self) -> np.ndarray:
        return self.scale * np.tan(self.theta)


@dataclass
class EreDirectResult:
    a0: float
    r0: float
    p0: float
    p0_reliable: bool
    pole_crossings: int
    zero_crossings: int
    trace_a0: VpaTrace = None
    trace_r0: VpaTrace = None
    trace_p0: VpaTrace = None


def range_estimate(potential: ReducedPotential, threshold: float = 1e-12) -> float:
    """Radius where |U| r^2 has fallen below threshold * its peak."""
    r = np.geomspace(potential.r_core, 1e9, 1200)
    w = np.abs(potential(r)) * r * r
    peak = w.max()
    if peak == 0.0:
        return max(1.0, 10.0 * potential.r_core)
    ipk = int(np.argmax(w))
    below = np.nonzero(w[ipk:] < threshold * peak)[0]
    if below.size == 0:
        return float(r[-1])
    return float(r[ipk + below[0]])


def _tail_coefficient(potential: ReducedPotential) -> float:
    """|U| r^n prefactor measured in the far tail (power tails only)."""
    n = potential.tail_exponent
    r_probe = 2.0 * range_estimate(potential)
    return abs(float(potential(r_probe))) * r_probe**n


def rhs_zero_energy(potential: ReducedPotential, l: int, r: float, a: float) -> float:
    """da_l(0, r)/dr."""
    u = potential(r)
    br = r ** (l + 1) / double_factorial(2 * l + 1) \
        - double_factorial(2 * l - 1) * a / r**l
    return u * br * br


def rhs_general(potential: ReducedPotential, l: int, k: float, r: float,
                a: float) -> float:
    """da_l(k, r)/dr for k > 0."""
    if k <= 0:
        raise ValueError("rhs_general requires k > 0")
    u = potential(r)
    ul, vl = riccati_uv(l, k * r)
    br = ul - k ** (2 * l + 1) * vl * a
    return u / k ** (2 * l + 2) * br * br


def _coeff_fn(potential: ReducedPotential, l: int, k: float) -> Callable:
    """r -> (pref, A, B) with da/dr = pref*(A - B a)^2."""
    if k == 0.0:
        df1 = float(double_factorial(2 * l + 1))
        df2 = float(double_factorial(2 * l - 1))
        if l == 0:
            def coeff(r):
                return potential(r), r, 1.0
        else:
            def coeff(r):
                return potential(r), r ** (l + 1) / df1, df2 / r**l
        return coeff
    kpow = k ** (2 * l + 1)
    pref_k = 1.0 / k ** (2 * l + 2)
    if l == 0:
        def coeff(r):
            kr = k * r
            return potential(r) * pref_k, math.sin(kr), k * math.cos(kr)
    else:
        def coeff(r):
            ul, vl = riccati_uv(l, k * r)
            return potential(r) * pref_k, ul, kpow * vl
    return coeff


def _phi_window(potential: ReducedPotential, k: float, scale: float,
                opts: IntegrationOptions) -> tuple:
    r_start = opts.r_start if opts.r_start is not None else potential.r_core
    phi_start = math.atan(r_start)
    margin = opts.phi_margin
    n = potential.tail_exponent
    if k > 0.0 and n is not None and n > 3:
        # truncate where the remaining tail contributes < tail_abs_tol to theta
        cu = _tail_coefficient(potential)
        if cu > 0:
            r_stop = (4.0 * cu / (scale * k * k * (n - 1) * opts.tail_abs_tol)) \
                ** (1.0 / (n - 1))
            margin = max(margin, 1.0 / r_stop)
    return phi_start, HALF_PI - margin


def _endpoint(sol, phi_end: float, extrapolate: bool, index: int = 0) -> float:
    """theta at phi -> pi/2, linearly extrapolated over the last decade."""
    eps_end = HALF_PI - phi_end
    if not extrapolate:
        return float(sol.sol(phi_end)[index])
    lo = max(sol.t[0], HALF_PI - 10.0 * eps_end)
    if lo >= phi_end:
        return float(sol.sol(phi_end)[index])
    eps = np.linspace(HALF_PI - lo, eps_end, 8)
    th = sol.sol(HALF_PI - eps)[index]
    slope, intercept = np.polyfit(eps, th, 1)
    return float(intercept)


def _integrate_tangent_form(coeff, phi_start: float, phi_end: float,
                            scale: float, opts: IntegrationOptions,
                            theta0: float = 0.0) -> tuple:
    """Shared theta-integration engine.

    Returns (sol, theta_star, pole_count).  coeff(r) -> (pref, A, B).
    """
    def rhs(phi, y):
        th = y[0]
        r = math.tan(phi)
        pref, a_c, b_c = coeff(r)
        if pref == 0.0:
            return (0.0,)
        c = math.cos(phi)
        br = a_c * math.cos(th) - b_c * scale * math.sin(th)
        return (pref * br * br / (c * c * scale),)

    def pole(phi, y):
        return math.cos(y[0])
    pole.direction = 0

    sol = solve_ivp(rhs, (phi_start, phi_end), [theta0], method=opts.method,
                    rtol=opts.rtol, atol=opts.atol, dense_output=True,
                    events=[pole])
    if sol.status != 0:
        raise StiffnessError(math.tan(sol.t[-1]), f"({sol.message})")
    theta_star = _endpoint(sol, phi_end, opts.extrapolate)
    return sol, theta_star, len(sol.t_events[0])


def integrate_theta(problem: VpaProblem, opts: IntegrationOptions = None) -> VpaTrace:
    """Integrate the compactified scattering-length-function equation.

    The trace records theta(phi) on a dense grid; a_infinity is the
    rescaled tangent of the extrapolated endpoint.
    """
    opts = opts or IntegrationOptions()
    l, k = problem.channel.l, problem.k
    scale = problem.resolved_scale()
    coeff = _coeff_fn(problem.potential, l, k)
    phi_start, phi_end = _phi_window(problem.potential, k, scale, opts)
    sol, theta_star, npoles = _integrate_tangent_form(
        coeff, phi_start, phi_end, scale, opts)
    phi = np.linspace(phi_start, phi_end, opts.n_trace)
    theta = sol.sol(phi)[0]
    at_res = abs(math.cos(theta_star)) < opts.pole_tol
    return VpaTrace(phi_grid=phi, theta=theta, pole_crossings=npoles,
                    a_infinity=scale * math.tan(theta_star),
                    theta_infinity=theta_star, scale=scale,
                    at_resonance=at_res, l=l, k=k)


def integrate_untransformed(problem: VpaProblem, r_max: float,
                            opts: IntegrationOptions = None) -> tuple:
    """Raw-variable integration of da/dr on a pole-free range.

    Diagnostic path: raises PoleEncounteredError (with a bracketing
    interval) if |a| exceeds the divergence guard.
    """
    opts = opts or IntegrationOptions()
    l, k = problem.channel.l, problem.k
    scale = problem.resolved_scale()
    coeff = _coeff_fn(problem.potential, l, k)
    guard = opts.divergence_guard * scale

    def rhs(r, y):
        pref, a_c, b_c = coeff(r)
        br = a_c - b_c * y[0]
        return (pref * br * br,)

    def blowup(r, y):
        return abs(y[0]) - guard
    blowup.terminal = True
    blowup.direction = 1

    r_start = opts.r_start if opts.r_start is not None else problem.potential.r_core
    sol = solve_ivp(rhs, (r_start, r_max), [0.0], method=opts.method,
                    rtol=opts.rtol, atol=opts.atol * scale, dense_output=True,
                    events=[blowup])
    if sol.status == 1:
        r_hit = float(sol.t_events[0][0])
        r_prev = float(sol.t[-2]) if sol.t.size > 1 else r_start
        raise PoleEncounteredError((r_prev, r_hit))
    if sol.status != 0:
        raise StiffnessError(float(sol.t[-1]), f"({sol.message})")
    r_grid = np.geomspace(r_start, r_max, opts.n_trace)
    return r_grid, sol.sol(r_grid)[0]


# ----------------------------------------------------------------------
# coupled zero-energy system for (a0, r0, p0)
# ----------------------------------------------------------------------

_ENTER_P = 0.05   # enter polynomial chart when |a0| < _ENTER_P * r
_EXIT_P = 0.10    # leave it when |a0| > _EXIT_P * r
_P0_SCALE = 1.0


def _rhs_chart_p(u_of_r: Callable):
    def rhs(phi, y):
        a0, a2, a4 = y
        r = math.tan(phi)
        uu = u_of_r(r)
        if uu == 0.0:
            return (0.0, 0.0, 0.0)
        c = math.cos(phi)
        sec2 = 1.0 / (c * c)
        x = r - a0
        yv = -a2 - r**3 / 6.0 + 0.5 * a0 * r * r
        zv = -a4 + r**5 / 120.0 - a0 * r**4 / 24.0 + 0.5 * a2 * r * r
        return (sec2 * uu * x * x,
                sec2 * 2.0 * uu * x * yv,
                sec2 * uu * (yv * yv + 2.0 * x * zv))
    return rhs


def _rhs_chart_t(u_of_r: Callable):
    def rhs(phi, y):
        th1, th2, th3 = y
        tphi = math.tan(phi)
        r = tphi
        uu = u_of_r(r)
        if uu == 0.0:
            return (0.0, 0.0, 0.0)
        c = math.cos(phi)
        sec2 = 1.0 / (c * c)
        s1 = math.sin(th1 - phi)
        d1 = sec2 * sec2 * s1 * s1 * uu
        # r0 equation, grouped so products stay bounded near spikes:
        # g = r/a0, h = cos(th2) r, u1 = cos(th2) r^2 / a0
        s1v = math.sin(th1)
        if s1v == 0.0:  # RK stage overshot exactly onto a zero of a0
            s1v = 1e-300
        ct1 = math.cos(th1) / s1v
        g = tphi * ct1
        s2, c2 = math.sin(th2), math.cos(th2)
        h = c2 * tphi
        u1 = h * g
        br = (2.0 * s2 * (h - u1) - 2.0 * h * h
              + (8.0 / 3.0) * u1 * h - (2.0 / 3.0) * u1 * u1)
        d2 = sec2 * uu * br
        # p0 equation: p0' = -2 r U (r/a0 - 1) p0 - F(r)
        s3, c3 = math.sin(th3), math.cos(th3)
        r0v = s2 / c2
        fval = (r * r * uu / 12.0) * (2.0 * r - r0v) * (2.0 * r - 3.0 * r0v) \
            + (r * r * uu / 45.0) * (2.0 * r**4 * ct1 * ct1
                                     + 3.0 * r * r * (5.0 * r0v - 4.0 * r) * ct1)
        d3 = sec2 * (-2.0 * r * uu * (g - 1.0) * s3 * c3
                     - fval * c3 * c3 / _P0_SCALE)
        return (d1, d2, d3)
    return rhs


def _t_state_from_p(a0, a2, a4):
    r0v = 2.0 * a2 / (a0 * a0)
    p0v = a2 * a2 / a0**3 - a4 / (a0 * a0)
    return [math.atan(a0), math.atan(r0v), math.atan(p0v / _P0_SCALE)]


def _p_state_from_t(th1, th2, th3):
    a0 = math.tan(th1)
    r0v = math.tan(th2)
    p0v = _P0_SCALE * math.tan(th3)
    a2 = 0.5 * r0v * a0 * a0
    a4 = a2 * a2 / a0 - p0v * a0 * a0
    return [a0, a2, a4]


def integrate_ere_direct(potential: ReducedPotential,
                         opts: IntegrationOptions = None) -> EreDirectResult:
    """Coupled s-wave integration of a0(r), r0(r) and p0(r).

    p0 is flagged unreliable when its value is still drifting at the end of
    the compactified domain (for power-law tails shallower than r^-7 the
    shape-parameter function genuinely diverges and no finite limit exists).
    """
    opts = opts or IntegrationOptions()
    u_scal = lambda r: potential(float(r))
    rhs_p = _rhs_chart_p(u_scal)
    rhs_t = _rhs_chart_t(u_scal)

    r_start = opts.r_start if opts.r_start is not None else potential.r_core
    phi = math.atan(r_start)
    phi_end = HALF_PI - opts.phi_margin

    def exit_p(ph, y):
        return abs(y[0]) - _EXIT_P * math.tan(ph)
    exit_p.terminal = True
    exit_p.direction = 1

    def a0_zero(ph, y):
        return y[0]
    a0_zero.direction = 0

    def enter_p(ph, y):
        return abs(math.tan(y[0])) - _ENTER_P * math.tan(ph)
    enter_p.terminal = True
    enter_p.direction = -1

    def pole1(ph, y):
        return math.cos(y[0])
    pole1.direction = 0

    def pole2(ph, y):
        return math.cos(y[1])
    pole2.direction = 0

    chart = "P"
    y = [0.0, 0.0, 0.0]
    poles = zeros = pole2_count = 0
    segments = []   # (chart, sol)
    last_sol = None
    while phi < phi_end:
        if chart == "P":
            sol = solve_ivp(rhs_p, (phi, phi_end), y, method=opts.method,
                            rtol=opts.rtol, atol=opts.atol,
                            events=[exit_p, a0_zero], dense_output=True)
            if sol.status == -1:
                raise StiffnessError(math.tan(sol.t[-1]), f"({sol.message})")
            zeros += len(sol.t_events[1])
            segments.append(("P", sol))
            phi = float(sol.t[-1])
            last_sol = sol
            if sol.status == 1:
                y = _t_state_from_p(*sol.y[:, -1])
                chart = "T"
            else:
                break
        else:
            sol = solve_ivp(rhs_t, (phi, phi_end), y, method=opts.method,
                            rtol=opts.rtol, atol=opts.atol,
                            events=[enter_p, pole1, pole2], dense_output=True)
            if sol.status == -1:
                raise StiffnessError(math.tan(sol.t[-1]), f"({sol.message})")
            poles += len(sol.t_events[1])
            pole2_count += len(sol.t_events[2])
            segments.append(("T", sol))
            phi = float(sol.t[-1])
            last_sol = sol
            if sol.status == 1:
                y = _p_state_from_t(*sol.y[:, -1])
                chart = "P"
            else:
                break

    # endpoint values (linear extrapolation of each component over the
    # last decade of pi/2 - phi, done in the final segment's own chart)
    eps_end = HALF_PI - phi_end

    def final_component(index):
        return _endpoint(last_sol, phi_end, opts.extrapolate, index)

    if chart == "P":
        a0 = final_component(0)
        a2 = final_component(1)
        a4 = final_component(2)
        if a0 == 0.0:
            # identically zero potential keeps the whole state at zero
            r0v = 0.0 if a2 == 0.0 else math.inf
            p0v = 0.0 if (a2 == 0.0 and a4 == 0.0) else math.inf
        else:
            r0v = 2.0 * a2 / (a0 * a0)
            p0v = a2 * a2 / a0**3 - a4 / (a0 * a0)
    else:
        th1, th2, th3 = (final_component(i) for i in range(3))
        a0 = math.tan(th1)
        r0v = math.tan(th2)
        p0v = _P0_SCALE * math.tan(th3)

    # p0 tail-drift monitor
    lo = HALF_PI - 10.0 * eps_end
    p0_reliable = math.isfinite(p0v)
    if p0_reliable and last_sol.t[0] < lo:
        yl = last_sol.sol(lo)
        if chart == "P":
            if yl[0] == 0.0:
                p0_lo = 0.0 if (yl[1] == 0.0 and yl[2] == 0.0) else math.inf
            else:
                p0_lo = yl[1] ** 2 / yl[0] ** 3 - yl[2] / yl[0] ** 2
        else:
            p0_lo = _P0_SCALE * math.tan(yl[2])
        drift = abs(p0v - p0_lo)
        p0_reliable = drift <= opts.p0_drift_tol * max(abs(p0v), 1e-300)

    trace_a0, trace_r0, trace_p0 = _ere_traces(segments, opts)
    trace_a0 = replace(trace_a0, pole_crossings=poles,
                       a_infinity=a0, theta_infinity=math.atan(a0))
    trace_r0 = replace(trace_r0, pole_crossings=pole2_count + zeros,
                       a_infinity=r0v, theta_infinity=math.atan(r0v))
    trace_p0 = replace(trace_p0, a_infinity=p0v,
                       theta_infinity=math.atan(p0v / _P0_SCALE))
    return EreDirectResult(a0=a0, r0=r0v, p0=p0v, p0_reliable=p0_reliable,
                           pole_crossings=poles, zero_crossings=zeros,
                           trace_a0=trace_a0, trace_r0=trace_r0,
                           trace_p0=trace_p0)


def _ere_traces(segments, opts: IntegrationOptions):
    """Dense (phi, theta) traces of the three functions across all segments."""
    total = sum(seg.t[-1] - seg.t[0] for _, seg in segments)
    phis, th1s, th2s, th3s = [], [], [], []
    for kind, seg in segments:
        span = seg.t[-1] - seg.t[0]
        n = max(8, int(opts.n_trace * span / total)) if total > 0 else 8
        pgrid = np.linspace(seg.t[0], seg.t[-1], n)
        yv = seg.sol(pgrid)
        if kind == "P":
            a0v, a2v, a4v = yv
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = np.arctan(a0v)
                dead = (a0v == 0.0) & (a2v == 0.0)
                t2 = np.arctan(np.where(dead, 0.0,
                                        2.0 * a2v / np.where(a0v == 0, 1e-300, a0v) ** 2))
                p0v = (a2v**2 / np.where(a0v == 0, 1e-300, a0v) ** 3
                       - a4v / np.where(a0v == 0, 1e-300, a0v) ** 2)
                t3 = np.arctan(np.where(dead & (a4v == 0.0), 0.0, p0v) / _P0_SCALE)
        else:
            t1, t2, t3 = yv
        phis.append(pgrid)
        th1s.append(t1)
        th2s.append(t2)
        th3s.append(t3)
    phi = np.concatenate(phis)
    mk = lambda th: VpaTrace(phi_grid=phi, theta=np.concatenate(th),
                             pole_crossings=0, a_infinity=math.nan,
                             theta_infinity=math.nan, scale=1.0,
                             at_resonance=False, l=0, k=0.0)
    return mk(th1s), mk(th2s), mk(th3s)


def validity_check(potential: ReducedPotential, l: int) -> str:
    """Warn when the zero-energy equation is non-integrable at infinity.

    For U ~ r^-n the k = 0 integrand grows like r^(2l+2-n); the limit
    exists only when 2l + 2 - n < -1.  Exponential tails always pass.
    """
    n = potential.tail_exponent
    if n is None:
        n = _measured_tail_slope(potential)
        if n is None:
            return OK
    return LONG_RANGE_WARNING if 2 * l + 2 - n >= -1 else OK


def _measured_tail_slope(potential: ReducedPotential) -> Optional[float]:
    """Local power-law slope -dln|U|/dln r far outside the range."""
    r0 = 2.0 * range_estimate(potential)
    u1, u2 = abs(float(potential(r0))), abs(float(potential(2.0 * r0)))
    if u1 == 0.0 or u2 == 0.0:
        return None  # numerically dead tail: faster than any power
    n_est = math.log(u1 / u2) / math.log(2.0)
    # steepening slope means faster-than-power decay
    u3 = abs(float(potential(4.0 * r0)))
    if u3 == 0.0:
        return None
    n_est2 = math.log(u2 / u3) / math.log(2.0)
    if n_est2 > n_est + 1.0:
        return None
    return n_est
