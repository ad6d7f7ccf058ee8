"""Direct radial-equation solver used to cross-check the phase-function path.

The regular solution of

    phi'' = [U(r) + l(l+1)/r^2 - k^2] phi,   phi ~ r^(l+1) near 0,

is marched outward with a fixed-step Numerov recurrence through the
potential region, then continued with an adaptive high-order Runge-Kutta
integrator through the (smooth, slowly varying) tail out to the matching
region.  tan(delta_l) comes from a two-point match against the free pair
u_l, v_l; a Wronskian-based extraction at the same radius provides the
consistency residual.  Everything is normalization-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .potentials import Channel, ReducedPotential
from .specfun import riccati_bessel
from .vpa import range_estimate, _tail_coefficient

_RESCALE_LIMIT = 1e250


@dataclass
class RadialSolution:
    """Sampled regular solution; dphi is d(phi)/dr where available."""

    r: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    k: float
    l: int
    r_switch: float
    rescaled: bool = False


@dataclass
class PhaseShiftResult:
    l: int
    k: float
    delta: float
    tan_delta: float
    match_radius: float
    residual: float


def _numerov_march(f, h: float, y0: float, y1: float):
    """March y'' = f y on a uniform grid; returns (values, rescaled flag)."""
    n = len(f)
    h2 = h * h / 12.0
    ys = [0.0] * n
    ys[0], ys[1] = y0, y1
    flist = list(f)
    rescaled = False
    ym, y = y0, y1
    for i in range(1, n - 1):
        yp = ((2.0 + 10.0 * h2 * flist[i]) * y
              - (1.0 - h2 * flist[i - 1]) * ym) / (1.0 - h2 * flist[i + 1])
        ys[i + 1] = yp
        ym, y = y, yp
        if abs(yp) > _RESCALE_LIMIT:
            scale = 1.0 / abs(yp)
            ym *= scale
            y *= scale
            for j in range(i + 2):
                ys[j] *= scale
            rescaled = True
    return np.array(ys), rescaled


def _default_step(potential: ReducedPotential, channel: Channel, k: float,
                  r_lo: float, r_hi: float) -> float:
    """Uniform Numerov step resolving both k and the local wavenumber."""
    rr = np.geomspace(max(r_lo, 1e-12), r_hi, 400)
    f = np.abs(potential(rr)) + channel.l * (channel.l + 1) / rr**2
    kappa = math.sqrt(max(float(np.max(f)), k * k, 1e-30))
    h = min(0.01 / max(k, 1e-30), 0.015 / kappa)
    n = (r_hi - r_lo) / h
    if n > 4e6:
        h = (r_hi - r_lo) / 4e6
    return h


def suggest_r_max(potential: ReducedPotential, k: float, l: int,
                  tol: float = 1e-8) -> float:
    """Radius beyond which the residual tail shifts tan(delta) by < ~tol.

    Power tails use the Born bound on the remaining phase accumulation;
    faster-than-power tails scan for |U| < tol * k^2.
    """
    rng = range_estimate(potential)
    n = potential.tail_exponent
    if n is not None and n > 3:
        cu = _tail_coefficient(potential)
        if cu > 0:
            # Born bound on the残 tail of tan(delta): the sin^2 weight is
            # ~(kr)^2 below r = 1/k and saturates at 1/2 beyond it.
            r_osc = (cu / (2.0 * k * (n - 1) * tol)) ** (1.0 / (n - 1))
            r_quad = (k * cu / ((n - 3) * tol)) ** (1.0 / (n - 3))
            if r_osc >= 1.0 / k:
                r_tail = r_osc
            elif r_quad <= 1.0 / k:
                r_tail = r_quad
            else:
                r_tail = 1.0 / k
            return max(3.0 * rng, r_tail)
    # exponential-ish tail: find |U| < tol * k^2
    r = max(rng, potential.r_core * 10)
    for _ in range(200):
        if abs(float(potential(r))) < tol * k * k:
            return max(1.5 * r, 2.0 * rng)
        r *= 1.2
    return r


def solve_radial(potential: ReducedPotential, channel: Channel, k: float,
                 r_max: float, h: Optional[float] = None,
                 r_switch: Optional[float] = None,
                 rtol: float = 1e-12) -> RadialSolution:
    """Outward integration of the regular solution up to r_max."""
    if k <= 0:
        raise ValueError("k must be positive")
    l = channel.l
    if r_switch is None:
        r_switch = min(r_max, max(1.5 * range_estimate(potential), 5.0))
    r_switch = min(r_switch, r_max)
    r_lo = potential.r_core
    if h is None:
        h = _default_step(potential, channel, k, r_lo, r_switch)

    n = max(int(math.ceil((r_switch - r_lo) / h)) + 1, 8)
    grid = r_lo + h * np.arange(n)
    f = potential(grid) + l * (l + 1) / grid**2 - k * k
    # regular start phi ~ r^(l+1); amplitude is arbitrary
    y0 = grid[0] ** (l + 1)
    y1 = grid[1] ** (l + 1)
    phi_core, rescaled = _numerov_march(f.tolist(), h, y0, y1)

    # derivative on the core grid (5-point interior stencil)
    dphi_core = np.gradient(phi_core, h, edge_order=2)
    i_sw = n - 3
    dsw = (phi_core[i_sw - 2] - 8.0 * phi_core[i_sw - 1]
           + 8.0 * phi_core[i_sw + 1] - phi_core[i_sw + 2]) / (12.0 * h)
    dphi_core[i_sw] = dsw
    r_sw = float(grid[i_sw])

    if r_sw >= r_max * (1 - 1e-12):
        return RadialSolution(r=grid, phi=phi_core, dphi=dphi_core, k=k, l=l,
                              r_switch=r_sw, rescaled=rescaled)

    # adaptive continuation through the tail
    norm = max(abs(phi_core[i_sw]), abs(dsw) / max(k, 1.0))
    y_start = [phi_core[i_sw] / norm, dsw / norm]

    def rhs(r, y):
        return (y[1], (potential(r) + l * (l + 1) / (r * r) - k * k) * y[0])

    sol = solve_ivp(rhs, (r_sw, r_max), y_start, method="DOP853",
                    rtol=rtol, atol=1e-14, dense_output=True)
    if sol.status != 0:
        raise RuntimeError(f"tail integration failed: {sol.message}")
    r_tail = np.linspace(r_sw, r_max, 1500)[1:]
    y_tail = sol.sol(r_tail)

    r_all = np.concatenate([grid[:i_sw + 1], r_tail])
    phi_all = np.concatenate([phi_core[:i_sw + 1] / norm, y_tail[0]])
    dphi_all = np.concatenate([dphi_core[:i_sw + 1] / norm, y_tail[1]])
    return RadialSolution(r=r_all, phi=phi_all, dphi=dphi_all, k=k, l=l,
                          r_switch=r_sw, rescaled=rescaled)


def extract_phase(sol: RadialSolution, l: Optional[int] = None,
                  k: Optional[float] = None, r1: Optional[float] = None,
                  r2: Optional[float] = None) -> PhaseShiftResult:
    """Two-point match of the sampled solution against u_l, v_l.

    Solves phi(r_i) = q u_l(k r_i) + p v_l(k r_i) for (q, p); then
    tan(delta) = p/q.  If the two radii are nearly in phase (k dr close to a
    multiple of pi) the second radius is shifted by a quarter wavelength.
    The residual compares against the Wronskian-form extraction
    q = W[v, phi]/k, p = -W[u, phi]/k at r2.
    """
    l = sol.l if l is None else l
    k = sol.k if k is None else k
    r_hi = float(sol.r[-1])
    if r2 is None:
        r2 = r_hi
    if r1 is None:
        r1 = r2 - 0.25 * math.pi / k
        if r1 <= sol.r[0]:
            r1 = 0.5 * (sol.r[0] + r2)

    for attempt in range(4):
        i1 = int(np.argmin(np.abs(sol.r - r1)))
        i2 = int(np.argmin(np.abs(sol.r - r2)))
        if i1 == i2:
            raise ValueError("matching radii collapse onto one grid node")
        ra, rb = float(sol.r[i1]), float(sol.r[i2])
        pa = riccati_bessel(l, k * ra)
        pb = riccati_bessel(l, k * rb)
        mat = np.array([[pa.u, pa.v], [pb.u, pb.v]])
        det = mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0]
        # det ~ sin(k (ra - rb)); ill-conditioned near multiples of pi
        if abs(det) > 0.05:
            break
        r1 = r1 - 0.25 * math.pi / k * (attempt + 1) / 2.0
    q, p = np.linalg.solve(mat, [sol.phi[i1], sol.phi[i2]])
    tan_delta = p / q

    # Wronskian cross-check at rb (needs dphi)
    residual = math.nan
    if sol.dphi is not None and math.isfinite(sol.dphi[i2]):
        w_q = (pb.v * sol.dphi[i2] - k * pb.dv * sol.phi[i2]) / k
        w_p = -(pb.u * sol.dphi[i2] - k * pb.du * sol.phi[i2]) / k
        if w_q != 0.0:
            residual = abs(w_p / w_q - tan_delta) / (1.0 + abs(tan_delta))
    delta = math.atan(tan_delta)
    return PhaseShiftResult(l=l, k=k, delta=delta, tan_delta=float(tan_delta),
                            match_radius=rb, residual=float(residual))


def phase_shift(potential: ReducedPotential, channel: Channel, k: float,
                r_max: Optional[float] = None, **kwargs) -> PhaseShiftResult:
    """Convenience wrapper: solve_radial + extract_phase."""
    if r_max is None:
        r_max = suggest_r_max(potential, k, channel.l)
    sol = solve_radial(potential, channel, k, r_max, **kwargs)
    return extract_phase(sol)


def count_bound_states(potential: ReducedPotential, channel: Channel,
                       r_max: Optional[float] = None,
                       h: Optional[float] = None) -> int:
    """Nodes of the zero-energy regular solution (= bound-state count).

    Beyond the integration range the zero-energy solution is
    alpha r^(l+1) + beta r^(-l); one further node exists iff alpha and beta
    have opposite signs at a radius beyond the grid.
    """
    l = channel.l
    rng = range_estimate(potential)
    if r_max is None:
        r_max = 3.0 * rng
    r_lo = potential.r_core
    if h is None:
        h = _default_step(potential, channel, 0.0, r_lo, r_max)
    n = max(int(math.ceil((r_max - r_lo) / h)) + 1, 8)
    grid = r_lo + h * np.arange(n)
    f = potential(grid) + l * (l + 1) / grid**2
    phi, _ = _numerov_march(f.tolist(), h, grid[0] ** (l + 1), grid[1] ** (l + 1))
    sign_changes = int(np.sum(np.abs(np.diff(np.sign(phi[phi != 0.0]))) > 1))
    # asymptotic extrapolation for one last node
    rb = float(grid[-3])
    pb = phi[-3]
    db = (phi[-5] - 8.0 * phi[-4] + 8.0 * phi[-2] - phi[-1]) / (12.0 * h)
    alpha = (l * pb / rb + db) * rb ** (-l) / (2 * l + 1)
    beta = (pb - alpha * rb ** (l + 1)) * rb**l
    if alpha != 0.0 and beta != 0.0 and (alpha < 0) != (beta < 0):
        r_node = (-beta / alpha) ** (1.0 / (2 * l + 1))
        if r_node > rb:
            sign_changes += 1
    return sign_changes
