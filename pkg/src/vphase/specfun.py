"""Riccati-Bessel and Riccati-Neumann functions.

The pair used throughout is

    u_l(rho) = rho * j_l(rho)          (regular)
    v_l(rho) = -rho * y_l(rho)         (irregular)

with j_l, y_l the spherical Bessel functions.  The sign of v_l is chosen so
that v_0 = cos(rho) and the Wronskian in rho is

    v_l * u_l' - v_l' * u_l = 1.

Evaluation strategy:

* rho < 1:  ascending power series for every order (the closed forms lose
  all precision here through cancellation, e.g. u_2(1e-6)).
* rho >= 1: closed forms for l <= 2; Miller downward recursion for u_l and
  upward recursion for v_l beyond that (upward u recursion is unstable for
  rho < l).

Derivatives use omega_l' = omega_{l-1} - (l/rho) omega_l with the seeds
u_{-1} = cos(rho), v_{-1} = -sin(rho).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_L_MAX = 10

_SERIES_RHO = 1.0
_SERIES_TOL = 1e-18
_MILLER_PAD = 20


class UnsupportedOrderError(ValueError):
    """Angular momentum above the configured cap."""


@dataclass(frozen=True)
class RiccatiPair:
    """u_l, v_l and their rho-derivatives at a single point."""

    l: int
    rho: float
    u: float
    v: float
    du: float
    dv: float

    def wronskian(self) -> float:
        """v u' - v' u; equals 1 for exact values."""
        return self.v * self.du - self.dv * self.u


def double_factorial(n: int) -> int:
    """n!! with the conventions (-1)!! = 0!! = 1."""
    if n < -1:
        raise ValueError(f"double factorial undefined for n={n}")
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def small_rho_u(l: int, rho: float) -> float:
    """Leading small-argument behaviour rho^(l+1) / (2l+1)!!."""
    _check_domain(l, rho)
    return rho ** (l + 1) / double_factorial(2 * l + 1)


def small_rho_v(l: int, rho: float) -> float:
    """Leading small-argument behaviour (2l-1)!! / rho^l."""
    _check_domain(l, rho)
    return double_factorial(2 * l - 1) / rho**l


def _check_domain(l: int, rho: float) -> None:
    if l < 0 or l != int(l):
        raise ValueError(f"l must be a non-negative integer, got {l}")
    if not rho > 0.0:
        raise ValueError(f"rho must be positive, got {rho}")


def _u_series(l: int, rho: float) -> float:
    # u_l = rho^(l+1)/(2l+1)!! * sum_k (-rho^2/2)^k / [k! prod_{m=1..k}(2l+2m+1)]
    x = -0.5 * rho * rho
    term = 1.0
    total = 1.0
    for k in range(1, 60):
        term *= x / (k * (2 * l + 2 * k + 1))
        total += term
        if abs(term) < _SERIES_TOL * abs(total):
            break
    return rho ** (l + 1) / double_factorial(2 * l + 1) * total


def _v_series(l: int, rho: float) -> float:
    # v_l = (2l-1)!! rho^-l * sum_k (-rho^2/2)^k / [k! prod_{m=1..k}(2m-1-2l)]
    x = -0.5 * rho * rho
    term = 1.0
    total = 1.0
    for k in range(1, 60):
        term *= x / (k * (2 * k - 1 - 2 * l))
        total += term
        if abs(term) < _SERIES_TOL * abs(total):
            break
    return double_factorial(2 * l - 1) / rho**l * total


def _u_closed(l: int, rho: float) -> float:
    s, c = math.sin(rho), math.cos(rho)
    if l == -1:
        return c
    if l == 0:
        return s
    if l == 1:
        return s / rho - c
    return (3.0 / (rho * rho) - 1.0) * s - 3.0 * c / rho


def _v_closed(l: int, rho: float) -> float:
    s, c = math.sin(rho), math.cos(rho)
    if l == -1:
        return -s
    if l == 0:
        return c
    if l == 1:
        return c / rho + s
    return (3.0 / (rho * rho) - 1.0) * c + 3.0 * s / rho


def _u_values(l: int, rho: float) -> tuple[float, float]:
    """(u_l, u_{l-1}) at rho."""
    if rho < _SERIES_RHO:
        um1 = math.cos(rho) if l == 0 else _u_series(l - 1, rho)
        return _u_series(l, rho), um1
    if l <= 2:
        return _u_closed(l, rho), _u_closed(l - 1, rho)
    if rho >= l:
        # oscillatory regime: upward recursion is stable
        um1, u = _u_closed(1, rho), _u_closed(2, rho)
        for m in range(2, l):
            um1, u = u, (2 * m + 1) / rho * u - um1
        return u, um1
    # rho < l: Miller downward recursion, normalized against a closed form
    top = l + _MILLER_PAD
    up1, u = 0.0, 1e-280
    vals = [0.0] * (top + 1)
    vals[top] = u
    for m in range(top, 0, -1):
        um1 = (2 * m + 1) / rho * u - up1
        up1, u = u, um1
        vals[m - 1] = um1
        if abs(um1) > 1e260:
            scale = 1e-260
            up1 *= scale
            u *= scale
            for i in range(m - 1, top + 1):
                vals[i] *= scale
    s = math.sin(rho)
    if abs(s) > 0.1:
        scale = s / vals[0]
    else:
        scale = (s / rho - math.cos(rho)) / vals[1]
    return vals[l] * scale, vals[l - 1] * scale


def _v_values(l: int, rho: float) -> tuple[float, float]:
    """(v_l, v_{l-1}) at rho."""
    if rho < _SERIES_RHO:
        vm1 = -math.sin(rho) if l == 0 else _v_series(l - 1, rho)
        return _v_series(l, rho), vm1
    if l <= 2:
        return _v_closed(l, rho), _v_closed(l - 1, rho)
    vm1, v = _v_closed(0, rho), _v_closed(1, rho)
    for m in range(1, l):
        vm1, v = v, (2 * m + 1) / rho * v - vm1
    return v, vm1


def riccati_uv(l: int, rho: float) -> tuple[float, float]:
    """(u_l, v_l) only -- cheap path for ODE right-hand sides."""
    return _u_values(l, rho)[0], _v_values(l, rho)[0]


def riccati_bessel(l: int, rho: float, l_max: int = DEFAULT_L_MAX) -> RiccatiPair:
    """Evaluate u_l, v_l and their rho-derivatives.

    Raises ValueError for rho <= 0 and UnsupportedOrderError for l > l_max.
    """
    _check_domain(l, rho)
    if l > l_max:
        raise UnsupportedOrderError(f"l={l} exceeds l_max={l_max}")
    u, um1 = _u_values(l, rho)
    v, vm1 = _v_values(l, rho)
    du = um1 - l * u / rho
    dv = vm1 - l * v / rho
    return RiccatiPair(l=l, rho=rho, u=u, v=v, du=du, dv=dv)
