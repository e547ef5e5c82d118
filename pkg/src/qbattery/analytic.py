"""Closed-form and semi-analytic charging curves.

Covers the parallel (z-only) drive, the exactly solvable circular drive, the
counter-rotating hybridized RWA (CHRWA) treatment of a single-axis drive, and
the Bessel-root conditions for the fastest CHRWA full charge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NoRoot

SERIES_LIMIT = 12.0
MAX_ORDER = 8
MAX_ARG = 50.0


def _bessel_series(n: int, x: float) -> float:
    half_sq = (x / 2) ** 2
    term = (x / 2) ** n / math.factorial(n)
    terms = [term]
    k = 0
    while True:
        k += 1
        term *= -half_sq / (k * (k + n))
        terms.append(term)
        if k > x and abs(term) < 1e-18:
            break
    return math.fsum(terms)


def _bessel_miller(n: int, x: float) -> float:
    # Downward recurrence from far above the turning point, normalized with
    # J0^2 + 2 sum_{k>=1} Jk^2 = 1.
    start = 2 * (int(x) + 30 + n)
    j_next, j_cur = 0.0, 1e-30
    values = [0.0] * (start + 1)
    values[start] = j_cur
    for k in range(start, 0, -1):
        j_prev = (2 * k / x) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        values[k - 1] = j_cur
        if abs(j_cur) > 1e250:
            values = [v * 1e-250 for v in values]
            j_next *= 1e-250
            j_cur *= 1e-250
    norm_sq = values[0] ** 2 + 2 * math.fsum(v * v for v in values[1:])
    return values[n] / math.sqrt(norm_sq)


def bessel_j(order: int, x: float) -> float:
    """Bessel function of the first kind J_order(x) for order 0..8, |x| <= 50."""
    if int(order) != order or not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be an integer in [0, {MAX_ORDER}], got {order!r}")
    if not abs(x) <= MAX_ARG:
        raise ValueError(f"|x| must be <= {MAX_ARG}, got {x!r}")
    n = int(order)
    sign = -1.0 if (x < 0 and n % 2) else 1.0
    ax = abs(float(x))
    if ax == 0.0:
        return 1.0 if n == 0 else 0.0
    if ax <= SERIES_LIMIT:
        return sign * _bessel_series(n, ax)
    return sign * _bessel_miller(n, ax)


def bisect(f, lo: float, hi: float, xtol: float = 1e-15, max_iter: int = 200) -> float:
    """Root of f in [lo, hi]; f(lo) and f(hi) must differ in sign."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if (flo > 0) == (fhi > 0):
        raise NoRoot(f"no sign change on [{lo}, {hi}]", (lo, hi))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0 or hi - lo <= xtol * max(1.0, abs(mid)):
            return mid
        if (fmid > 0) == (flo > 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def first_sign_change(f, lo: float, hi: float, step: float) -> tuple[float, float]:
    """Scan [lo, hi] at the given resolution; return the first bracketing cell."""
    n = max(1, math.ceil((hi - lo) / step))
    grid = np.linspace(lo, hi, n + 1)
    prev_x, prev_f = grid[0], f(grid[0])
    for x in grid[1:]:
        fx = f(x)
        if prev_f == 0 or (fx > 0) != (prev_f > 0) or fx == 0:
            return float(prev_x), float(x)
        prev_x, prev_f = x, fx
    raise NoRoot(f"no sign change on [{lo}, {hi}] at resolution {step:g}", (lo, hi))


def eta_parallel(t) -> float | np.ndarray:
    """A drive along z only adds a phase to |N/2, -N/2>; nothing is stored."""
    return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0


def eta_circular(a: float, omega: float, omega0: float, t):
    """A^2/(4 Omega^2) (1 - cos Omega t), Omega = sqrt((w0 - w)^2 + A^2/2)."""
    if a < 0:
        raise ValueError("strength must be non-negative")
    if a == 0:
        return eta_parallel(t)
    rabi = math.sqrt((omega0 - omega) ** 2 + 0.5 * a * a)
    return a * a / (4 * rabi * rabi) * (1 - np.cos(rabi * np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class ChrwaParams:
    xi: float
    a_tilde: float
    delta_tilde: float
    omega_r: float
    z: float
    a: float
    omega: float
    omega0: float


def chrwa_solve_xi(a: float, omega: float, omega0: float = 1.0) -> ChrwaParams:
    """Smallest root in [0, 1] of A(1 - xi) = 2 w0 J1(A xi / w), plus derived rates."""
    if a <= 0 or omega <= 0:
        raise ValueError("A and omega must be positive")

    def regulating(xi):
        return a * (1 - xi) - 2 * omega0 * bessel_j(1, a * xi / omega)

    lo, hi = first_sign_change(regulating, 0.0, 1.0, 1e-4)
    xi = bisect(regulating, lo, hi)
    z = a * xi / omega
    a_tilde = a * (1 - xi)
    delta_tilde = omega0 * bessel_j(0, z) - omega
    return ChrwaParams(
        xi=xi, a_tilde=a_tilde, delta_tilde=delta_tilde,
        omega_r=math.hypot(delta_tilde, a_tilde), z=z,
        a=a, omega=omega, omega0=omega0,
    )


def eta_chrwa(a: float, omega: float, omega0: float, t, params: ChrwaParams | None = None):
    """CHRWA saturation for H = w0 Jz + A cos(wt) Jx, starting uncharged (zero phase)."""
    p = chrwa_solve_xi(a, omega, omega0) if params is None else params
    t = np.asarray(t, dtype=float)
    phi = p.z * np.sin(omega * t)
    sin_r = np.sin(p.omega_r * t)
    cos_r = np.cos(p.omega_r * t)
    value = 0.5 * (
        1 - np.cos(phi)
        + sin_r / p.omega_r * p.a_tilde * np.cos(omega * t) * np.sin(phi)
        + (cos_r - 1) / p.omega_r**2
        * (p.a_tilde * p.delta_tilde * np.sin(omega * t) * np.sin(phi)
           - p.a_tilde**2 * np.cos(phi))
    )
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class OptimalChrwa:
    k: int
    z_root: float
    a_opt: float
    omega_opt: float
    t_min: float


def optimal_chrwa_params(omega0: float = 1.0, k: int = 1) -> OptimalChrwa:
    """Resonant CHRWA drive reaching full charge, from J0(z) = 2k J1(z).

    Zero effective detuning and Omega_R = A~ give A = w0 J0(z)(z + 1/k) and
    w = w0 J0(z); the first full charge is at t = pi / A~ = k pi / (w0 J0(z)).
    """
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    z = bisect(lambda x: bessel_j(0, x) - 2 * k * bessel_j(1, x), 1e-12, 2.405)
    j0 = bessel_j(0, z)
    return OptimalChrwa(
        k=int(k), z_root=z, a_opt=omega0 * j0 * (z + 1 / k),
        omega_opt=omega0 * j0, t_min=k * math.pi / (omega0 * j0),
    )
