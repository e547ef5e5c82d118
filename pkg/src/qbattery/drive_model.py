"""Tri-axial harmonic charging field and its Fourier decomposition.

H(t) = omega0 Jz + sum_i A_i cos(w_i t + ph_i) J_i,  i = x, y, z.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from functools import reduce

import numpy as np

from .errors import IncommensurateFrequencies
from .spin_algebra import SpinOperators

AXES = ("x", "y", "z")
MAX_DENOMINATOR = 64


@dataclass(frozen=True)
class DriveConfig:
    n_units: int = 1
    omega0: float = 1.0
    ax: float = 0.0
    ay: float = 0.0
    az: float = 0.0
    wx: float = 0.0
    wy: float = 0.0
    wz: float = 0.0
    phx: float = 0.0
    phy: float = 0.0
    phz: float = 0.0

    def __post_init__(self):
        if int(self.n_units) != self.n_units or self.n_units < 1:
            raise ValueError(f"n_units must be a positive integer, got {self.n_units!r}")
        object.__setattr__(self, "n_units", int(self.n_units))
        for f in fields(self)[1:]:
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, value)
        for axis in AXES:
            if self.frequency(axis) < 0:
                raise ValueError(f"w{axis} must be non-negative")

    def strength(self, axis: str) -> float:
        return getattr(self, "a" + axis)

    def frequency(self, axis: str) -> float:
        return getattr(self, "w" + axis)

    def phase(self, axis: str) -> float:
        return getattr(self, "ph" + axis)

    @property
    def total_strength(self) -> float:
        return math.sqrt(self.ax**2 + self.ay**2 + self.az**2)

    def active_axes(self) -> list[str]:
        return [axis for axis in AXES if self.strength(axis) != 0.0]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DriveConfig":
        """Accept either Cartesian (ax, ay, az) or spherical (a, theta, phi) strengths."""
        data = dict(data)
        spherical = {"a", "theta", "phi"} & data.keys()
        cartesian = {"ax", "ay", "az"} & data.keys()
        if spherical and cartesian:
            raise ValueError("give either ax/ay/az or a/theta/phi, not both")
        if spherical:
            if spherical != {"a", "theta", "phi"}:
                raise ValueError("spherical form needs all of a, theta, phi")
            theta = float(data.pop("theta"))
            if not -math.pi / 2 <= theta < math.pi / 2:
                raise ValueError("theta must lie in [-pi/2, pi/2)")
            a = float(data.pop("a"))
            if a < 0:
                raise ValueError("a must be non-negative")
            ax, ay, az = spherical_to_cartesian(a, theta, float(data.pop("phi")))
            data.update(ax=ax, ay=ay, az=az)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def max_frequency(self) -> float:
        """Largest of omega0, the active drive frequencies and the total strength."""
        freqs = [abs(self.omega0), self.total_strength]
        freqs += [self.frequency(axis) for axis in self.active_axes()]
        return max(freqs)


def spherical_to_cartesian(a: float, theta: float, phi: float) -> tuple[float, float, float]:
    return (
        a * math.cos(theta) * math.cos(phi),
        a * math.cos(theta) * math.sin(phi),
        a * math.sin(theta),
    )


def h_system(
    a: float, omega: float, omega0: float = 1.0, n_units: int = 1, phase: float = 0.0
) -> DriveConfig:
    """Circularly polarized two-axis drive with total strength ``a``."""
    half = a * math.sqrt(0.5)
    return DriveConfig(
        n_units=n_units, omega0=omega0, ax=half, ay=half, wx=omega, wy=omega,
        phx=phase, phy=phase - math.pi / 2,
    )


def drive_coefficients(config: DriveConfig, t) -> np.ndarray:
    """Coefficient vectors b(t) with H(t) = b(t).J; shape (..., 3)."""
    t = np.asarray(t, dtype=float)
    out = np.empty(t.shape + (3,))
    for k, axis in enumerate(AXES):
        a = config.strength(axis)
        out[..., k] = a * np.cos(config.frequency(axis) * t + config.phase(axis)) if a else 0.0
    out[..., 2] += config.omega0
    return out


def _check_match(config: DriveConfig, ops: SpinOperators):
    if config.n_units != ops.n_units:
        raise ValueError(f"config has N={config.n_units} but operators have N={ops.n_units}")


def hamiltonian_at(config: DriveConfig, ops: SpinOperators, t) -> np.ndarray:
    """H(t) as a (N+1)x(N+1) matrix; vectorized over an array of times."""
    _check_match(config, ops)
    b = drive_coefficients(config, t)
    return (
        b[..., 0, None, None] * ops.jx
        + b[..., 1, None, None] * ops.jy
        + b[..., 2, None, None] * ops.jz
    )


def common_base_frequency(config: DriveConfig, tol: float = 1e-9) -> tuple[float, tuple[int, int, int]]:
    """Largest w with every active drive frequency an integer multiple of it.

    Pairwise ratios against the smallest frequency are approximated by
    fractions with denominator at most 64. Static or inactive axes get
    multiplier 0.
    """
    freqs = {axis: config.frequency(axis) for axis in config.active_axes()
             if config.frequency(axis) > 0}
    if not freqs:
        raise ValueError("no oscillating drive axis; base frequency undefined")
    ref = min(freqs.values())
    ratios = {}
    for axis, w in freqs.items():
        exact = w / ref
        frac = Fraction(exact).limit_denominator(MAX_DENOMINATOR)
        if abs(float(frac) - exact) > tol * max(1.0, exact):
            raise IncommensurateFrequencies(
                f"w{axis}/{ref:g} = {exact!r} has no rational approximation "
                f"with denominator <= {MAX_DENOMINATOR} within {tol:g}"
            )
        ratios[axis] = frac
    lcm = reduce(math.lcm, (f.denominator for f in ratios.values()), 1)
    ints = {axis: f.numerator * (lcm // f.denominator) for axis, f in ratios.items()}
    gcd = reduce(math.gcd, ints.values())
    base = ref * gcd / lcm
    mult = tuple(ints.get(axis, 0) // gcd for axis in AXES)
    return base, mult


@dataclass(frozen=True, eq=False)
class FourierComponents:
    base_frequency: float
    harmonics: dict
    n_units: int

    @property
    def max_harmonic(self) -> int:
        nonzero = [abs(n) for n, h in self.harmonics.items() if np.any(h != 0)]
        return max(nonzero, default=0)

    def harmonic(self, n: int) -> np.ndarray:
        h = self.harmonics.get(n)
        if h is None:
            d = self.n_units + 1
            return np.zeros((d, d), dtype=complex)
        return h

    def evaluate(self, t) -> np.ndarray:
        """Sum_n H_n exp(i n w t); vectorized over t."""
        t = np.asarray(t, dtype=float)
        total = 0
        for n, h in self.harmonics.items():
            total = total + np.exp(1j * n * self.base_frequency * t)[..., None, None] * h
        return total


def fourier_components(
    config: DriveConfig, ops: SpinOperators, base: float, multipliers
) -> FourierComponents:
    """H_n = omega0 Jz d(n,0) + 1/2 sum_i A_i (e^{i ph_i} d(n,n_i) + e^{-i ph_i} d(n,-n_i)) J_i."""
    _check_match(config, ops)
    if base <= 0:
        raise ValueError("base frequency must be positive")
    harmonics: dict[int, np.ndarray] = {0: config.omega0 * ops.jz.copy()}
    generators = dict(zip(AXES, (ops.jx, ops.jy, ops.jz)))
    for axis, n in zip(AXES, multipliers):
        a = config.strength(axis)
        if a == 0.0:
            continue
        if int(n) != n or n < 0:
            raise ValueError(f"multiplier for {axis} must be a non-negative integer")
        w = config.frequency(axis)
        if abs(n * base - w) > 1e-9 * max(1.0, w):
            raise ValueError(f"w{axis} = {w!r} is not {n} x {base!r}")
        n = int(n)
        ph = config.phase(axis)
        for sign in (1, -1):
            term = 0.5 * a * np.exp(1j * sign * ph) * generators[axis]
            harmonics[sign * n] = harmonics.get(sign * n, 0) + term
    return FourierComponents(base, harmonics, config.n_units)
