"""Collective spin operators for an N-unit two-level battery pack.

The Dicke basis |N/2, m> is ordered by descending m, so the uncharged state
|N/2, -N/2> is always the last basis vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpinOperators:
    n_units: int
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    jp: np.ndarray
    jm: np.ndarray

    @property
    def dim(self) -> int:
        return self.n_units + 1

    @property
    def spin(self) -> float:
        return self.n_units / 2

    @property
    def m_values(self) -> np.ndarray:
        return self.jz.diagonal().real

    def dot(self, vec) -> np.ndarray:
        """Return vec[0]*Jx + vec[1]*Jy + vec[2]*Jz."""
        return vec[0] * self.jx + vec[1] * self.jy + vec[2] * self.jz


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray
    n_units: int

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.shape != (self.n_units + 1,):
            raise ValueError(
                f"expected {self.n_units + 1} amplitudes, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def _check_units(n_units) -> int:
    if int(n_units) != n_units or n_units < 1:
        raise ValueError(f"n_units must be a positive integer, got {n_units!r}")
    return int(n_units)


@lru_cache(maxsize=64)
def build_operators(n_units: int) -> SpinOperators:
    """Spin-N/2 generators in the descending-m Dicke basis.

    Ladder elements follow J+|s,m> = sqrt(s(s+1) - m(m+1)) |s,m+1>.
    """
    n = _check_units(n_units)
    s = n / 2
    m = s - np.arange(n + 1)
    # jp[i-1, i] raises m[i] -> m[i-1]
    ladder = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    jp = np.diag(ladder, k=1).astype(complex)
    jm = jp.conj().T.copy()
    jx = 0.5 * (jp + jm)
    jy = (jp - jm) / 2j
    jz = np.diag(m).astype(complex)
    return SpinOperators(
        n, _frozen(jx), _frozen(jy), _frozen(jz), _frozen(jp), _frozen(jm)
    )


def uncharged_state(n_units: int) -> StateVector:
    n = _check_units(n_units)
    amps = np.zeros(n + 1, dtype=complex)
    amps[-1] = 1.0
    return StateVector(amps, n)


def charged_state(n_units: int) -> StateVector:
    n = _check_units(n_units)
    amps = np.zeros(n + 1, dtype=complex)
    amps[0] = 1.0
    return StateVector(amps, n)


def _jz_expectation(state: StateVector, ops: SpinOperators) -> float:
    if state.n_units != ops.n_units:
        raise ValueError(
            f"state has N={state.n_units} but operators have N={ops.n_units}"
        )
    probs = np.abs(state.amplitudes) ** 2
    return float(probs @ ops.m_values)


def saturation(state: StateVector, ops: SpinOperators) -> float:
    """Charge saturation <Jz>/N + 1/2, clipped to [0, 1] against rounding."""
    if state.n_units != ops.n_units:
        raise ValueError(
            f"state has N={state.n_units} but operators have N={ops.n_units}"
        )
    probs = np.abs(state.amplitudes) ** 2
    eta = float(probs @ (ops.m_values - ops.m_values[-1])) / ops.n_units
    return min(max(eta, 0.0), 1.0)


def stored_energy(
    state: StateVector, initial: StateVector, omega0: float, ops: SpinOperators
) -> float:
    return omega0 * (_jz_expectation(state, ops) - _jz_expectation(initial, ops))


def expm_hermitian(h: np.ndarray, tau: float = 1.0) -> np.ndarray:
    """exp(-i * tau * h) for Hermitian h (or a stack of them)."""
    lam, vec = np.linalg.eigh(h)
    phase = np.exp(-1j * tau * lam)
    return np.einsum("...ij,...j,...kj->...ik", vec, phase, vec.conj())


def rotate_generator(axis, target) -> np.ndarray:
    """Coefficients b' with exp(i a.J) (b.J) exp(-i a.J) = b'.J.

    Summed closed form of the adjoint series:
    b' = b - (sin a / a) a x b + ((1 - cos a) / a^2) a x (a x b).
    """
    a = np.asarray(axis, dtype=float)
    b = np.asarray(target, dtype=float)
    angle = float(np.linalg.norm(a))
    if angle == 0.0:
        return b.copy()
    axb = np.cross(a, b)
    return (
        b
        - (np.sin(angle) / angle) * axb
        + ((1.0 - np.cos(angle)) / angle**2) * np.cross(a, axb)
    )
