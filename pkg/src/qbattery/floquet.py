"""Frequency-space Floquet treatment of the periodically driven pack.

The truncated Floquet Hamiltonian has blocks
(H_F)[n', n] = H_{n'-n} + delta(n', n) n w I for n, n' in [-n_max, n_max].
Its eigenvalues in the first zone [-w/2, w/2) are the quasienergies, and the
eigenvector blocks |Phi_a^n> are the Fourier components of the Floquet modes.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass

import numpy as np

from .drive_model import FourierComponents
from .errors import BandSelectionAmbiguous, SingularModeMatrix, WrongN
from .spin_algebra import SpinOperators, StateVector, build_operators, uncharged_state

logger = logging.getLogger(__name__)

DEFAULT_NMAX = 30
ZONE_EDGE_TOL = 1e-12
DEGENERACY_TOL = 1e-6
MAX_CONDITION = 1e12


def build_floquet_hamiltonian(
    components: FourierComponents, n_max: int, ops: SpinOperators
) -> np.ndarray:
    if components.n_units != ops.n_units:
        raise ValueError("components and operators disagree on n_units")
    if n_max < components.max_harmonic:
        raise ValueError(
            f"n_max={n_max} is below the largest harmonic {components.max_harmonic}"
        )
    d = ops.dim
    blocks = 2 * n_max + 1
    hf = np.zeros((blocks * d, blocks * d), dtype=complex)
    harmonics = {n: h for n, h in components.harmonics.items() if abs(n) <= 2 * n_max}
    eye = np.eye(d)
    for row in range(blocks):
        for col in range(blocks):
            h = harmonics.get(row - col)
            if h is not None:
                hf[row * d:(row + 1) * d, col * d:(col + 1) * d] = h
        n = row - n_max
        hf[row * d:(row + 1) * d, row * d:(row + 1) * d] += n * components.base_frequency * eye
    return hf


@dataclass(frozen=True, eq=False)
class FloquetDecomposition:
    base_frequency: float
    n_max: int
    quasi_energies: np.ndarray
    # modes[a, j, :] is the Fourier block |Phi_a^n> with n = j - n_max
    modes: np.ndarray
    central_weights: np.ndarray
    n_units: int

    @property
    def period(self) -> float:
        return 2 * math.pi / self.base_frequency

    @property
    def harmonics(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def mode_matrix(self) -> np.ndarray:
        """Columns sum_n |Phi_a^n>, i.e. the Floquet modes at t = 0."""
        return self.modes.sum(axis=1).T

    def modes_at(self, t) -> np.ndarray:
        """|Phi_a(t)> = sum_n |Phi_a^n> e^{i n w t}; shape t.shape + (alpha, dim)."""
        t = np.asarray(t, dtype=float)
        phases = np.exp(1j * self.base_frequency * t[..., None] * self.harmonics)
        return np.einsum("...n,anj->...aj", phases, self.modes)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("alpha,quasienergy,central_weight\n")
        for alpha, (eps, w) in enumerate(zip(self.quasi_energies, self.central_weights), 1):
            buf.write(f"{alpha},{eps:.12g},{w:.12g}\n")
        return buf.getvalue()


def decompose(
    components: FourierComponents, n_max: int, ops: SpinOperators
) -> FloquetDecomposition:
    """Quasienergies and Floquet modes of the physical bands.

    Among eigenpairs in the first zone, the N+1 with the largest spectral
    weight in the central blocks |n| <= n_max/2 are kept; eigenvalues within
    1e-12 below +w/2 belong to the -w/2 edge of the zone.
    """
    hf = build_floquet_hamiltonian(components, n_max, ops)
    w = components.base_frequency
    evals, evecs = np.linalg.eigh(hf)
    in_zone = (evals >= -w / 2 - ZONE_EDGE_TOL) & (evals < w / 2 - ZONE_EDGE_TOL)
    idx = np.flatnonzero(in_zone)
    d = ops.dim
    if len(idx) < d:
        raise BandSelectionAmbiguous(
            f"only {len(idx)} eigenvalues in the first zone, need {d}"
        )
    blocks = evecs[:, idx].T.reshape(len(idx), 2 * n_max + 1, d)
    central = np.abs(np.arange(-n_max, n_max + 1)) <= n_max / 2
    weights = np.sum(np.abs(blocks[:, central, :]) ** 2, axis=(1, 2))
    order = np.argsort(-weights, kind="stable")
    if len(idx) > d and weights[order[d - 1]] - weights[order[d]] < DEGENERACY_TOL:
        raise BandSelectionAmbiguous(
            f"selection weights {weights[order[d - 1]]:.8f} and "
            f"{weights[order[d]]:.8f} are indistinguishable"
        )
    chosen = order[:d]
    chosen = chosen[np.argsort(evals[idx][chosen], kind="stable")]
    eps = np.maximum(evals[idx][chosen], -w / 2)
    modes = blocks[chosen]
    modes = modes / np.sqrt(np.sum(np.abs(modes) ** 2, axis=(1, 2)))[:, None, None]
    return FloquetDecomposition(
        base_frequency=w, n_max=n_max, quasi_energies=eps, modes=modes,
        central_weights=weights[chosen], n_units=ops.n_units,
    )


def initial_coefficients(
    decomp: FloquetDecomposition, initial: StateVector
) -> np.ndarray:
    """c_a solving |Psi(0)> = sum_a c_a sum_n |Phi_a^n>."""
    if initial.n_units != decomp.n_units:
        raise ValueError("state and decomposition disagree on n_units")
    mode_matrix = decomp.mode_matrix()
    cond = np.linalg.cond(mode_matrix)
    if not cond < MAX_CONDITION:
        raise SingularModeMatrix(f"mode matrix condition number {cond:.3e}")
    return np.linalg.solve(mode_matrix, initial.amplitudes)


def floquet_propagator(decomp: FloquetDecomposition, t) -> np.ndarray:
    """U(t) = sum_a e^{-i e_a t} |Phi_a(t)> <dual_a|.

    The dual rows come from inverting the t = 0 mode matrix, which reduces to
    <Phi_a(0)| in the untruncated limit and makes U(0) = I exactly.
    """
    mode_matrix = decomp.mode_matrix()
    cond = np.linalg.cond(mode_matrix)
    if not cond < MAX_CONDITION:
        raise SingularModeMatrix(f"mode matrix condition number {cond:.3e}")
    dual = np.linalg.inv(mode_matrix)
    t = np.asarray(t, dtype=float)
    phase = np.exp(-1j * decomp.quasi_energies * t[..., None])
    return np.einsum("...a,...ai,aj->...ij", phase, decomp.modes_at(t), dual)


def floquet_state(decomp: FloquetDecomposition, t, initial: StateVector | None = None):
    """|Psi(t)> = sum_a c_a e^{-i e_a t} |Phi_a(t)>; shape t.shape + (dim,)."""
    initial = uncharged_state(decomp.n_units) if initial is None else initial
    coeffs = initial_coefficients(decomp, initial)
    t = np.asarray(t, dtype=float)
    weights = coeffs * np.exp(-1j * decomp.quasi_energies * t[..., None])
    return np.einsum("...a,...ai->...i", weights, decomp.modes_at(t))


def eta_floquet(decomp: FloquetDecomposition, t):
    """Charge saturation from the reconstructed state, starting uncharged."""
    ops = build_operators(decomp.n_units)
    psi = floquet_state(decomp, t)
    eta = np.abs(psi) ** 2 @ (ops.m_values - ops.m_values[-1]) / ops.n_units
    outside = (eta < -1e-6) | (eta > 1 + 1e-6)
    if np.any(outside):
        logger.warning(
            "Floquet saturation left [0, 1] by more than 1e-6 at %d samples; "
            "increase n_max", int(np.sum(outside)),
        )
    eta = np.clip(eta, 0.0, 1.0)
    return float(eta) if eta.ndim == 0 else eta


def eta_floquet_sum(decomp: FloquetDecomposition, t: float) -> float:
    """Literal four-index harmonic sum for eta(t); slow, for cross-checking.

    Uses c_a = sum_n' conj(Phi_{a,N}^{n'}), the projection form that the
    matrix-inverse coefficients approach as truncation error vanishes.
    """
    ops = build_operators(decomp.n_units)
    w = decomp.base_frequency
    eps = decomp.quasi_energies
    harm = decomp.harmonics
    total = 0.0 + 0.0j
    last = decomp.modes[:, :, -1].sum(axis=1)
    for a in range(len(eps)):
        for b in range(len(eps)):
            prefactor = np.conj(last[a]) * last[b]
            for i_n, n in enumerate(harm):
                for i_nt, nt in enumerate(harm):
                    jz = decomp.modes[b, i_nt].conj() @ ops.jz @ decomp.modes[a, i_n]
                    phase = (eps[a] - eps[b] + (nt - n) * w) * t
                    total += np.exp(-1j * phase) * prefactor * jz
    return float(total.real) / decomp.n_units + 0.5


@dataclass(frozen=True)
class StroboscopicLaw:
    """eta(kT) = 2|C12| cos(k de T - arg C12) + C11 + C22 + 1/2 for one unit."""

    c11: float
    c22: float
    c12_abs: float
    c12_arg: float
    delta_eps: float
    period: float

    def predict(self, k):
        k = np.asarray(k, dtype=float)
        return (
            2 * self.c12_abs * np.cos(k * self.delta_eps * self.period - self.c12_arg)
            + self.c11 + self.c22 + 0.5
        )


def stroboscopic_law(decomp: FloquetDecomposition) -> StroboscopicLaw:
    """Coefficients C[a, b] = c_b^* c_a <Phi_b(0)|Jz|Phi_a(0)> for a single unit.

    With de = e_2 - e_1 > 0, the cross terms combine into a cosine with phase
    +arg C[1, 2]; the stored argument is -arg C[1, 2] so the law reads as a
    cos(k de T - arg) curve.
    """
    if decomp.n_units != 1:
        raise WrongN(f"stroboscopic law needs N = 1, got N = {decomp.n_units}")
    ops = build_operators(1)
    c = np.conj(decomp.modes[:, :, -1]).sum(axis=1)
    at0 = decomp.mode_matrix()
    # cmat[a, b] = C_{a,b} with a the ket and b the bra index
    jz = at0.conj().T @ ops.jz @ at0  # jz[b, a] = <Phi_b|Jz|Phi_a>
    cmat = np.conj(c)[None, :] * c[:, None] * jz.T
    c12 = cmat[0, 1]
    return StroboscopicLaw(
        c11=float(cmat[0, 0].real), c22=float(cmat[1, 1].real),
        c12_abs=float(abs(c12)), c12_arg=float(-np.angle(c12)),
        delta_eps=float(decomp.quasi_energies[1] - decomp.quasi_energies[0]),
        period=decomp.period,
    )


def stroboscopic_eta(decomp: FloquetDecomposition, k: int) -> tuple[float, StroboscopicLaw]:
    if int(k) != k or k < 0:
        raise ValueError("k must be a non-negative integer")
    law = stroboscopic_law(decomp)
    return float(law.predict(k)), law
