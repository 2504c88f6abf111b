"""Quantum and classical Fisher information, SLD, and Cramer-Rao bookkeeping.

The pure-state QFI is evaluated through the gauge-invariant overlap
(fidelity-susceptibility) form  F = 8 (1 - |<psi(t-d/2)|psi(t+d/2)>|) / d^2,
which needs no eigenvector phase fixing, and through the spectral sum
F = 4 sum_{n>0} |<n|dH|0>|^2 / (E_n - E_0)^2.  The two routes are independent
and are cross-checked in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateGroundStateError, ProbabilityError
from .models import (
    BasisKind,
    HamiltonianRep,
    MeasurementBasis,
    ModelSpec,
    build_h_split,
)
from .spectra import eigensolve_lowest

EIG_FLOOR_DEFAULT = 1e-10
PROB_FLOOR = 1e-12
PROB_SUM_TOL = 1e-8
OVERLAP_TOL = 1e-12


@dataclass
class QuantumState:
    """Pure state vector or density matrix, tagged with its basis."""

    basis: BasisKind
    vector: np.ndarray | None = None
    rho: np.ndarray | None = None

    @classmethod
    def pure(cls, vector: np.ndarray, basis: BasisKind) -> "QuantumState":
        vector = np.asarray(vector)
        norm = np.linalg.norm(vector)
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"pure state norm {norm} deviates from 1")
        return cls(basis=basis, vector=vector)

    @classmethod
    def mixed(cls, rho: np.ndarray, basis: BasisKind) -> "QuantumState":
        rho = np.asarray(rho)
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-10:
            raise ValueError(f"density matrix trace {tr} deviates from 1")
        evals = np.linalg.eigvalsh(rho)
        if evals.min() < -1e-10:
            raise ValueError(f"density matrix has negative eigenvalue {evals.min():g}")
        return cls(basis=basis, rho=rho)

    @property
    def is_pure(self) -> bool:
        return self.vector is not None

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.vector, np.conj(self.vector))
        return self.rho

    @property
    def dim(self) -> int:
        return len(self.vector) if self.is_pure else self.rho.shape[0]


@dataclass
class FisherEstimate:
    """Fisher-information value with the method and step that produced it."""

    value: float
    method: str  # pure-overlap | spectral-sum | mixed-sld | classical
    delta: float | None = None

    def to_json(self) -> dict:
        return {"value": self.value, "method": self.method, "delta": self.delta}


def _resolve_split(spec_or_split) -> tuple[HamiltonianRep, HamiltonianRep]:
    if isinstance(spec_or_split, tuple):
        return spec_or_split
    return build_h_split(spec_or_split)


def ground_state(spec_or_split, theta: float) -> np.ndarray:
    """Ground state of H1 + theta H2; raises on numerical degeneracy."""
    h1, h2 = _resolve_split(spec_or_split)
    spectrum = eigensolve_lowest(h1.combine(h2, theta), min(2, h1.dim))
    if spectrum.is_degenerate():
        raise DegenerateGroundStateError(
            f"ground state degenerate at theta={theta} (gap {spectrum.gap:g})"
        )
    return spectrum.ground_state()


def auto_delta(theta: float) -> float:
    return 1e-4 * max(1.0, abs(theta))


def qfi_pure_overlap(spec_or_split, theta: float, delta: float | None = None) -> FisherEstimate:
    """Ground-state QFI from the overlap of states at theta +/- delta/2.

    With delta=None the step starts at 1e-4 * max(1, |theta|) and shrinks
    near criticality until the overlap deficit is small but still resolvable
    (> 100 machine epsilons), keeping the O(delta^2) expansion honest.
    """
    adaptive = delta is None
    if adaptive:
        delta = auto_delta(theta)
    if delta <= 0:
        raise ValueError("delta must be positive")

    def deficit(d: float) -> float:
        lo = ground_state(spec_or_split, theta - d / 2.0)
        hi = ground_state(spec_or_split, theta + d / 2.0)
        overlap = abs(np.vdot(lo, hi))
        if overlap > 1.0 + OVERLAP_TOL:
            raise ProbabilityError(f"overlap {overlap} exceeds 1")
        return 1.0 - min(overlap, 1.0)

    d = float(delta)
    dq = deficit(d)
    if adaptive:
        floor = 100.0 * np.finfo(float).eps
        while dq > 1e-3:
            trial = d / 4.0
            trial_dq = deficit(trial)
            if trial_dq <= floor:
                break
            d, dq = trial, trial_dq
    return FisherEstimate(value=8.0 * dq / d**2, method="pure-overlap", delta=d)


def qfi_spectral(spec_or_split, theta: float) -> FisherEstimate:
    """Ground-state QFI from the full-spectrum sum with dH/dtheta = H2."""
    h1, h2 = _resolve_split(spec_or_split)
    H = h1.combine(h2, theta)
    energies, states = np.linalg.eigh(H.toarray())
    if len(energies) > 1 and energies[1] - energies[0] < 1e-12:
        raise DegenerateGroundStateError(f"degenerate ground state at theta={theta}")
    h2m = h2.toarray()
    couplings = states[:, 1:].T.conj() @ (h2m @ states[:, 0])
    denom = energies[1:] - energies[0]
    value = 4.0 * float(np.sum(np.abs(couplings) ** 2 / denom**2))
    return FisherEstimate(value=value, method="spectral-sum", delta=None)


def sld_matrix(rho: np.ndarray, drho: np.ndarray, eig_floor: float = EIG_FLOOR_DEFAULT) -> np.ndarray:
    """Symmetric logarithmic derivative on retained eigenvalue pairs."""
    _check_hermitian(rho, "rho")
    _check_hermitian(drho, "drho")
    lam, vecs = np.linalg.eigh(rho)
    d_eig = vecs.conj().T @ drho @ vecs
    denom = lam[:, None] + lam[None, :]
    keep = denom > eig_floor
    ell = np.zeros_like(d_eig)
    ell[keep] = 2.0 * d_eig[keep] / denom[keep]
    return vecs @ ell @ vecs.conj().T


def _check_hermitian(mat: np.ndarray, name: str, tol: float = 1e-9) -> None:
    asym = float(np.max(np.abs(mat - mat.conj().T), initial=0.0))
    scale = max(float(np.max(np.abs(mat), initial=1.0)), 1.0)
    if asym > tol * scale:
        raise ValueError(f"{name} is not Hermitian (asymmetry {asym:g})")


def qfi_mixed(rho: QuantumState | np.ndarray, drho: np.ndarray,
              eig_floor: float = EIG_FLOOR_DEFAULT,
              delta: float | None = None) -> FisherEstimate:
    """Mixed-state QFI  2 sum_{ij} |<i|drho|j>|^2 / (lam_i + lam_j).

    Pairs with lam_i + lam_j <= eig_floor are discarded (standard SLD
    regularization). `drho` is the parameter derivative of the density
    matrix, typically a central difference of two evolved states.
    """
    if eig_floor <= 0:
        raise ValueError("eig_floor must be positive")
    mat = rho.density() if isinstance(rho, QuantumState) else np.asarray(rho)
    _check_hermitian(mat, "rho")
    _check_hermitian(drho, "drho")
    lam, vecs = np.linalg.eigh(mat)
    d_eig = vecs.conj().T @ drho @ vecs
    denom = lam[:, None] + lam[None, :]
    keep = denom > eig_floor
    value = 2.0 * float(np.sum(np.abs(d_eig[keep]) ** 2 / denom[keep]))
    return FisherEstimate(value=value, method="mixed-sld", delta=delta)


def cfi(state_at: Callable[[float], QuantumState], basis: MeasurementBasis,
        theta: float, delta: float = 1e-4) -> FisherEstimate:
    """Classical Fisher information of the outcome distribution of `basis`.

    p_n(theta) = Tr[rho(theta) Pi_n]; the derivative is a central difference,
    outcomes with p_n below PROB_FLOOR contribute zero.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")

    def probs(t: float) -> np.ndarray:
        state = state_at(t)
        target = state.vector if state.is_pure else state.rho
        p = basis.probabilities(target)
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ProbabilityError(f"probabilities sum to {p.sum()} at theta={t}")
        return p

    p0 = probs(theta)
    dp = (probs(theta + delta / 2.0) - probs(theta - delta / 2.0)) / delta
    keep = p0 > PROB_FLOOR
    value = float(np.sum(dp[keep] ** 2 / p0[keep]))
    return FisherEstimate(value=value, method="classical", delta=delta)


def ground_state_family(spec_or_split) -> Callable[[float], QuantumState]:
    """theta -> ground state as a QuantumState (for cfi and sweeps)."""
    h1, _ = _resolve_split(spec_or_split)
    basis = h1.basis

    def family(theta: float) -> QuantumState:
        return QuantumState.pure(ground_state(spec_or_split, theta), basis)

    return family


def cramer_rao(F: FisherEstimate | float, M: int) -> float:
    """Estimation uncertainty bound 1 / sqrt(M * F); inf when F = 0."""
    value = F.value if isinstance(F, FisherEstimate) else float(F)
    if M < 1:
        raise ValueError("measurement count M must be >= 1")
    if value < 0:
        raise ValueError("Fisher information must be non-negative")
    if value == 0.0:
        return math.inf
    return 1.0 / math.sqrt(M * value)
