"""Eigen-analysis: lowest eigenpairs, gap profiles, critical-point location.

The energy gap E1 - E0 as a function of theta dips at the anti-crossing of a
first-order transition; `locate_critical` brackets that dip with a coarse scan
and refines it by golden-section search (the dip is sharp and near-nonsmooth
at finite size, so derivative-free minimization is the safe choice).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import EigensolveError, SimulationError
from .models import HamiltonianRep, ModelSpec, build_hamiltonian

DENSE_SOLVE_MAX = 1024
DEGENERACY_TOL = 1e-12
RESIDUAL_RTOL = 1e-9

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
COARSE_SCAN_POINTS = 51


@dataclass
class Spectrum:
    """Lowest eigenpairs, energies ascending, columns of `states` matching."""

    energies: np.ndarray
    states: np.ndarray

    @property
    def gap(self) -> float:
        if len(self.energies) < 2:
            raise ValueError("need at least two eigenvalues for a gap")
        return float(self.energies[1] - self.energies[0])

    def is_degenerate(self, tol: float = DEGENERACY_TOL) -> bool:
        return len(self.energies) >= 2 and self.gap < tol

    def ground_state(self) -> np.ndarray:
        return self.states[:, 0]


@dataclass
class CriticalPoint:
    theta_c: float
    gap_at_c: float
    bracket: tuple[float, float]
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "theta_c": self.theta_c,
            "gap_at_c": self.gap_at_c,
            "bracket": list(self.bracket),
            "degenerate": self.degenerate,
        }


def _matrix_scale(mat) -> float:
    if sp.issparse(mat):
        return float(abs(mat).max()) if mat.nnz else 1.0
    return float(np.max(np.abs(mat), initial=1.0))


def eigensolve_lowest(H: HamiltonianRep, n_eig: int, method: str | None = None) -> Spectrum:
    """Lowest `n_eig` eigenpairs of a real symmetric Hamiltonian.

    Dense LAPACK below DENSE_SOLVE_MAX, implicitly-restarted Lanczos (ARPACK,
    full reorthogonalization of the Krylov block) above. `method` forces
    "dense" or "lanczos" for cross-checking the two paths against each other.
    """
    if not 1 <= n_eig <= H.dim:
        raise ValueError(f"n_eig must be in [1, {H.dim}], got {n_eig}")
    if method is None:
        method = "dense" if H.dim <= DENSE_SOLVE_MAX else "lanczos"

    if method == "dense" or n_eig > H.dim - 2:
        mat = H.toarray()
        energies, states = np.linalg.eigh(mat)
        energies, states = energies[:n_eig], states[:, :n_eig]
    elif method == "lanczos":
        try:
            energies, states = spla.eigsh(
                H.matrix, k=n_eig, which="SA", maxiter=max(5000, 40 * H.dim)
            )
        except spla.ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            raise EigensolveError(
                f"Lanczos failed to converge: {got}/{n_eig} pairs after iteration cap"
            ) from exc
        order = np.argsort(energies)
        energies, states = energies[order], states[:, order]
    else:
        raise ValueError(f"unknown eigensolve method: {method!r}")

    scale = _matrix_scale(H.matrix)
    for i in range(n_eig):
        resid = np.linalg.norm(H.matrix @ states[:, i] - energies[i] * states[:, i])
        if resid > RESIDUAL_RTOL * max(scale, 1.0):
            raise EigensolveError(
                f"eigenpair {i} residual {resid:g} exceeds {RESIDUAL_RTOL:g} * |H|"
            )
    return Spectrum(energies=np.asarray(energies, dtype=float), states=states)


def energy_gap(spec: ModelSpec, theta: float) -> float:
    """E1 - E0 at the given theta; exactly 0.0 when numerically degenerate."""
    return gap_of(build_hamiltonian(spec, theta))


def gap_of(H: HamiltonianRep) -> float:
    spectrum = eigensolve_lowest(H, 2)
    if spectrum.is_degenerate():
        return 0.0
    return max(spectrum.gap, 0.0)


def gap_profile(spec: ModelSpec, thetas) -> list[tuple[float, float]]:
    """Per-point energy gap over an ascending theta grid."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size == 0:
        raise ValueError("theta grid must be nonempty")
    if np.any(np.diff(thetas) <= 0):
        raise ValueError("theta grid must be strictly ascending")
    return [(float(t), energy_gap(spec, t)) for t in thetas]


def _golden_minimize(fn, lo: float, hi: float, tol: float) -> tuple[float, float]:
    """Golden-section minimum of a unimodal function on [lo, hi]."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def minimize_scalar_bracketed(fn, bracket: tuple[float, float], tol: float,
                              scan_points: int = COARSE_SCAN_POINTS) -> tuple[float, float, tuple[float, float]]:
    """Coarse-scan then golden-section refine; returns (x_min, f_min, sub-bracket).

    Raises if the scan finds no interior point below both bracket ends
    (monotone profile, nothing to refine).
    """
    lo, hi = bracket
    if not lo < hi:
        raise ValueError(f"invalid bracket {bracket}")
    xs = np.linspace(lo, hi, scan_points)
    fs = np.array([fn(x) for x in xs])
    i = int(np.argmin(fs))
    if i == 0 or i == scan_points - 1:
        raise SimulationError(
            f"no interior minimum in bracket {bracket}: profile is monotone"
        )
    sub = (float(xs[i - 1]), float(xs[i + 1]))
    x, f = _golden_minimize(fn, sub[0], sub[1], tol)
    return x, f, sub


def locate_critical(spec: ModelSpec, bracket: tuple[float, float], tol: float = 1e-6) -> CriticalPoint:
    """Gap-minimizing theta within `bracket`, refined to |hi - lo| <= tol."""
    theta_c, gap_c, sub = minimize_scalar_bracketed(
        lambda t: energy_gap(spec, t), bracket, tol
    )
    return CriticalPoint(
        theta_c=float(theta_c),
        gap_at_c=float(gap_c),
        bracket=sub,
        degenerate=gap_c < DEGENERACY_TOL,
    )
