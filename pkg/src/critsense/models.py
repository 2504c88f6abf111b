"""Hamiltonian construction for the Grover, p-spin and biclique sensing models.

Every model is written as H(theta) = H1 + theta * H2 with two competing terms.
The p-spin and biclique models are built in collective-spin (Dicke) bases,
which is exact for their ground-state sector and keeps the dimension linear
in the number of spins; the full 2^L computational basis is available as a
cross-check oracle and for local-dephasing dynamics.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

# Dense storage up to this dimension, CSR above it.
DENSE_DIM_MAX = 64

# Hard cap for full computational-space construction (memory guard).
FULL_SPACE_MAX_QUBITS = 14

SYMMETRY_RTOL = 1e-12


class BasisKind(enum.Enum):
    """Basis in which a matrix or state vector is expressed."""

    EFFECTIVE_TWO_LEVEL = "effective-two-level"      # span{|m>, |m_perp>}
    COLLECTIVE_SPIN = "collective-spin"              # Dicke |j=L/2, m>, dim L+1
    BIPARTITE_COLLECTIVE = "bipartite-collective"    # Dicke(A) x Dicke(B)
    FULL_COMPUTATIONAL = "full-computational"        # 2^L product basis


@dataclass(frozen=True)
class GroverSpec:
    """Single marked configuration among N = 2^L, uniform tunneling."""

    L: int

    @property
    def N(self) -> int:
        return 2 ** self.L

    def validate(self) -> None:
        if self.L < 1:
            raise ValueError(f"Grover qubit count must be >= 1, got {self.L}")

    def to_json(self) -> dict:
        return {"model": "grover", "L": self.L}


@dataclass(frozen=True)
class PSpinSpec:
    """p-spin model with tunable antiferromagnetic fluctuation term.

    lambda_=1 recovers the plain p-spin model (first order for odd p >= 3);
    lambda_<1 adds (1-lambda) L^(1-k) (sum sigma^x)^k which can soften the
    transition to second order (e.g. p=5, k=2, lambda=0.1).
    """

    L: int
    p: int
    k: int = 1
    lambda_: float = 1.0

    def validate(self) -> None:
        if self.L < 1:
            raise ValueError(f"p-spin qubit count must be >= 1, got {self.L}")
        if self.p < 3 or self.p % 2 == 0:
            raise ValueError(
                f"p must be an odd integer >= 3 (even p is degenerate), got {self.p}"
            )
        if self.k < 1:
            raise ValueError(f"k must be an integer >= 1, got {self.k}")
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lambda_}")

    def to_json(self) -> dict:
        return {
            "model": "pspin",
            "L": self.L,
            "p": self.p,
            "k": self.k,
            "lambda": self.lambda_,
        }


@dataclass(frozen=True)
class BicliqueSpec:
    """Two fully cross-coupled spin groups with group-dependent z fields.

    The longitudinal fields are derived quantities,
    h_A = L_B J - 2 W_A / L_A  and  h_B = L_A J - 2 W_B / L_B,
    never stored independently.
    """

    L_A: int
    L_B: int
    J: float = 1.0
    W_A: float = 0.49
    W_B: float = 0.5

    @property
    def L(self) -> int:
        return self.L_A + self.L_B

    @property
    def h_A(self) -> float:
        return self.L_B * self.J - 2.0 * self.W_A / self.L_A

    @property
    def h_B(self) -> float:
        return self.L_A * self.J - 2.0 * self.W_B / self.L_B

    def validate(self) -> None:
        if self.L_A < 2:
            raise ValueError(f"biclique needs L_A >= 2, got {self.L_A}")
        if self.L_A != self.L_B + 1:
            raise ValueError(
                f"biclique requires L_A = L_B + 1, got L_A={self.L_A}, L_B={self.L_B}"
            )

    def to_json(self) -> dict:
        return {
            "model": "biclique",
            "L_A": self.L_A,
            "L_B": self.L_B,
            "J": self.J,
            "W_A": self.W_A,
            "W_B": self.W_B,
        }


ModelSpec = GroverSpec | PSpinSpec | BicliqueSpec


def spec_from_json(obj: dict | str) -> ModelSpec:
    """Parse a ModelSpec from a JSON object (or JSON text) with a "model" tag."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("model")
    if kind == "grover":
        spec: ModelSpec = GroverSpec(L=int(obj["L"]))
    elif kind == "pspin":
        spec = PSpinSpec(
            L=int(obj["L"]),
            p=int(obj["p"]),
            k=int(obj.get("k", 1)),
            lambda_=float(obj.get("lambda", 1.0)),
        )
    elif kind == "biclique":
        spec = BicliqueSpec(
            L_A=int(obj["L_A"]),
            L_B=int(obj["L_B"]),
            J=float(obj.get("J", 1.0)),
            W_A=float(obj["W_A"]),
            W_B=float(obj["W_B"]),
        )
    else:
        raise ValueError(f"unknown model discriminator: {kind!r}")
    spec.validate()
    return spec


def total_qubits(spec: ModelSpec) -> int:
    return spec.L


@dataclass
class HamiltonianRep:
    """Real symmetric matrix in a declared basis.

    `labels` carries one quantum number per basis state (2m magnetization for
    collective bases, (2m_A, 2m_B) pairs for the bipartite basis, bitstring
    index for the full basis, 0/1 for the effective two-level basis).
    """

    basis: BasisKind
    dim: int
    matrix: np.ndarray | sp.spmatrix
    labels: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.matrix.shape != (self.dim, self.dim):
            raise ValueError(
                f"matrix shape {self.matrix.shape} inconsistent with dim {self.dim}"
            )
        self._check_symmetry()

    def _check_symmetry(self) -> None:
        if sp.issparse(self.matrix):
            asym = abs(self.matrix - self.matrix.T)
            gap = asym.max() if asym.nnz else 0.0
            scale = abs(self.matrix).max() if self.matrix.nnz else 1.0
        else:
            gap = float(np.max(np.abs(self.matrix - self.matrix.T), initial=0.0))
            scale = float(np.max(np.abs(self.matrix), initial=1.0))
        if gap > SYMMETRY_RTOL * max(scale, 1.0):
            raise ValueError(f"matrix asymmetric: max|H - H^T| = {gap:g}")

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def toarray(self) -> np.ndarray:
        if self.is_sparse:
            return self.matrix.toarray()
        return np.asarray(self.matrix)

    def combine(self, other: "HamiltonianRep", coeff: float) -> "HamiltonianRep":
        """Return self + coeff * other in the shared basis."""
        if self.basis is not other.basis or self.dim != other.dim:
            raise ValueError("cannot combine representations in different bases")
        return HamiltonianRep(
            basis=self.basis,
            dim=self.dim,
            matrix=self.matrix + coeff * other.matrix,
            labels=self.labels,
        )


@dataclass
class MeasurementBasis:
    """Complete set of orthogonal projectors with outcome labels."""

    basis: BasisKind
    projectors: list[np.ndarray]
    labels: list

    def validate(self, tol: float = 1e-10) -> None:
        dim = self.projectors[0].shape[0]
        total = np.zeros((dim, dim))
        for p in self.projectors:
            if np.max(np.abs(p @ p - p)) > tol:
                raise ValueError("projector not idempotent")
            total += p
        if np.max(np.abs(total - np.eye(dim))) > tol:
            raise ValueError("projectors do not sum to identity")
        for i, p in enumerate(self.projectors):
            for q in self.projectors[i + 1:]:
                if np.max(np.abs(p @ q)) > tol:
                    raise ValueError("projectors not mutually orthogonal")

    def probabilities(self, rho_or_vec: np.ndarray) -> np.ndarray:
        """Outcome distribution for a density matrix or a pure state vector."""
        out = np.empty(len(self.projectors))
        if rho_or_vec.ndim == 1:
            for i, p in enumerate(self.projectors):
                out[i] = np.real(np.vdot(rho_or_vec, p @ rho_or_vec))
        else:
            for i, p in enumerate(self.projectors):
                out[i] = np.real(np.trace(p @ rho_or_vec))
        return out


# ---------------------------------------------------------------------------
# collective-spin operator helpers


def collective_jz(L: int) -> np.ndarray:
    """Diagonal of J_z in the |j=L/2, m> basis, m ascending from -j to j."""
    j = L / 2.0
    return np.arange(-j, j + 1.0)


def collective_2jx(L: int) -> np.ndarray:
    """Matrix of sum_i sigma^x_i = J_+ + J_- in the Dicke basis (tridiagonal)."""
    j = L / 2.0
    m = collective_jz(L)
    # <j, m+1 | J_+ | j, m> for m = -j .. j-1
    off = np.sqrt(j * (j + 1.0) - m[:-1] * (m[:-1] + 1.0))
    mat = np.zeros((L + 1, L + 1))
    idx = np.arange(L)
    mat[idx + 1, idx] = off
    mat[idx, idx + 1] = off
    return mat


def _maybe_sparse(mat: np.ndarray | sp.spmatrix, dim: int):
    if dim > DENSE_DIM_MAX:
        return sp.csr_matrix(mat)
    if sp.issparse(mat):
        return mat.toarray()
    return mat


def _sigma_x_sum_full(L: int) -> sp.csr_matrix:
    """sum_j sigma^x_j on the full 2^L space (bit j flips index bit j)."""
    dim = 2 ** L
    rows = np.repeat(np.arange(dim), L)
    cols = np.bitwise_xor(rows, np.tile(2 ** np.arange(L), dim))
    data = np.ones(dim * L)
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def _sigma_z_sums_full(L: int) -> np.ndarray:
    """Eigenvalues of sum_j sigma^z_j per computational basis state.

    Convention: bit value 0 -> sigma^z = +1, bit value 1 -> sigma^z = -1.
    """
    states = np.arange(2 ** L)
    ones = np.zeros(2 ** L, dtype=np.int64)
    for b in range(L):
        ones += (states >> b) & 1
    return (L - 2 * ones).astype(float)


def _sigma_z_sum_subset_full(L: int, bits: range) -> np.ndarray:
    states = np.arange(2 ** L)
    ones = np.zeros(2 ** L, dtype=np.int64)
    for b in bits:
        ones += (states >> b) & 1
    return (len(bits) - 2 * ones).astype(float)


# ---------------------------------------------------------------------------
# model builders


def build_h_split(spec: ModelSpec) -> tuple[HamiltonianRep, HamiltonianRep]:
    """Competing-term split (H1, H2) such that H(theta) = H1 + theta * H2.

    Grover:   H1 = -|m><m|, H2 = -|psi><psi| in the {|m>, |m_perp>} basis.
    p-spin:   H1 = -lambda L^(1-p) (2J_z)^p + (1-lambda) L^(1-k) (2J_x)^k,
              H2 = -(J_+ + J_-), Dicke basis.
    biclique: H1 = 4J J_z^A J_z^B + 2 h_A J_z^A + 2 h_B J_z^B,
              H2 = +sum sigma^x over both groups, Dicke(A) x Dicke(B) basis.
    """
    spec.validate()
    if isinstance(spec, GroverSpec):
        n = float(spec.N)
        h1 = np.array([[-1.0, 0.0], [0.0, 0.0]])
        r = np.sqrt(n - 1.0)
        h2 = -np.array([[1.0, r], [r, n - 1.0]]) / n
        labels = ["m", "m_perp"]
        return (
            HamiltonianRep(BasisKind.EFFECTIVE_TWO_LEVEL, 2, h1, labels),
            HamiltonianRep(BasisKind.EFFECTIVE_TWO_LEVEL, 2, h2, labels),
        )

    if isinstance(spec, PSpinSpec):
        L = spec.L
        two_jz = 2.0 * collective_jz(L)
        two_jx = collective_2jx(L)
        h1 = np.diag(-spec.lambda_ * L ** (1 - spec.p) * two_jz ** spec.p)
        if spec.lambda_ != 1.0:
            h1 = h1 + (1.0 - spec.lambda_) * L ** (1 - spec.k) * np.linalg.matrix_power(
                two_jx, spec.k
            )
        h2 = -two_jx
        labels = [int(z) for z in two_jz]
        return (
            HamiltonianRep(BasisKind.COLLECTIVE_SPIN, L + 1, h1, labels),
            HamiltonianRep(BasisKind.COLLECTIVE_SPIN, L + 1, h2, labels),
        )

    if isinstance(spec, BicliqueSpec):
        dim_a, dim_b = spec.L_A + 1, spec.L_B + 1
        za = 2.0 * collective_jz(spec.L_A)
        zb = 2.0 * collective_jz(spec.L_B)
        xa = collective_2jx(spec.L_A)
        xb = collective_2jx(spec.L_B)
        eye_a, eye_b = np.eye(dim_a), np.eye(dim_b)
        diag = (
            spec.J * np.kron(za, zb)
            + spec.h_A * np.kron(za, np.ones(dim_b))
            + spec.h_B * np.kron(np.ones(dim_a), zb)
        )
        h1 = np.diag(diag)
        h2 = np.kron(xa, eye_b) + np.kron(eye_a, xb)
        labels = [(int(a), int(b)) for a in za for b in zb]
        dim = dim_a * dim_b
        return (
            HamiltonianRep(BasisKind.BIPARTITE_COLLECTIVE, dim, h1, labels),
            HamiltonianRep(BasisKind.BIPARTITE_COLLECTIVE, dim, h2, labels),
        )

    raise TypeError(f"unsupported spec type: {type(spec).__name__}")


def build_hamiltonian(spec: ModelSpec, theta: float) -> HamiltonianRep:
    """H(theta) = H1 + theta * H2 in the model's reduced basis."""
    h1, h2 = build_h_split(spec)
    return h1.combine(h2, theta)


def build_full_space_split(spec: ModelSpec) -> tuple[HamiltonianRep, HamiltonianRep]:
    """(H1, H2) on the full 2^L computational basis (cross-check oracle).

    Grover uses marked state m = 0 by convention. Rejects L > 14.
    """
    spec.validate()
    L = spec.L
    if L > FULL_SPACE_MAX_QUBITS:
        raise ValueError(
            f"full-space construction limited to L <= {FULL_SPACE_MAX_QUBITS}, got {L}"
        )
    dim = 2 ** L
    labels = list(range(dim))

    if isinstance(spec, GroverSpec):
        # |psi><psi| is structurally full, so sparse storage never pays off here
        h1 = np.zeros((dim, dim))
        h1[0, 0] = -1.0
        h2 = np.full((dim, dim), -1.0 / dim)
        return (
            HamiltonianRep(BasisKind.FULL_COMPUTATIONAL, dim, h1, labels),
            HamiltonianRep(BasisKind.FULL_COMPUTATIONAL, dim, h2, labels),
        )

    if isinstance(spec, PSpinSpec):
        z = _sigma_z_sums_full(L)
        sx = _sigma_x_sum_full(L)
        h1 = sp.diags(-spec.lambda_ * L ** (1 - spec.p) * z ** spec.p)
        if spec.lambda_ != 1.0:
            xk = sx ** spec.k if spec.k > 1 else sx
            h1 = h1 + (1.0 - spec.lambda_) * L ** (1 - spec.k) * xk
        h2 = -sx
        return (
            HamiltonianRep(BasisKind.FULL_COMPUTATIONAL, dim, _maybe_sparse(h1.tocsr(), dim), labels),
            HamiltonianRep(BasisKind.FULL_COMPUTATIONAL, dim, _maybe_sparse(h2.tocsr(), dim), labels),
        )

    if isinstance(spec, BicliqueSpec):
        za = _sigma_z_sum_subset_full(L, range(0, spec.L_A))
        zb = _sigma_z_sum_subset_full(L, range(spec.L_A, L))
        h1 = sp.diags(spec.J * za * zb + spec.h_A * za + spec.h_B * zb)
        h2 = _sigma_x_sum_full(L)
        return (
            HamiltonianRep(BasisKind.FULL_COMPUTATIONAL, dim, _maybe_sparse(h1.tocsr(), dim), labels),
            HamiltonianRep(BasisKind.FULL_COMPUTATIONAL, dim, _maybe_sparse(h2, dim), labels),
        )

    raise TypeError(f"unsupported spec type: {type(spec).__name__}")


def build_full_space(spec: ModelSpec, theta: float) -> HamiltonianRep:
    """H(theta) on the full computational basis."""
    h1, h2 = build_full_space_split(spec)
    return h1.combine(h2, theta)


def optimal_measurement(spec: ModelSpec) -> MeasurementBasis:
    """Experimentally natural basis that saturates the QFI for each model.

    Grover: {|m>, |m_perp>}. p-spin: total-magnetization sectors (one Dicke
    state each). Biclique: sectors of the magnetization imbalance
    I = sum_A sigma^z - sum_B sigma^z, degenerate values grouped.
    """
    spec.validate()
    if isinstance(spec, GroverSpec):
        return MeasurementBasis(
            basis=BasisKind.EFFECTIVE_TWO_LEVEL,
            projectors=[np.diag([1.0, 0.0]), np.diag([0.0, 1.0])],
            labels=["m", "m_perp"],
        )

    if isinstance(spec, PSpinSpec):
        dim = spec.L + 1
        projs = []
        labels = []
        for i, z in enumerate(2.0 * collective_jz(spec.L)):
            p = np.zeros((dim, dim))
            p[i, i] = 1.0
            projs.append(p)
            labels.append(int(z))
        return MeasurementBasis(BasisKind.COLLECTIVE_SPIN, projs, labels)

    if isinstance(spec, BicliqueSpec):
        h1, _ = build_h_split(spec)
        imbalance = np.array([a - b for (a, b) in h1.labels], dtype=float)
        values = np.unique(imbalance)
        dim = h1.dim
        projs = []
        for v in values:
            p = np.zeros((dim, dim))
            idx = np.nonzero(imbalance == v)[0]
            p[idx, idx] = 1.0
            projs.append(p)
        return MeasurementBasis(
            BasisKind.BIPARTITE_COLLECTIVE, projs, [int(v) for v in values]
        )

    raise TypeError(f"unsupported spec type: {type(spec).__name__}")


# ---------------------------------------------------------------------------
# closed forms for the Grover model (used as oracles throughout)


def grover_gap(theta: float, L: int) -> float:
    """Analytic gap sqrt(N^2 (1-theta)^2 + 4 N theta) / N of the 2x2 form."""
    n = float(2 ** L)
    return np.sqrt(n * n * (1.0 - theta) ** 2 + 4.0 * n * theta) / n


def grover_qfi(theta: float, L: int) -> float:
    """Analytic ground-state QFI 4(N-1) / [N(1-theta)^2 + 4 theta]^2."""
    n = float(2 ** L)
    return 4.0 * (n - 1.0) / (n * (1.0 - theta) ** 2 + 4.0 * theta) ** 2


def symmetric_sector_embedding(spec: ModelSpec, reduced_vec: np.ndarray) -> np.ndarray:
    """Embed a reduced-basis vector into the full 2^L computational basis.

    Dicke state |j=L/2, m> maps to the normalized symmetric superposition of
    all bitstrings with the corresponding number of down spins.
    """
    L = spec.L
    dim = 2 ** L
    full = np.zeros(dim, dtype=complex)
    if isinstance(spec, PSpinSpec):
        z = _sigma_z_sums_full(L)
        n_down = ((L - z) / 2).astype(int)
        # index in the m-ascending Dicke basis: m = (L - 2 n_down)/2 -> i = L - n_down
        idx = L - n_down
        log_norm = 0.5 * (gammaln(L + 1) - gammaln(n_down + 1) - gammaln(L - n_down + 1))
        full = reduced_vec[idx] * np.exp(-log_norm)
        return full
    if isinstance(spec, BicliqueSpec):
        la, lb = spec.L_A, spec.L_B
        za = _sigma_z_sum_subset_full(L, range(0, la))
        zb = _sigma_z_sum_subset_full(L, range(la, L))
        na = ((la - za) / 2).astype(int)
        nb = ((lb - zb) / 2).astype(int)
        idx = (la - na) * (lb + 1) + (lb - nb)
        log_norm = 0.5 * (
            gammaln(la + 1) - gammaln(na + 1) - gammaln(la - na + 1)
            + gammaln(lb + 1) - gammaln(nb + 1) - gammaln(lb - nb + 1)
        )
        full = reduced_vec[idx] * np.exp(-log_norm)
        return full
    if isinstance(spec, GroverSpec):
        # |m> = |0>, |m_perp> = uniform over the rest
        full[0] = reduced_vec[0]
        full[1:] = reduced_vec[1] / np.sqrt(dim - 1.0)
        return full
    raise TypeError(f"unsupported spec type: {type(spec).__name__}")
