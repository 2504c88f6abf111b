"""Adiabatic schedules, Schrodinger and Lindblad evolution, probe preparation.

Ramp forms (hbar = 1 throughout):

* reparameterized, H(s) = s H1 + (1-s) H2 with theta <-> (1-s)/s.  The probe
  starts in the ground state of H2 at s = 0.
* controlled, H(s) = s/(1-s) H1 + theta_eff H2 with theta_eff = theta (+
  optionally a control offset theta_c).  Ramping s: 0 -> 1/2 lands exactly on
  H1 + theta_eff H2, which is how a probe is prepared when theta is unknown.

Schedules either come from the Grover closed form or from local adiabatic
driving: dt/ds = c(s) / (eps * gap(s)^2), where c(s) is the system size
(conservative bound) or the exact |<e1| dH/ds |e0>| matrix element.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _integrators as _ik
from .errors import EvolutionError, ScheduleError
from .metrology import QuantumState
from .models import (
    BasisKind,
    BicliqueSpec,
    GroverSpec,
    HamiltonianRep,
    ModelSpec,
    PSpinSpec,
    build_full_space_split,
    build_h_split,
    symmetric_sector_embedding,
)

DT_FACTOR_RK4 = 0.02
DT_FACTOR_SPLIT = 0.25
GAP_FLOOR = 1e-14
SCHEDULE_GRID_POINTS = 201
SCHEDULE_REFINE = 5
NORM_DRIFT_TOL = 1e-6
TRACE_DRIFT_TOL = 1e-6
NEGATIVITY_TOL = 1e-6

LINDBLAD_FULL_MAX_QUBITS = 12


@dataclass(frozen=True)
class Reparameterized:
    """H(s) = s H1 + (1-s) H2."""

    mode = _ik.MODE_REPARAM

    def coeffs(self, s: float) -> tuple[float, float]:
        return s, 1.0 - s

    @property
    def theta_eff(self) -> float:
        return 0.0

    def dh_scale(self, s: float) -> tuple[float, float]:
        # dH/ds = H1 - H2
        return 1.0, -1.0


@dataclass(frozen=True)
class Controlled:
    """H(s) = s/(1-s) H1 + (theta + offset) H2."""

    theta: float
    offset: float = 0.0

    mode = _ik.MODE_CONTROLLED

    def coeffs(self, s: float) -> tuple[float, float]:
        return s / (1.0 - s), self.theta + self.offset

    @property
    def theta_eff(self) -> float:
        return self.theta + self.offset

    def dh_scale(self, s: float) -> tuple[float, float]:
        # dH/ds = H1 / (1-s)^2
        return 1.0 / (1.0 - s) ** 2, 0.0


RampForm = Reparameterized | Controlled


@dataclass
class Schedule:
    """Monotone t <-> s mapping driving the evolving Hamiltonian."""

    t: np.ndarray
    s: np.ndarray
    epsilon: float
    kind: str  # grover-analytic | local-adiabatic-numeric | linear

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float)
        self.s = np.asarray(self.s, dtype=float)
        if self.t[0] != 0.0 or self.s[0] != 0.0:
            raise ScheduleError("schedule must start at t = 0, s = 0")
        if np.any(np.diff(self.t) <= 0) or np.any(np.diff(self.s) <= 0):
            raise ScheduleError("schedule must be strictly increasing in t and s")

    @property
    def T_total(self) -> float:
        return float(self.t[-1])

    @property
    def s_end(self) -> float:
        return float(self.s[-1])

    def s_of_t(self, t) -> np.ndarray | float:
        return np.interp(t, self.t, self.s)

    def t_of_s(self, s) -> np.ndarray | float:
        return np.interp(s, self.s, self.t)


def linear_schedule(T_total: float, s_end: float = 1.0) -> Schedule:
    if T_total <= 0:
        raise ScheduleError("total time must be positive")
    grid = np.linspace(0.0, 1.0, 65)
    return Schedule(t=T_total * grid, s=s_end * grid, epsilon=0.0, kind="linear")


def grover_schedule(L: int, epsilon: float, grid_points: int = 2001) -> Schedule:
    """Closed-form local-adiabatic schedule for the Grover ramp (s: 0 -> 1).

    t(s) = N [atan(sqrt(N-1)(2s-1)) + atan(sqrt(N-1))] / (2 eps sqrt(N-1)),
    giving T ~= pi / (2 eps Delta_min) for large N.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    n = float(2 ** L)
    root = np.sqrt(n - 1.0)
    s = np.linspace(0.0, 1.0, grid_points)
    t = n * (np.arctan(root * (2.0 * s - 1.0)) + np.arctan(root)) / (2.0 * epsilon * root)
    t[0] = 0.0
    return Schedule(t=t, s=s, epsilon=epsilon, kind="grover-analytic")


def _two_level_data(hmat: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    evals, evecs = np.linalg.eigh(hmat)
    return float(evals[1] - evals[0]), evecs[:, 0], evecs[:, 1]


def synthesize_schedule(h_at, dh_at, epsilon: float, s_end: float,
                        numerator: str = "appendix-bound",
                        c_const: float | None = None,
                        grid_points: int = SCHEDULE_GRID_POINTS) -> Schedule:
    """Integrate dt/ds = c(s) / (eps gap(s)^2) over a refined s grid.

    `h_at(s)` returns the dense Hamiltonian, `dh_at(s)` its s derivative
    (only consulted in exact-matrix-element mode).  The base grid is refined
    5x around the gap minimum because first-order dips are narrow.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if not 0.0 < s_end < 1.0 + 1e-12:
        raise ValueError("s_end must lie in (0, 1]")
    if numerator not in ("appendix-bound", "exact-matrix-element"):
        raise ValueError(f"unknown numerator mode: {numerator!r}")
    if numerator == "appendix-bound" and c_const is None:
        raise ValueError("appendix-bound mode needs the constant bound c_const")

    base = np.linspace(0.0, s_end, grid_points)
    gaps = np.array([_two_level_data(h_at(s))[0] for s in base])
    i_min = int(np.argmin(gaps))
    lo = base[max(i_min - 1, 0)]
    hi = base[min(i_min + 1, grid_points - 1)]
    fine = np.linspace(lo, hi, 2 * SCHEDULE_REFINE * 2 + 1)
    grid = np.unique(np.concatenate([base, fine]))

    integrand = np.empty_like(grid)
    for i, s in enumerate(grid):
        gap, ground, excited = _two_level_data(h_at(s))
        if gap < GAP_FLOOR:
            raise ScheduleError(
                f"gap {gap:g} below {GAP_FLOOR:g} at s={s:g}: unbounded schedule"
            )
        if numerator == "appendix-bound":
            c = c_const
        else:
            c = abs(excited.conj() @ (dh_at(s) @ ground))
        integrand[i] = c / (epsilon * gap * gap)

    t = np.concatenate([[0.0], np.cumsum(
        0.5 * (integrand[1:] + integrand[:-1]) * np.diff(grid)
    )])
    return Schedule(t=t, s=grid, epsilon=epsilon, kind="local-adiabatic-numeric")


def local_adiabatic_schedule(spec: ModelSpec, epsilon: float, s_end: float = 1.0,
                             numerator: str = "appendix-bound") -> Schedule:
    """Local-adiabatic schedule for the reparameterized ramp s H1 + (1-s) H2."""
    h1, h2 = build_h_split(spec)
    m1, m2 = h1.toarray(), h2.toarray()
    s_end = min(s_end, 1.0 - 1e-9)

    def h_at(s: float) -> np.ndarray:
        return s * m1 + (1.0 - s) * m2

    def dh_at(s: float) -> np.ndarray:
        return m1 - m2

    return synthesize_schedule(h_at, dh_at, epsilon, s_end, numerator,
                               c_const=float(spec.L))


def controlled_schedule(spec: ModelSpec, theta_eff: float, epsilon: float,
                        s_end: float = 0.5,
                        numerator: str = "exact-matrix-element") -> Schedule:
    """Local-adiabatic schedule for the controlled ramp s/(1-s) H1 + theta_eff H2."""
    h1, h2 = build_h_split(spec)
    m1, m2 = h1.toarray(), h2.toarray()

    def h_at(s: float) -> np.ndarray:
        return (s / (1.0 - s)) * m1 + theta_eff * m2

    def dh_at(s: float) -> np.ndarray:
        return m1 / (1.0 - s) ** 2

    return synthesize_schedule(h_at, dh_at, epsilon, s_end, numerator,
                               c_const=float(spec.L))


@dataclass(frozen=True)
class NoiseSpec:
    """Dephasing noise: rate gamma and the Lindblad operator family."""

    gamma: float
    operators: str = "local-z"  # local-z | grover-collective

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.operators not in ("local-z", "grover-collective"):
            raise ValueError(f"unknown operator family: {self.operators!r}")


@dataclass
class Checkpoint:
    t: float
    s: float
    state: QuantumState | None
    fidelity: float | None


@dataclass
class EvolutionResult:
    checkpoints: list[Checkpoint]
    final_state: QuantumState
    T_total: float
    drift: float = 0.0  # worst norm (pure) or trace (Lindblad) deviation

    def state_at_s(self, s: float, tol: float = 1e-9) -> QuantumState:
        for cp in self.checkpoints:
            if abs(cp.s - s) <= tol and cp.state is not None:
                return cp.state
        raise KeyError(f"no stored checkpoint state at s={s}")

    def fidelity_at_s(self, s: float, tol: float = 1e-9) -> float:
        best = min(self.checkpoints, key=lambda cp: abs(cp.s - s))
        if abs(best.s - s) > tol or best.fidelity is None:
            raise KeyError(f"no recorded fidelity at s={s}")
        return best.fidelity

    @property
    def min_fidelity(self) -> float:
        vals = [cp.fidelity for cp in self.checkpoints if cp.fidelity is not None]
        if not vals:
            raise ValueError("no fidelities recorded")
        return min(vals)

    def csv_rows(self) -> list[tuple[float, float, float]]:
        return [
            (cp.t, cp.s, cp.fidelity if cp.fidelity is not None else float("nan"))
            for cp in self.checkpoints
        ]

    def summary_json(self) -> dict:
        out = {"T_total": self.T_total, "drift": self.drift}
        try:
            out["min_fidelity"] = self.min_fidelity
        except ValueError:
            out["min_fidelity"] = None
        return out


def _checkpoint_grid(schedule: Schedule, n_checkpoints: int, extra_s=()) -> np.ndarray:
    s_vals = np.linspace(0.0, schedule.s_end, max(int(n_checkpoints), 2))
    s_vals = np.unique(np.concatenate([s_vals, np.asarray(extra_s, dtype=float)]))
    if s_vals[0] < 0.0 or s_vals[-1] > schedule.s_end + 1e-12:
        raise ValueError("extra checkpoints outside the schedule range")
    return s_vals


def _hnorm_max(h_dense_at, s_samples) -> float:
    """Max row-sum norm of H(s) over sampled ramp positions."""
    worst = 0.0
    for s in s_samples:
        mat = h_dense_at(s)
        if sp.issparse(mat):
            rowsum = np.abs(mat).sum(axis=1).max()
        else:
            rowsum = np.max(np.sum(np.abs(mat), axis=1))
        worst = max(worst, float(rowsum))
    return worst


def _reduced_mats(spec: ModelSpec) -> tuple[HamiltonianRep, HamiltonianRep, np.ndarray, np.ndarray]:
    h1, h2 = build_h_split(spec)
    return h1, h2, h1.toarray(), h2.toarray()


def evolve_pure(spec: ModelSpec, schedule: Schedule,
                form: RampForm = Reparameterized(), *,
                n_checkpoints: int = 128, extra_s=(),
                dt_factor: float = DT_FACTOR_RK4,
                record_fidelity: bool = True) -> EvolutionResult:
    """Integrate the Schrodinger equation along the schedule (fixed-step RK4).

    The probe starts in the ground state of H(s=0) (the ground state of H2
    for both ramp forms).  Instantaneous-ground-state fidelity is recorded at
    every checkpoint; requested `extra_s` values are hit exactly so evolved
    states can be read out at prescribed parameter points.
    """
    h1, h2, m1, m2 = _reduced_mats(spec)

    def h_dense_at(s: float) -> np.ndarray:
        a, b = form.coeffs(s)
        return a * m1 + b * m2

    s_grid = _checkpoint_grid(schedule, n_checkpoints, extra_s)
    t_grid = schedule.t_of_s(s_grid)

    evals0, evecs0 = np.linalg.eigh(h_dense_at(s_grid[0]))
    psi = evecs0[:, 0].astype(np.complex128)

    norm_samples = np.linspace(0.0, schedule.s_end, 65)
    h_norm = _hnorm_max(h_dense_at, norm_samples)
    dt_max = dt_factor / max(h_norm, 1e-12)
    # centering the spectrum shrinks the fastest phase the integrator sees
    mids = []
    for s in np.linspace(0.0, schedule.s_end, 17):
        ev = np.linalg.eigvalsh(h_dense_at(s))
        mids.append(0.5 * (ev[0] + ev[-1]))
    shift = float(np.mean(mids))

    h1c = np.ascontiguousarray(m1, dtype=np.complex128)
    h2c = np.ascontiguousarray(m2, dtype=np.complex128)
    tk = np.ascontiguousarray(schedule.t)
    sk = np.ascontiguousarray(schedule.s)

    checkpoints: list[Checkpoint] = []
    worst_drift = 0.0
    extra_set = {round(float(x), 15) for x in extra_s}

    def record(t: float, s: float) -> None:
        nonlocal worst_drift
        norm = float(np.linalg.norm(psi))
        worst_drift = max(worst_drift, abs(norm - 1.0))
        if abs(norm - 1.0) > NORM_DRIFT_TOL:
            raise EvolutionError(
                f"norm drift {abs(norm - 1.0):g} at t={t:g}: reduce dt_factor"
            )
        fid = None
        if record_fidelity:
            _, gs = np.linalg.eigh(h_dense_at(s))
            amp = np.vdot(gs[:, 0], psi)
            fid = float(min(abs(amp) ** 2, 1.0))
        checkpoints.append(Checkpoint(
            t=t, s=s,
            state=QuantumState.pure(psi / norm, h1.basis),
            fidelity=fid,
        ))

    record(float(t_grid[0]), float(s_grid[0]))
    for i in range(1, len(s_grid)):
        t0, t1 = float(t_grid[i - 1]), float(t_grid[i])
        if t1 > t0:
            n_steps = max(1, int(np.ceil((t1 - t0) / dt_max)))
            _ik.rk4_pure_segment(h1c, h2c, form.mode, form.theta_eff, shift,
                                 tk, sk, psi, t0, t1, n_steps)
        record(t1, float(s_grid[i]))

    result = EvolutionResult(
        checkpoints=checkpoints,
        final_state=checkpoints[-1].state,
        T_total=schedule.T_total,
        drift=worst_drift,
    )
    # keep memory bounded when states are only needed at the readout points
    if extra_set:
        for cp in result.checkpoints[:-1]:
            if round(cp.s, 15) not in extra_set:
                cp.state = None
    return result


def _dephasing_cmat(dim: int, z_signatures: np.ndarray) -> np.ndarray:
    """Elementwise dissipator factor sum_n z_n(a) z_n(b) - n_ops."""
    n_ops = z_signatures.shape[0]
    acc = np.zeros((dim, dim))
    for z in z_signatures:
        acc += np.outer(z, z)
    return acc - n_ops


def evolve_lindblad(spec: ModelSpec, schedule: Schedule, noise: NoiseSpec,
                    form: RampForm = Reparameterized(), *,
                    method: str | None = None,
                    n_checkpoints: int = 64, extra_s=(),
                    dt_factor: float | None = None,
                    record_fidelity: bool = True,
                    store_states: str = "extra") -> EvolutionResult:
    """Integrate the dephasing master equation along the schedule.

    grover-collective noise: single sigma^z between |m> and |m_perp>, solved
    in the two-level basis.  local-z noise: one sigma^z per site, solved in
    the full computational basis (L <= 12); `method="split"` (default above
    dense size) uses the exact-factor Strang propagator, `method="rk4"` the
    dense RK4 kernel.
    """
    if noise.operators == "grover-collective":
        if not isinstance(spec, GroverSpec):
            raise ValueError("grover-collective noise only applies to the Grover model")
        h1, h2 = build_h_split(spec)
        basis = BasisKind.EFFECTIVE_TWO_LEVEL
        z_sig = np.array([[1.0, -1.0]])
        if method is None:
            method = "rk4"
    else:
        if spec.L > LINDBLAD_FULL_MAX_QUBITS:
            raise ValueError(
                f"local-z Lindblad limited to L <= {LINDBLAD_FULL_MAX_QUBITS} qubits"
            )
        h1, h2 = build_full_space_split(spec)
        basis = BasisKind.FULL_COMPUTATIONAL
        states = np.arange(h1.dim)
        z_sig = np.array([
            1.0 - 2.0 * ((states >> b) & 1) for b in range(spec.L)
        ])
        if method is None:
            method = "rk4" if h1.dim <= 64 else "split"

    m1 = h1.toarray() if not sp.issparse(h1.matrix) else h1.matrix
    m2 = h2.toarray() if not sp.issparse(h2.matrix) else h2.matrix

    def h_dense_at(s: float):
        a, b = form.coeffs(s)
        return a * m1 + b * m2

    s_grid = _checkpoint_grid(schedule, n_checkpoints, extra_s)
    t_grid = schedule.t_of_s(s_grid)

    # initial state: ground state of H(0) = (const) * H2, a product state
    if basis is BasisKind.FULL_COMPUTATIONAL:
        h1r, h2r = build_h_split(spec)
        ev, evec = np.linalg.eigh(form.coeffs(0.0)[1] * h2r.toarray())
        psi0 = symmetric_sector_embedding(spec, evec[:, 0])
    else:
        ev, evec = np.linalg.eigh(form.coeffs(0.0)[1] * h2.toarray())
        psi0 = evec[:, 0].astype(complex)
    rho = np.outer(psi0, psi0.conj()).astype(np.complex128)

    h_norm = _hnorm_max(h_dense_at, np.linspace(0.0, schedule.s_end, 33))
    if dt_factor is None:
        dt_factor = DT_FACTOR_SPLIT if method == "split" else DT_FACTOR_RK4
    dt_max = dt_factor / max(h_norm, 1e-12)

    tk = np.ascontiguousarray(schedule.t)
    sk = np.ascontiguousarray(schedule.s)

    if method == "split":
        if sp.issparse(m1):
            off_diag = m1 - sp.diags(m1.diagonal())
            if off_diag.nnz:
                raise ValueError("split-step requires a diagonal H1")
            diag1 = np.asarray(m1.diagonal(), dtype=float)
        else:
            if np.any(np.abs(m1 - np.diag(np.diag(m1))) > 0):
                raise ValueError("split-step requires a diagonal H1")
            diag1 = np.diag(m1).astype(float)
        xsign = -1.0 if isinstance(spec, PSpinSpec) else 1.0
        popcounts = _ik.xor_popcount_matrix(spec.L)
    elif method == "rk4":
        if h1.dim > 512:
            raise ValueError("dense RK4 Lindblad limited to dim <= 512; use split")
        cmat = np.ascontiguousarray(_dephasing_cmat(h1.dim, z_sig))
        m1d = np.ascontiguousarray(
            m1.toarray() if sp.issparse(m1) else m1, dtype=np.complex128
        )
        m2d = np.ascontiguousarray(
            m2.toarray() if sp.issparse(m2) else m2, dtype=np.complex128
        )
    else:
        raise ValueError(f"unknown Lindblad method: {method!r}")

    reduced_split = build_h_split(spec) if basis is BasisKind.FULL_COMPUTATIONAL else None

    def ground_vector(s: float) -> np.ndarray:
        if reduced_split is not None:
            r1, r2 = reduced_split
            a, b = form.coeffs(s)
            _, vecs = np.linalg.eigh(a * r1.toarray() + b * r2.toarray())
            return symmetric_sector_embedding(spec, vecs[:, 0])
        _, vecs = np.linalg.eigh(h_dense_at(s))
        return vecs[:, 0]

    checkpoints: list[Checkpoint] = []
    worst_drift = 0.0
    extra_set = {round(float(x), 15) for x in extra_s}

    def record(t: float, s: float, keep_state: bool) -> None:
        nonlocal worst_drift
        tr = float(np.trace(rho).real)
        worst_drift = max(worst_drift, abs(tr - 1.0))
        if abs(tr - 1.0) > TRACE_DRIFT_TOL:
            raise EvolutionError(f"trace drift {abs(tr - 1.0):g} at t={t:g}")
        fid = None
        if record_fidelity:
            gs = ground_vector(s)
            fid = float(np.real(gs.conj() @ (rho @ gs)))
        state = None
        if keep_state:
            herm = 0.5 * (rho + rho.conj().T)
            state = QuantumState(basis=basis, rho=herm / np.trace(herm).real)
        checkpoints.append(Checkpoint(t=t, s=s, state=state, fidelity=fid))

    def want_state(s: float, is_last: bool) -> bool:
        if store_states == "all":
            return True
        return is_last or round(float(s), 15) in extra_set

    record(float(t_grid[0]), float(s_grid[0]), want_state(s_grid[0], False))
    for i in range(1, len(s_grid)):
        t0, t1 = float(t_grid[i - 1]), float(t_grid[i])
        if t1 > t0:
            n_steps = max(1, int(np.ceil((t1 - t0) / dt_max)))
            if method == "split":
                _ik.split_step_segment(diag1, xsign, noise.gamma, popcounts,
                                       form.mode, form.theta_eff, tk, sk,
                                       rho, t0, t1, n_steps, spec.L)
            else:
                _ik.rk4_lindblad_segment(m1d, m2d, cmat, noise.gamma,
                                         form.mode, form.theta_eff, tk, sk,
                                         rho, t0, t1, n_steps)
        record(t1, float(s_grid[i]), want_state(s_grid[i], i == len(s_grid) - 1))

    final = checkpoints[-1].state
    evals = np.linalg.eigvalsh(final.rho)
    if evals.min() < -NEGATIVITY_TOL:
        raise EvolutionError(f"density matrix negativity {evals.min():g}")
    return EvolutionResult(
        checkpoints=checkpoints,
        final_state=final,
        T_total=schedule.T_total,
        drift=worst_drift,
    )


def default_critical_bracket(spec: ModelSpec) -> tuple[float, float]:
    """Reasonable theta bracket for locating the gap minimum of each model."""
    if isinstance(spec, GroverSpec):
        return (0.5, 1.5)
    if isinstance(spec, PSpinSpec):
        # small sizes push the pseudo-critical point well below the asymptote
        return (0.3, 1.8) if spec.lambda_ == 1.0 else (1.2, 2.4)
    if isinstance(spec, BicliqueSpec):
        return (0.005, 3.0)
    raise TypeError(f"unsupported spec type: {type(spec).__name__}")


def prepare_probe(spec: ModelSpec, theta_true: float, epsilon: float,
                  use_offset: bool = False, *, theta_c: float | None = None,
                  return_evolution: bool = False):
    """Adiabatically prepare the interacting ground state at an unknown theta.

    Runs the controlled ramp s: 0 -> 1/2; at s = 1/2 the Hamiltonian is
    exactly H1 + theta_eff H2.  With `use_offset` a control field theta_c is
    added to the H2 coefficient so the gap minimum s_c = theta/(theta+theta_c)
    stays away from the ramp (subtract theta_c from the estimate downstream).
    Without the offset the anti-crossing is only safe for theta_true >= theta_c.
    """
    if theta_true < 0:
        raise ValueError("theta_true must be non-negative")
    if theta_c is None:
        from .spectra import locate_critical

        theta_c = locate_critical(spec, default_critical_bracket(spec), 1e-6).theta_c
    if not use_offset and theta_true < theta_c - 1e-9:
        raise ValueError(
            f"theta_true={theta_true} below theta_c={theta_c:.6f}: the ramp would "
            "cross the transition; enable use_offset"
        )
    form = Controlled(theta=theta_true, offset=theta_c if use_offset else 0.0)
    schedule = controlled_schedule(spec, form.theta_eff, epsilon, s_end=0.5)
    result = evolve_pure(spec, schedule, form, extra_s=(0.5,))
    state = result.state_at_s(0.5)
    if return_evolution:
        return state, result
    return state
