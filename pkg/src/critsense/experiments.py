"""Scaling studies, exponent fits, dephasing sweeps, and adaptive estimation.

Fit conventions (`ScalingResult.exponent` is always c in the stated form):

* exponential            v = A e^(c L)        (QFI growth: c = beta > 0)
* algebraic              v = A L^c            (second-order gap: c = -alpha)
* exp-linear-prefactor   v = A L e^(-c L)     (first-order p-spin gap: c = alpha)

`decay_exponent` maps any of these to the positive decay rate so that the
beta ~ 2 alpha comparison reads the same for every model.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import dynamics, metrology, spectra
from .errors import SimulationError
from .models import (
    BicliqueSpec,
    GroverSpec,
    ModelSpec,
    PSpinSpec,
    optimal_measurement,
)

ModelFamily = Callable[[int], ModelSpec]

R2_FLAG_THRESHOLD = 0.9
FIT_MIN_POINTS = 4
DROP_SMALLEST_DEFAULT = 2

FIT_KINDS = ("exponential", "algebraic", "exp-linear-prefactor")


@dataclass
class ScalingResult:
    points: list[tuple[int, float]]
    fit_kind: str
    exponent: float
    prefactor: float
    r_squared: float
    fit_window: tuple[int, int] = (0, 0)
    flagged: bool = False

    def to_json(self) -> dict:
        return {
            "points": [[int(size), value] for size, value in self.points],
            "fit_kind": self.fit_kind,
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "r_squared": self.r_squared,
            "fit_window": list(self.fit_window),
            "flagged": self.flagged,
        }


def _pmap(fn, items, workers: int = 1):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    design = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - (slope * x + intercept)
    total = y - y.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_scaling(points: Sequence[tuple[int, float]], fit_kind: str) -> ScalingResult:
    """Least squares in log coordinates for the declared functional form."""
    if fit_kind not in FIT_KINDS:
        raise ValueError(f"unknown fit kind {fit_kind!r}")
    sizes = np.array([p[0] for p in points], dtype=float)
    values = np.array([p[1] for p in points], dtype=float)
    if len(set(sizes)) < FIT_MIN_POINTS:
        raise ValueError(f"need >= {FIT_MIN_POINTS} distinct sizes, got {len(set(sizes))}")
    if np.any(values <= 0):
        raise ValueError("all values must be positive for a log-space fit")

    if fit_kind == "exponential":
        slope, intercept, r2 = _linear_fit(sizes, np.log(values))
        exponent, prefactor = slope, math.exp(intercept)
    elif fit_kind == "algebraic":
        slope, intercept, r2 = _linear_fit(np.log(sizes), np.log(values))
        exponent, prefactor = slope, math.exp(intercept)
    else:  # exp-linear-prefactor: v = A L e^(-cL)
        slope, intercept, r2 = _linear_fit(sizes, np.log(values / sizes))
        exponent, prefactor = -slope, math.exp(intercept)

    return ScalingResult(
        points=[(int(s), float(v)) for s, v in points],
        fit_kind=fit_kind,
        exponent=exponent,
        prefactor=prefactor,
        r_squared=r2,
        fit_window=(int(sizes.min()), int(sizes.max())),
        flagged=r2 < R2_FLAG_THRESHOLD,
    )


def decay_exponent(result: ScalingResult) -> float:
    """Positive decay rate implied by the fit (per unit size for exponential
    kinds, per log-size for algebraic)."""
    if result.fit_kind == "exp-linear-prefactor":
        return result.exponent
    return -result.exponent


def _fit_window(points: list[tuple[int, float]], drop_smallest: int) -> list[tuple[int, float]]:
    """Drop up to `drop_smallest` smallest sizes, keeping >= FIT_MIN_POINTS."""
    pts = sorted(points)
    drop = min(drop_smallest, max(0, len(pts) - FIT_MIN_POINTS))
    return pts[drop:]


def default_gap_fit_kind(spec: ModelSpec) -> str:
    if isinstance(spec, PSpinSpec):
        return "exp-linear-prefactor" if spec.lambda_ == 1.0 else "algebraic"
    return "exponential"


def default_qfi_fit_kind(spec: ModelSpec) -> str:
    if isinstance(spec, PSpinSpec) and spec.lambda_ != 1.0:
        return "algebraic"
    return "exponential"


def critical_bracket(spec: ModelSpec) -> tuple[float, float]:
    """Per-model theta bracket containing the (pseudo)critical gap minimum."""
    if isinstance(spec, BicliqueSpec):
        if spec.W_A >= 1.0 and spec.L >= 9:
            # large-weight biclique: only a shallow high-theta minimum exists
            return (1.9, 3.1)
        if spec.W_A >= 1.0:
            return (0.2, 3.0)
        return (0.005, 0.3)
    return dynamics.default_critical_bracket(spec)


@dataclass
class CriticalScan:
    size: int
    theta_c: float
    gap: float
    qfi: float | None = None


def _scan_critical(spec: ModelSpec, tol: float = 1e-10,
                   with_qfi: bool = False) -> CriticalScan:
    cp = spectra.locate_critical(spec, critical_bracket(spec), tol)
    qfi = metrology.qfi_spectral(spec, cp.theta_c).value if with_qfi else None
    return CriticalScan(size=spec.L, theta_c=cp.theta_c, gap=cp.gap_at_c, qfi=qfi)


def run_gap_scaling(spec_family: ModelFamily, sizes: Sequence[int], *,
                    fit_kind: str | None = None,
                    drop_smallest: int = DROP_SMALLEST_DEFAULT,
                    workers: int = 1) -> ScalingResult:
    """Critical-gap scaling: locate theta_c per size, fit Delta_c(L)."""
    specs = [spec_family(L) for L in sizes]
    kind = fit_kind or default_gap_fit_kind(specs[0])
    scans = _pmap(_scan_critical, specs, workers)
    points = [(scan.size, scan.gap) for scan in scans]
    return fit_scaling(_fit_window(points, drop_smallest), kind)


def run_qfi_scaling(spec_family: ModelFamily, sizes: Sequence[int], *,
                    fit_kind: str | None = None,
                    drop_smallest: int = DROP_SMALLEST_DEFAULT,
                    workers: int = 1) -> ScalingResult:
    """Critical-QFI scaling: qfi_spectral at the located theta_c per size."""
    specs = [spec_family(L) for L in sizes]
    kind = fit_kind or default_qfi_fit_kind(specs[0])
    scans = _pmap(lambda s: _scan_critical(s, with_qfi=True), specs, workers)
    points = [(scan.size, scan.qfi) for scan in scans]
    return fit_scaling(_fit_window(points, drop_smallest), kind)


@dataclass
class BetaAlphaReport:
    alpha: float
    beta: float
    ratio_error: float
    within_tol: bool
    merit_exponent: float  # beta - alpha, growth rate of QFI / prep time
    merit_positive: bool
    undefined: bool = False

    def to_json(self) -> dict:
        return self.__dict__.copy()


def check_beta_two_alpha(gap: ScalingResult, qfi: ScalingResult,
                         tol_rel: float = 0.25) -> BetaAlphaReport:
    """Compare the QFI growth exponent beta against twice the gap decay alpha."""
    alpha = decay_exponent(gap)
    beta = qfi.exponent
    if alpha <= 0:
        return BetaAlphaReport(alpha=alpha, beta=beta, ratio_error=math.nan,
                               within_tol=False, merit_exponent=beta - alpha,
                               merit_positive=beta - alpha > 0, undefined=True)
    err = abs(beta - 2.0 * alpha) / (2.0 * alpha)
    return BetaAlphaReport(alpha=alpha, beta=beta, ratio_error=err,
                           within_tol=err <= tol_rel,
                           merit_exponent=beta - alpha,
                           merit_positive=beta - alpha > 0)


def run_preparation_time_scaling(spec_family: ModelFamily, sizes: Sequence[int],
                                 epsilon: float, *,
                                 numerator: str = "appendix-bound",
                                 drop_smallest: int = DROP_SMALLEST_DEFAULT,
                                 workers: int = 1) -> ScalingResult:
    """Total local-adiabatic ramp time up to the critical point, per size."""

    def total_time(L: int) -> tuple[int, float]:
        spec = spec_family(L)
        cp = spectra.locate_critical(spec, critical_bracket(spec), 1e-9)
        s_c = 1.0 / (1.0 + cp.theta_c)
        sch = dynamics.local_adiabatic_schedule(spec, epsilon, s_end=s_c,
                                                numerator=numerator)
        return (L, sch.T_total)

    points = _pmap(total_time, list(sizes), workers)
    return fit_scaling(_fit_window(points, drop_smallest), "exponential")


# ---------------------------------------------------------------------------
# dephasing sweep


@dataclass
class DephasingPoint:
    size: int
    gamma: float
    qfi: float
    theta_c: float
    T_total: float


@dataclass
class GammaDecayFit:
    """Algebraic decay F ~ gamma^(-exponent) of the critical QFI."""

    size: int
    gammas: list[float]
    values: list[float]
    exponent: float
    prefactor: float
    r_squared: float

    def to_json(self) -> dict:
        return self.__dict__.copy()


@dataclass
class DephasingSweep:
    points: list[DephasingPoint]
    growth_fits: dict[float, ScalingResult] = field(default_factory=dict)
    decay_fit: GammaDecayFit | None = None

    def qfi_at(self, size: int, gamma: float) -> float:
        for p in self.points:
            if p.size == size and p.gamma == gamma:
                return p.qfi
        raise KeyError((size, gamma))

    def to_json(self) -> dict:
        return {
            "points": [p.__dict__.copy() for p in self.points],
            "growth_fits": {str(g): f.to_json() for g, f in self.growth_fits.items()},
            "decay_fit": self.decay_fit.to_json() if self.decay_fit else None,
        }


def _noise_for(spec: ModelSpec, gamma: float) -> dynamics.NoiseSpec:
    kind = "grover-collective" if isinstance(spec, GroverSpec) else "local-z"
    return dynamics.NoiseSpec(gamma=gamma, operators=kind)


def dephased_critical_qfi(spec: ModelSpec, gamma: float, *,
                          epsilon: float = 0.1, delta: float = 1e-3,
                          theta_c: float | None = None,
                          dt_factor: float | None = None) -> DephasingPoint:
    """Critical QFI of a probe prepared by the controlled ramp under dephasing.

    Two Lindblad evolutions at theta_c +/- delta/2 share one schedule
    (computed at theta_c); the mixed-state QFI uses the midpoint density
    matrix and the central-difference derivative.
    """
    if theta_c is None:
        theta_c = spectra.locate_critical(spec, critical_bracket(spec), 1e-8).theta_c
    schedule = dynamics.controlled_schedule(spec, theta_c, epsilon, s_end=0.5)

    def final_rho(theta_eff: float) -> np.ndarray:
        form = dynamics.Controlled(theta=theta_eff)
        res = dynamics.evolve_lindblad(spec, schedule, _noise_for(spec, gamma),
                                       form, n_checkpoints=32,
                                       record_fidelity=False,
                                       dt_factor=dt_factor)
        return res.final_state.rho

    lo = final_rho(theta_c - delta / 2.0)
    hi = final_rho(theta_c + delta / 2.0)
    drho = (hi - lo) / delta
    mid = 0.5 * (hi + lo)
    qfi = metrology.qfi_mixed(mid, drho, delta=delta).value
    return DephasingPoint(size=spec.L, gamma=gamma, qfi=qfi,
                          theta_c=theta_c, T_total=schedule.T_total)


def run_dephasing_sweep(spec_family: ModelFamily, sizes: Sequence[int],
                        gammas: Sequence[float], *,
                        epsilon: float = 0.1, delta: float = 1e-3,
                        decay_size: int | None = None,
                        workers: int = 1) -> DephasingSweep:
    """QFI of dephased, adiabatically prepared probes across (L, gamma).

    Fits (i) exponential growth in L at each gamma (>= 4 sizes available) and
    (ii) the algebraic decay of the critical QFI with gamma at `decay_size`
    (default: the largest size).
    """
    theta_cache: dict[int, float] = {}

    def theta_for(L: int) -> float:
        if L not in theta_cache:
            spec = spec_family(L)
            theta_cache[L] = spectra.locate_critical(
                spec, critical_bracket(spec), 1e-8
            ).theta_c
        return theta_cache[L]

    tasks = [(L, g) for L in sizes for g in gammas]

    def one(task: tuple[int, float]) -> DephasingPoint:
        L, g = task
        return dephased_critical_qfi(spec_family(L), g, epsilon=epsilon,
                                     delta=delta, theta_c=theta_for(L))

    points = _pmap(one, tasks, workers)
    sweep = DephasingSweep(points=points)

    if len(sizes) >= FIT_MIN_POINTS:
        for g in gammas:
            pts = [(p.size, p.qfi) for p in points if p.gamma == g]
            sweep.growth_fits[g] = fit_scaling(pts, "exponential")

    decay_size = decay_size if decay_size is not None else max(sizes)
    decay_pts = sorted(
        (p.gamma, p.qfi) for p in points if p.size == decay_size and p.gamma > 0
    )
    if len(decay_pts) >= 3:
        g_arr = np.array([g for g, _ in decay_pts])
        vals = np.array([v for _, v in decay_pts])
        slope, intercept, r2 = _linear_fit(np.log(g_arr), np.log(vals))
        sweep.decay_fit = GammaDecayFit(
            size=decay_size,
            gammas=[float(g) for g in g_arr],
            values=[float(v) for v in vals],
            exponent=-slope,
            prefactor=math.exp(intercept),
            r_squared=r2,
        )
    return sweep


# ---------------------------------------------------------------------------
# optimal probe size and adaptive estimation


def optimal_probe_size(epsilon_det: float) -> tuple[float, float]:
    """QFI-maximizing probe size for a detuning epsilon from criticality.

    L_opt = log2((2(eps-2)eps + 4) / eps^2), F_max = 1 / (4 (eps-2)^2 eps^2).
    """
    if not 0.0 < epsilon_det < 2.0:
        raise ValueError("epsilon_det must lie in (0, 2)")
    n_opt = (2.0 * (epsilon_det - 2.0) * epsilon_det + 4.0) / epsilon_det**2
    l_opt = math.log2(n_opt)
    f_max = 1.0 / (4.0 * (epsilon_det - 2.0) ** 2 * epsilon_det**2)
    return l_opt, f_max


@dataclass
class AdaptiveRound:
    iteration: int
    theta_est: float
    epsilon_det: float
    probe_size: int
    control_field: float
    shots: int
    flagged: bool = False

    def to_json(self) -> dict:
        return self.__dict__.copy()


def _round_rng(seed: int, round_index: int) -> np.random.Generator:
    # counter-based splitting: one independent, reproducible stream per round
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(round_index,)))


def adaptive_estimate(spec_family: ModelFamily, theta_true: float,
                      epsilon0: float, rounds: int, shots_per_round: int,
                      seed: int, *, theta_c: float = 1.0,
                      probe_cap: int = 30, grid_points: int = 401,
                      theta_prior: float | None = None) -> list[AdaptiveRound]:
    """Iterative estimation: recenter at criticality, grow the probe, measure.

    Each round applies a control field so the effective parameter sits at
    theta_c, prepares the ground state of a probe of the optimal size for the
    current uncertainty, samples the optimal measurement, and updates the
    estimate by grid maximum likelihood over a window of width 4 epsilon.
    The uncertainty never shrinks below the Cramer-Rao bound of the round.
    """
    if theta_true <= 0:
        raise ValueError("theta_true must be positive")
    if not 0 < epsilon0 < min(theta_true, 2.0):
        raise ValueError("epsilon0 must lie in (0, min(theta_true, 2))")

    eps = float(epsilon0)
    if theta_prior is None:
        rng0 = _round_rng(seed, 0)
        theta_est = theta_true + float(rng0.uniform(-0.5, 0.5)) * eps
    else:
        theta_est = float(theta_prior)

    history: list[AdaptiveRound] = []
    for n in range(1, rounds + 1):
        l_opt, _ = optimal_probe_size(eps)
        probe = max(1, math.floor(l_opt))
        if probe > probe_cap:
            break
        spec = spec_family(probe)
        basis = optimal_measurement(spec)
        family = metrology.ground_state_family(spec)

        def outcome_probs(theta_eff: float) -> np.ndarray:
            return basis.probabilities(family(theta_eff).vector)

        control = theta_c - theta_est
        theta_eff_true = theta_true + control

        flagged = False
        if shots_per_round <= 0:
            history.append(AdaptiveRound(n, theta_est, eps, probe, control,
                                         0, flagged=True))
            continue

        rng = _round_rng(seed, n)
        counts = rng.multinomial(shots_per_round, outcome_probs(theta_eff_true))

        grid = theta_c + np.linspace(-2.0 * eps, 2.0 * eps, grid_points)
        loglik = np.empty(grid_points)
        for i, tg in enumerate(grid):
            p = np.clip(outcome_probs(tg), 1e-300, None)
            loglik[i] = float(counts @ np.log(p))

        spread = loglik.max() - loglik.min()
        if spread < 1e-12:
            history.append(AdaptiveRound(n, theta_est, eps, probe, control,
                                         shots_per_round, flagged=True))
            continue

        best = np.flatnonzero(loglik >= loglik.max() - 1e-12)
        center = (grid_points - 1) / 2.0
        i_ml = int(best[np.argmin(np.abs(best - center))])
        theta_ml = float(grid[i_ml])

        # observed information from the local curvature of the log likelihood
        se_obs = math.inf
        if 0 < i_ml < grid_points - 1:
            h = grid[1] - grid[0]
            curv = -(loglik[i_ml - 1] - 2 * loglik[i_ml] + loglik[i_ml + 1]) / h**2
            if curv > 0:
                se_obs = 1.0 / math.sqrt(curv)
        fisher = metrology.cfi(family, basis, theta_ml, delta=1e-5)
        crb = metrology.cramer_rao(fisher, shots_per_round)
        eps_next = max(se_obs, crb)

        theta_est = theta_ml - control
        if eps_next < eps:
            eps = eps_next
        else:
            flagged = True
        history.append(AdaptiveRound(n, theta_est, eps, probe, control,
                                     shots_per_round, flagged=flagged))
    return history
