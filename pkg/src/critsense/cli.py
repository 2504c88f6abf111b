"""Command-line front end: run experiments, emit CSV + JSON manifests.

One experiment per invocation.  Configuration comes from a JSON document
(--config) with flag overrides; every run writes one CSV of plot-ready data
and one JSON manifest embedding the fully resolved configuration, so a run
can be reproduced bit-for-bit from its manifest.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
import traceback

import numpy as np

from . import dynamics, experiments, metrology, spectra
from .errors import SimulationError
from .models import ModelSpec, spec_from_json
from .presets import PRESETS, get_preset

EXPERIMENTS = (
    "gap-scan", "qfi-scan", "scaling", "adiabatic", "prepare-unknown",
    "dephasing", "adaptive", "prep-time",
)


@dataclasses.dataclass
class RunConfig:
    experiment: str
    model: str | dict = "grover"
    sizes: list[int] = dataclasses.field(default_factory=list)
    thetas: list[float] = dataclasses.field(default_factory=list)
    gammas: list[float] = dataclasses.field(default_factory=list)
    epsilon: float = 0.1
    delta: float = 1e-3
    seed: int = 12345
    threads: int = 0  # 0 -> machine parallelism
    out: str = "."
    # adaptive / preparation extras
    theta_true: float = 1.05
    epsilon0: float = 0.2
    rounds: int = 4
    shots: int = 10_000
    probe_cap: int = 30
    use_offset: bool = False

    def resolved(self) -> dict:
        out = dataclasses.asdict(self)
        out["threads"] = self.workers
        return out

    @property
    def workers(self) -> int:
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)

    def spec_for(self, L: int) -> ModelSpec:
        if isinstance(self.model, dict):
            return spec_from_json(self.model)
        return get_preset(self.model).family(L)

    @property
    def model_name(self) -> str:
        if isinstance(self.model, dict):
            return self.model.get("model", "inline")
        return self.model

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if isinstance(self.model, str) and self.model not in PRESETS:
            raise ValueError(f"unknown preset {self.model!r}")
        needs_sizes = self.experiment in (
            "gap-scan", "qfi-scan", "scaling", "dephasing", "prep-time"
        )
        if needs_sizes and not self.sizes:
            raise ValueError(f"experiment {self.experiment!r} needs a size list")
        if self.experiment in ("gap-scan", "qfi-scan", "prepare-unknown") and not self.thetas:
            raise ValueError(f"experiment {self.experiment!r} needs a theta grid")
        if self.experiment == "dephasing" and not self.gammas:
            raise ValueError("dephasing needs a gamma list")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_manifest(path: str, config: RunConfig, results: dict) -> None:
    doc = {"config": config.resolved(), "results": results}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# experiment drivers: each returns (csv_header, csv_rows, results_dict, summary)


def _run_gap_scan(cfg: RunConfig):
    rows = []
    for L in cfg.sizes:
        spec = cfg.spec_for(L)
        for theta, gap in spectra.gap_profile(spec, cfg.thetas):
            rows.append((L, theta, gap))
    best = min(rows, key=lambda r: r[2])
    summary = f"min gap {best[2]:.6g} at L={best[0]}, theta={best[1]:.6g}"
    return ["L", "theta", "gap"], rows, {"min_gap": best[2], "argmin_theta": best[1]}, summary


def _run_qfi_scan(cfg: RunConfig):
    rows = []
    for L in cfg.sizes:
        spec = cfg.spec_for(L)
        for theta in cfg.thetas:
            rows.append((L, theta, metrology.qfi_spectral(spec, theta).value))
    best = max(rows, key=lambda r: r[2])
    summary = f"max QFI {best[2]:.6g} at L={best[0]}, theta={best[1]:.6g}"
    return ["L", "theta", "qfi"], rows, {"max_qfi": best[2], "argmax_theta": best[1]}, summary


def _run_scaling(cfg: RunConfig):
    family = lambda L: cfg.spec_for(L)
    gap = experiments.run_gap_scaling(family, cfg.sizes, workers=cfg.workers)
    qfi = experiments.run_qfi_scaling(family, cfg.sizes, workers=cfg.workers)
    report = experiments.check_beta_two_alpha(gap, qfi)
    qfi_by_size = dict(qfi.points)
    rows = [(L, g, qfi_by_size[L]) for L, g in gap.points]
    results = {
        "gap_fit": gap.to_json(),
        "qfi_fit": qfi.to_json(),
        "beta_two_alpha": report.to_json(),
    }
    summary = (
        f"alpha={report.alpha:.4g} beta={report.beta:.4g} "
        f"|beta-2alpha|/2alpha={report.ratio_error:.3f} r2=({gap.r_squared:.3f},{qfi.r_squared:.3f})"
    )
    return ["L", "gap_c", "qfi_c"], rows, results, summary


def _model_schedule(cfg: RunConfig, spec: ModelSpec, s_end: float):
    from .models import GroverSpec

    if isinstance(spec, GroverSpec):
        return dynamics.grover_schedule(spec.L, cfg.epsilon)
    return dynamics.local_adiabatic_schedule(spec, cfg.epsilon, s_end=s_end)


def _run_adiabatic(cfg: RunConfig):
    L = cfg.sizes[0] if cfg.sizes else 20
    spec = cfg.spec_for(L)
    cp = spectra.locate_critical(spec, experiments.critical_bracket(spec), 1e-8)
    s_c = 1.0 / (1.0 + cp.theta_c)
    schedule = _model_schedule(cfg, spec, s_end=min(1.0, s_c + 0.05))
    result = dynamics.evolve_pure(spec, schedule, dynamics.Reparameterized(),
                                  extra_s=(s_c,))
    rows = result.csv_rows()
    results = {
        "theta_c": cp.theta_c,
        "T_total": result.T_total,
        "min_fidelity": result.min_fidelity,
        "fidelity_at_critical": result.fidelity_at_s(s_c),
    }
    summary = (
        f"L={L} theta_c={cp.theta_c:.6g} T={result.T_total:.6g} "
        f"fid@theta_c={results['fidelity_at_critical']:.6f}"
    )
    return ["t", "s", "fidelity"], rows, results, summary


def _run_prepare_unknown(cfg: RunConfig):
    L = cfg.sizes[0] if cfg.sizes else 20
    spec = cfg.spec_for(L)
    cp = spectra.locate_critical(spec, experiments.critical_bracket(spec), 1e-8)
    rows = []
    for theta in cfg.thetas:
        state = dynamics.prepare_probe(spec, theta, cfg.epsilon,
                                       use_offset=cfg.use_offset,
                                       theta_c=cp.theta_c)
        theta_eff = theta + (cp.theta_c if cfg.use_offset else 0.0)
        gs = metrology.ground_state(spec, theta_eff)
        fidelity = float(abs(np.vdot(gs, state.vector)) ** 2)
        qfi_gs = metrology.qfi_spectral(spec, theta_eff).value
        rows.append((theta, fidelity, qfi_gs))
    worst = min(rows, key=lambda r: r[1])
    summary = f"L={L}: worst fidelity {worst[1]:.6f} at theta_true={worst[0]:.6g}"
    return (["theta_true", "fidelity", "qfi_ground"], rows,
            {"theta_c": cp.theta_c, "worst_fidelity": worst[1]}, summary)


def _run_dephasing(cfg: RunConfig):
    family = lambda L: cfg.spec_for(L)
    sweep = experiments.run_dephasing_sweep(family, cfg.sizes, cfg.gammas,
                                            epsilon=cfg.epsilon, delta=cfg.delta,
                                            workers=cfg.workers)
    rows = [(p.size, p.gamma, p.qfi) for p in sweep.points]
    decay = sweep.decay_fit
    summary = "dephasing sweep complete"
    if decay is not None:
        summary = (
            f"decay exponent {decay.exponent:.4g} at L={decay.size} "
            f"(r2={decay.r_squared:.3f})"
        )
    return ["L", "gamma", "qfi"], rows, sweep.to_json(), summary


def _run_adaptive(cfg: RunConfig):
    family = lambda L: cfg.spec_for(L)
    rounds = experiments.adaptive_estimate(
        family, cfg.theta_true, cfg.epsilon0, cfg.rounds, cfg.shots,
        cfg.seed, probe_cap=cfg.probe_cap,
    )
    rows = [
        (r.iteration, r.theta_est, r.epsilon_det, r.probe_size,
         r.control_field, r.shots, int(r.flagged))
        for r in rounds
    ]
    final = rounds[-1]
    results = {"rounds": [r.to_json() for r in rounds]}
    summary = (
        f"{len(rounds)} rounds: theta_est={final.theta_est:.6g} "
        f"eps={final.epsilon_det:.3g} (true {cfg.theta_true})"
    )
    return (["iteration", "theta_est", "epsilon_det", "probe_size",
             "control_field", "shots", "flagged"], rows, results, summary)


def _run_prep_time(cfg: RunConfig):
    family = lambda L: cfg.spec_for(L)
    fit = experiments.run_preparation_time_scaling(
        family, cfg.sizes, cfg.epsilon, workers=cfg.workers
    )
    rows = fit.points
    summary = f"T ~ exp({fit.exponent:.4g} L), r2={fit.r_squared:.4f}"
    return ["L", "T_total"], rows, {"fit": fit.to_json()}, summary


DRIVERS = {
    "gap-scan": _run_gap_scan,
    "qfi-scan": _run_qfi_scan,
    "scaling": _run_scaling,
    "adiabatic": _run_adiabatic,
    "prepare-unknown": _run_prepare_unknown,
    "dephasing": _run_dephasing,
    "adaptive": _run_adaptive,
    "prep-time": _run_prep_time,
}


def run(config: RunConfig) -> int:
    """Execute one experiment; returns the process exit status."""
    try:
        config.validate()
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        header, rows, results, summary = DRIVERS[config.experiment](config)
    except (SimulationError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    except Exception as exc:  # unexpected: still emit machine-readable error
        print(json.dumps({
            "error": type(exc).__name__,
            "message": str(exc),
            "trace": traceback.format_exc(),
        }))
        return 1

    os.makedirs(config.out, exist_ok=True)
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime())
    stem = f"{config.model_name}_{config.experiment}_{stamp}"
    csv_path = os.path.join(config.out, stem + ".csv")
    write_csv(csv_path, header, rows)
    write_manifest(os.path.join(config.out, stem + ".json"), config, results)
    print(f"{config.experiment} [{config.model_name}] {summary} -> {csv_path}")
    return 0


def list_presets() -> list[dict]:
    rows = []
    for name in sorted(PRESETS):
        p = PRESETS[name]
        rows.append({
            "name": name,
            "description": p.description,
            "theta_c_hint": p.theta_c_hint,
            "default_sizes": list(p.default_sizes),
        })
    return rows


def _parse_float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _theta_grid(text: str) -> list[float]:
    """Either "start:stop:num" or a comma-separated list."""
    if ":" in text:
        start, stop, num = text.split(":")
        return list(np.linspace(float(start), float(stop), int(num)))
    return _parse_float_list(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="critsense",
        description="criticality-based quantum sensing experiments",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)

    sub.add_parser("list-presets", help="show the named model presets")

    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--model", help="preset name")
        p.add_argument("--sizes", type=_parse_int_list, help="comma-separated L list")
        p.add_argument("--thetas", type=_theta_grid,
                       help="theta grid: start:stop:num or comma list")
        p.add_argument("--gammas", type=_parse_float_list)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--theta-true", dest="theta_true", type=float)
        p.add_argument("--epsilon0", type=float)
        p.add_argument("--rounds", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--probe-cap", dest="probe_cap", type=int)
        p.add_argument("--use-offset", dest="use_offset", action="store_true",
                       default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            base = json.load(fh)
    base["experiment"] = args.experiment
    for key in ("model", "sizes", "thetas", "gammas", "epsilon", "delta", "seed",
                "threads", "out", "theta_true", "epsilon0", "rounds", "shots",
                "probe_cap", "use_offset"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(base) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    return RunConfig(**base)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.experiment == "list-presets":
        for row in list_presets():
            hint = "-" if row["theta_c_hint"] is None else f"{row['theta_c_hint']:g}"
            sizes = ",".join(str(s) for s in row["default_sizes"])
            print(f"{row['name']:20s} theta_c~{hint:6s} sizes=[{sizes}]  {row['description']}")
        return 0
    try:
        config = config_from_args(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
