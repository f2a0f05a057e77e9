"""Command-line front end.

Subcommands: forward (Marshak run with CSV snapshots), grad-check
(adjoint-vs-finite-difference and conservation diagnostics), invert
(projected descent on the initial condition), sweep (invert across a
list of scale-preconditioner values). All outputs are CSV plus a
versioned JSON summary so downstream tooling never parses logs.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 check
failure, 5 diverged inversion under --strict.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .adjoint_core import pairing_drift
from .blockla import BlockVec, SingularOperatorError
from .optim import DescentConfig, adjoint_gradient, run_inverse_problem
from .precond import IdentityPairing
from .radiff import RadDiffConfig, marshak_problem, terminal_cost
from .timeint import (
    NewtonError,
    StepConfig,
    integrate_adjoint,
    integrate_forward,
    propagate_variation,
)

__all__ = ["RunConfig", "ConfigError", "main"]

SUMMARY_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4
EXIT_DIVERGED = 5


class ConfigError(ValueError):
    pass


@dataclass
class IntegrationConfig:
    dt: float = 5e-13
    t_f: float = 1e-8
    newton_tol: float = 1e-10
    newton_max_iter: int = 25

    def step_config(self) -> StepConfig:
        return StepConfig(dt=self.dt, newton_tol=self.newton_tol,
                          newton_max_iter=self.newton_max_iter)


@dataclass
class PerturbationConfig:
    center: float = 0.125   # cm
    width: float = 0.025    # cm
    amplitude: float = 50.0  # eV


# s = scale_y / scale_x on the (E, T) costate; physical-unit runs need far
# larger values (the T-gradient reaches ~1e40 at paper parameters), so the
# defaults mostly chart the divergent regime
DEFAULT_SWEEP = [{"scale_x": 1.0, "scale_y": s}
                 for s in (1.0, 1e3, 1e6, 1e9, 1e12)]


@dataclass
class OptimizationConfig:
    gamma: float = 0.1
    max_iters: int = 30
    scale_x: float = 1.0
    scale_y: float = 1.0
    projection: str = "e_coordinate"
    stop_tol: float = 1e-3
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    sweep: list = field(default_factory=lambda: [dict(e) for e in DEFAULT_SWEEP])

    def descent_config(self, **overrides) -> DescentConfig:
        kw = dict(gamma=self.gamma, max_iters=self.max_iters,
                  scale_x=self.scale_x, scale_y=self.scale_y,
                  projection=self.projection, stop_tol=self.stop_tol)
        kw.update(overrides)
        return DescentConfig(**kw)


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_times: list = field(default_factory=list)  # seconds


@dataclass
class RunConfig:
    model: RadDiffConfig = field(default_factory=RadDiffConfig)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    optimization: OptimizationConfig = field(default_factory=OptimizationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def _build(cls, data, where):
    """Construct a dataclass from a mapping, rejecting unknown keys."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}; "
                          f"allowed: {sorted(fields)}")
    nested = {"model": RadDiffConfig, "integration": IntegrationConfig,
              "optimization": OptimizationConfig, "output": OutputConfig,
              "perturbation": PerturbationConfig}
    kwargs = {}
    for name, value in data.items():
        sub = nested.get(name)
        if sub is not None and name in fields:
            kwargs[name] = _build(sub, value, f"{where}.{name}")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def load_config(path=None) -> RunConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    return _build(RunConfig, data, "config")


# ---------------------------------------------------------------------------
# CSV / summary helpers


def _fmt(v) -> str:
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float, np.floating)) else v
                        for v in row])


def _write_state_csv(path, x, E, T):
    # columns: x [cm], E [erg/cm^3], T [eV]
    _write_csv(path, ["x", "E", "T"], zip(x, E, T))


def _write_summary(path, payload):
    payload = {"schema_version": SUMMARY_SCHEMA_VERSION, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _history_rows(records):
    return [(r.iteration, r.C_E, r.C_T, r.grad_norm_E, r.grad_norm_T, r.wall_s)
            for r in records]


HISTORY_HEADER = ["iter", "C_E", "C_T", "grad_norm_E", "grad_norm_T", "wall_s"]


# ---------------------------------------------------------------------------
# Problem setup


def _perturbed_initial(problem, pert: PerturbationConfig) -> BlockVec:
    cfg = problem.config
    x = cfg.x_centers
    u = problem.initial_state.copy()
    u.y[:] = cfg.T_init + pert.amplitude * np.exp(-((x - pert.center) / pert.width) ** 2)
    u.x[:] = cfg.a * cfg.c * u.y ** 4
    return problem.apply_drive(u)


def _targets(problem, integration: IntegrationConfig, pert: PerturbationConfig):
    u0 = _perturbed_initial(problem, pert)
    traj = integrate_forward(problem.field, u0, (0.0, integration.t_f),
                             integration.step_config())
    return (traj.states[-1].x.copy(), traj.states[-1].y.copy()), u0


# ---------------------------------------------------------------------------
# Subcommands


def cmd_forward(config: RunConfig, out_dir) -> int:
    prob = marshak_problem(config.model)
    step = config.integration.step_config()
    t_f = config.integration.t_f
    try:
        traj = integrate_forward(prob.field, prob.initial_state, (0.0, t_f), step)
    except NewtonError as e:
        print(f"forward: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    x = config.model.x_centers
    written = []
    for t_snap in config.output.snapshot_times:
        n = int(round(t_snap / step.dt))
        if not (0 <= n < len(traj)) or abs(traj.times[n] - t_snap) > 1e-9 * max(t_f, step.dt):
            print(f"forward: snapshot time {t_snap!r} is not on the time grid",
                  file=sys.stderr)
            return EXIT_CONFIG
        name = f"snapshot_{n:06d}.csv"
        _write_state_csv(out_dir / name, x, traj.states[n].x, traj.states[n].y)
        written.append({"t": traj.times[n], "file": name})
    K = len(traj) - 1
    _write_summary(out_dir / "summary.json", {
        "command": "forward",
        "K": K,
        "t_f": t_f,
        "dt": step.dt,
        "snapshots": written,
        "newton": {
            "mean_iters": float(np.mean(traj.newton_iters)) if K else 0.0,
            "max_iters": int(np.max(traj.newton_iters)) if K else 0,
            "max_residual": float(np.max(traj.newton_residuals)) if K else 0.0,
        },
    })
    return EXIT_OK


def cmd_grad_check(config: RunConfig, out_dir, seed=0, n_directions=20) -> int:
    """Adjoint gradient vs central differences, plus conservation drift."""
    rng = np.random.default_rng(seed)
    cfg = config.model
    prob = marshak_problem(cfg)
    step = config.integration.step_config()
    t_f = config.integration.t_f
    span = (0.0, t_f)
    targets, u0_pert = _targets(prob, config.integration, config.optimization.perturbation)
    u0 = prob.initial_state
    try:
        xi0, _, _, _ = adjoint_gradient(prob, u0, span, step,
                                        IdentityPairing(), targets)
        # drift diagnostics need a non-stationary trajectory
        traj = integrate_forward(prob.field, u0_pert, span, step)
    except NewtonError as e:
        print(f"grad-check: solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER

    def cost(u):
        t = integrate_forward(prob.field, u, span, step)
        a, b, _ = terminal_cost(t.states[-1], targets[0], targets[1], cfg)
        return a + b

    free_idx = np.flatnonzero(np.concatenate([prob.free_mask, prob.free_mask]))
    picks = rng.choice(free_idx, size=min(n_directions, free_idx.size), replace=False)
    g = xi0.concat()
    base = u0.concat()
    mismatch = 0.0
    for j in picks:
        eps = 1e-6 * (1.0 + abs(base[j]))
        e = np.zeros_like(base)
        e[j] = eps
        fd = (cost(BlockVec.from_concat(base + e, cfg.N, cfg.N))
              - cost(BlockVec.from_concat(base - e, cfg.N, cfg.N))) / (2 * eps)
        denom = max(abs(fd), abs(g[j]), 1e-300)
        mismatch = max(mismatch, abs(g[j] - fd) / denom)

    # conservation drift of both adjoint schemes on the same trajectory
    pT = BlockVec(rng.standard_normal(cfg.N), rng.standard_normal(cfg.N))
    du0 = BlockVec(rng.standard_normal(cfg.N), rng.standard_normal(cfg.N))
    dus = propagate_variation(prob.field, traj, du0, step)
    drifts = {}
    for scheme in ("induced", "naive"):
        ps = integrate_adjoint(prob.field, traj, pT, step, scheme=scheme)
        drift = pairing_drift(ps, dus)
        drifts[scheme] = float(np.max(np.abs(drift)) / max(abs(ps[-1].dot(dus[-1])), 1e-300))

    ok = drifts["induced"] <= 1e-10 and mismatch <= 1e-4
    _write_summary(out_dir / "summary.json", {
        "command": "grad-check",
        "seed": int(seed),
        "directions": int(len(picks)),
        "max_relative_mismatch": mismatch,
        "drift_induced": drifts["induced"],
        "drift_naive": drifts["naive"],
        "passed": bool(ok),
    })
    print(f"grad-check: mismatch={mismatch:.3e} drift_induced={drifts['induced']:.3e} "
          f"drift_naive={drifts['naive']:.3e} -> {'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def _run_invert(config: RunConfig, descent: DescentConfig, out_dir):
    cfg = config.model
    prob = marshak_problem(cfg)
    step = config.integration.step_config()
    t_f = config.integration.t_f
    targets, u0_true = _targets(prob, config.integration, config.optimization.perturbation)
    res = run_inverse_problem(prob, targets, (0.0, t_f), step, descent)

    x = cfg.x_centers
    _write_csv(out_dir / "history.csv", HISTORY_HEADER, _history_rows(res.records))
    _write_state_csv(out_dir / "recon_initial.csv", x, res.E0, res.T0)
    _write_state_csv(out_dir / "true_initial.csv", x, u0_true.x, u0_true.y)
    unpert = integrate_forward(prob.field, prob.initial_state, (0.0, t_f), step)
    _write_csv(out_dir / "final_compare.csv",
               ["x", "E_unperturbed", "T_unperturbed", "E_observed", "T_observed",
                "E_reconstructed", "T_reconstructed"],
               zip(x, unpert.states[-1].x, unpert.states[-1].y,
                   targets[0], targets[1], res.final_state.x, res.final_state.y))
    first = res.records[0] if res.records else None
    last = res.records[-1] if res.records else None
    _write_summary(out_dir / "summary.json", {
        "command": "invert",
        "outcome": res.outcome,
        "diverged_at": res.diverged_at,
        "iterations": len(res.records),
        "scale_x": descent.scale_x,
        "scale_y": descent.scale_y,
        "projection": descent.projection,
        "gamma": descent.gamma,
        "initial_cost": (first.C_E + first.C_T) if first else None,
        "final_cost": (last.C_E + last.C_T) if last else None,
    })
    return res


def cmd_invert(config: RunConfig, out_dir, strict=False) -> int:
    descent = config.optimization.descent_config()
    res = _run_invert(config, descent, out_dir)
    print(f"invert: outcome={res.outcome} iterations={len(res.records)}")
    if res.outcome == "diverged" and strict:
        return EXIT_DIVERGED
    return EXIT_OK


def _sweep_entry(args):
    config_data, entry, out_sub = args
    config = _build(RunConfig, config_data, "config")
    descent = config.optimization.descent_config(
        scale_x=float(entry["scale_x"]), scale_y=float(entry["scale_y"]))
    sub = Path(out_sub)
    sub.mkdir(parents=True, exist_ok=True)
    res = _run_invert(config, descent, sub)
    first = res.records[0] if res.records else None
    last = res.records[-1] if res.records else None
    return {
        "scale_x": float(entry["scale_x"]),
        "scale_y": float(entry["scale_y"]),
        "outcome": res.outcome,
        "iterations": len(res.records),
        "initial_cost": (first.C_E + first.C_T) if first else float("nan"),
        "final_cost": (last.C_E + last.C_T) if last else float("nan"),
        "directory": sub.name,
    }


def _scale_dirname(entry) -> str:
    return f"scale_x{float(entry['scale_x']):.3g}_y{float(entry['scale_y']):.3g}"


def cmd_sweep(config: RunConfig, out_dir, workers=1) -> int:
    entries = config.optimization.sweep
    if not entries:
        print("sweep: empty scale list", file=sys.stderr)
        return EXIT_CONFIG
    for e in entries:
        if not isinstance(e, dict) or set(e) != {"scale_x", "scale_y"}:
            print(f"sweep: each entry needs exactly scale_x and scale_y, got {e!r}",
                  file=sys.stderr)
            return EXIT_CONFIG
    config_data = dataclasses.asdict(config)
    jobs = [(config_data, e, str(out_dir / _scale_dirname(e))) for e in entries]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_entry, jobs))
    else:
        results = [_sweep_entry(j) for j in jobs]
    _write_csv(out_dir / "sweep.csv",
               ["scale_x", "scale_y", "outcome", "iterations",
                "initial_cost", "final_cost", "directory"],
               [(r["scale_x"], r["scale_y"], r["outcome"], r["iterations"],
                 r["initial_cost"], r["final_cost"], r["directory"]) for r in results])
    _write_summary(out_dir / "summary.json", {"command": "sweep", "entries": results})
    for r in results:
        print(f"sweep: scale_x={r['scale_x']:.3g} scale_y={r['scale_y']:.3g} "
              f"-> {r['outcome']} ({r['iterations']} iterations)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def _parser():
    p = argparse.ArgumentParser(prog="adjprec",
                                description="Adjoint-preconditioned radiation "
                                            "diffusion experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("forward", "grad-check", "invert", "sweep"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="YAML configuration file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--scale", type=float, default=None,
                        help="override optimization.scale_y")
        sp.add_argument("--projection", default=None,
                        choices=["orthogonal", "e-coordinate", "none"])
        sp.add_argument("--strict", action="store_true",
                        help="exit nonzero on diverged inversion")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.scale is not None:
            if args.scale <= 0:
                raise ConfigError("--scale must be positive")
            config.optimization.scale_y = args.scale
        if args.projection is not None:
            config.optimization.projection = args.projection.replace("-", "_")
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
    except (ConfigError, OSError, yaml.YAMLError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out if args.out is not None else config.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "forward":
            return cmd_forward(config, out_dir)
        if args.command == "grad-check":
            return cmd_grad_check(config, out_dir, seed=args.seed)
        if args.command == "invert":
            return cmd_invert(config, out_dir, strict=args.strict)
        if args.command == "sweep":
            return cmd_sweep(config, out_dir, workers=args.workers)
    except SingularOperatorError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_SOLVER
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
