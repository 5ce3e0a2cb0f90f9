"""Experiment runners: each maps a resolved config to artifact file contents.

Runners are pure (config in, {filename: text} out) so the CLI can write
everything atomically and reruns stay byte-identical; floats are serialized
with shortest round-trip repr throughout.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict

import numpy as np

from . import exit_times as ex
from . import metrics, stationary
from .config import ConfigError, ResolvedConfig
from .errors import ParameterError
from .params import DecoupledParams, ergodicity_check, contraction_constants
from .sgd_noise import SgdLabConfig, sgd_noise_experiment
from .simulate import simulate_batch, simulate_discrete_chain, couple_paths, step_size_assumption


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(payload: dict) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"


def _csv(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(
            repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
            for v in row
        ))
    return "\n".join(lines) + "\n"


def _need_decoupled(cfg: ResolvedConfig) -> DecoupledParams:
    if not isinstance(cfg.params, DecoupledParams):
        raise ConfigError("this experiment requires model.type = 'decoupled'")
    return cfg.params


def run_simulate(cfg: ResolvedConfig) -> dict[str, str]:
    opts = cfg.experiment
    scheme = opts.get("scheme", "continuous-EM")
    if scheme == "continuous-EM":
        batch = simulate_batch(cfg.params, cfg.sim)
    elif scheme == "discrete-chain":
        batch = simulate_discrete_chain(_need_decoupled(cfg), cfg.sim,
                                        literal_eps_noise=bool(opts.get("literal_eps_noise", False)))
    elif scheme == "frozen-interpolation":
        batch = simulate_discrete_chain(_need_decoupled(cfg), cfg.sim,
                                        substeps=int(opts.get("substeps", 8)),
                                        literal_eps_noise=bool(opts.get("literal_eps_noise", False)))
    else:
        raise ConfigError(f"experiment.scheme unknown: {scheme!r}")
    buf = io.StringIO()
    steps = batch._steps()
    d = batch.paths.shape[2]
    buf.write("path,step,time," + ",".join(f"coord{c}" for c in range(d)) + "\n")
    for p in range(batch.paths.shape[0]):
        for r in range(batch.times.size):
            coords = ",".join(repr(float(v)) for v in batch.paths[p, r])
            buf.write(f"{p},{int(steps[r])},{float(batch.times[r])!r},{coords}\n")
    return {
        "trajectories.csv": buf.getvalue(),
        "metadata.json": _dump_json(batch.metadata_dict()),
    }


def run_stationary(cfg: ResolvedConfig) -> dict[str, str]:
    params = _need_decoupled(cfg)
    opts = cfg.experiment
    coord = int(opts.get("coordinate", 0))
    n_points = int(opts.get("n_points", 8001))
    orders = [int(k) for k in opts.get("moments", [0, 2, 4, 6])]
    table = stationary.DensityTable.from_params(params, coord, n_points=n_points)
    rows = zip(table.grid, table.pdf, table.cdf)
    report = {
        "coordinate": coord,
        "kind": table.kind,
        "kappa": table.kappa,
        "c": table.c,
        "normalization_defect": table.normalization_defect(),
    }
    if table.kind == "power-law":
        report["z_quadrature"] = stationary.normalizing_constant(params, coord, "quadrature")
        report["z_closed_form"] = stationary.normalizing_constant(params, coord, "closed_form")
    moments = []
    for k in orders:
        val = stationary.stationary_moment(params, coord, k)
        moments.append({"order": k, "finite": math.isfinite(val),
                        "value": val if math.isfinite(val) else None})
    report["moments"] = moments
    return {
        "density.csv": _csv("x,pdf,cdf", rows),
        "report.json": _dump_json(report),
    }


def run_exit(cfg: ResolvedConfig) -> dict[str, str]:
    params = _need_decoupled(cfg)
    opts = cfg.experiment
    domain = opts.get("domain", {})
    problem = ex.ExitProblem(
        params=params,
        x0=np.asarray(cfg.sim.x0, dtype=float),
        step=cfg.sim.step,
        n_paths=cfg.sim.n_paths,
        seed=cfg.sim.base_seed,
        a=domain.get("a"),
        b=domain.get("b"),
        radius=domain.get("radius"),
        max_steps=opts.get("max_steps"),
    )
    methods = opts.get("methods", ["mc", "quadrature", "ode"] if params.dim == 1 else ["mc"])
    if params.dim == 1:
        dom = f"[{problem.a};{problem.b}]"
    else:
        dom = f"ball:{problem.radius}"
    rows = []
    report: dict = {"domain": dom, "estimates": {}}
    for method in methods:
        if method == "mc":
            est, _ = ex.exit_time_mc(problem, scheme=opts.get("scheme", "continuous-EM"))
        elif method == "quadrature":
            est = ex.exit_time_quadrature(problem)
        elif method == "ode":
            est = ex.exit_time_ode_oracle(problem, n_grid=int(opts.get("n_grid", 16385)))
        else:
            raise ConfigError(f"experiment.methods contains unknown method {method!r}")
        rows.append(est.csv_row(params.eta, cfg.sim.step, dom).split(","))
        report["estimates"][method] = asdict(est)
    return {
        "exit.csv": _csv(ex.EXIT_CSV_HEADER, rows),
        "report.json": _dump_json(report),
    }


def run_couple(cfg: ResolvedConfig) -> dict[str, str]:
    opts = cfg.experiment
    x0 = opts.get("x0", 1.0)
    y0 = opts.get("y0", -1.0)
    batch = couple_paths(cfg.params, cfg.sim, x0, y0)
    mean_r = batch.r_sq.mean(axis=0)
    consts = contraction_constants(cfg.params)
    report = {
        "constants": asdict(consts),
        "x0": x0,
        "y0": y0,
    }
    try:
        fit = metrics.contraction_fit(batch)
        report["fit"] = asdict(fit)
    except ParameterError as e:
        report["fit"] = {"error": str(e)}
    rows = zip(batch.times, mean_r)
    return {
        "coupling.csv": _csv("time,mean_r_sq", rows),
        "report.json": _dump_json(report),
    }


def run_sandwich(cfg: ResolvedConfig) -> dict[str, str]:
    params = _need_decoupled(cfg)
    opts = cfg.experiment
    problem = ex.ExitProblem(
        params=params,
        x0=np.asarray(cfg.sim.x0, dtype=float),
        step=cfg.sim.step,
        n_paths=cfg.sim.n_paths,
        seed=cfg.sim.base_seed,
        radius=float(opts.get("radius", 1.0)),
        max_steps=int(opts["K"]) if "K" in opts else None,
    )
    report = ex.sandwich_check(
        problem,
        k_steps=int(opts.get("K", 1000)),
        delta=float(opts.get("delta", 0.2)),
        dbar=float(opts.get("dbar", 0.2)),
        fine_refine=int(opts.get("fine_refine", 64)),
        osc_intervals=int(opts.get("osc_intervals", 50_000)),
        gap_paths=int(opts.get("gap_paths", 10_000)),
    )
    return {"sandwich.json": _dump_json(asdict(report))}


def run_sweep(cfg: ResolvedConfig) -> dict[str, str]:
    params = _need_decoupled(cfg)
    opts = cfg.experiment
    if "eta_list" not in opts:
        raise ConfigError("experiment.eta_list is required for sweep")
    result = ex.asymptotic_sweep(
        params,
        r=float(opts.get("radius", 1.0)),
        eta_list=[float(e) for e in opts["eta_list"]],
        step=cfg.sim.step,
        n_paths=cfg.sim.n_paths,
        seed=cfg.sim.base_seed,
        max_steps=opts.get("max_steps"),
    )
    rows = []
    for row in result.rows:
        est = row.estimate
        rows.append([
            row.eta, cfg.sim.step, est.mean, est.ci_low, est.ci_high,
            est.n_exited, est.n_censored, row.eta_ln_mean,
            int(row.flagged), row.flag_reason or "-",
        ])
    report = {
        "barrier": result.barrier,
        "barrier_literal": result.barrier_literal,
        "prefactor": result.prefactor,
        "fitted_barrier": result.fitted_barrier,
        "stabilization_spread": result.stabilization_spread,
    }
    header = "eta,epsilon,mean,ci_low,ci_high,n_exited,n_censored,eta_ln_mean,flagged,flag_reason"
    return {"sweep.csv": _csv(header, rows), "report.json": _dump_json(report)}


def run_sgdlab(cfg: ResolvedConfig) -> dict[str, str]:
    opts = cfg.experiment
    try:
        lab = SgdLabConfig(
            n_samples=int(opts.get("n_samples", 10_000)),
            batch=int(opts.get("batch", 16)),
            noise_std=float(opts.get("noise_std", 0.1)),
            w_grid=tuple(opts.get("w_grid", [1.0 + 0.25 * k for k in range(-4, 5)])),
            n_draws=int(opts.get("n_draws", 400)),
            seed=cfg.sim.base_seed,
            w_star=float(opts.get("w_star", 1.0)),
        )
    except ParameterError as e:
        raise ConfigError(f"experiment.{e}")
    rep = sgd_noise_experiment(lab)
    rows = zip(rep.w_grid, rep.variances, rep.variance_se)
    report = {
        "a": rep.a, "b": rep.b, "r_squared": rep.r_squared, "status": rep.status,
        "w_star": lab.w_star, "batch": lab.batch, "n_samples": lab.n_samples,
        "n_draws": lab.n_draws, "noise_std": lab.noise_std,
    }
    return {
        "variance.csv": _csv("w,variance,se", rows),
        "report.json": _dump_json(report),
    }


RUNNERS = {
    "simulate": run_simulate,
    "stationary": run_stationary,
    "exit": run_exit,
    "couple": run_couple,
    "sandwich": run_sandwich,
    "sweep": run_sweep,
    "sgdlab": run_sgdlab,
}


def advisory_checks(cfg: ResolvedConfig) -> list[str]:
    """Non-fatal checks reported by `validate`: the ergodicity threshold and,
    for discretization experiments, the step-size assumption."""
    notes = []
    ok, threshold = ergodicity_check(cfg.params)
    if ok:
        notes.append(f"ergodicity threshold satisfied ({cfg.params.eta!r} < {threshold!r})")
    else:
        notes.append(
            f"warning: eta {cfg.params.eta!r} >= ergodicity threshold {threshold!r}; "
            "unique stationary distribution not certified"
        )
    if isinstance(cfg.params, DecoupledParams):
        check = step_size_assumption(cfg.params, cfg.sim.step)
        if not check["holds"]:
            notes.append(
                "warning: assumption eta*rho <= h (and rho <= h <= 1/eps) violated; "
                "discretization error bounds do not apply"
            )
    return notes


def run_experiment(cfg: ResolvedConfig) -> dict[str, str]:
    files = RUNNERS[cfg.experiment["name"]](cfg)
    files["resolved_config.json"] = _dump_json(cfg.echo_dict())
    return files
