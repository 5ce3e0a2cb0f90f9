"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
Tolerances are fixed here, not calibrated at runtime; Monte Carlo seeds are
frozen so the suite is deterministic end to end. Full suite runs in a few
minutes (criterion 7's fine-step exit Monte Carlo dominates).
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import stats

import powerlaw_sde as pl
from powerlaw_sde.cli import main as cli_main
from powerlaw_sde.stationary import kappa_c, power_law_normalization
from powerlaw_sde.rng import stream_generator
from conftest import random_decoupled


def report(num, label, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num:>2} [{label}]: {status} -- {detail}")
    assert ok, f"criterion {num} ({label}): {detail}"


def unit_params(eta):
    return pl.DecoupledParams(h=[1.0], sigma=[1.0], rho=[1.0], eta=eta)


def student_t_cdf(params):
    kappa, c = kappa_c(params, 0)
    nu = -2.0 * kappa - 1.0
    return lambda x: stats.t.cdf(np.asarray(x, dtype=float) * math.sqrt(c * nu), df=nu)


def test_criterion_01_stationary_law_ks():
    t0 = time.time()
    params = unit_params(0.1)
    cfg = pl.SimConfig(step=1e-3, horizon=2000.0, n_paths=32, base_seed=101,
                       x0=np.zeros(1), record_stride=100)
    batch = pl.simulate_batch(params, cfg)
    retained = batch.paths[:, batch.times >= 1000.0, 0].ravel()  # 50% burn-in
    ks = pl.ks_statistic(retained, student_t_cdf(params))
    elapsed = time.time() - t0
    ok = ks < 0.02 and retained.size >= 100_000 and elapsed <= 120.0
    report(1, "stationary power law", ok,
           f"KS={ks:.5f} (<0.02), retained={retained.size} (>=1e5), runtime={elapsed:.1f}s (<=120s)")


def test_criterion_02_normalization_oracle():
    worst = 0.0
    for kappa in (-1.2, -2.0, -5.0, -11.0):
        zq = power_law_normalization(kappa, 1.0, "quadrature")
        zc = power_law_normalization(kappa, 1.0, "closed_form")
        worst = max(worst, abs(zq - zc) / zc)
    err_pi = max(abs(power_law_normalization(-1.0, 1.0, m) - math.pi)
                 for m in ("closed_form", "quadrature"))
    err_half = max(abs(power_law_normalization(-2.0, 1.0, m) - math.pi / 2)
                   for m in ("closed_form", "quadrature"))
    ok = worst < 1e-8 and err_pi < 1e-10 and err_half < 1e-10
    report(2, "normalization oracle", ok,
           f"max method gap={worst:.2e} (<1e-8), |Z(-1)-pi|={err_pi:.2e}, "
           f"|Z(-2)-pi/2|={err_half:.2e} (<1e-10)")


def test_criterion_03_fokker_planck_residual():
    params = unit_params(0.1)
    x = np.linspace(-5.0, 5.0, 2001)
    good = pl.fp_residual(params, 0, x, pl.density(params, 0, x))
    wrong = pl.fp_residual(params, 0, x, np.exp(-x * x / 2) / math.sqrt(2 * math.pi))
    ok = good < 1e-6 and wrong > 1e-2
    report(3, "Fokker-Planck residual", ok,
           f"analytic={good:.2e} (<1e-6), wrong-density={wrong:.2e} (>1e-2)")


def test_criterion_04_fluctuation_dissipation():
    rng = np.random.default_rng(4004)
    worst = 0.0
    for _ in range(100):
        p = random_decoupled(rng)
        kappa = pl.tail_index(p)
        worst = max(worst, float(np.max(np.abs(p.eta * p.rho * (1.0 + kappa) + p.h) / p.h)))
    ok = worst < 1e-12
    report(4, "fluctuation-dissipation identity", ok,
           f"max relative defect over 100 params = {worst:.2e} (<1e-12)")


def test_criterion_05_moment_explosion():
    params = unit_params(1.0)  # kappa = -2: variance finite, 4th moment infinite
    kappa = pl.tail_index(params)[0]
    assert pl.moment_finite(kappa, 2) and not pl.moment_finite(kappa, 4)
    samples = pl.sample_stationary(params, 1_600_000, seed=99)[:, 0]
    sizes = [100_000 * 2**k for k in range(5)]  # 4 doublings, nested prefixes
    m2 = [float(np.mean(samples[:n] ** 2)) for n in sizes]
    m4 = [float(np.mean(samples[:n] ** 4)) for n in sizes]
    ch2 = max(abs(b - a) / a for a, b in zip(m2, m2[1:]))
    ch4 = max(abs(b - a) / a for a, b in zip(m4, m4[1:]))
    ok = ch2 < 0.05 and ch4 > 0.25
    report(5, "moment explosion", ok,
           f"2nd moment max step change={ch2:.3f} (<0.05 stabilizes), "
           f"4th moment max step change={ch4:.3f} (>0.25 no convergence)")


def test_criterion_06_coupling_contraction():
    params = unit_params(0.1)
    c_s = pl.contraction_constants(params).c_s
    assert c_s == pytest.approx(-0.9)
    cfg = pl.SimConfig(step=1e-3, horizon=2.0, n_paths=10_000, base_seed=606,
                       x0=np.zeros(1), record_stride=100)
    batch = pl.couple_paths(params, cfg, 1.0, -1.0)
    fit = pl.contraction_fit(batch)
    mean_r = batch.r_sq.mean(axis=0)
    envelope = 4.0 * np.exp((c_s + 0.1) * batch.times)  # r(0) = |1-(-1)|^2 = 4
    env_ok = bool(np.all(mean_r <= envelope))
    ok = fit.slope <= c_s + 0.1 and env_ok
    report(6, "ergodicity/contraction", ok,
           f"slope={fit.slope:.3f} (<= {c_s + 0.1}), envelope at all "
           f"{batch.times.size} times: {env_ok}")


def test_criterion_07_exit_three_way_agreement():
    t0 = time.time()
    params = unit_params(0.1)
    problem = pl.ExitProblem(params=params, x0=[0.0], step=2.5e-4, n_paths=1000,
                             seed=777, a=-1.0, b=1.0)
    quad = pl.exit_time_quadrature(problem)
    ode = pl.exit_time_ode_oracle(problem)
    mc, _ = pl.exit_time_mc(problem)
    from powerlaw_sde.exit_times import ode_richardson_ratio
    ratio = ode_richardson_ratio(problem, n_coarse=1001)
    mc_tol = max(2.0 * (mc.ci_high - mc.mean), 0.05 * quad.mean)
    mc_ok = abs(mc.mean - quad.mean) <= mc_tol
    ode_ok = abs(quad.mean - ode.mean) / quad.mean < 1e-6
    ratio_ok = 3.2 <= ratio <= 4.8
    ok = mc_ok and ode_ok and ratio_ok
    report(7, "exit-time three-way agreement", ok,
           f"mc={mc.mean:.1f} vs quad={quad.mean:.2f} (|diff|={abs(mc.mean - quad.mean):.1f}"
           f" <= {mc_tol:.1f}), |quad-ode|/quad={abs(quad.mean - ode.mean) / quad.mean:.2e}"
           f" (<1e-6), Richardson={ratio:.3f} (in [3.2,4.8]), runtime={time.time() - t0:.0f}s")


def test_criterion_08_asymptotic_order():
    params = unit_params(0.1)  # eta overridden per sweep row
    res1 = pl.asymptotic_sweep(params, 1.0, [0.4, 0.2, 0.1],
                               step=0.005, n_paths=1000, seed=808)
    res2 = pl.asymptotic_sweep(params, 2.0, [0.8, 0.4, 0.2],
                               step=0.005, n_paths=1000, seed=809)
    spread_ok = res1.stabilization_spread < 0.30
    barrier_ok = res2.fitted_barrier > res1.fitted_barrier
    ok = spread_ok and barrier_ok and not any(r.flagged for r in res1.rows)
    ys = [f"{row.eta}:{row.eta_ln_mean:.3f}" for row in res1.rows]
    report(8, "asymptotic order (eta->0)", ok,
           f"eta*ln(E tau)={{{', '.join(ys)}}}, spread={res1.stabilization_spread:.3f} "
           f"(<0.30), fitted barrier {res1.fitted_barrier:.3f} -> {res2.fitted_barrier:.3f} "
           f"when r doubles (increases: {barrier_ok})")


def test_criterion_09_discretization_sandwich():
    t0 = time.time()
    params = unit_params(0.01)  # eta = eps = 0.01
    problem = pl.ExitProblem(params=params, x0=[0.0], step=0.01, n_paths=10_000,
                             seed=909, radius=1.0, max_steps=1000)
    rep = pl.sandwich_check(problem, k_steps=1000, delta=0.2, dbar=0.2,
                            osc_intervals=50_000, gap_paths=10_000)
    # oscillation probability decays ~ eps (measured in the tail-start
    # regime kappa = -1.5 where the power law makes the slope identifiable)
    osc_params = unit_params(2.0)
    sweep = pl.oscillation_sweep(osc_params, [0.04, 0.02, 0.01, 0.005],
                                 dbar=2.0, n_intervals=100_000, seed=911)
    slope_ok = 0.6 <= sweep.slope <= 1.4
    # closed-form D bounds the MC conditional sup fourth moment
    bound = pl.fourth_moment_bound(params, b=1.0, delta=0.2, eps=0.01).value
    worst = _conditional_sup_fourth_moment(params, b=1.0, delta=0.2, eps=0.01,
                                           n_paths=10_000, k_intervals=50, seed=912)
    d_ok = worst <= bound
    ok = rep.holds and slope_ok and d_ok
    report(9, "discretization sandwich", ok,
           f"holds={rep.holds} (p_disc={rep.p_discrete:.4f}, corr_w2={rep.correction_w2:.1e}, "
           f"corr_osc={rep.correction_osc:.1e}); oscillation slope={sweep.slope:.3f} (1±0.4); "
           f"sup-4th-moment bound D={bound:.4f} >= MC estimate {worst:.2e}; runtime={time.time() - t0:.0f}s")


def _conditional_sup_fourth_moment(params, b, delta, eps, n_paths, k_intervals, seed):
    gen = stream_generator(seed, 0)
    substeps = 64
    dt = eps / substeps
    sq = math.sqrt(dt)
    h = float(params.h[0])
    es = params.eta * float(params.sigma[0])
    er = params.eta * float(params.rho[0])
    v = np.zeros(n_paths)
    inside = np.ones(n_paths, dtype=bool)
    worst = 0.0
    for _ in range(k_intervals):
        peak = np.abs(v)
        for _ in range(substeps):
            v = v * (1.0 - dt * h) + sq * np.sqrt(es + er * v * v) * gen.standard_normal(n_paths)
            np.maximum(peak, np.abs(v), out=peak)
        inside &= np.abs(v) <= b + delta
        if inside.any():
            worst = max(worst, float(np.mean(peak[inside] ** 4)))
    return worst


def test_criterion_10_w2_discretization_scaling():
    params = unit_params(0.5)
    eps_list = [0.04, 0.02, 0.01, 0.005]  # 3 octaves at fixed T = 1
    gaps = [pl.discretization_gap(params, e, 1.0, 20_000, seed=99)["coupled_mean_sq"]
            for e in eps_list]
    slope = float(np.polyfit(np.log(eps_list), np.log(gaps), 1)[0])
    halves = all(b < a for a, b in zip(gaps, gaps[1:]))
    ok = 0.5 <= slope <= 1.5 and halves
    report(10, "discretization W2 scaling", ok,
           f"coupled W2^2 gaps={['%.2e' % g for g in gaps]}, log-log slope={slope:.3f} "
           f"(in [0.5,1.5]), monotone: {halves}")


def test_criterion_11_sgd_covariance():
    cfg = pl.SgdLabConfig(n_samples=10_000, batch=16, noise_std=0.1,
                          w_grid=tuple(1.0 + 0.25 * k for k in range(-4, 5)),
                          n_draws=400, seed=2024, w_star=1.0)
    rep = pl.sgd_noise_experiment(cfg)
    full = pl.sgd_noise_experiment(
        pl.SgdLabConfig(n_samples=2000, batch=2000, noise_std=0.1,
                        w_grid=(0.0, 1.0, 2.0), n_draws=150, seed=2024, w_star=1.0))
    full_zero = bool(np.all(full.variances == 0.0))
    ok = rep.r_squared >= 0.95 and full_zero
    report(11, "SGD gradient-noise covariance", ok,
           f"quadratic fit R^2={rep.r_squared:.4f} (>=0.95), full-batch variance "
           f"exactly zero: {full_zero}")


def test_criterion_12_determinism(tmp_path):
    def cli_config(name, experiment, model=None, sim=None):
        doc = {
            "schema_version": 1,
            "model": model or {"type": "decoupled", "h": [1.0], "sigma": [1.0],
                               "rho": [1.0], "eta": 1.0},
            "simulation": {"step": 0.002, "horizon": 2.0, "n_paths": 50,
                           "base_seed": 12, "x0": [0.0], "record_stride": 10,
                           **(sim or {})},
            "experiment": experiment,
            "output": {"directory": "PLACEHOLDER", "formats": ["csv", "json"]},
        }
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(doc))
        return str(path)

    configs = {
        "stationary": cli_config("stationary", {"name": "stationary"}),
        "simulate": cli_config("simulate", {"name": "simulate", "scheme": "discrete-chain"}),
        "exit": cli_config("exit", {"name": "exit", "domain": {"a": -1.0, "b": 1.0},
                                    "methods": ["mc", "quadrature", "ode"],
                                    "n_grid": 2001}),
        "couple": cli_config("couple", {"name": "couple", "x0": 1.0, "y0": -1.0}),
        "sweep": cli_config("sweep", {"name": "sweep", "radius": 1.0,
                                      "eta_list": [0.8, 0.4, 0.2]},
                            sim={"n_paths": 120, "step": 0.005}),
        "sandwich": cli_config("sandwich", {"name": "sandwich", "radius": 1.0,
                                            "K": 50, "delta": 0.2, "dbar": 0.2,
                                            "osc_intervals": 2000, "gap_paths": 500},
                               model={"type": "decoupled", "h": [1.0], "sigma": [1.0],
                                      "rho": [1.0], "eta": 0.01},
                               sim={"step": 0.01, "n_paths": 300}),
        "sgdlab": cli_config("sgdlab", {"name": "sgdlab", "n_samples": 1000,
                                        "batch": 8, "n_draws": 150}),
    }
    mismatches = []
    for name, cfg_path in configs.items():
        out_dir = tmp_path / f"{name}_out"
        outs = []
        for _run in (1, 2):  # identical resolved config, same directory
            code = cli_main(["run", cfg_path, "--out", str(out_dir)])
            assert code == 0, f"{name} run failed"
            outs.append({p.name: p.read_bytes() for p in out_dir.iterdir()})
        if outs[0] != outs[1]:
            mismatches.append(name)
    ok = not mismatches
    report(12, "determinism", ok,
           f"{len(configs)} experiment types rerun byte-identically"
           + (f"; mismatches: {mismatches}" if mismatches else ""))
