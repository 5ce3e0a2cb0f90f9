import math

import numpy as np
import pytest

from powerlaw_sde import (
    DecoupledParams,
    FullParams,
    SimConfig,
    SimulationError,
    couple_paths,
    discretization_gap,
    simulate_batch,
    simulate_discrete_chain,
    stationary_moment,
)
from powerlaw_sde import simulate as sim_mod
from powerlaw_sde.simulate import em_step, step_size_assumption
from conftest import ou_exact_terminal


def dec1(h=1.0, sigma=1.0, rho=1.0, eta=0.1):
    return DecoupledParams(h=[h], sigma=[sigma], rho=[rho], eta=eta)


class TestEmStep:
    def test_drift_only_step(self):
        # forced xi = 0: z1 = z0 + eps*(-h z0)
        p = dec1(eta=0.1)
        z1 = em_step(p, np.array([1.0]), np.array([0.0]), eps=0.01)
        assert z1 == pytest.approx([0.99])

    def test_noise_scaling(self):
        p = dec1(eta=0.1)
        z = em_step(p, np.array([0.0]), np.array([1.0]), eps=0.01)
        assert z == pytest.approx([math.sqrt(0.01 * 0.1)])

    def test_full_matches_decoupled_on_diagonal(self):
        pf = FullParams(H=np.diag([1.0, 2.0]), sigma_g=np.eye(2),
                        sigma_h=np.diag([1.0, 1.0]), w_star=np.zeros(2), eta=0.1)
        pd = DecoupledParams(h=[1.0, 2.0], sigma=[1.0, 1.0], rho=[1.0, 1.0], eta=0.1)
        v = np.array([0.5, -0.25])
        xi = np.array([0.3, -0.7])
        zf = em_step(pf, v, xi, eps=0.01)
        # full diffusion couples coordinates through v^T Sigma_h v
        quad = float(v @ v)
        zd_manual = v * (1 - 0.01 * pd.h) + math.sqrt(0.01 * 0.1 * (1 + quad)) * xi
        assert zf == pytest.approx(zd_manual)


class TestOuVariance:
    def test_stationary_variance_three_se(self):
        p = dec1(rho=0.0, eta=0.01)
        cfg = SimConfig(step=0.01, horizon=200.0, n_paths=64, base_seed=7,
                        x0=np.zeros(1), record_stride=10)
        batch = simulate_batch(p, cfg)
        tail = batch.paths[:, batch.times >= 100.0, 0]
        per_path = tail.var(axis=1)
        se = per_path.std(ddof=1) / math.sqrt(per_path.size)
        assert abs(tail.var() - 0.005) < 3 * se


class TestDeterminism:
    def test_bitwise_rerun(self):
        p = dec1()
        cfg = SimConfig(step=0.01, horizon=2.0, n_paths=6, base_seed=11,
                        x0=np.zeros(1))
        a = simulate_batch(p, cfg)
        b = simulate_batch(p, cfg)
        assert np.array_equal(a.paths, b.paths)

    def test_paths_independent_of_batch_size(self):
        p = dec1()
        big = SimConfig(step=0.01, horizon=2.0, n_paths=16, base_seed=11, x0=np.zeros(1))
        small = SimConfig(step=0.01, horizon=2.0, n_paths=4, base_seed=11, x0=np.zeros(1))
        assert np.array_equal(simulate_batch(p, big).paths[:4],
                              simulate_batch(p, small).paths)

    def test_bitwise_invariant_to_chunking(self):
        # scheduling/chunking cannot change results: shrink buffers and compare
        p = dec1()
        cfg = SimConfig(step=0.01, horizon=3.0, n_paths=5, base_seed=2,
                        x0=np.array([0.4]), record_stride=3)
        ref = simulate_batch(p, cfg)
        orig = sim_mod._NOISE_BUDGET
        try:
            sim_mod._NOISE_BUDGET = 64
            tiny = simulate_batch(p, cfg)
        finally:
            sim_mod._NOISE_BUDGET = orig
        assert np.array_equal(ref.paths, tiny.paths)


class TestStationaryConsistency:
    def test_tail_variance_matches_quadrature_moment(self):
        # d=1 power-law long run vs the stationary_moment oracle (5%)
        p = dec1(eta=0.1)
        cfg = SimConfig(step=1e-3, horizon=2000.0, n_paths=8, base_seed=5,
                        x0=np.zeros(1), record_stride=100)
        batch = simulate_batch(p, cfg)
        tail = batch.paths[:, batch.times >= 1000.0, 0]
        target = stationary_moment(p, 0, 2)
        assert abs(tail.var() - target) / target < 0.05


class TestDiscreteChain:
    def test_grid_values_bitwise_equal_interpolation(self):
        p = dec1()
        cfg = SimConfig(step=0.05, horizon=1.0, n_paths=5, base_seed=3,
                        x0=np.array([0.7]))
        chain = simulate_discrete_chain(p, cfg)
        interp = simulate_discrete_chain(p, cfg, substeps=8)
        assert interp.scheme == "frozen-interpolation"
        assert np.array_equal(chain.paths, interp.paths[:, ::8, :])

    def test_frozen_coefficients_give_linear_interior_drift(self):
        # diffusion ~ 0: interior records of one interval are exactly linear
        p = DecoupledParams(h=[1.0], sigma=[1e-30], rho=[0.0], eta=0.1)
        cfg = SimConfig(step=0.1, horizon=0.3, n_paths=1, base_seed=1,
                        x0=np.array([1.0]))
        interp = simulate_discrete_chain(p, cfg, substeps=5)
        one_interval = interp.paths[0, :6, 0]
        assert np.max(np.abs(np.diff(one_interval, 2))) < 1e-12

    def test_literal_eps_noise_differs(self):
        p = dec1()
        cfg = SimConfig(step=0.05, horizon=1.0, n_paths=3, base_seed=3,
                        x0=np.array([0.7]))
        a = simulate_discrete_chain(p, cfg)
        b = simulate_discrete_chain(p, cfg, literal_eps_noise=True)
        assert not np.array_equal(a.paths, b.paths)
        assert b.metadata["noise_scaling"] == "eps"

    def test_assumption_reported_not_fatal(self):
        p = dec1(eta=2.0)  # eta*rho > h violates the advisory assumption
        cfg = SimConfig(step=0.05, horizon=0.5, n_paths=2, base_seed=1, x0=np.zeros(1))
        batch = simulate_discrete_chain(p, cfg)
        assert batch.metadata["assumption_check"]["holds"] is False
        assert step_size_assumption(p, 0.05)["holds"] is False

    def test_w2_shrinks_with_eps(self):
        # light discretization-gap check (full sweep in acceptance): halving eps shrinks
        # the coupled gap
        p = dec1(eta=0.5)
        g1 = discretization_gap(p, 0.04, 1.0, 4000, seed=9)
        g2 = discretization_gap(p, 0.02, 1.0, 4000, seed=9)
        assert g2["coupled_mean_sq"] < g1["coupled_mean_sq"]
        assert g2["w2_sq_sorted"] < g1["w2_sq_sorted"]


class TestCoupling:
    def test_equal_starts_identical(self):
        p = dec1()
        cfg = SimConfig(step=0.01, horizon=1.0, n_paths=4, base_seed=11, x0=np.zeros(1))
        batch = couple_paths(p, cfg, 0.5, 0.5)
        assert np.max(batch.r_sq) == 0.0

    def test_contraction_slope(self):
        p = dec1(eta=0.1)
        cfg = SimConfig(step=1e-3, horizon=2.0, n_paths=2000, base_seed=13,
                        x0=np.zeros(1), record_stride=100)
        batch = couple_paths(p, cfg, 1.0, -1.0)
        mean_r = batch.r_sq.mean(axis=0)
        slope = np.polyfit(batch.times, np.log(mean_r), 1)[0]
        assert slope <= -0.8  # c_s + 0.1 with c_s = -0.9

    def test_full_d2_below_threshold_contracts(self):
        p = FullParams(H=np.eye(2), sigma_g=np.eye(2), sigma_h=np.eye(2),
                       w_star=np.zeros(2), eta=0.05)  # threshold 1/8
        cfg = SimConfig(step=2e-3, horizon=2.0, n_paths=2000, base_seed=17,
                        x0=np.zeros(2), record_stride=50)
        batch = couple_paths(p, cfg, [1.0, 0.0], [-1.0, 0.0])
        mean_r = batch.r_sq.mean(axis=0)
        slope = np.polyfit(batch.times, np.log(mean_r), 1)[0]
        assert slope < 0
        assert mean_r[-1] < mean_r[0]


class TestGuards:
    def test_overflow_names_path_and_step(self):
        p = DecoupledParams(h=[100.0], sigma=[1.0], rho=[1.0], eta=0.1)
        cfg = SimConfig(step=1.0, horizon=60.0, n_paths=3, base_seed=1,
                        x0=np.array([1.0]))
        with pytest.raises(SimulationError, match=r"path \d+ at step \d+"):
            simulate_batch(p, cfg)

    @pytest.mark.parametrize("eta,h,rho", [(0.1, 1.0, 1.0), (0.5, 2.0, 0.5), (0.01, 0.5, 2.0)])
    def test_non_explosion_desk_grid(self, eta, h, rho):
        p = DecoupledParams(h=[h], sigma=[1.0], rho=[rho], eta=eta)
        eps = 0.1 / h
        cfg = SimConfig(step=eps, horizon=1e3, n_paths=4, base_seed=23,
                        x0=np.zeros(1), record_stride=100)
        batch = simulate_batch(p, cfg)
        assert np.all(np.abs(batch.paths) < 1e6)


class TestOuReduction:
    def test_em_terminal_matches_exact_update_in_distribution(self):
        # rho = 0: EM batch vs the closed-form exact-update oracle, two-sample KS
        h, sigma, eta, eps, horizon = 1.0, 1.0, 0.1, 1e-3, 5.0
        n = 100_000
        p = dec1(rho=0.0, eta=eta)
        cfg = SimConfig(step=eps, horizon=horizon, n_paths=n, base_seed=31,
                        x0=np.zeros(1), record_stride=int(horizon / eps))
        em = simulate_batch(p, cfg).paths[:, -1, 0]
        exact = ou_exact_terminal(h, sigma, eta, eps, horizon, n, seed=1234)
        ks = _two_sample_ks(em, exact)
        assert ks < 0.02


def _two_sample_ks(a, b):
    data = np.concatenate([np.sort(a), np.sort(b)])
    order = np.argsort(data, kind="mergesort")
    cdf_steps = np.where(order < a.size, 1.0 / a.size, -1.0 / b.size)
    return float(np.max(np.abs(np.cumsum(cdf_steps))))


class TestBatchExport:
    def test_csv_format(self, tmp_path):
        p = dec1()
        cfg = SimConfig(step=0.1, horizon=0.3, n_paths=2, base_seed=1,
                        x0=np.array([0.5]))
        batch = simulate_batch(p, cfg)
        out = tmp_path / "t.csv"
        batch.to_csv(out)
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "path,step,time,coord0"
        assert len(lines) == 1 + 2 * 4  # header + n_paths * (K+1)
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "0"
        assert float(first[3]) == 0.5

    def test_metadata_sidecar(self, tmp_path):
        import json
        p = dec1()
        cfg = SimConfig(step=0.1, horizon=0.3, n_paths=2, base_seed=9, x0=np.zeros(1))
        batch = simulate_discrete_chain(p, cfg)
        out = tmp_path / "meta.json"
        batch.metadata_json(out)
        doc = json.loads(out.read_text())
        assert doc["scheme"] == "discrete-chain"
        assert doc["base_seed"] == 9
        assert doc["config"]["step"] == 0.1
        assert "assumption_check" in doc
