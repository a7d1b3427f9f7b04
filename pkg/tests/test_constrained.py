import itertools
import math

import numpy as np
import pytest

from mixlift import (ConstrainedConfig, EtaRule, InfeasibleError,
                     MixedDataset, RegressorPair, lift, project_l1_ball,
                     recover_betas, residuals, rho, solve_constrained, svt)
from mixlift.synth import AdversarialNoise, StochasticNoise, gen_mixed, random_pair


# --- oracles -----------------------------------------------------------------

def l1_projection_oracle_value(v, radius, grid=101, span=None):
    """Brute-force squared distance to the l1 ball over a dense 3-d grid.

    The grid-restricted minimum upper-bounds the true one, so the solver
    must come in at or below it.
    """
    span = span if span is not None else np.abs(v).max() + 0.1
    ax = np.linspace(-span, span, grid)
    U = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    U = U[np.abs(U).sum(axis=1) <= radius + 1e-12]
    return float(np.min(np.sum((U - v) ** 2, axis=1)))


def svt_oracle_value_2x2(M, tau, grid=61, span=3.0):
    """Dense-grid minimum of ||Z - M||_F^2 / 2 + tau ||Z||_* over symmetric
    2x2 matrices, using the closed-form eigenvalues of [[a, c], [c, b]]."""
    ax = np.linspace(-span, span, grid)
    A, B, C = np.meshgrid(ax, ax, ax, indexing="ij")
    mid = 0.5 * (A + B)
    rad = np.sqrt(0.25 * (A - B) ** 2 + C**2)
    nuc = np.abs(mid + rad) + np.abs(mid - rad)
    fro = 0.5 * ((A - M[0, 0]) ** 2 + (B - M[1, 1]) ** 2 + 2 * (C - M[0, 1]) ** 2)
    return float(np.min(fro + tau * nuc))


class TestProjectL1Ball:
    def test_hand_example(self):
        np.testing.assert_allclose(project_l1_ball(np.array([3.0, -1.0]), 2.0),
                                   [2.0, 0.0])

    def test_interior_unchanged(self):
        v = np.array([0.5, -0.3, 0.1])
        np.testing.assert_array_equal(project_l1_ball(v, 2.0), v)

    def test_zero_radius(self):
        np.testing.assert_array_equal(project_l1_ball(np.array([1.0, -2.0]), 0.0),
                                      [0.0, 0.0])

    def test_against_brute_force_3d(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.uniform(-1.5, 1.5, size=3)
            radius = float(rng.uniform(0.2, 1.5))
            got = project_l1_ball(v, radius)
            ref = l1_projection_oracle_value(v, radius, grid=101, span=1.6)
            assert np.abs(got).sum() <= radius + 1e-9
            assert np.sum((got - v) ** 2) <= ref + 1e-6

    def test_kkt_optimality(self):
        # exact check: the projection is the soft threshold at the optimal
        # level, so distance must not improve along any feasible direction
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(2, 10))
            v = rng.standard_normal(n) * 2
            radius = float(rng.uniform(0.1, 2.0))
            u = project_l1_ball(v, radius)
            assert np.abs(u).sum() <= radius + 1e-9
            for _ in range(20):
                d = rng.standard_normal(n) * 1e-4
                cand = u + d
                if np.abs(cand).sum() <= radius:
                    assert np.sum((cand - v) ** 2) >= np.sum((u - v) ** 2) - 1e-12


class TestSvt:
    def test_diagonal_shrinkage(self):
        np.testing.assert_allclose(svt(np.diag([3.0, 1.0]), 2.0),
                                   np.diag([1.0, 0.0]), atol=1e-12)

    def test_zero_threshold_identity(self):
        M = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(svt(M, 0.0), M)

    def test_full_shrinkage(self):
        M = np.array([[1.0, 0.5], [0.5, 0.2]])
        tau = np.linalg.svd(M, compute_uv=False)[0]
        np.testing.assert_allclose(svt(M, tau), np.zeros((2, 2)), atol=1e-12)

    def test_prox_optimality_vs_grid(self):
        rng = np.random.default_rng(2)
        for _ in range(8):
            G = rng.uniform(-2, 2, size=(2, 2))
            M = 0.5 * (G + G.T)
            tau = float(rng.uniform(0.1, 1.0))
            got = svt(M, tau)
            f_got = 0.5 * np.sum((got - M) ** 2) + tau * np.abs(
                np.linalg.eigvalsh(got)).sum()
            f_ref = svt_oracle_value_2x2(M, tau, grid=61, span=2.6)
            assert f_got <= f_ref + 1e-6


class TestSolveConstrained:
    def test_exact_recovery_noiseless(self):
        pair = random_pair(8, seed=1, gamma=2.0, min_alpha=0.5)
        data = gen_mixed(pair, 80, labels=(40, 40), seed=2)
        est, report = solve_constrained(data, ConstrainedConfig(eta=0.0))
        assert rho(recover_betas(est), pair) <= 1e-3 * pair.gamma
        assert report.stop_reason == "converged"

    def test_zero_feasible_gives_zero(self):
        # sum y_i^2 <= eta makes (0, 0) feasible with objective 0
        rng = np.random.default_rng(3)
        X = rng.standard_normal((20, 3))
        y = 0.01 * rng.standard_normal(20)
        data = MixedDataset(X=X, y=y)
        eta = float(np.sum(y * y)) + 1.0
        est, report = solve_constrained(data, ConstrainedConfig(eta=eta))
        assert np.abs(est.K).max() <= 1e-6
        assert np.linalg.svd(est.K, compute_uv=False).sum() <= 1e-6

    def test_scalar_instance_matches_interval_search(self):
        # p = 1 program: min |K| s.t. sum_i |-x_i^2 K + 2 y_i x_i g - y_i^2| <= eta.
        # With y = x * beta (equal components) the residual factors as
        # x^2 (-K + 2 beta g - beta^2): the whole line K = 2 beta g - beta^2
        # is exactly feasible at eta = 0, and its minimum-|K| member is
        # (K, g) = (0, beta / 2).  Equal components sit on the identifiability
        # boundary (zero separation), so the program prefers the rank-zero K.
        rng = np.random.default_rng(4)
        x = rng.standard_normal(30)
        beta = 1.3
        y = x * beta
        data = MixedDataset(X=x[:, None], y=y)
        est, _ = solve_constrained(data, ConstrainedConfig(eta=0.0))
        # interval-search oracle over the feasible line
        gs = np.linspace(-2.0, 2.0, 200_001)
        Ks = 2.0 * beta * gs - beta**2
        i = int(np.argmin(np.abs(Ks)))
        assert abs(Ks[i]) <= 1e-4
        assert gs[i] == pytest.approx(beta / 2, abs=1e-4)
        assert est.K[0, 0] == pytest.approx(Ks[i], abs=1e-4)
        assert est.g[0] == pytest.approx(gs[i], abs=1e-4)

    def test_scalar_instance_separated_components(self):
        # separated scalar truth (b1, b2): K* = b1 b2, g* = (b1 + b2)/2 is the
        # unique exactly feasible point with minimal |K| when b1 b2 > 0 and
        # the data mixes both components
        b1, b2 = 1.5, 0.5
        rng = np.random.default_rng(12)
        x = rng.standard_normal(40)
        z = np.arange(40) % 2
        y = np.where(z == 1, b1 * x, b2 * x)
        data = MixedDataset(X=x[:, None], y=y, z=z)
        est, _ = solve_constrained(data, ConstrainedConfig(eta=0.0))
        assert est.K[0, 0] == pytest.approx(b1 * b2, abs=1e-3)
        assert est.g[0] == pytest.approx(0.5 * (b1 + b2), abs=1e-3)

    def test_objective_close_to_grid_optimum_p1(self):
        # noisy scalar instance with positive budget
        rng = np.random.default_rng(5)
        x = rng.standard_normal(25)
        y = x * 0.8 + 0.1 * rng.standard_normal(25)
        data = MixedDataset(X=x[:, None], y=y)
        eta = 0.6 * np.abs(-x * x * 0.64 + 2 * y * x * 0.8 - y * y).sum() + 1.0
        est, _ = solve_constrained(data, ConstrainedConfig(eta=eta))
        got_obj = abs(est.K[0, 0])
        feas = []
        for K in np.linspace(-2, 2, 401):
            for g in np.linspace(-2, 2, 201):
                resid = np.abs(-x * x * K + 2 * y * x * g - y * y).sum()
                if resid <= eta:
                    feas.append(abs(K))
        assert got_obj <= min(feas) + 1e-4 + 0.02

    def test_monotone_feasibility_on_convergence(self):
        pair = random_pair(5, seed=6, gamma=2.0, min_alpha=0.5)
        data = gen_mixed(pair, 60, noise=StochasticNoise(0.1), seed=7)
        eta = 2.0 * np.abs(residuals(lift(pair), data)).sum()
        cfg = ConstrainedConfig(eta=eta, max_iter=4000)
        est, report = solve_constrained(data, cfg)
        if report.stop_reason == "converged":
            assert np.abs(residuals(est, data)).sum() <= eta * (1 + cfg.tol_primal)

    def test_infeasible_detected(self):
        # overdetermined inconsistent data with a tiny budget cannot be met
        rng = np.random.default_rng(8)
        X = rng.standard_normal((120, 2))
        y = rng.standard_normal(120) * 3.0
        data = MixedDataset(X=X, y=y)
        with pytest.raises(InfeasibleError):
            solve_constrained(data, ConstrainedConfig(eta=1e-6, max_iter=1200))

    def test_eta_rule(self):
        rule = EtaRule(c4=2.0, e_norm_estimate=0.5, sep_estimate=1.5)
        assert rule.resolve(100) == pytest.approx(2.0 * 10 * 0.5 * 1.5)

    def test_report_traces_aligned(self):
        pair = random_pair(4, seed=9, gamma=2.0, min_alpha=0.5)
        data = gen_mixed(pair, 40, seed=10)
        est, report = solve_constrained(data, ConstrainedConfig(eta=0.0, max_iter=50))
        assert len(report.objective_trace) == report.iterations
        assert len(report.primal_residual_trace) == report.iterations
        assert len(report.dual_residual_trace) == report.iterations
        assert report.wall_time >= 0

    def test_adversarial_error_scales_with_budget(self):
        # doubling the adversary budget roughly doubles the recovery error
        pair = random_pair(6, seed=11, gamma=2.0, min_alpha=0.8)
        errs = {}
        for eps in (0.2, 0.4):
            med = []
            for seed in range(5):
                data = gen_mixed(pair, 240, noise=AdversarialNoise(eps), seed=seed)
                eta = math.sqrt(240) * eps * float(np.linalg.norm(pair.separation))
                est, _ = solve_constrained(
                    data, ConstrainedConfig(eta=eta, max_iter=1200,
                                            tol_primal=1e-5, tol_dual=1e-5))
                med.append(rho(recover_betas(est), pair))
            errs[eps] = float(np.median(med))
        assert 1.2 <= errs[0.4] / errs[0.2] <= 3.5

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ConstrainedConfig(eta=-1.0)
        with pytest.raises(ValueError):
            ConstrainedConfig(max_iter=0)
        with pytest.raises(ValueError):
            ConstrainedConfig(tol_primal=0.0)
