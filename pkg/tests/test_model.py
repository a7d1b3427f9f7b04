import json

import numpy as np
import pytest

from mixlift import (ErrorBreakdown, LiftedEstimate, MixedDataset,
                     RegressorPair, alpha, j_matrix, lift, load_dataset,
                     residuals, rho, rho_metric, save_dataset)
from mixlift.spectral import recover_betas
from mixlift.synth import gen_mixed, random_pair


def pair_of(a, b):
    return RegressorPair(np.array(a, float), np.array(b, float))


class TestLift:
    def test_orthogonal_pair(self):
        est = lift(pair_of([2, 0], [0, 2]))
        np.testing.assert_allclose(est.K, [[0, 2], [2, 0]])
        np.testing.assert_allclose(est.g, [1, 1])

    def test_equal_components_rank_one(self):
        est = lift(pair_of([1, 1], [1, 1]))
        np.testing.assert_allclose(est.K, [[1, 1], [1, 1]])
        np.testing.assert_allclose(est.g, [1, 1])
        assert np.linalg.matrix_rank(est.K) == 1

    def test_antipodal_pair(self):
        est = lift(pair_of([1, 0], [-1, 0]))
        np.testing.assert_allclose(est.K, [[-1, 0], [0, 0]])
        np.testing.assert_allclose(est.g, [0, 0])

    def test_rank_at_most_two(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = rng.integers(2, 9)
            est = lift(RegressorPair(rng.standard_normal(p), rng.standard_normal(p)))
            s = np.linalg.svd(est.K, compute_uv=False)
            assert (s[2:] <= 1e-10 * max(s[0], 1.0)).all()


class TestJMatrix:
    def test_antipodal(self):
        J = j_matrix(lift(pair_of([1, 0], [-1, 0])))
        np.testing.assert_allclose(J, [[1, 0], [0, 0]])

    def test_equal_components_zero(self):
        J = j_matrix(lift(pair_of([3, -2], [3, -2])))
        np.testing.assert_allclose(J, np.zeros((2, 2)), atol=1e-14)

    def test_orthogonal(self):
        J = j_matrix(lift(pair_of([2, 0], [0, 2])))
        np.testing.assert_allclose(J, [[1, -1], [-1, 1]])

    def test_psd_rank_one_on_lifts(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = rng.integers(1, 9)
            pair = RegressorPair(rng.standard_normal(p), rng.standard_normal(p))
            J = j_matrix(lift(pair))
            evals = np.linalg.eigvalsh(J)
            norm = max(np.abs(evals).max(), 1e-30)
            assert evals.min() >= -1e-10 * norm
            if p > 1:
                assert abs(np.sort(np.abs(evals))[-2]) <= 1e-10 * norm


class TestRhoMetric:
    def test_swap_identical(self):
        assert rho(pair_of([1, 0], [0, 1]), pair_of([0, 1], [1, 0])) == 0.0

    def test_crossed_pairing_wins(self):
        bd = rho_metric(pair_of([1, 0], [0, 1]), pair_of([0, 1], [1, 1]))
        assert bd.rho == pytest.approx(1.0)
        assert bd.swapped
        assert bd.per_beta == pytest.approx((1.0, 0.0))

    def test_identity(self):
        bd = rho_metric(pair_of([1, 0], [1, 0]), pair_of([1, 0], [1, 0]))
        assert bd.rho == 0.0
        assert not bd.swapped  # ties report the identity pairing

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rho(pair_of([1], [2]), pair_of([1, 0], [0, 1]))

    def test_metric_axioms_random_triples(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            p = int(rng.integers(1, 9))
            a, b, c = (
                RegressorPair(rng.standard_normal(p), rng.standard_normal(p))
                for _ in range(3)
            )
            assert rho(a, b) == rho(b, a)
            assert rho(a, c) <= rho(a, b) + rho(b, c) + 1e-12
            assert rho(a, a) == 0.0

    def test_breakdown_consistency(self):
        with pytest.raises(ValueError):
            ErrorBreakdown(rho=1.0, per_beta=(0.2, 0.2), swapped=False)


class TestAlpha:
    def test_antipodal_attains_two(self):
        assert alpha(pair_of([1, 0], [-1, 0])) == pytest.approx(2.0)

    def test_equal_components(self):
        assert alpha(pair_of([1, 0], [1, 0])) == 0.0

    def test_colinear(self):
        assert alpha(pair_of([1, 0], [3, 0])) == pytest.approx(0.4)

    def test_zero_pair_rejected(self):
        with pytest.raises(ValueError):
            alpha(pair_of([0, 0], [0, 0]))

    def test_range_and_zero_iff_equal(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p = int(rng.integers(1, 9))
            pair = RegressorPair(rng.standard_normal(p), rng.standard_normal(p))
            a = alpha(pair)
            assert 0.0 <= a <= 2.0
            assert (a == 0.0) == bool(np.array_equal(pair.beta1, pair.beta2))


class TestResiduals:
    def test_zero_at_exact_lift(self):
        pair = pair_of([1, 0], [0, 1])
        data = gen_mixed(pair, 50, labels=(25, 25), seed=0)
        r = residuals(lift(pair), data)
        scale = (1 + pair.gamma) ** 2 * max(np.sum(data.X**2, axis=1).max(), 1.0)
        assert np.abs(r).max() <= 1e-10 * scale

    def test_zero_estimate(self):
        data = MixedDataset(X=np.array([[1.0, 0.0]]), y=np.array([1.0]))
        est = LiftedEstimate(np.zeros((2, 2)), np.zeros(2))
        np.testing.assert_allclose(residuals(est, data), [-1.0])

    def test_identity_K(self):
        data = MixedDataset(X=np.array([[1.0, 1.0]]), y=np.array([0.0]))
        est = LiftedEstimate(np.eye(2), np.array([5.0, -3.0]))
        np.testing.assert_allclose(residuals(est, data), [-2.0])


class TestTypes:
    def test_lifted_estimate_symmetrizes(self):
        est = LiftedEstimate(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros(2))
        np.testing.assert_allclose(est.K, [[0, 0.5], [0.5, 0]])

    def test_pair_validation(self):
        with pytest.raises(ValueError):
            RegressorPair(np.array([1.0, np.inf]), np.array([0.0, 0.0]))
        with pytest.raises(ValueError):
            RegressorPair(np.array([1.0]), np.array([1.0, 2.0]))

    def test_dataset_validation(self):
        X = np.zeros((3, 2))
        with pytest.raises(ValueError):
            MixedDataset(X=X, y=np.zeros(2))
        with pytest.raises(ValueError):
            MixedDataset(X=X, y=np.zeros(3), z=np.array([0, 1, 2]))

    def test_values_frozen(self):
        pair = pair_of([1, 0], [0, 1])
        with pytest.raises(ValueError):
            pair.beta1[0] = 5.0

    def test_reconstruction_gap(self):
        pair = pair_of([1.5, -2.0], [0.5, 1.0])
        data = gen_mixed(pair, 40, seed=5)
        assert data.reconstruction_gap(pair) == 0.0


class TestRoundTrip:
    def test_lift_recover(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            p = int(rng.integers(2, 17))
            pair = RegressorPair(rng.standard_normal(p), rng.standard_normal(p))
            rec = recover_betas(lift(pair))
            assert rho(rec, pair) <= 1e-10 * (1.0 + pair.gamma)


class TestSerialization:
    def test_csv_round_trip_bit_exact(self, tmp_path):
        pair = random_pair(5, seed=9, gamma=3.0)
        data = gen_mixed(pair, 23, labels=(11, 12), seed=42)
        path = tmp_path / "ds.csv"
        save_dataset(data, path)
        back = load_dataset(path)
        assert np.array_equal(back.X, data.X)
        assert np.array_equal(back.y, data.y)
        assert np.array_equal(back.z, data.z)
        assert np.array_equal(back.e, data.e)
        assert back.meta == data.meta
        for key in ("model", "seed", "p", "n", "sigma", "n1", "n2"):
            assert key in back.meta

    def test_optional_columns(self, tmp_path):
        data = MixedDataset(X=np.array([[1.0, 2.0]]), y=np.array([0.5]))
        path = tmp_path / "bare.csv"
        save_dataset(data, path)
        header = path.read_text().splitlines()[0]
        assert header == "x_1,x_2,y"
        back = load_dataset(path)
        assert back.z is None and back.e is None

    def test_sidecar_is_json(self, tmp_path):
        data = gen_mixed(random_pair(3, seed=1, gamma=1.0), 5, seed=1)
        path = tmp_path / "d.csv"
        save_dataset(data, path)
        meta = json.loads((tmp_path / "d.csv.meta.json").read_text())
        assert meta["n"] == 5
