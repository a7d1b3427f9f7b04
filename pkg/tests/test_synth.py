import math

import numpy as np
import pytest

from mixlift import (AdversarialNoise, BoundedDesign, GaussianDesign, NoNoise,
                     StochasticNoise, gen_adversarial_cancel, gen_mixed,
                     gen_packing_instance, gen_phase_retrieval, random_pair,
                     rho, vg_codebook)
from mixlift.rng import stream


def pair_of(a, b):
    from mixlift import RegressorPair

    return RegressorPair(np.array(a, float), np.array(b, float))


class TestGenMixed:
    def test_reconstruction_identity_fixed_labels(self):
        pair = pair_of([1, 0], [0, 1])
        data = gen_mixed(pair, 4, labels=(2, 2), seed=3)
        mask = data.z == 1
        np.testing.assert_array_equal(data.y[mask], data.X[mask] @ pair.beta1)
        assert data.reconstruction_gap(pair) == 0.0
        assert data.meta["n1"] == 2 and data.meta["n2"] == 2

    def test_zero_sigma_equals_no_noise(self):
        pair = random_pair(4, seed=2, gamma=1.5)
        a = gen_mixed(pair, 30, noise=StochasticNoise(0.0), seed=9)
        b = gen_mixed(pair, 30, noise=NoNoise(), seed=9)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.X, b.X)

    def test_bernoulli_balance_tail(self):
        # Monte-Carlo oracle for the binomial tail: |n1 - n2| stays below
        # sqrt(10 n log n) in >= 99% of seeds (the bound holds w.p. 1 - n^-3)
        n = 10_000
        bound = math.sqrt(10 * n * math.log(n))
        hits = 0
        for seed in range(100):
            data = gen_mixed(pair_of([1.0], [-1.0]), n, seed=seed)
            if abs(data.meta["n1"] - data.meta["n2"]) <= bound:
                hits += 1
        assert hits >= 99

    def test_fixed_label_count_mismatch(self):
        with pytest.raises(ValueError):
            gen_mixed(pair_of([1.0], [2.0]), 5, labels=(2, 2), seed=0)

    def test_reproducible(self):
        pair = random_pair(3, seed=0, gamma=2.0)
        a = gen_mixed(pair, 25, noise=StochasticNoise(0.3), seed=17)
        b = gen_mixed(pair, 25, noise=StochasticNoise(0.3), seed=17)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.y, b.y)
        assert np.array_equal(a.z, b.z)
        assert np.array_equal(a.e, b.e)

    def test_stochastic_noise_moments(self):
        rng = stream(0, "check")
        for dist in ("gaussian", "bounded"):
            draw = StochasticNoise(2.0, distribution=dist).sample(200_000, rng)
            assert abs(draw.mean()) < 0.05
            assert abs(draw.std() - 2.0) < 0.05

    def test_bounded_design_clamped(self):
        n = 500
        X = BoundedDesign(c=2.0).sample(n, 8, stream(1, "d"))
        assert np.abs(X).max() <= 2.0 * math.sqrt(math.log(n)) + 1e-12
        assert abs(X.mean()) < 0.02
        assert abs(X.var() - 1.0) < 0.05

    def test_adversarial_budget_respected(self):
        pair = random_pair(6, seed=4, gamma=2.0, min_alpha=0.5)
        data = gen_mixed(pair, 200, noise=AdversarialNoise(3.0), seed=8)
        assert np.linalg.norm(data.e) <= 3.0 * (1 + 1e-9)

    def test_adversarial_custom_vector(self):
        e = np.full(10, 0.1)
        pair = pair_of([1.0, 0.0], [0.0, 1.0])
        data = gen_mixed(pair, 10,
                         noise=AdversarialNoise(1.0, strategy="custom", vector=e),
                         seed=0)
        np.testing.assert_array_equal(data.e, e)
        with pytest.raises(ValueError):
            AdversarialNoise(0.1, strategy="custom", vector=e)


class TestAdversarialCancel:
    def test_y_identical_over_seeds(self):
        v = np.zeros(6)
        v[0] = 1.0
        for seed in range(100):
            out = gen_adversarial_cancel(v, gamma_lb=2.0, delta=0.05, n=40, seed=seed)
            assert np.abs(out.dataset1.y - out.dataset2.y).max() == 0.0

    def test_noise_norm_bound_on_design_event(self):
        v = np.ones(5) / math.sqrt(5)
        for seed in range(20):
            out = gen_adversarial_cancel(v, gamma_lb=1.0, delta=0.2, n=100, seed=seed)
            n = out.dataset2.n
            if np.linalg.norm(out.dataset2.X @ v) <= 2.0 * math.sqrt(n):
                assert np.linalg.norm(out.dataset2.e) <= 2.0 * math.sqrt(n) * 0.2

    def test_zero_delta_degenerates(self):
        v = np.array([1.0, 0.0])
        out = gen_adversarial_cancel(v, gamma_lb=2.0, delta=0.0, n=10, seed=1)
        assert np.abs(out.dataset2.e).max() == 0.0
        assert rho(out.pair1, out.pair2) == 0.0

    def test_separation_is_two_delta(self):
        v = np.array([0.0, 1.0, 0.0])
        out = gen_adversarial_cancel(v, gamma_lb=1.0, delta=0.3, n=10, seed=2)
        assert rho(out.pair1, out.pair2) == pytest.approx(0.6)

    def test_reconstruction_identities(self):
        v = np.array([1.0, 0.0, 0.0, 0.0])
        out = gen_adversarial_cancel(v, gamma_lb=2.0, delta=0.1, n=50, seed=3)
        assert out.dataset1.reconstruction_gap(out.pair1) == 0.0
        assert out.dataset2.reconstruction_gap(out.pair2) <= 1e-12

    def test_unit_vector_required(self):
        with pytest.raises(ValueError):
            gen_adversarial_cancel(np.array([1.0, 1.0]), 1.0, 0.1, 5, seed=0)


class TestVgCodebook:
    def test_distance_to_words_and_complements(self):
        m = 32
        words = vg_codebook(m, 4, m / 16.0, stream(0, "cb"))
        assert words.shape == (4, m)
        for i in range(4):
            for j in range(i + 1, 4):
                d = int(np.sum(words[i] != words[j]))
                assert min(d, m - d) >= m / 16.0

    def test_stall_raises(self):
        with pytest.raises(RuntimeError):
            # distance demand exceeds half the length: at most one word fits
            vg_codebook(8, 4, 7.0, stream(0, "cb"), max_rejects=200)


class TestPacking:
    def test_medium_regime_norms_and_separation(self):
        p, n, sigma = 33, 2000, 1.0
        c0 = 0.25
        kappa = 0.4  # inside [sqrt(2 c0) sigma (m/n)^(1/4), sigma/2]
        fam = gen_packing_instance("medium-snr", p, n, sigma, kappa, seed=0, c0=c0)
        assert len(fam.pairs) >= 2 ** ((p - 1) // 16)
        for pr in fam.pairs:
            assert np.linalg.norm(pr.beta1) == pytest.approx(kappa)
        sep = 2 * c0 * (sigma**2 / kappa) * math.sqrt((p - 1) / n)
        assert fam.separation == pytest.approx(sep)
        pairs = fam.pairs
        for i in range(len(pairs)):
            for j in range(i + 1, len(pairs)):
                assert rho(pairs[i], pairs[j]) >= sep * (1 - 1e-9)

    def test_high_regime(self):
        fam = gen_packing_instance("high-snr", 17, 400, 0.5, kappa=1.0, seed=1)
        for pr in fam.pairs:
            assert np.linalg.norm(pr.beta1) == pytest.approx(1.0)

    def test_low_regime_norm_formula(self):
        p, n, sigma, c0 = 17, 800, 1.0, 0.25
        norm = 2 * c0 * sigma * (p / n) ** 0.25
        fam = gen_packing_instance("low-snr", p, n, sigma, kappa=norm / 2, seed=2, c0=c0)
        for pr in fam.pairs:
            assert np.linalg.norm(pr.beta1) == pytest.approx(norm)

    def test_kappa_window_enforced(self):
        with pytest.raises(ValueError):
            gen_packing_instance("medium-snr", 33, 2000, 1.0, kappa=0.9, seed=0)
        with pytest.raises(ValueError):
            gen_packing_instance("low-snr", 33, 2000, 1.0, kappa=0.9, seed=0)
        with pytest.raises(ValueError):
            gen_packing_instance("high-snr", 33, 2000, 1.0, kappa=0.2, seed=0)

    def test_p_floor(self):
        with pytest.raises(ValueError):
            gen_packing_instance("high-snr", 16, 400, 1.0, kappa=1.0, seed=0)

    def test_dataset_from_family_member(self):
        fam = gen_packing_instance("medium-snr", 33, 2000, 1.0, kappa=0.4, seed=5)
        truth = fam.pairs[fam.truth_index]
        assert fam.dataset.reconstruction_gap(truth) <= 1e-12


class TestPhaseRetrieval:
    def test_sign_loss_only(self):
        # |x' beta| with beta = e1: the measurement drops the sign
        ds = gen_phase_retrieval(np.array([1.0, 0.0]), 50, seed=0)
        np.testing.assert_allclose(ds.zmeas, np.abs(ds.X[:, 0]))

    def test_noisy_phase_clips_inside(self):
        beta = np.array([1.0, 0.0])
        ds = gen_phase_retrieval(beta, 1000, model="noisy-phase",
                                 noise=StochasticNoise(0.5), seed=1)
        np.testing.assert_allclose(ds.zmeas, np.abs(ds.X @ beta + ds.e))
        assert (ds.zmeas >= 0).all()

    def test_noisy_magnitude(self):
        beta = np.array([0.3, -0.7, 1.1])
        ds = gen_phase_retrieval(beta, 200, model="noisy-magnitude",
                                 noise=StochasticNoise(0.1), seed=2)
        np.testing.assert_allclose(ds.zmeas, np.abs(ds.X @ beta) + ds.e)

    def test_sign_flip_invariance_in_distribution(self):
        # with symmetric noise the law of |x'b + e| matches |x'(-b) + e|;
        # same seed shares (X, e), so compare summary statistics
        beta = np.array([1.0, 0.0])
        n = 50_000
        a = gen_phase_retrieval(beta, n, noise=StochasticNoise(0.3), seed=7)
        b = gen_phase_retrieval(-beta, n, noise=StochasticNoise(0.3), seed=7)
        se = a.zmeas.std() / math.sqrt(n)
        assert abs(a.zmeas.mean() - b.zmeas.mean()) <= 5 * se
        qa, qb = (np.percentile(x.zmeas, [10, 50, 90]) for x in (a, b))
        np.testing.assert_allclose(qa, qb, atol=8 * se)

    def test_recorded_signs_match(self):
        beta = np.array([2.0, 1.0])
        ds = gen_phase_retrieval(beta, 100, noise=StochasticNoise(1.0), seed=3)
        inner = ds.X @ beta + ds.e
        np.testing.assert_array_equal(ds.signs, np.where(inner >= 0, 1.0, -1.0))


class TestRandomPair:
    def test_gamma_and_alpha_controls(self):
        from mixlift import alpha

        pair = random_pair(8, seed=3, gamma=3.0, min_alpha=0.5)
        assert pair.gamma == pytest.approx(3.0)
        assert alpha(pair) >= 0.5

    def test_antipodal(self):
        from mixlift import alpha

        pair = random_pair(5, seed=4, gamma=2.0, antipodal=True)
        np.testing.assert_allclose(pair.beta1, -pair.beta2)
        assert alpha(pair) == pytest.approx(2.0)
