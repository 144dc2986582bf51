import numpy as np
import pytest

from sifo.channel import SiteParams, sample_site, sample_ue_pool, steering_matrix, steering_vector
from sifo.errors import ConfigError, NumericalError
from sifo.numerics import is_projector
from sifo.parametric import (BeamScorerModel, CodebookConfig, GramBoundWarning, TrainConfig, TrainingSet,
                             bce_with_logits, features, fine_tune, forward, init_model, label_top_q,
                             learn_probing_codebook, loss_and_grads, multi_hot_labels, predict_bases,
                             predict_subspace, shift_augment, train_parametric)
from sifo.probing import (RsrpFingerprint, dft_codebook, dft_dictionary, dft_subset, gram_offdiag_energy,
                          max_coherence, measure_rsrp, rsrp_db, worst_case_sensing_energy)
from sifo.subspace import batch_capture


def _toy_site(n=2000, n_t=16, seed=0):
    # one cluster cannot host two paths two beamwidths apart, so single-path UEs
    p = SiteParams(n_t=n_t, n_clusters=1, spread_range=(0.05, 0.05), paths_per_ue_range=(1, 1))
    return sample_ue_pool(sample_site(seed, p, site_id=0), n, seed=1)


@pytest.fixture(scope="module")
def toy():
    pool = _toy_site()
    cb = dft_subset(16, 8)
    r = rsrp_db(pool.channels, cb, 1.0, np.random.default_rng(0))
    y = multi_hot_labels(pool.channels, dft_dictionary(16, 4), 4)
    return pool, cb, TrainingSet(r, y)


@pytest.fixture(scope="module")
def learned():
    pool = _toy_site(1200, n_t=16)
    cfg = CodebookConfig(k=8, max_evals=400, val_size=100, memory_size=600)
    return pool, learn_probing_codebook(pool.channels, cfg)


class TestGradient:
    def test_finite_difference(self):
        rng = np.random.default_rng(0)
        m = init_model(5, 4, 2, hidden=(7, 6), seed=1)  # three weight layers
        for b in m.biases:
            b[:] = 0.1 * rng.standard_normal(b.shape)
        x = rng.standard_normal((9, 5))
        y = (rng.uniform(size=(9, 8)) < 0.3).astype(float)
        _, gw, gb = loss_and_grads(m, x, y)
        eps = 1e-5
        for params, grads in ((m.weights, gw), (m.biases, gb)):
            for p, g in zip(params, grads):
                num = np.zeros_like(p)
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + eps
                    lp = bce_with_logits(forward(m, x)[0], y)
                    p[idx] = old - eps
                    lm = bce_with_logits(forward(m, x)[0], y)
                    p[idx] = old
                    num[idx] = (lp - lm) / (2 * eps)
                rel = np.linalg.norm(num - g) / max(np.linalg.norm(num) + np.linalg.norm(g), 1e-12)
                assert rel <= 1e-4

    def test_bce_reference(self):
        z = np.array([[0.3, -2.0, 5.0]])
        t = np.array([[1.0, 0.0, 1.0]])
        s = 1 / (1 + np.exp(-z))
        ref = -(t * np.log(s) + (1 - t) * np.log(1 - s)).sum()
        assert bce_with_logits(z, t) == pytest.approx(ref, rel=1e-12)

    def test_finite_scores(self):
        m = init_model(8, 4)
        assert np.all(np.isfinite(m.scores(np.full((3, 8), -250.0))))
        assert np.all(np.isfinite(m.scores(np.array([[1e3] * 8]))))


class TestModel:
    def test_features_gain_invariant(self):
        r = np.array([[-70.0, -80.0, -200.0]])
        np.testing.assert_allclose(features(r + 17.0), features(r))
        np.testing.assert_allclose(features(r), [[1.0, 0.5, -2.0]])

    def test_json_roundtrip(self, tmp_path):
        m = init_model(6, 4, 4, hidden=(5,), seed=3, codebook_id="cb")
        m.save(tmp_path / "m.json")
        back = BeamScorerModel.load(tmp_path / "m.json")
        for a, b in zip(back.params(), m.params()):
            np.testing.assert_array_equal(a, b)
        assert back.codebook_id == "cb" and back.dictionary_id == "dft-4x16"

    def test_dimension_checks(self):
        m = init_model(4, 4, 2, hidden=(3,))
        with pytest.raises(ValueError):
            BeamScorerModel(m.layer_dims, m.weights[:1], m.biases[:1], 4, 2)
        with pytest.raises(ValueError):
            BeamScorerModel(m.layer_dims, m.weights, m.biases, 4, 3)
        bad = [w.copy() for w in m.weights]
        bad[0][0, 0] = np.nan
        with pytest.raises(NumericalError):
            BeamScorerModel(m.layer_dims, bad, m.biases, 4, 2)


class TestPredict:
    def _identity_model(self, n_t=8):
        # one linear layer: score of dictionary column k = feature of the matching DFT probe
        dims = [n_t, n_t]
        w = np.eye(n_t)
        return BeamScorerModel(dims, [w], [np.zeros(n_t)], n_t, 1, dft_codebook(n_t).codebook_id)

    def test_constructed_model_selects_aligned_beam(self):
        m = self._identity_model()
        h = steering_vector(3 / 8, 8)
        r = measure_rsrp(h, dft_codebook(8))
        d = predict_subspace(r, m, q=2)
        assert d.capture(h) == pytest.approx(1.0)

    def test_contract_and_determinism(self):
        m = init_model(8, 8, 4, hidden=(16,), seed=5)
        r = RsrpFingerprint(np.linspace(-90, -60, 8), "x")
        a, b = predict_subspace(r, m, q=4), predict_subspace(r, m, q=4)
        assert is_projector(a.projector, 4)
        np.testing.assert_array_equal(a.basis, b.basis)
        np.testing.assert_allclose(predict_bases(r.values_db[None, :], m, 4)[0], a.basis)

    def test_dimension_mismatch(self):
        m = init_model(8, 8)
        with pytest.raises(ValueError):
            predict_subspace(np.zeros(7), m)
        with pytest.raises(ValueError):
            predict_subspace(np.zeros(8), m, dictionary=dft_codebook(8))


class TestLabels:
    def test_on_grid(self):
        d = dft_dictionary(16, 4)
        np.testing.assert_array_equal(label_top_q(steering_vector(20 / 64, 16), d, 1), [20])

    def test_all(self):
        h = np.array([1, 2j, -1, 0.5])
        np.testing.assert_array_equal(label_top_q(h, dft_codebook(4), 4), [0, 1, 2, 3])

    def test_repeatable_and_multi_hot(self):
        h = np.random.default_rng(0).standard_normal((3, 8)) + 0j
        d = dft_dictionary(8, 4)
        y = multi_hot_labels(h, d, 3)
        assert y.shape == (3, 32) and np.all(y.sum(1) == 3)
        np.testing.assert_array_equal(y, multi_hot_labels(h, d, 3))


class TestShiftAugment:
    def test_rolled_targets_match_fresh_labels(self):
        rng = np.random.default_rng(0)
        d = dft_dictionary(16, 4)
        h = rng.standard_normal((20, 16)) + 1j * rng.standard_normal((20, 16))
        y = multi_hot_labels(h, d, 3)
        hs, ys = shift_augment(h, y, np.random.default_rng(1))
        np.testing.assert_array_equal(ys, multi_hot_labels(hs, d, 3))
        np.testing.assert_allclose(np.linalg.norm(hs, axis=1), np.linalg.norm(h, axis=1))

    def test_single_path_moves_on_grid(self):
        h = steering_vector(5 / 64, 16)[None, :]
        y = np.zeros((1, 64))
        y[0, 5] = 1
        hs, ys = shift_augment(h, y, np.random.default_rng(2))
        k = int(np.argmax(ys[0]))
        np.testing.assert_allclose(hs[0], steering_vector(k / 64, 16), atol=1e-12)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            shift_augment(np.ones((2, 4)), np.ones((3, 16)), np.random.default_rng(0))


class TestTraining:
    def test_beats_random_dft_selection(self, toy):
        pool, cb, data = toy
        cfg = TrainConfig(steps=400, batch_size=256, hidden=(64, 64))
        m = train_parametric(TrainingSet(data.values_db[:1500], data.targets[:1500]), cfg, 16, 4, cb.codebook_id)
        ev = np.arange(1500, 2000)
        bases = predict_bases(data.values_db[ev], m, 4)
        eta = np.mean([batch_capture(b, pool.channels[i])[0] for b, i in zip(bases, ev)])
        rng = np.random.default_rng(1)
        d = dft_codebook(16).beams
        rand = np.mean([batch_capture(d[:, rng.choice(16, 4, replace=False)], pool.channels[i])[0] for i in ev])
        assert eta >= rand + 0.1
        loss = m.history["probe_loss"]
        assert loss[-1] <= 0.8 * loss[0]

    def test_zero_steps_is_init(self, toy):
        _, cb, data = toy
        m = train_parametric(data, TrainConfig(steps=0, hidden=(8,), seed=4), 16, 4)
        ref = init_model(8, 16, 4, (8,), 4)
        for a, b in zip(m.params(), ref.params()):
            np.testing.assert_array_equal(a, b)

    def test_deterministic(self, toy):
        _, _, data = toy
        cfg = TrainConfig(steps=20, hidden=(8,), seed=2)
        a, b = train_parametric(data, cfg, 16, 4), train_parametric(data, cfg, 16, 4)
        for x, y in zip(a.params(), b.params()):
            np.testing.assert_array_equal(x, y)

    def test_empty(self):
        with pytest.raises(ValueError):
            train_parametric(TrainingSet(np.zeros((0, 4)), np.zeros((0, 16))))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_aborts(self, toy):
        _, _, data = toy
        with pytest.raises(NumericalError):
            train_parametric(data, TrainConfig(steps=50, learning_rate=1e300, hidden=(8,)), 16, 4)

    def test_l2sp_limit(self, toy):
        _, _, data = toy
        base = train_parametric(data, TrainConfig(steps=30, hidden=(16,)), 16, 4)
        tuned = fine_tune(base, data, TrainConfig(steps=100, hidden=(16,), l2sp_coefficient=1e9, seed=1))
        for a, b in zip(tuned.params(), base.params()):
            assert np.max(np.abs(a - b)) <= 1e-3

    def test_continued_training(self, toy):
        _, _, data = toy
        base = train_parametric(data, TrainConfig(steps=100, hidden=(16,)), 16, 4)
        tuned = fine_tune(base, data, TrainConfig(steps=100, hidden=(16,), l2sp_coefficient=0.0, seed=3))
        loss = tuned.history["probe_loss"]
        assert loss[-1] <= loss[0] + 0.01 * abs(loss[0])
        # the pretrained model itself is untouched
        assert base.history["probe_loss"] != loss

    def test_fine_tune_empty(self, toy):
        _, _, data = toy
        base = init_model(8, 16, 4, (8,))
        with pytest.raises(ValueError):
            fine_tune(base, TrainingSet(np.zeros((0, 8)), np.zeros((0, 64))))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=0)
        with pytest.raises(ConfigError):
            TrainConfig(l2sp_coefficient=-1)


class TestCodebookLearning:
    def test_constraints(self, learned):
        _, cb = learned
        assert cb.constraint == "phase_only" and cb.kind == "learned"
        np.testing.assert_allclose(np.abs(cb.beams), 0.25, atol=1e-12)
        assert gram_offdiag_energy(cb) <= 0.05
        assert max_coherence(cb) < 0.99

    def test_beam_near_dominant_cluster(self, learned):
        pool, cb = learned
        grid = np.linspace(-0.5, 0.5, 2048, endpoint=False)
        g = pool.channels / np.linalg.norm(pool.channels, axis=1, keepdims=True)
        a = steering_matrix(grid, 16)
        peak = grid[np.argmax(np.mean(np.abs(g.conj() @ a) ** 2, axis=0))]
        pointing = grid[np.argmax(np.abs(a.conj().T @ cb.beams), axis=0)]
        d = np.abs((pointing - peak + 0.5) % 1.0 - 0.5)
        assert d.min() <= 1 / 16

    def test_coverage_fixed_point(self):
        h = _toy_site(300, n_t=8).channels
        cb = learn_probing_codebook(h, CodebookConfig(k=8, objective="coverage", max_evals=200))
        assert worst_case_sensing_energy(cb) == pytest.approx(1.0, abs=1e-9)

    def test_deterministic(self):
        h = _toy_site(300, n_t=8).channels
        cfg = CodebookConfig(k=4, max_evals=100, val_size=50, memory_size=200)
        np.testing.assert_array_equal(learn_probing_codebook(h, cfg).beams, learn_probing_codebook(h, cfg).beams)

    def test_bad_k(self):
        with pytest.raises(ConfigError):
            learn_probing_codebook(np.ones((4, 4)), CodebookConfig(k=5))

    def test_infeasible_bound_warns(self):
        h = _toy_site(200, n_t=8).channels
        with pytest.warns(GramBoundWarning):
            learn_probing_codebook(h, CodebookConfig(k=8, gram_bound=-1.0, max_evals=10, val_size=50))
