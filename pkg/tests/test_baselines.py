from itertools import combinations

import numpy as np
import pytest

from sifo.baselines import BaselineConfig, dft_select, omp, omp_subspace, run_baseline
from sifo.channel import SiteParams, sample_site, sample_ue_pool, steering_vector
from sifo.errors import ConfigError
from sifo.numerics import orthonormalize
from sifo.probing import dft_codebook, dft_dictionary


def _h(n, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


class TestDftSelect:
    def test_on_grid_single_path(self):
        h = 2.0 * steering_vector(9 / 32, 32)
        d = dft_select(h, 1)
        assert abs(abs(np.vdot(d.basis[:, 0], dft_codebook(32).beams[:, 9])) - 1) <= 1e-12
        assert d.capture(h) == pytest.approx(1.0)

    def test_full_basis(self):
        for s in range(5):
            h = _h(8, s)
            assert dft_select(h, 8).capture(h) == pytest.approx(1.0, abs=1e-12)

    def test_parseval_oracle(self):
        h = _h(16, 1)
        c = np.abs(np.fft.fft(h)) ** 2 / 16  # |b_k^H h|^2 with b_k = e^{j2pi nk/N}/sqrt(N)
        expected = np.sort(c)[-4:].sum() / np.vdot(h, h).real
        assert dft_select(h, 4).capture(h) == pytest.approx(expected, abs=1e-12)

    def test_tie_lower_index(self):
        d = dft_codebook(4).beams
        h = d[:, 1] + d[:, 3]
        sel = dft_select(h, 1).basis[:, 0]
        assert abs(np.vdot(sel, d[:, 1])) == pytest.approx(1.0)

    def test_zero(self):
        with pytest.raises(ValueError):
            dft_select(np.zeros(4), 1)


class TestOmp:
    def test_exact_column(self):
        d = dft_dictionary(8, 4)
        r = omp(d.beams[:, 13] * (1 - 2j), d, 1)
        assert r.indices == [13] and r.residual_norms[-1] <= 1e-12

    def test_two_sparse_recovery(self):
        d = dft_dictionary(16, 4)
        h = 1.3 * d.beams[:, 0] + (0.4 - 0.9j) * d.beams[:, 16]  # DFT-orthogonal columns
        r = omp(h, d, 2)
        assert sorted(r.indices) == [0, 16]
        assert r.decision.capture(h) == pytest.approx(1.0, abs=1e-12)

    def test_exhaustive_pair_oracle(self):
        d = dft_dictionary(8, 4).beams
        for s in range(30):
            h = _h(8, 100 + s)
            best = 0.0
            for i, j in combinations(range(32), 2):
                u = orthonormalize(d[:, [i, j]])
                c = u.conj().T @ h
                best = max(best, np.vdot(c, c).real / np.vdot(h, h).real)
            assert omp_subspace(h, d, 2).capture(h) >= best - 0.1

    def test_residuals_and_final_eta(self):
        h = _h(16, 3)
        r = omp(h, dft_dictionary(16, 4), 5)
        assert all(b <= a + 1e-12 for a, b in zip(r.residual_norms, r.residual_norms[1:]))
        eta = 1 - r.residual_norms[-1] ** 2 / np.vdot(h, h).real
        assert r.decision.capture(h) == pytest.approx(eta, abs=1e-10)

    def test_skips_dependent_columns(self):
        d = dft_codebook(4).beams
        dup = np.column_stack([d[:, 0], d[:, 0] * 1j, d[:, 1]])
        h = d[:, 0] + 0.5 * d[:, 1]
        r = omp(h, dup, 2)
        assert r.indices == [0, 2]

    def test_q_too_large(self):
        with pytest.raises(ValueError):
            omp(_h(4, 0), dft_codebook(4), 5)

    def test_default_dictionary(self):
        h = _h(16, 4)
        np.testing.assert_allclose(omp_subspace(h, q=3).projector,
                                   omp_subspace(h, dft_dictionary(16, 4), 3).projector)


class TestConfig:
    def test_bad_variant(self):
        with pytest.raises(ConfigError):
            BaselineConfig("pmi")

    def test_bad_oversample(self):
        with pytest.raises(ConfigError):
            BaselineConfig(oversample=0)

    def test_dispatch(self):
        h = _h(16, 5)
        assert run_baseline(h, BaselineConfig("dft_select", 1, 2)).scheme_tag == "dft_select"
        assert run_baseline(h, BaselineConfig("dft_omp", 4, 2)).scheme_tag == "dft_omp"


def test_omp_beats_dft_on_site():
    p = SiteParams(n_t=32)
    pool = sample_ue_pool(sample_site(3, p, site_id=0), 200, seed=1)
    d = dft_dictionary(32, 4)
    e_dft = np.mean([dft_select(h, 4).capture(h) for h in pool.channels])
    e_omp = np.mean([omp_subspace(h, d, 4).capture(h) for h in pool.channels])
    assert e_omp >= e_dft - 1e-9 and e_dft >= 0.5
