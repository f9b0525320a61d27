from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from opencat.synthdata import (
    LabeledPointSet,
    SynthConfig,
    gen_alien,
    gen_mixture,
    gen_nominal,
    n_aliens_exact,
)


TINY = SynthConfig(dim=1, pattern=((1.0, 1),))


@pytest.fixture(scope="module")
def alien_sample():
    return gen_alien(60_000, seed=2, return_masks=True)


class TestNominal:
    def test_moments(self):
        X = gen_nominal(50_000, seed=1)
        assert X.shape == (50_000, 9)
        np.testing.assert_allclose(X.mean(axis=0), 0.0, atol=0.03)
        np.testing.assert_allclose(X.std(axis=0), 1.0, atol=0.02)

    def test_seeded(self):
        np.testing.assert_array_equal(gen_nominal(10, seed=3), gen_nominal(10, seed=3))


class TestAlien:
    @pytest.fixture
    def sample(self, alien_sample):
        return alien_sample

    def test_pattern_frequencies(self, sample):
        _, masks = sample
        k = masks.sum(axis=1)
        assert set(np.unique(k)) == {3, 4}
        # Binomial sd of the 3-subset share is 0.002 at this size.
        assert np.mean(k == 3) == pytest.approx(0.4, abs=0.01)

    def test_shifted_coordinates_uniform(self, sample):
        _, masks = sample
        # E[#shifted] = 0.4*3 + 0.6*4 = 3.6 spread over 9 coordinates.
        np.testing.assert_allclose(masks.mean(axis=0), 3.6 / 9, atol=0.01)

    def test_conditional_means(self, sample):
        X, masks = sample
        assert X[masks].mean() == pytest.approx(3.0, abs=0.02)
        assert X[~masks].mean() == pytest.approx(0.0, abs=0.02)
        assert X[masks].std() == pytest.approx(1.0, abs=0.02)

    def test_custom_config(self):
        cfg = SynthConfig(dim=2, shift=10.0, pattern=((1.0, 2),))
        X = gen_alien(500, cfg, seed=0)
        assert X.mean() == pytest.approx(10.0, abs=0.2)

    @pytest.mark.parametrize(
        "kw", [dict(dim=0), dict(pattern=((0.5, 3),)), dict(pattern=((1.0, 10),)), dict(pattern=((1.5, 1), (-0.5, 2)))]
    )
    def test_bad_config(self, kw):
        with pytest.raises(ValueError):
            SynthConfig(**kw)


class TestMixture:
    @given(st.integers(1, 3000), st.floats(0.0, 1.0))
    def test_exact_count(self, n, alpha):
        assert abs(n_aliens_exact(n, alpha) - alpha * n) <= 0.5 + 1e-9
        assert gen_mixture(n, alpha, seed=0, config=TINY).n_alien == n_aliens_exact(n, alpha)

    def test_exact_count_halves_round_up(self):
        assert n_aliens_exact(10, 0.05) == 1
        assert n_aliens_exact(100, 0.01) == 1

    def test_iid_count_is_binomial(self):
        counts = [gen_mixture(1000, 0.1, "iid", TINY, seed=s).n_alien for s in range(200)]
        assert np.mean(counts) == pytest.approx(100, abs=3)
        assert np.std(counts) > 5  # Binomial sd is 9.5; exact_count would give 0.

    def test_alien_rows_are_shifted(self):
        m = gen_mixture(20_000, 0.5, seed=4)
        assert m.points[m.labels].mean() == pytest.approx(3.6 * 3.0 / 9, abs=0.03)
        assert m.points[~m.labels].mean() == pytest.approx(0.0, abs=0.03)

    def test_positions_are_shuffled(self):
        m = gen_mixture(1000, 0.5, seed=5)
        assert 0 < m.labels[:500].sum() < 500

    @pytest.mark.parametrize("alpha,mode", [(-0.1, "exact_count"), (1.1, "iid"), (0.5, "weird")])
    def test_rejects(self, alpha, mode):
        with pytest.raises(ValueError):
            gen_mixture(10, alpha, mode)

    def test_labels_kept_apart(self):
        with pytest.raises(ValueError):
            LabeledPointSet(points=np.zeros((3, 2)), labels=np.zeros(2, dtype=bool))
