from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from opencat.detectors import (
    IsolationForest,
    Loda,
    average_path_length,
    load_model,
    save_model,
    score,
    score_iforest,
    score_loda,
    train_iforest,
    train_loda,
)
from opencat.detectors.iforest import mean_path_length
from opencat.synthdata import gen_mixture


def python_depth(model: IsolationForest, x: np.ndarray, t: int) -> int:
    """Walk tree ``t`` by hand: left iff x[feature] <= threshold."""
    node = int(model.roots[t])
    while model.feature[node] >= 0:
        go_left = x[model.feature[node]] <= model.threshold[node]
        node = int(model.left[node] if go_left else model.right[node])
    return int(model.depth[node])


@pytest.fixture(scope="module")
def blob():
    return np.random.default_rng(11).normal(size=(300, 4))


@pytest.fixture(scope="module")
def forest(blob):
    return train_iforest(blob, n_trees=40, subsample_fraction=0.2, seed=5)


class TestAveragePathLength:
    @pytest.mark.parametrize("m", [2, 3, 10, 256, 2000])
    def test_exact_harmonic(self, m):
        h = sum(Fraction(1, i) for i in range(1, m))
        expected = 2 * h - Fraction(2 * (m - 1), m)
        assert average_path_length(m) == pytest.approx(float(expected), rel=1e-14)

    def test_small(self):
        assert average_path_length(1) == 0.0
        assert average_path_length(2) == 1.0


class TestIsolationForest:
    def test_psi(self, forest):
        assert forest.psi == 60
        assert forest.n_trees == 40

    def test_two_points_score_half(self):
        m = train_iforest([[0.0], [1.0]], n_trees=5, subsample_fraction=1.0, seed=0)
        np.testing.assert_allclose(score_iforest(m, [[0.0], [1.0], [0.5]]), 0.5)

    def test_single_leaf_scores_one(self):
        m = train_iforest([[3.0, 3.0]], n_trees=3, subsample_fraction=1.0, seed=0)
        np.testing.assert_array_equal(score_iforest(m, [[0.0, 0.0], [9.0, 1.0]]), 1.0)

    def test_constant_data(self):
        m = train_iforest(np.ones((20, 3)), n_trees=4, subsample_fraction=0.5, seed=0)
        np.testing.assert_array_equal(m.feature, -1)
        np.testing.assert_array_equal(score_iforest(m, np.ones((2, 3))), 1.0)

    def test_structure(self, forest, blob):
        for t in range(forest.n_trees):
            sl = forest.tree_nodes(t)
            assert forest.size[sl][0] == forest.psi
            assert forest.depth[sl].max() <= forest.psi - 1
            leaves = forest.feature[sl] < 0
            assert forest.size[sl][leaves].sum() == forest.psi
            # Gaussian rows are distinct, so full-depth leaves hold one row each.
            assert np.all(forest.size[sl][leaves] == 1)

    def test_kernel_matches_python_walk(self, forest, blob):
        pts = np.vstack([blob[:25], np.random.default_rng(0).normal(scale=3, size=(25, 4))])
        expected = [np.mean([python_depth(forest, x, t) for t in range(forest.n_trees)]) for x in pts]
        np.testing.assert_allclose(mean_path_length(forest, pts), expected, rtol=1e-12)

    def test_oob_uses_only_trees_without_the_point(self, forest, blob):
        inbag = forest.inbag_matrix()
        assert inbag.sum(axis=0).tolist() == [forest.psi] * forest.n_trees
        got = mean_path_length(forest, blob, oob=True)
        for i in range(0, blob.shape[0], 37):
            trees = np.flatnonzero(~inbag[i])
            expected = np.mean([python_depth(forest, blob[i], t) for t in trees])
            assert got[i] == pytest.approx(expected, rel=1e-12)

    def test_oob_refuses_other_data(self, forest, blob):
        with pytest.raises(ValueError, match="exact training set"):
            score_iforest(forest, blob[::-1].copy(), oob=True)

    def test_oob_refuses_full_sample_trees(self, blob):
        m = train_iforest(blob[:10], n_trees=3, subsample_fraction=1.0, seed=0)
        with pytest.raises(ValueError, match="in every tree subsample"):
            score_iforest(m, blob[:10], oob=True)

    def test_deterministic_and_thread_independent(self, blob):
        a = train_iforest(blob, 30, 0.2, seed=9)
        b = train_iforest(blob, 30, 0.2, seed=9, n_jobs=4)
        for name in ("feature", "threshold", "left", "right", "depth", "subsample_indices"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        c = train_iforest(blob, 30, 0.2, seed=10)
        assert not np.array_equal(a.threshold, c.threshold)

    @pytest.mark.parametrize("d", [1, 9])
    def test_outliers_score_higher(self, d):
        rng = np.random.default_rng(d)
        m = train_iforest(rng.normal(size=(1000, d)), n_trees=100, seed=1)
        inl = score_iforest(m, rng.normal(size=(200, d)))
        out = score_iforest(m, rng.normal(size=(200, d)) + 6.0)
        assert out.min() > np.median(inl)
        assert np.all((inl > 0) & (inl <= 1))

    def test_rejects_labelled_input(self):
        data = gen_mixture(50, 0.2, seed=0)
        with pytest.raises(TypeError, match="unlabelled"):
            train_iforest(data, n_trees=2)
        m = train_iforest(data.points, n_trees=2)
        with pytest.raises(TypeError):
            score_iforest(m, data)

    @pytest.mark.parametrize("bad", [np.empty((0, 3)), np.array([[1.0, np.nan]])])
    def test_rejects_bad_input(self, bad):
        with pytest.raises(ValueError):
            train_iforest(bad, n_trees=2)

    def test_dimension_mismatch(self, forest):
        with pytest.raises(ValueError, match="dimension"):
            score_iforest(forest, np.zeros((2, 3)))


@pytest.fixture(scope="module")
def loda_model(blob):
    return train_loda(blob, n_projections=50, seed=2)


class TestLoda:
    @pytest.fixture
    def model(self, loda_model):
        return loda_model

    def test_directions(self, model):
        assert model.weights.shape == (50, 4)
        np.testing.assert_allclose(np.linalg.norm(model.weights, axis=1), 1.0)
        assert np.all(np.count_nonzero(model.weights, axis=1) == math.ceil(math.sqrt(4)))
        assert model.pseudo_count == pytest.approx(1 / 300)

    def test_histograms_hold_every_resampled_point(self, model):
        for k in range(model.n_projections):
            counts = model.counts[model.offsets[k] : model.offsets[k + 1]]
            assert counts.sum() == model.sample_size

    def test_hand_example(self):
        # Symmetric data, so the sign of the single 1-d direction does not matter.
        # Width 1 over [-1, 1] gives two bins holding two points each.
        m = train_loda([[-1.0], [-0.5], [0.5], [1.0]], n_projections=1, seed=0,
                       bin_width=1.0, bootstrap=False, pseudo_count=0.25)
        assert m.n_bins[0] == 2
        got = score_loda(m, [[0.5], [1.0], [-1.0], [5.0]])
        # Occupied bin density 2 / (4 * 1); outside the range 0.25 / (4 * 1).
        np.testing.assert_allclose(got, [-math.log(0.5)] * 3 + [-math.log(0.0625)])

    def test_leave_out_matches_manual_average(self, model, blob):
        got = score_loda(model, blob, leave_out=True)
        inbag = model.inbag_matrix()
        for i in (0, 57, 299):
            per = np.array([score_loda(_single(model, k), blob[i : i + 1])[0] for k in range(model.n_projections)])
            assert got[i] == pytest.approx(per[~inbag[i]].mean(), rel=1e-12)

    def test_leave_out_needs_bootstrap(self, blob):
        m = train_loda(blob, n_projections=3, seed=0, bootstrap=False)
        with pytest.raises(ValueError, match="every bootstrap"):
            score_loda(m, blob, leave_out=True)

    def test_outliers_score_higher(self):
        rng = np.random.default_rng(4)
        m = train_loda(rng.normal(size=(1000, 9)), n_projections=100, seed=3)
        inl = score_loda(m, rng.normal(size=(200, 9)))
        out = score_loda(m, rng.normal(size=(200, 9)) + 6.0)
        assert out.min() > np.median(inl)

    def test_deterministic(self, blob):
        a = score_loda(train_loda(blob, 20, seed=1), blob)
        b = score_loda(train_loda(blob, 20, seed=1), blob)
        np.testing.assert_array_equal(a, b)

    def test_chunking_invariant(self, model):
        X = np.random.default_rng(1).normal(size=(5000, 4))
        np.testing.assert_allclose(score_loda(model, X)[4090:4100],
                                   score_loda(model, X[4090:4100]), rtol=1e-13)


def _single(model: Loda, k: int) -> Loda:
    a, b = model.offsets[k], model.offsets[k + 1]
    return Loda(
        weights=model.weights[k : k + 1], lo=model.lo[k : k + 1], width=model.width[k : k + 1],
        n_bins=model.n_bins[k : k + 1], counts=model.counts[a:b], offsets=np.array([0, b - a]),
        bootstrap_indices=model.bootstrap_indices[k : k + 1], n_train=model.n_train, dim=model.dim,
        seed=model.seed, pseudo_count=model.pseudo_count, train_fingerprint=model.train_fingerprint,
    )


class TestPersistence:
    @pytest.mark.parametrize("kind", ["iforest", "loda"])
    def test_round_trip(self, kind, blob, tmp_path):
        m = train_iforest(blob, 20, seed=3) if kind == "iforest" else train_loda(blob, 20, seed=3)
        save_model(m, tmp_path / "m.npz")
        back = load_model(tmp_path / "m.npz")
        assert type(back) is type(m)
        np.testing.assert_array_equal(score(back, blob), score(m, blob))
        np.testing.assert_array_equal(score(back, blob, leave_out=True), score(m, blob, leave_out=True))

    def test_rejects_foreign_file(self, tmp_path):
        np.savez(tmp_path / "x.npz", __header__=np.array('{"format": "other"}'))
        with pytest.raises(ValueError, match="not an opencat model"):
            load_model(tmp_path / "x.npz")
