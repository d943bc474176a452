import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from mldict.exceptions import EmptySamples, NonUnitAtom, SizeMismatch, TooFewSamples, ZeroData
from mldict.khyperline import (
    ClusteringConfig,
    KHyperlineClustering,
    assign,
    centroid_distance,
    distortion,
    empirical_l1_distance,
    fit,
)
from mldict.numerics import make_rng
from oracles import hyperline_distortion, hyperline_oracle

seeds = st.integers(0, 2**32 - 1)
e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def random_unit(rng, K, M):
    a = rng.standard_normal((K, M))
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def two_line_instance(seed, M=5, T=40, noise=0.05):
    rng = make_rng(seed)
    lines = random_unit(rng, 2, M)
    lab = rng.integers(0, 2, T)
    return rng.standard_normal(T)[:, None] * 2.0 * lines[lab] + noise * rng.standard_normal((T, M))


class TestDistortion:
    def test_point_on_line(self):
        assert distortion(e1, e1) == 0.0

    def test_orthogonal(self):
        assert distortion(2 * e2, e1) == pytest.approx(4.0)

    def test_direct_value(self):
        assert distortion([3.0, 4.0], e1) == pytest.approx(16.0)

    def test_non_unit_atom(self):
        with pytest.raises(NonUnitAtom):
            distortion(e1, 2 * e1)


class TestAssign:
    def test_basic(self):
        idx, coef = assign([e1], [e1, e2])
        assert idx[0] == 0 and coef[0] == 1.0

    def test_sign_kept(self):
        idx, coef = assign([-2 * e2], [e1, e2])
        assert idx[0] == 1 and coef[0] == -2.0

    def test_tie_goes_to_lowest(self):
        idx, coef = assign([np.array([1.0, 1.0]) / math.sqrt(2)], [e1, e2])
        assert idx[0] == 0 and coef[0] == pytest.approx(1 / math.sqrt(2))

    @given(seeds, st.floats(-100, 100).filter(lambda c: abs(c) > 1e-3))
    def test_scale_invariance(self, seed, c):
        rng = make_rng(seed)
        atoms = random_unit(rng, 4, 3)
        y = rng.standard_normal((1, 3))
        i1, c1 = assign(y, atoms)
        i2, c2 = assign(c * y, atoms)
        assert i1[0] == i2[0]
        assert c2[0] == pytest.approx(c * c1[0], rel=1e-9)


class TestFit:
    def test_two_axes(self):
        data = np.vstack([np.tile(e1, (10, 1)), np.tile(e2, (10, 1))])
        res = fit(data, ClusteringConfig(K=2))
        assert res.distortion == pytest.approx(0.0, abs=1e-20)
        assert {tuple(np.abs(a).round(12)) for a in res.atoms} == {(1.0, 0.0), (0.0, 1.0)}

    def test_negative_multiples_share_a_line(self):
        data = np.array([[1.0, 0.0], [2.0, 0.0], [-3.0, 0.0]])
        res = fit(data, ClusteringConfig(K=1))
        np.testing.assert_allclose(np.abs(res.atoms[0]), [1.0, 0.0])
        assert res.distortion == pytest.approx(0.0, abs=1e-20)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_restart_oracle(self, seed):
        data = two_line_instance(seed)
        res = fit(data, ClusteringConfig(K=2, seed=seed, n_init=3))
        assert res.distortion <= hyperline_oracle(data, 2, restarts=200) + 1e-6

    @given(seeds, st.integers(1, 5), st.sampled_from(["random-samples", "random-unit"]))
    def test_invariants(self, seed, K, init):
        rng = make_rng(seed)
        data = rng.standard_normal((30, 4))
        res = fit(data, ClusteringConfig(K=K, seed=seed, init_strategy=init))
        np.testing.assert_allclose(np.linalg.norm(res.atoms, axis=1), 1.0, atol=1e-12)
        assert res.distortion == pytest.approx(hyperline_distortion(data, res.atoms), rel=1e-9, abs=1e-12)
        hist = np.array(res.history)
        assert np.all(np.diff(hist) <= 1e-9)
        idx, coef = assign(data, res.atoms)
        assert np.array_equal(idx, res.assignments)

    def test_deterministic(self):
        data = two_line_instance(3)
        a = fit(data, ClusteringConfig(K=2, seed=9))
        b = fit(data, ClusteringConfig(K=2, seed=9))
        assert np.array_equal(a.atoms, b.atoms)

    def test_errors(self):
        with pytest.raises(ZeroData):
            fit(np.zeros((5, 2)), ClusteringConfig(K=1))
        with pytest.raises(TooFewSamples):
            fit(np.array([[1.0, 0.0], [0.0, 0.0]]), ClusteringConfig(K=2))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ClusteringConfig(K=0)
        with pytest.raises(ValueError):
            ClusteringConfig(K=1, init_strategy="kmeans++")

    def test_keep_policy_runs(self):
        data = np.vstack([np.tile(e1, (5, 1)), np.tile(e2, (5, 1))])
        res = fit(data, ClusteringConfig(K=3, empty_cluster_policy="keep"))
        assert res.distortion == pytest.approx(0.0, abs=1e-20)


class TestCentroidDistance:
    def test_identical(self):
        atoms = random_unit(make_rng(1), 4, 5)
        assert centroid_distance(atoms, atoms) == pytest.approx(0.0, abs=1e-7)

    def test_sign_flips(self):
        atoms = random_unit(make_rng(2), 4, 5)
        assert centroid_distance(atoms, -atoms) == pytest.approx(0.0, abs=1e-7)

    def test_rotated_pair(self):
        t = math.radians(10)
        lam = np.array([[math.cos(t), math.sin(t)], [0.0, 1.0]])
        assert centroid_distance(np.eye(2), lam) == pytest.approx(0.34729635533386066, abs=1e-12)

    @given(seeds)
    def test_symmetric_and_zero_under_swaps(self, seed):
        rng = make_rng(seed)
        a = random_unit(rng, 4, 6)
        b = random_unit(rng, 4, 6)
        assert centroid_distance(a, b) == pytest.approx(centroid_distance(b, a), abs=1e-12)
        assert centroid_distance(a, b) > 1e-3
        swapped = a[[1, 0, 3, 2]] * np.array([[1.0], [-1.0], [-1.0], [1.0]])
        assert centroid_distance(a, swapped) == pytest.approx(0.0, abs=1e-7)

    def test_three_cycle_is_not_zero(self):
        # both terms share the (j, l) pair, so only involutive relabelings give zero
        a = random_unit(make_rng(5), 3, 4)
        assert centroid_distance(a, a[[1, 2, 0]]) > 0.1

    def test_size_mismatch(self):
        with pytest.raises(SizeMismatch):
            centroid_distance(np.eye(2), np.eye(3)[:2])


class TestEmpiricalL1:
    def test_identical(self):
        a = random_unit(make_rng(3), 3, 4)
        assert empirical_l1_distance(a, a, make_rng(4).standard_normal((20, 4))) == 0.0

    def test_sign_flip(self):
        a = random_unit(make_rng(3), 3, 4)
        samples = make_rng(4).standard_normal((20, 4))
        assert empirical_l1_distance(a, -a, samples) == pytest.approx(0.0, abs=1e-12)

    def test_axes(self):
        assert empirical_l1_distance([e1], [e2], np.vstack([e1, e2])) == pytest.approx(1.0)

    def test_empty(self):
        with pytest.raises(EmptySamples):
            empirical_l1_distance([e1], [e2], np.zeros((0, 2)))


class TestEstimator:
    def test_fit_predict_transform(self):
        data = two_line_instance(0)
        est = KHyperlineClustering(n_clusters=2, n_init=2, random_state=1).fit(data)
        assert est.components_.shape == (2, 5)
        assert np.array_equal(est.predict(data), est.labels_)
        codes = est.transform(data)
        assert codes.shape == (40, 2)
        assert np.all(np.count_nonzero(codes, axis=1) <= 1)
        assert est.score(data) == pytest.approx(-est.distortion_)

    def test_params_roundtrip(self):
        est = KHyperlineClustering(n_clusters=3, max_iter=7)
        assert clone(est).get_params() == est.get_params()

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            KHyperlineClustering(2).fit(np.array([[np.nan, 1.0], [1.0, 0.0]]))
