import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mldict.exceptions import DictMismatch, DimensionMismatch
from mldict.mld import MultilevelDictionary, RobustMultilevelDictionary
from mldict.numerics import make_rng
from mldict.pursuit import (
    EnsembleCode,
    OpCounter,
    SparseCode,
    mulp_encode,
    reconstruct,
    rmld_encode,
    stacked_coefficients,
)
from oracles import brute_argmax

seeds = st.integers(0, 2**32 - 1)


def random_dict(rng, Ks, M):
    levels = []
    for K in Ks:
        a = rng.standard_normal((K, M))
        levels.append(a / np.linalg.norm(a, axis=1, keepdims=True))
    return MultilevelDictionary(tuple(levels))


def random_rdict(rng, Ks, M, D):
    return RobustMultilevelDictionary(
        tuple(tuple(random_dict(rng, [K], M).levels[0] for _ in range(D)) for K in Ks)
    )


class TestMulp:
    def test_axes_example(self):
        d = MultilevelDictionary((np.eye(2), np.array([[1.0, 0.0]])))
        code = mulp_encode(np.array([3.0, 4.0]), d)
        assert list(code.indices) == [1, 0]
        assert list(code.coefficients) == [4.0, 3.0]
        assert np.all(code.residual == 0)

    def test_zero_vector(self):
        d = random_dict(make_rng(0), [3, 3], 4)
        code = mulp_encode(np.zeros(4), d)
        assert np.all(code.indices == 0) and np.all(code.coefficients == 0)
        assert np.all(code.residual == 0)

    @given(seeds)
    def test_greedy_choice_identity_and_monotone(self, seed):
        rng = make_rng(seed)
        d = random_dict(rng, [4, 4, 4], 8)
        y = rng.standard_normal(8)
        code = mulp_encode(y, d)
        r = y.copy()
        norms = [np.linalg.norm(r)]
        for l, atoms in enumerate(d.levels):
            assert code.indices[l] == brute_argmax(r, atoms)
            prev = r.copy()
            r = r - code.coefficients[l] * atoms[code.indices[l]]
            assert abs(atoms[code.indices[l]] @ r) <= 1e-10 * max(np.linalg.norm(prev), 1e-300)
            norms.append(np.linalg.norm(r))
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))
        np.testing.assert_allclose(r, code.residual, atol=1e-12)
        energy = float(np.sum(code.coefficients**2) + code.residual @ code.residual)
        assert energy == pytest.approx(float(y @ y), rel=1e-10)

    @given(seeds)
    def test_roundtrip(self, seed):
        rng = make_rng(seed)
        d = random_dict(rng, [5, 3], 6)
        Y = rng.standard_normal((100, 6))
        code = mulp_encode(Y, d)
        err = np.linalg.norm(Y - (reconstruct(code, d) + code.residual), axis=1)
        assert np.all(err <= 1e-10 * np.linalg.norm(Y, axis=1))

    def test_fewer_levels_and_mse_monotone(self):
        rng = make_rng(3)
        d = random_dict(rng, [6, 6, 6, 6], 8)
        Y = rng.standard_normal((200, 8))
        mse = [float(np.mean(mulp_encode(Y, d, k).residual ** 2)) for k in range(5)]
        assert all(b <= a for a, b in zip(mse, mse[1:]))
        assert mulp_encode(Y, d, 2).levels_used == 2

    def test_reconstruct_single_atom(self):
        d = MultilevelDictionary((np.eye(3),))
        code = mulp_encode(np.array([1.0, 0.0, 0.0]), d)
        np.testing.assert_array_equal(reconstruct(code, d), [1.0, 0.0, 0.0])

    def test_zero_code(self):
        d = random_dict(make_rng(1), [2], 3)
        code = SparseCode(np.zeros(1, dtype=np.int64), np.zeros(1), np.zeros(3))
        np.testing.assert_array_equal(reconstruct(code, d), np.zeros(3))

    def test_dimension_errors(self):
        d = random_dict(make_rng(1), [2, 2], 3)
        with pytest.raises(DimensionMismatch):
            mulp_encode(np.ones(4), d)
        with pytest.raises(DimensionMismatch):
            mulp_encode(np.ones(3), d, 3)
        code = mulp_encode(np.ones(3), d)
        with pytest.raises(DictMismatch):
            reconstruct(code, d.truncate(1))
        with pytest.raises(DictMismatch):
            reconstruct(code, random_dict(make_rng(2), [2, 2], 4))

    def test_op_count_contract(self):
        rng = make_rng(4)
        d = random_dict(rng, [3, 5], 7)
        counter = OpCounter()
        mulp_encode(rng.standard_normal((10, 7)), d, counter=counter)
        assert counter.multiply_adds == 10 * 7 * (4 + 6)

    def test_stacked_coefficients(self):
        rng = make_rng(5)
        d = random_dict(rng, [3, 2], 4)
        Y = rng.standard_normal((6, 4))
        code = mulp_encode(Y, d)
        A = stacked_coefficients(code, d)
        assert A.shape == (6, 5)
        np.testing.assert_allclose(A @ d.stacked(), reconstruct(code, d), atol=1e-12)


class TestRmld:
    @given(seeds)
    def test_single_round_equals_mulp(self, seed):
        rng = make_rng(seed)
        d = random_dict(rng, [4, 3], 5)
        rd = RobustMultilevelDictionary(tuple((a,) for a in d.levels))
        Y = rng.standard_normal((20, 5))
        a, b = mulp_encode(Y, d), rmld_encode(Y, rd)
        assert np.array_equal(a.indices, b.indices[..., 0])
        assert np.array_equal(a.coefficients, b.coefficients[..., 0])
        assert np.array_equal(a.residual, b.residual)

    def test_identical_rounds_average_to_single(self):
        rng = make_rng(2)
        d = random_dict(rng, [4, 3], 5)
        rd = RobustMultilevelDictionary(tuple((a, a, a) for a in d.levels))
        Y = rng.standard_normal((20, 5))
        np.testing.assert_allclose(rmld_encode(Y, rd).residual, mulp_encode(Y, d).residual, atol=1e-12)

    @given(seeds)
    def test_identity_and_monotone(self, seed):
        rng = make_rng(seed)
        rd = random_rdict(rng, [4, 4, 4], 6, 3)
        Y = rng.standard_normal((30, 6))
        code = rmld_encode(Y, rd)
        assert isinstance(code, EnsembleCode) and code.rounds == 3
        np.testing.assert_allclose(reconstruct(code, rd) + code.residual, Y, atol=1e-10)
        energies = [float(np.sum(rmld_encode(Y, rd, k).residual ** 2)) for k in range(4)]
        assert all(b <= a + 1e-9 for a, b in zip(energies, energies[1:]))

    def test_op_count(self):
        rng = make_rng(3)
        rd = random_rdict(rng, [3, 5], 4, 2)
        c = OpCounter()
        rmld_encode(rng.standard_normal((5, 4)), rd, counter=c)
        assert c.multiply_adds == 2 * 5 * 4 * (4 + 6)

    def test_mismatched_code_kinds(self):
        rng = make_rng(1)
        d = random_dict(rng, [2], 3)
        rd = random_rdict(rng, [2], 3, 2)
        with pytest.raises(DictMismatch):
            reconstruct(mulp_encode(np.ones(3), d), rd)
        with pytest.raises(DictMismatch):
            reconstruct(rmld_encode(np.ones(3), rd), d)

    def test_stacked_ensemble_coefficients(self):
        rng = make_rng(6)
        rd = random_rdict(rng, [3, 2], 4, 2)
        Y = rng.standard_normal((5, 4))
        code = rmld_encode(Y, rd)
        A = stacked_coefficients(code, rd)
        atoms = np.vstack([a for lvl in rd.levels for a in lvl])
        np.testing.assert_allclose(A @ atoms, reconstruct(code, rd), atol=1e-12)
