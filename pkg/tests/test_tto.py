import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockline.second_quantization import I2, annihilation_string, number_operator
from fockline.tensor_train import inner_product, random_tt, rank_one, to_dense, tt_round
from fockline.tto import (
    OperatorString,
    StringAccumulator,
    TensorTrainOperator,
    apply,
    compress,
    identity,
    scale,
    transpose,
    tto_from_strings,
    tto_to_dense,
)


def kron_string(s: OperatorString) -> np.ndarray:
    out = np.array([[s.coefficient]])
    for f in s.factors:
        out = np.kron(out, f)
    return out


def random_string(rng, modes, symmetric=False):
    fs = []
    for n in modes:
        f = rng.standard_normal((n, n))
        fs.append(f + f.T if symmetric else f)
    return OperatorString(float(rng.standard_normal()), fs)


def random_tto(rng, modes, rank):
    d = len(modes)
    ranks = [1] + [rank] * (d - 1) + [1]
    return TensorTrainOperator([rng.standard_normal((ranks[j], n, n, ranks[j + 1])) for j, n in enumerate(modes)])


class TestFromStrings:
    def test_identity_string(self):
        op = tto_from_strings([OperatorString(1.0, [I2] * 3)])
        assert np.array_equal(tto_to_dense(op), np.eye(8))

    def test_two_string_example(self, rng):
        F, G = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        strings = [OperatorString(1.0, [F, F, F]), OperatorString(1.0, [G, G, G])]
        op = tto_from_strings(strings)
        assert op.ranks == (1, 2, 2, 1)
        ref = sum(kron_string(s) for s in strings)
        assert np.max(np.abs(tto_to_dense(op) - ref)) < 1e-12

    def test_zero_coefficient(self, rng):
        op = tto_from_strings([OperatorString(0.0, [rng.standard_normal((2, 2))] * 3)])
        assert not np.any(tto_to_dense(op))

    def test_empty_and_inconsistent(self):
        with pytest.raises(ValueError):
            tto_from_strings([])
        with pytest.raises(ValueError):
            tto_from_strings([OperatorString(1.0, [I2] * 2), OperatorString(1.0, [I2] * 3)])

    def test_non_square_factor_rejected(self):
        with pytest.raises(ValueError):
            OperatorString(1.0, [np.ones((2, 3))])

    def test_single_site(self, rng):
        strings = [random_string(rng, [3]) for _ in range(4)]
        op = tto_from_strings(strings)
        assert np.allclose(tto_to_dense(op), sum(kron_string(s) for s in strings))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 2**31 - 1))
    def test_dense_equivalence(self, d, m, seed):
        rng = np.random.default_rng(seed)
        strings = [random_string(rng, [2] * d) for _ in range(m)]
        op = tto_from_strings(strings)
        assert max(op.ranks) <= m
        ref = sum(kron_string(s) for s in strings)
        assert np.max(np.abs(tto_to_dense(op) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


class TestStringAlgebra:
    def test_matmul_is_sitewise(self, rng):
        a, b = random_string(rng, [2, 2, 2]), random_string(rng, [2, 2, 2])
        assert np.allclose(kron_string(a @ b), kron_string(a) @ kron_string(b))

    def test_transpose(self, rng):
        a = random_string(rng, [2, 3])
        assert np.allclose(kron_string(a.transpose()), kron_string(a).T)


class TestApply:
    def test_identity(self, rng):
        tt = random_tt([2, 3, 2], [2, 2], rng)
        assert np.allclose(to_dense(apply(identity(tt.mode_sizes), tt)), to_dense(tt), atol=1e-14)

    def test_number_operator_on_basis(self):
        e1, e0 = np.array([0.0, 1.0]), np.array([1.0, 0.0])
        tt = rank_one([e1, e0])
        out = apply(number_operator(2), tt)
        assert np.allclose(to_dense(out), to_dense(tt), atol=1e-14)

    def test_random_dense_matvec(self, rng):
        op = random_tto(rng, [2] * 4, 3)
        tt = random_tt([2] * 4, [2, 3, 2], rng)
        out = apply(op, tt)
        assert out.ranks == tuple(a * b for a, b in zip(op.ranks, tt.ranks))
        ref = tto_to_dense(op) @ to_dense(tt).ravel()
        assert np.max(np.abs(to_dense(out).ravel() - ref)) < 1e-12 * max(1.0, np.max(np.abs(ref)))

    def test_mode_mismatch(self, rng):
        with pytest.raises(ValueError):
            apply(identity([2, 2]), random_tt([2, 3], [1], rng))

    def test_matmul_operator(self, rng):
        op = random_tto(rng, [2, 2], 2)
        tt = random_tt([2, 2], [2], rng)
        assert np.allclose(to_dense(op @ tt), to_dense(apply(op, tt)))

    def test_apply_then_round(self, rng):
        op = random_tto(rng, [2] * 5, 2)
        tt = random_tt([2] * 5, [2] * 4, rng)
        out = tt_round(apply(op, tt), 1e-10)
        ref = tto_to_dense(op) @ to_dense(tt).ravel()
        assert np.linalg.norm(to_dense(out).ravel() - ref) <= 1e-10 * np.linalg.norm(ref) * 1.001

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**31 - 1))
    def test_transpose_adjoint(self, d, seed):
        rng = np.random.default_rng(seed)
        strings = [random_string(rng, [2] * d, symmetric=True) for _ in range(3)]
        op = tto_from_strings(strings)
        x = random_tt([2] * d, [2] * (d - 1), rng)
        y = random_tt([2] * d, [2] * (d - 1), rng)
        lhs = inner_product(apply(op, x), y)
        rhs = inner_product(x, apply(transpose(op), y))
        assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(lhs))


class TestCompress:
    def test_identity_stays_rank_one(self):
        assert compress(identity([2] * 4), 1e-3).ranks == (1,) * 5

    def test_repeated_string(self, rng):
        s = random_string(rng, [2] * 3)
        op = compress(tto_from_strings([s, s]), 1e-12)
        assert op.ranks == (1, 1, 1, 1)
        assert np.allclose(tto_to_dense(op), 2 * kron_string(s), atol=1e-12)

    def test_random_hamiltonian_small_error(self, rng):
        from fockline.fcidump import MolecularIntegrals
        from fockline.second_quantization import hamiltonian_strings

        n = 2
        h = rng.standard_normal((n, n))
        h = h + h.T
        g = rng.standard_normal((n, n, n, n))
        g = g + g.transpose(1, 0, 2, 3)
        g = g + g.transpose(0, 1, 3, 2)
        g = g + g.transpose(2, 3, 0, 1)
        strings = hamiltonian_strings(MolecularIntegrals(h, g, n_electrons=2))
        raw = tto_from_strings(strings)
        comp = compress(raw, 1e-10)
        assert max(comp.ranks) < max(raw.ranks)
        diff = tto_to_dense(comp) - tto_to_dense(raw)
        assert np.linalg.norm(diff, 2) < 1e-8

    def test_scale(self, rng):
        op = random_tto(rng, [2, 2, 2], 2)
        assert np.allclose(tto_to_dense(scale(op, -2.0)), -2.0 * tto_to_dense(op))


class TestDense:
    def test_identity(self):
        assert np.array_equal(tto_to_dense(identity([2, 2])), np.eye(4))

    def test_single_annihilator(self):
        s = annihilation_string(1, 3)
        assert np.array_equal(tto_to_dense(tto_from_strings([s])), kron_string(s))

    def test_cap(self):
        with pytest.raises(MemoryError):
            tto_to_dense(identity([2] * 15))


class TestAccumulator:
    @pytest.mark.parametrize("batch", [1, 3, 32])
    def test_matches_bulk_compression(self, rng, batch):
        d = 5
        strings = [random_string(rng, [2] * d) for _ in range(17)]
        acc = StringAccumulator((2,) * d, batch_size=batch, tol=1e-12)
        acc.extend(strings)
        assert acc.count == 17
        bulk = compress(tto_from_strings(strings), 1e-12)
        diff = tto_to_dense(acc.result()) - tto_to_dense(bulk)
        assert np.max(np.abs(diff)) < 1e-8

    def test_empty_gives_zero(self):
        acc = StringAccumulator((2, 2))
        assert not np.any(tto_to_dense(acc.result()))

    def test_shape_checks(self):
        acc = StringAccumulator((2, 2))
        with pytest.raises(ValueError):
            acc.add(OperatorString(1.0, [I2] * 3))
        with pytest.raises(ValueError):
            StringAccumulator((2,), batch_size=0)

    def test_number_operator_rank_two(self):
        op = number_operator(6)
        assert max(op.ranks) == 2
        diag = np.diag(tto_to_dense(op))
        assert np.allclose(diag, [bin(i).count("1") for i in range(64)], atol=1e-12, rtol=0)
        assert np.allclose(tto_to_dense(op), np.diag(diag), atol=1e-12, rtol=0)
