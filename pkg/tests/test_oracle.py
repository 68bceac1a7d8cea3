import numpy as np
import pytest
import scipy.sparse as sp

from fockline.fcidump import read_fcidump
from fockline.oracle import (
    DenseFockOperator,
    dense_from_strings,
    popcount,
    sector_dimension,
    sector_ground_state,
    sector_operator,
    sector_states,
)
from fockline.second_quantization import (
    I2,
    S,
    annihilation_string,
    creation_string,
    hamiltonian_strings,
)
from fockline.tto import OperatorString


def number_string(p, d):
    return creation_string(p, d) @ annihilation_string(p, d)


class TestDenseFromStrings:
    def test_identity(self):
        m = dense_from_strings([OperatorString(1.0, [I2] * 3)], 3).toarray()
        assert np.array_equal(m, np.eye(8))

    def test_number_on_first_site(self):
        """Site 0 is the slowest index of the basis ordering."""
        m = dense_from_strings([number_string(0, 2)], 2).toarray()
        assert np.array_equal(m, np.diag([0.0, 0.0, 1.0, 1.0]))

    def test_zero_coefficient(self):
        m = dense_from_strings([OperatorString(0.0, [I2] * 2)], 2).toarray()
        assert not np.any(m)

    def test_jordan_wigner_sign(self):
        """a_1^dag acting on |10> picks up the parity of site 0."""
        m = dense_from_strings([creation_string(1, 2)], 2).toarray()
        assert m[0b11, 0b10] == -1.0
        assert m[0b01, 0b00] == 1.0

    def test_non_monomial_factors_fall_back_to_kron(self, rng):
        f = rng.standard_normal((2, 2))
        m = dense_from_strings([OperatorString(2.0, [f, S])], 2).toarray()
        assert np.allclose(m, 2.0 * np.kron(f, S))

    def test_cap(self):
        with pytest.raises(MemoryError):
            sector_operator([], 22, 4)
        with pytest.raises(MemoryError):
            dense_from_strings([OperatorString(1.0, [I2] * 21)], 21)

    def test_factor_count_checked(self):
        with pytest.raises(ValueError):
            dense_from_strings([OperatorString(1.0, [I2] * 2)], 3)

    def test_sparse_matches_kron(self):
        d = 5
        strings = [number_string(p, d) for p in range(d)]
        strings.append(creation_string(0, d) @ annihilation_string(4, d))
        m = dense_from_strings(strings, d).toarray()
        ref = np.zeros((32, 32))
        for s in strings:
            k = np.array([[s.coefficient]])
            for f in s.factors:
                k = np.kron(k, f)
            ref += k
        assert np.array_equal(m, ref)


class TestSector:
    def test_states_and_dimension(self):
        st = sector_states(4, 2)
        assert len(st) == sector_dimension(4, 2) == 6
        assert np.all(popcount(st) == 2)
        assert list(st) == sorted(st)

    def test_diagonal_operator(self):
        d = 4
        eps = [0.3, -1.0, 0.5, -0.2]
        strings = [OperatorString(e, number_string(p, d).factors) for p, e in enumerate(eps)]
        e, vec = sector_ground_state(sector_operator(strings, d, 2), 2)
        assert e == pytest.approx(-1.2)
        states = sector_states(d, 2)
        assert states[np.argmax(np.abs(vec))] == 0b0101

    def test_empty_sector(self):
        e, vec = sector_ground_state(sector_operator([number_string(0, 3)], 3, 0), 0)
        assert e == 0.0 and vec.shape == (1,)

    def test_leakage_raises(self):
        with pytest.raises(ValueError, match="sector"):
            sector_operator([creation_string(0, 3)], 3, 1)

    def test_bad_electron_count(self):
        op = sector_operator([number_string(0, 2)], 2, None)
        with pytest.raises(ValueError):
            sector_ground_state(op, 3)

    def test_block_mismatch(self):
        op = sector_operator([number_string(0, 3)], 3, 1)
        with pytest.raises(ValueError):
            sector_ground_state(op, 2)

    def test_full_space_block_agrees(self, rng, random_integrals):
        ints = random_integrals(3, rng)
        strings = hamiltonian_strings(ints)
        full = sector_operator(strings, 6, None)
        block = sector_operator(strings, 6, 2)
        e1, v1 = sector_ground_state(full, 2)
        e2, v2 = sector_ground_state(block, 2)
        assert e1 == pytest.approx(e2, abs=1e-12)
        assert abs(abs(v1 @ v2) - 1) < 1e-9

    def test_sparse_sector_matches_dense(self, rng, random_integrals):
        ints = random_integrals(3, rng, n_electrons=3, ms2=1)
        strings = hamiltonian_strings(ints)
        dense = dense_from_strings(strings, 6).toarray()
        st = sector_states(6, 3)
        block = sector_operator(strings, 6, 3).toarray()
        assert np.max(np.abs(block - dense[np.ix_(st, st)])) < 1e-12

    def test_sign_convention(self):
        op = DenseFockOperator(2, sp.csr_matrix(np.array([[0.0, 0, 0, 0], [0, 1, -1, 0], [0, -1, 1, 0], [0, 0, 0, 0]])))
        e, vec = sector_ground_state(op, 1)
        assert e == pytest.approx(0.0, abs=1e-12)
        assert vec[0] > 0

    def test_h2_fci(self, data_dir, references):
        ints = read_fcidump(data_dir / "h2_sto3g.fcidump")
        e, _ = sector_ground_state(sector_operator(hamiltonian_strings(ints), 4, 2), 2)
        assert e + ints.e_core == pytest.approx(references["h2_sto3g"]["e_fci"], abs=1e-10)

    def test_li_fci(self, data_dir, references):
        ints = read_fcidump(data_dir / "li_631g.fcidump")
        d = 2 * ints.n_spatial
        op = sector_operator(hamiltonian_strings(ints), d, ints.n_electrons)
        e, _ = sector_ground_state(op, ints.n_electrons)
        assert e + ints.e_core == pytest.approx(references["li_631g"]["e_fci"], abs=1e-7)
