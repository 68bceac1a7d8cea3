"""Brute-force exact diagonalization on the full Fock space.

Basis state ``e_{mu_1} (x) ... (x) e_{mu_d}`` has index
``sum_k mu_k 2^(d-1-k)``: site 0 is the slowest-varying index.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .tto import OperatorString

__all__ = [
    "DenseFockOperator",
    "dense_from_strings",
    "sector_operator",
    "sector_ground_state",
    "sector_states",
    "popcount",
]

DENSE_MAX_SITES = 14
SPARSE_MAX_SITES = 20
DENSE_SECTOR_MAX = 4096


@dataclass
class DenseFockOperator:
    """Operator on ``2^d`` states, stored dense or as a sparse matrix.

    When ``states`` is set the matrix is only the block on those basis
    states (in the given order).
    """

    d: int
    matrix: object
    states: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray() if sp.issparse(self.matrix) else np.asarray(self.matrix)


def popcount(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    out = np.zeros_like(x)
    while np.any(x):
        out += x & 1
        x = x >> 1
    return out


def sector_states(d: int, n: int) -> np.ndarray:
    """Basis indices with exactly ``n`` occupied sites, ascending."""
    if d > 26:
        raise ValueError("too many sites to enumerate")
    allx = np.arange(2**d, dtype=np.int64)
    return allx[popcount(allx) == n]


def _monomial_map(f: np.ndarray):
    """For a matrix with at most one nonzero per column, return
    ``(target_row, value)`` per column, or ``None`` if not monomial."""
    rows, vals = [], []
    for b in range(f.shape[1]):
        nz = np.flatnonzero(f[:, b])
        if len(nz) > 1:
            return None
        rows.append(nz[0] if len(nz) else 0)
        vals.append(f[nz[0], b] if len(nz) else 0.0)
    return np.array(rows), np.array(vals)


def _apply_monomial(string: OperatorString, cols: np.ndarray, d: int, maps):
    out = cols.copy()
    val = np.full(cols.shape, float(string.coefficient))
    for k, (rows, vals) in enumerate(maps):
        if rows is None:
            continue
        shift = d - 1 - k
        bit = (cols >> shift) & 1
        val *= vals[bit]
        out = (out & ~(np.int64(1) << shift)) | (rows[bit].astype(np.int64) << shift)
    return out, val


def _string_maps(string: OperatorString):
    maps = []
    for f in string.factors:
        if f.shape != (2, 2):
            return None
        if np.array_equal(f, np.eye(2)):
            maps.append((None, None))
            continue
        m = _monomial_map(f)
        if m is None:
            return None
        maps.append(m)
    return maps


def _kron_dense(string: OperatorString) -> np.ndarray:
    out = np.array([[string.coefficient]])
    for f in string.factors:
        out = np.kron(out, f)
    return out


def dense_from_strings(strings: Sequence[OperatorString], d: int) -> DenseFockOperator:
    """Exact sum of Kronecker products of the strings.

    Dense storage up to 14 sites, sparse (COO-assembled CSR) up to 20.
    """
    if d > SPARSE_MAX_SITES:
        raise MemoryError(f"{d} sites exceeds the oracle cap of {SPARSE_MAX_SITES}")
    for s in strings:
        if s.ndim != d:
            raise ValueError(f"string has {s.ndim} factors, expected {d}")
    dim = 2**d
    if d <= DENSE_MAX_SITES:
        mat = np.zeros((dim, dim))
        cols = np.arange(dim, dtype=np.int64)
        for s in strings:
            maps = _string_maps(s)
            if maps is None:
                mat += _kron_dense(s)
            else:
                rows, vals = _apply_monomial(s, cols, d, maps)
                np.add.at(mat, (rows, cols), vals)
        return DenseFockOperator(d, mat)
    return sector_operator(strings, d, None)


def sector_operator(strings: Sequence[OperatorString], d: int, n_electrons: int | None) -> DenseFockOperator:
    """Sparse block of the operator on the states with ``n_electrons`` particles.

    Only valid for strings whose factors are monomial 2x2 matrices (true
    for all Jordan-Wigner products). Strings must conserve the particle
    number when a sector is requested; leakage raises ``ValueError``.
    ``n_electrons=None`` keeps the whole space.
    """
    if d > SPARSE_MAX_SITES:
        raise MemoryError(f"{d} sites exceeds the oracle cap of {SPARSE_MAX_SITES}")
    states = np.arange(2**d, dtype=np.int64) if n_electrons is None else sector_states(d, n_electrons)
    pos = np.full(2**d, -1, dtype=np.int64)
    pos[states] = np.arange(len(states))
    rows_all, cols_all, vals_all = [], [], []
    cols = np.arange(len(states))
    for s in strings:
        maps = _string_maps(s)
        if maps is None:
            raise ValueError("sector assembly needs monomial 2x2 string factors")
        out, val = _apply_monomial(s, states, d, maps)
        keep = val != 0
        r = pos[out[keep]]
        if np.any(r < 0):
            raise ValueError("operator string leaves the particle-number sector")
        rows_all.append(r)
        cols_all.append(cols[keep])
        vals_all.append(val[keep])
    n = len(states)
    if rows_all:
        mat = sp.coo_matrix(
            (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))), shape=(n, n)
        ).tocsr()
    else:
        mat = sp.csr_matrix((n, n))
    return DenseFockOperator(d, mat, None if n_electrons is None else states)


def sector_ground_state(op: DenseFockOperator, n_electrons: int) -> tuple[float, np.ndarray]:
    """Lowest eigenpair within the ``n_electrons`` sector.

    Returns the energy and the normalized coefficient vector over the
    sector basis states (ascending index order), with its first nonzero
    coefficient made positive.
    """
    d = op.d
    if not 0 <= n_electrons <= d:
        raise ValueError(f"need 0 <= N <= d, got N={n_electrons}, d={d}")
    states = sector_states(d, n_electrons)
    if op.states is None:
        m = op.matrix
        block = m[states][:, states] if sp.issparse(m) else m[np.ix_(states, states)]
    else:
        if not np.array_equal(op.states, states):
            raise ValueError("operator block does not match the requested sector")
        block = op.matrix
    dim = len(states)
    if dim <= DENSE_SECTOR_MAX:
        dense = block.toarray() if sp.issparse(block) else np.asarray(block)
        w, v = np.linalg.eigh(0.5 * (dense + dense.T))
        e, vec = w[0], v[:, 0]
    else:
        w, v = eigsh(block, k=1, which="SA", tol=1e-12)
        e, vec = w[0], v[:, 0]
    vec = vec / np.linalg.norm(vec)
    nz = np.flatnonzero(np.abs(vec) > 1e-12)
    if len(nz) and vec[nz[0]] < 0:
        vec = -vec
    return float(e), vec


def sector_dimension(d: int, n: int) -> int:
    return comb(d, n)
