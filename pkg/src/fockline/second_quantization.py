"""Fermionic operators on the Fock space ``(R^2)^{(x) d}``.

Site ``k`` carries the occupation of spin orbital ``k`` (0-based), with
``e_0`` empty and ``e_1`` occupied. Creation and annihilation operators
use the Jordan-Wigner form ``S (x) ... (x) S (x) A (x) I (x) ... (x) I``.

Spatial orbitals are expanded into spin orbitals in interleaved order:
site ``2p`` is orbital ``p`` with spin alpha and site ``2p + 1`` is the
same orbital with spin beta.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .fcidump import MolecularIntegrals
from .tto import (
    OperatorString,
    StringAccumulator,
    TensorTrainOperator,
    compress,
    tto_from_strings,
)
from .tto import add as tto_add
from .tto import scale as tto_scale

__all__ = [
    "A",
    "A_DAG",
    "S",
    "I2",
    "N_OCC",
    "creation_string",
    "annihilation_string",
    "number_operator",
    "number_strings",
    "hamiltonian_strings",
    "penalty_strings",
    "FockProblem",
    "build_hamiltonian",
    "penalty_problem",
    "spectral_range_estimate",
    "default_penalty",
    "determinant_energy",
    "aufbau_occupation",
]

log = logging.getLogger(__name__)

A = np.array([[0.0, 1.0], [0.0, 0.0]])
A_DAG = A.T.copy()
S = np.diag([1.0, -1.0])
I2 = np.eye(2)
N_OCC = A_DAG @ A  # diag(0, 1)

SCREEN = 1e-12
MAX_SITES = 24


def _check_site(p: int, d: int):
    if d < 1:
        raise ValueError(f"need at least one site, got d={d}")
    if not 0 <= p < d:
        raise IndexError(f"site {p} out of range for d={d}")


def _ladder_string(p: int, d: int, local: np.ndarray) -> OperatorString:
    _check_site(p, d)
    return OperatorString(1.0, [S] * p + [local] + [I2] * (d - p - 1))


def creation_string(p: int, d: int) -> OperatorString:
    """``a_p^dagger`` with ``A^dagger`` on site ``p`` (0-based)."""
    return _ladder_string(p, d, A_DAG)


def annihilation_string(p: int, d: int) -> OperatorString:
    """``a_p`` with ``A`` on site ``p`` (0-based)."""
    return _ladder_string(p, d, A)


def _product_string(coeff: float, ops: Sequence[tuple[int, bool]], d: int) -> OperatorString:
    """String for ``coeff * op_1 op_2 ...`` with ``op = (site, is_creation)``.

    Equivalent to multiplying the Jordan-Wigner strings, but only touches
    the sites where the factor differs from a power of ``S``.
    """
    sites = np.array([p for p, _ in ops])
    factors = []
    for k in range(d):
        if k in sites:
            m = I2
            for p, dag in ops:
                m = m @ (S if k < p else (A_DAG if dag else A) if k == p else I2)
            factors.append(m)
        else:
            factors.append(S if np.count_nonzero(sites > k) % 2 else I2)
    return OperatorString(coeff, factors)


def number_strings(d: int) -> list[OperatorString]:
    return [OperatorString(1.0, [N_OCC if k == p else I2 for k in range(d)]) for p in range(d)]


def number_operator(d: int) -> TensorTrainOperator:
    """``P = sum_p a_p^dagger a_p``, compressed (interior ranks 2)."""
    if d < 1:
        raise ValueError("d must be positive")
    return compress(tto_from_strings(number_strings(d)), 1e-14)


def _spin_orbital_terms(h: np.ndarray, g: np.ndarray, screen: float) -> Iterator[tuple[float, tuple]]:
    """Yield ``(coeff, ops)`` for the spin-orbital Hamiltonian.

    Two-electron terms ``1/2 (pq|rs) a+_{p s} a+_{r t} a_{r s'} ...`` are
    brought to the canonical order ``a+_P a+_R a_S a_Q`` with ``P < R`` and
    ``S < Q`` and coefficients of identical operators are merged.
    """
    n = h.shape[0]
    for p in range(n):
        for q in range(n):
            if abs(h[p, q]) < screen:
                continue
            for sigma in (0, 1):
                yield h[p, q], ((2 * p + sigma, True), (2 * q + sigma, False))

    acc: dict[tuple, float] = {}
    nz = np.argwhere(np.abs(g) >= screen)
    for p, q, r, s in nz:
        v = 0.5 * g[p, q, r, s]
        for sigma in (0, 1):
            for tau in (0, 1):
                P, Q, R, Ss = 2 * p + sigma, 2 * q + sigma, 2 * r + tau, 2 * s + tau
                if P == R or Q == Ss:
                    continue
                # a+_P a+_R a_S a_Q
                sign = 1.0
                if P > R:
                    P, R = R, P
                    sign = -sign
                if Ss > Q:
                    Ss, Q = Q, Ss
                    sign = -sign
                key = (P, R, Ss, Q)
                acc[key] = acc.get(key, 0.0) + sign * v
    for (P, R, Ss, Q), c in sorted(acc.items()):
        if abs(c) >= screen:
            yield c, ((P, True), (R, True), (Ss, False), (Q, False))


def hamiltonian_strings(ints: MolecularIntegrals, ordering: Sequence[int] | None = None,
                        screen: float = SCREEN) -> list[OperatorString]:
    """Operator strings of the electronic Hamiltonian (without ``e_core``).

    ``H = sum h_pq a+_{p s} a_{q s} + 1/2 sum (pq|rs) a+_{p s} a+_{r t} a_{s t} a_{q s}``
    over spatial orbitals ``p, q, r, s`` and spins ``s, t``.
    """
    h, g = _ordered(ints, ordering)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
        raise ValueError("integrals contain NaN or infinite values")
    d = 2 * h.shape[0]
    return [_product_string(c, ops, d) for c, ops in _spin_orbital_terms(h, g, screen)]


def _ordered(ints: MolecularIntegrals, ordering):
    if ordering is None:
        return ints.h, ints.g
    ordering = np.asarray(ordering, dtype=int)
    if sorted(ordering.tolist()) != list(range(ints.n_spatial)):
        raise ValueError(f"ordering must be a permutation of 0..{ints.n_spatial - 1}")
    ix = np.ix_(ordering, ordering)
    return ints.h[ix], ints.g[np.ix_(ordering, ordering, ordering, ordering)]


def penalty_strings(d: int, n_electrons: int) -> list[OperatorString]:
    """Strings of ``(P - N)^2 = sum_{p != q} n_p n_q + (1 - 2N) sum_p n_p + N^2``."""
    strings = []
    for p in range(d):
        for q in range(d):
            if p != q:
                strings.append(OperatorString(1.0, [N_OCC if k in (p, q) else I2 for k in range(d)]))
    for p in range(d):
        strings.append(OperatorString(1.0 - 2.0 * n_electrons, [N_OCC if k == p else I2 for k in range(d)]))
    strings.append(OperatorString(float(n_electrons) ** 2, [I2] * d))
    return strings


@dataclass
class FockProblem:
    """Second-quantized Hamiltonian together with the electron count.

    Total energies are Fock-space eigenvalues plus ``e_core``.
    """

    d: int
    hamiltonian: TensorTrainOperator
    number_op: TensorTrainOperator
    n_electrons: int
    e_core: float = 0.0
    integrals: MolecularIntegrals | None = None


def build_hamiltonian(ints: MolecularIntegrals, ordering: Sequence[int] | None = None,
                      batch_size: int = 32, tol: float = 1e-12,
                      max_sites: int = MAX_SITES) -> FockProblem:
    """Assemble the compressed Hamiltonian TTO for ``ints``.

    Strings are summed ``batch_size`` at a time with intermediate
    compression at relative tolerance ``tol``.
    """
    d = 2 * ints.n_spatial
    if d > max_sites:
        raise MemoryError(
            f"{d} spin orbitals exceeds the cap of {max_sites}; "
            "Hamiltonian assembly cost grows like d^4 strings"
        )
    strings = hamiltonian_strings(ints, ordering)
    log.info("assembling Hamiltonian from %d strings on %d sites", len(strings), d)
    acc = StringAccumulator((2,) * d, batch_size=batch_size, tol=tol)
    acc.extend(strings)
    return FockProblem(
        d=d,
        hamiltonian=acc.result(),
        number_op=number_operator(d),
        n_electrons=ints.n_electrons,
        e_core=ints.e_core,
        integrals=ints,
    )


def penalty_problem(fp: FockProblem, mu: float, tol: float = 1e-12) -> TensorTrainOperator:
    """``H + mu (P - N)^2`` as a compressed TTO; ``mu == 0`` returns ``H``."""
    if mu < 0:
        raise ValueError("penalty weight must be non-negative")
    if mu == 0:
        return fp.hamiltonian
    pen = compress(tto_from_strings(penalty_strings(fp.d, fp.n_electrons)), tol)
    return compress(tto_add(fp.hamiltonian, tto_scale(pen, mu)), tol)


def spectral_range_estimate(ints: MolecularIntegrals) -> float:
    """Rough per-electron energy scale: ``||h||_2 + ||(pq|rs)||_2``.

    The second norm is that of the ``n^2 x n^2`` supermatrix of the
    two-electron integrals.
    """
    n = ints.n_spatial
    return float(np.linalg.norm(ints.h, 2) + np.linalg.norm(ints.g.reshape(n * n, n * n), 2))


def default_penalty(ints: MolecularIntegrals) -> float:
    return 10.0 * spectral_range_estimate(ints)


def determinant_energy(ints: MolecularIntegrals, occupied: Sequence[int]) -> float:
    """Electronic energy (without ``e_core``) of an occupation-number state.

    ``occupied`` lists spin-orbital sites in the interleaved ordering.
    """
    occ = sorted(set(int(k) for k in occupied))
    orb = np.array([k // 2 for k in occ], dtype=int)
    spin = np.array([k % 2 for k in occ], dtype=int)
    h, g = ints.h, ints.g
    coulomb = g[orb[:, None], orb[:, None], orb[None, :], orb[None, :]]
    exchange = g[orb[:, None], orb[None, :], orb[None, :], orb[:, None]]
    same = spin[:, None] == spin[None, :]
    return float(h[orb, orb].sum() + 0.5 * (coulomb - same * exchange).sum())


def aufbau_occupation(ints: MolecularIntegrals) -> list[int]:
    """Low-energy occupation-number state with the right electron and spin count.

    Starts from the lowest diagonal one-electron energies and then applies
    single same-spin moves while the determinant energy decreases.
    ``ms2`` fixes the split ``N_alpha - N_beta``.
    """
    n, N, ms2 = ints.n_spatial, ints.n_electrons, ints.ms2
    if (N + ms2) % 2 or abs(ms2) > N:
        raise ValueError(f"MS2={ms2} is inconsistent with {N} electrons")
    n_alpha, n_beta = (N + ms2) // 2, (N - ms2) // 2
    if max(n_alpha, n_beta) > n:
        raise ValueError(f"{N} electrons with MS2={ms2} do not fit in {n} orbitals")
    order = np.argsort(np.diag(ints.h), kind="stable")
    occ = {2 * int(p) for p in order[:n_alpha]} | {2 * int(p) + 1 for p in order[:n_beta]}
    best = determinant_energy(ints, occ)
    improved = True
    while improved:
        improved = False
        for i in sorted(occ):
            for a in range(i % 2, 2 * n, 2):
                if a in occ:
                    continue
                trial = (occ - {i}) | {a}
                e = determinant_energy(ints, trial)
                if e < best - 1e-12:
                    occ, best, improved = trial, e, True
                    break
            if improved:
                break
    return sorted(occ)
