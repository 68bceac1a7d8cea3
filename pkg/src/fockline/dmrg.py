"""Single-site DMRG: alternating minimization of the Rayleigh quotient.

The state is kept in mixed-canonical form around the active site, so the
Rayleigh quotient restricted to one core is a standard symmetric
eigenproblem ``H_eff c = lambda c``. Left and right environments are
cached and updated as the canonical center moves.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import ArpackError, LinearOperator, eigsh

from .second_quantization import FockProblem, aufbau_occupation, default_penalty, penalty_problem
from .tensor_train import CanonicalForm, TensorTrain, inner_product, orthogonalize, tt_round
from .tto import TensorTrainOperator, apply

__all__ = [
    "DmrgConfig",
    "DmrgResult",
    "TraceEntry",
    "CanonicalFormError",
    "EigensolverError",
    "random_initial_tt",
    "reference_initial_tt",
    "effective_local_problem",
    "DmrgEngine",
    "sweep",
    "ground_state",
    "run_dmrg",
    "rayleigh_quotient",
]

log = logging.getLogger(__name__)


class CanonicalFormError(ValueError):
    pass


class EigensolverError(RuntimeError):
    def __init__(self, site, message):
        super().__init__(f"local eigensolver failed at site {site}: {message}")
        self.site = site


@dataclass
class DmrgConfig:
    """Settings for a DMRG run.

    ``local_solver`` is ``"dense"``, ``"iterative"`` (Lanczos) or
    ``"auto"``, which picks dense up to ``dense_limit`` local unknowns.
    ``mu=None`` selects the default particle-number penalty weight.

    ``init`` applies to :func:`run_dmrg`: ``"reference"`` starts from the
    lowest-energy occupation determinant plus ``init_noise`` times random
    normal cores, ``"random"`` from fully random cores. When
    ``warmup_factor * max_rank`` exceeds ``max_rank`` a first run at that
    larger rank is rounded down to ``max_rank`` and used as the start.
    """

    max_rank: int = 6
    max_sweeps: int = 50
    energy_tol: float = 1e-8
    mu: float | None = None
    local_solver: str = "auto"
    seed: int = 0
    dense_limit: int = 512
    lanczos_tol: float = 1e-10
    init: str = "reference"
    init_noise: float = 1e-2
    warmup_factor: float = 2.0

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError("max_rank must be at least 1")
        if self.energy_tol <= 0:
            raise ValueError("energy_tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.local_solver not in ("auto", "dense", "iterative"):
            raise ValueError(f"unknown local solver {self.local_solver!r}")
        if self.init not in ("reference", "random"):
            raise ValueError(f"unknown initial state {self.init!r}")

    @property
    def warmup_rank(self) -> int:
        return int(np.ceil(self.warmup_factor * self.max_rank))


@dataclass
class TraceEntry:
    sweep: int
    half: str
    site: int
    energy: float


@dataclass
class DmrgResult:
    energy: float
    energy_trace: list = field(default_factory=list)
    final_state: TensorTrain | None = None
    particle_number_expectation: float = float("nan")
    penalty_expectation: float = float("nan")
    converged: bool = False
    sweeps: int = 0
    sweep_energies: list = field(default_factory=list)
    warmup_energy: float | None = None


def _uniform_ranks(d, r):
    return [1] + [min(r, 2**j, 2 ** (d - j)) for j in range(1, d)] + [1]


def _normalized_right(cores) -> TensorTrain:
    tt = orthogonalize(TensorTrain(cores), "right")
    c0 = tt.cores[0] / np.linalg.norm(tt.cores[0])
    return TensorTrain([c0, *tt.cores[1:]], CanonicalForm("mixed", 0))


def random_initial_tt(d: int, r: int, seed=None) -> TensorTrain:
    """Random normalized, right-orthogonal train on ``(R^2)^(x)d``.

    Interior ranks are ``min(r, 2^j, 2^(d-j))``.
    """
    if r < 1:
        raise ValueError("rank must be at least 1")
    rng = np.random.default_rng(seed)
    ranks = _uniform_ranks(d, r)
    return _normalized_right([rng.standard_normal((ranks[j], 2, ranks[j + 1])) for j in range(d)])


def reference_initial_tt(d: int, occupied, r: int, seed=None, noise: float = 1e-2) -> TensorTrain:
    """Occupation-number basis state plus ``noise`` times random cores.

    The basis state sits in the leading ``1 x 2 x 1`` corner of rank-``r``
    cores; the random part fills every bond direction so that single-site
    updates can use them.
    """
    if r < 1:
        raise ValueError("rank must be at least 1")
    occupied = set(int(p) for p in occupied)
    rng = np.random.default_rng(seed)
    ranks = _uniform_ranks(d, r)
    cores = []
    for j in range(d):
        c = noise * rng.standard_normal((ranks[j], 2, ranks[j + 1]))
        c[0, 1 if j in occupied else 0, 0] += 1.0
        cores.append(c)
    return _normalized_right(cores)


def rayleigh_quotient(op: TensorTrainOperator, tt: TensorTrain) -> float:
    return inner_product(tt, apply(op, tt)) / inner_product(tt, tt)


# environment shapes: L (a, w, a') over sites left of the center,
# R (b, w, b') over sites right of it; unprimed indices belong to the bra.

def _extend_left(L, core, w):
    t = np.tensordot(L, core, axes=(2, 0))            # (a, w, i', b')
    t = np.tensordot(t, w, axes=((1, 2), (0, 2)))     # (a, b', i, w')
    return np.tensordot(core, t, axes=((0, 1), (0, 2))).transpose(0, 2, 1)  # (b, w', b')


def _extend_right(R, core, w):
    t = np.tensordot(core, R, axes=(2, 2))            # (a', i', b, w)
    t = np.tensordot(t, w, axes=((1, 3), (2, 3)))     # (a', b, w_l, i)
    t = np.tensordot(core, t, axes=((1, 2), (3, 1)))  # (a, a', w_l)
    return t.transpose(0, 2, 1)


def _local_matrix(L, w, R):
    t = np.tensordot(L, w, axes=(1, 0))               # (a, a', i, i', w')
    t = np.tensordot(t, R, axes=(4, 1))               # (a, a', i, i', b, b')
    t = t.transpose(0, 2, 4, 1, 3, 5)
    n = t.shape[0] * t.shape[1] * t.shape[2]
    m = t.reshape(n, n)
    return 0.5 * (m + m.T)


def _local_matvec(L, w, R, x):
    t = np.tensordot(L, x, axes=(2, 0))               # (a, w, i', b')
    t = np.tensordot(t, w, axes=((1, 2), (0, 2)))     # (a, b', i, w')
    t = np.tensordot(t, R, axes=((1, 3), (2, 1)))     # (a, i, b)
    return t


def _is_left_orth(core, tol):
    m = core.reshape(-1, core.shape[2])
    return np.allclose(m.T @ m, np.eye(m.shape[1]), atol=tol, rtol=0)


def _is_right_orth(core, tol):
    m = core.reshape(core.shape[0], -1)
    return np.allclose(m @ m.T, np.eye(m.shape[0]), atol=tol, rtol=0)


def check_canonical(tt: TensorTrain, k: int, tol: float = 1e-10):
    """Raise :class:`CanonicalFormError` unless ``tt`` is mixed-canonical at ``k``."""
    for j, c in enumerate(tt.cores):
        if j < k and not _is_left_orth(c, tol):
            raise CanonicalFormError(f"core {j} is not left-orthonormal")
        if j > k and not _is_right_orth(c, tol):
            raise CanonicalFormError(f"core {j} is not right-orthonormal")


def effective_local_problem(op: TensorTrainOperator, state: TensorTrain, k: int,
                            check: bool = True) -> np.ndarray:
    """Environment-contracted operator acting on the flattened core ``k``.

    The state must be mixed-canonical at ``k``; the returned symmetric
    matrix has size ``r_k * n_k * r_{k+1}``.
    """
    if op.mode_sizes != state.mode_sizes:
        raise ValueError("operator and state mode sizes differ")
    if not 0 <= k < state.ndim:
        raise IndexError(f"site {k} out of range")
    if check:
        check_canonical(state, k)
    L = np.ones((1, 1, 1))
    for j in range(k):
        L = _extend_left(L, state.cores[j], op.cores[j])
    R = np.ones((1, 1, 1))
    for j in range(state.ndim - 1, k, -1):
        R = _extend_right(R, state.cores[j], op.cores[j])
    return _local_matrix(L, op.cores[k], R)


class DmrgEngine:
    """Mutable sweep state for one DMRG run on a symmetric TTO."""

    def __init__(self, op: TensorTrainOperator, state: TensorTrain, config: DmrgConfig | None = None):
        if op.mode_sizes != state.mode_sizes:
            raise ValueError("operator and state mode sizes differ")
        self.op = op
        self.config = config or DmrgConfig()
        self.d = state.ndim
        cf = state.canonical
        if not (cf.kind in ("right", "mixed") and cf.site == 0):
            state = orthogonalize(state, "right")
        self.cores = list(state.cores)
        self.cores[0] = self.cores[0] / np.linalg.norm(self.cores[0])
        self.trace: list[TraceEntry] = []
        self.n_sweeps = 0
        one = np.ones((1, 1, 1))
        self.left = [one] + [None] * (self.d - 1)
        self.right = [None] * (self.d - 1) + [one]
        for j in range(self.d - 1, 0, -1):
            self.right[j - 1] = _extend_right(self.right[j], self.cores[j], op.cores[j])

    @property
    def state(self) -> TensorTrain:
        return TensorTrain(self.cores, CanonicalForm("mixed", 0))

    def _solve(self, k):
        L, R, w = self.left[k], self.right[k], self.op.cores[k]
        prev = self.cores[k]
        shape = prev.shape
        n = prev.size
        solver = self.config.local_solver
        if solver == "auto":
            solver = "dense" if n <= self.config.dense_limit else "iterative"
        if solver == "dense" or n < 3:
            h = _local_matrix(L, w, R)
            if not np.all(np.isfinite(h)):
                raise EigensolverError(k, "non-finite effective operator")
            try:
                vals, vecs = np.linalg.eigh(h)
            except np.linalg.LinAlgError as e:
                raise EigensolverError(k, str(e)) from e
            e0 = vals[0]
            deg = np.flatnonzero(vals <= e0 + 1e-10 * max(1.0, abs(e0)))
            vec = vecs[:, 0]
            if len(deg) > 1:
                # degenerate: stay as close as possible to the previous core
                sub = vecs[:, deg]
                proj = sub @ (sub.T @ prev.ravel())
                pn = np.linalg.norm(proj)
                if pn > 1e-8:
                    vec = proj / pn
        else:
            mv = LinearOperator((n, n), matvec=lambda x: _local_matvec(L, w, R, x.reshape(shape)).ravel(),
                                dtype=float)
            try:
                vals, vecs = eigsh(mv, k=1, which="SA", v0=prev.ravel(), tol=self.config.lanczos_tol)
            except ArpackError as e:
                raise EigensolverError(k, str(e)) from e
            e0, vec = vals[0], vecs[:, 0]
        if np.dot(vec, prev.ravel()) < 0:
            vec = -vec
        return float(e0), vec.reshape(shape)

    def sweep(self) -> float:
        """One forward and one backward half-sweep; returns the last energy."""
        d, op = self.d, self.op
        self.n_sweeps += 1
        energy = None
        if d == 1:
            energy, self.cores[0] = self._solve(0)
            self.trace.append(TraceEntry(self.n_sweeps, "forward", 0, energy))
            return energy
        for k in range(d - 1):
            energy, core = self._solve(k)
            self.trace.append(TraceEntry(self.n_sweeps, "forward", k, energy))
            r0, n, r1 = core.shape
            q, r = np.linalg.qr(core.reshape(r0 * n, r1))
            self.cores[k] = q.reshape(r0, n, q.shape[1])
            self.cores[k + 1] = np.tensordot(r, self.cores[k + 1], axes=(1, 0))
            self.left[k + 1] = _extend_left(self.left[k], self.cores[k], op.cores[k])
        for k in range(d - 1, 0, -1):
            energy, core = self._solve(k)
            self.trace.append(TraceEntry(self.n_sweeps, "backward", k, energy))
            r0, n, r1 = core.shape
            q, r = np.linalg.qr(core.reshape(r0, n * r1).T)
            self.cores[k] = q.T.reshape(q.shape[1], n, r1)
            self.cores[k - 1] = np.tensordot(self.cores[k - 1], r.T, axes=(2, 0))
            self.right[k - 1] = _extend_right(self.right[k], self.cores[k], op.cores[k])
        return energy


def sweep(op: TensorTrainOperator, state: TensorTrain, config: DmrgConfig | None = None):
    """Run one full sweep from ``state``; returns ``(new_state, energy)``."""
    eng = DmrgEngine(op, state, config)
    e = eng.sweep()
    return eng.state, e


def ground_state(op: TensorTrainOperator, config: DmrgConfig | None = None,
                 initial: TensorTrain | None = None, offset: float = 0.0) -> DmrgResult:
    """Sweep until the relative energy change between sweeps drops below
    ``config.energy_tol`` or ``config.max_sweeps`` is reached.

    ``offset`` is added to every reported energy.
    """
    config = config or DmrgConfig()
    if initial is None:
        initial = random_initial_tt(op.ndim, config.max_rank, config.seed)
    eng = DmrgEngine(op, initial, config)
    previous = None
    converged = False
    sweep_energies = []
    while eng.n_sweeps < config.max_sweeps:
        e = eng.sweep()
        sweep_energies.append(e + offset)
        log.debug("sweep %d: E = %.12f", eng.n_sweeps, e + offset)
        if previous is not None:
            scale = abs(e + offset) if e + offset != 0 else 1.0
            if abs(e - previous) / scale < config.energy_tol:
                converged = True
                break
        previous = e
    trace = [TraceEntry(t.sweep, t.half, t.site, t.energy + offset) for t in eng.trace]
    return DmrgResult(
        energy=sweep_energies[-1],
        energy_trace=trace,
        final_state=eng.state,
        converged=converged,
        sweeps=eng.n_sweeps,
        sweep_energies=sweep_energies,
    )


def _initial_state(fp: FockProblem, r: int, config: DmrgConfig) -> TensorTrain:
    if config.init == "random":
        return random_initial_tt(fp.d, r, config.seed)
    if fp.integrals is not None:
        occ = aufbau_occupation(fp.integrals)
    else:
        occ = range(fp.n_electrons)
    return reference_initial_tt(fp.d, occ, r, config.seed, config.init_noise)


def run_dmrg(fp: FockProblem, config: DmrgConfig | None = None,
             initial: TensorTrain | None = None) -> DmrgResult:
    """Ground-state energy of ``fp`` in its ``n_electrons`` sector.

    Minimizes the Rayleigh quotient of ``H + mu (P - N)^2``, starting from
    ``initial`` if given and otherwise as described in :class:`DmrgConfig`.
    The reported ``energy`` is ``<H> + e_core`` of the final state; the
    trace holds the penalized objective plus ``e_core``.
    """
    config = config or DmrgConfig()
    mu = config.mu
    if mu is None:
        if fp.integrals is None:
            raise ValueError("no penalty weight given and no integrals to estimate one")
        mu = default_penalty(fp.integrals)
    op = penalty_problem(fp, mu)
    warmup_energy = None
    if initial is None:
        start_rank = max(config.warmup_rank, config.max_rank)
        initial = _initial_state(fp, start_rank, config)
        if start_rank > config.max_rank:
            warm = ground_state(op, replace(config, max_rank=start_rank), initial, offset=fp.e_core)
            warmup_energy = warm.energy
            log.info("warm-up at rank %d: E = %.10f", start_rank, warm.energy)
            initial = tt_round(warm.final_state, 0.0, config.max_rank)
    res = ground_state(op, config, initial, offset=fp.e_core)
    res.warmup_energy = warmup_energy
    tt = res.final_state
    norm2 = inner_product(tt, tt)
    h_expect = inner_product(tt, apply(fp.hamiltonian, tt)) / norm2
    ptt = apply(fp.number_op, tt)
    n_expect = inner_product(tt, ptt) / norm2
    n2_expect = inner_product(ptt, ptt) / norm2
    n = fp.n_electrons
    res.energy = h_expect + fp.e_core
    res.particle_number_expectation = n_expect
    res.penalty_expectation = n2_expect - 2 * n * n_expect + n * n
    if abs(n_expect - n) > 1e-3:
        warnings.warn(f"<P> = {n_expect:.6f} differs from N = {n}; increase the penalty weight")
    return res
