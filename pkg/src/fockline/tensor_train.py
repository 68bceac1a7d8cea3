"""Tensor trains (matrix product states) with real cores.

A tensor train of order ``d`` is stored as a list of order-3 cores, core ``j``
having shape ``(r[j], n[j], r[j+1])`` with ``r[0] == r[d] == 1``. Entry
``(i_1, ..., i_d)`` is the matrix product ``C_1[i_1] @ ... @ C_d[i_d]``.

All indices are 0-based in this module.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

__all__ = [
    "CanonicalForm",
    "TensorTrain",
    "evaluate_entry",
    "inner_product",
    "norm",
    "add",
    "scale",
    "orthogonalize",
    "tt_round",
    "truncation_rank",
    "zeros",
    "rank_one",
    "random_tt",
    "from_dense",
    "to_dense",
    "save",
    "load",
]

DENSE_CAP = 2**22
_MAGIC = b"TTv1"


@dataclass(frozen=True)
class CanonicalForm:
    """Orthogonality tag of a tensor train.

    ``kind == "left"`` means cores ``0..site-1`` are left-orthonormal
    (their ``(r_left * n, r_right)`` unfolding has orthonormal columns).
    ``kind == "right"`` means cores ``site+1..d-1`` are right-orthonormal.
    ``kind == "mixed"`` means both hold around ``site``.
    """

    kind: str = "none"
    site: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "left", "right", "mixed"):
            raise ValueError(f"unknown canonical form {self.kind!r}")


class TensorTrain:
    """Immutable tensor train.

    Parameters
    ----------
    cores : sequence of ndarray
        Order-3 cores, core ``j`` of shape ``(r_j, n_j, r_{j+1})``.
    canonical : CanonicalForm, optional
        Orthogonality tag. It is trusted, not verified; see
        :func:`check_canonical`.
    """

    def __init__(self, cores: Sequence[np.ndarray], canonical: CanonicalForm | None = None):
        cores = [np.array(c, dtype=float) for c in cores]
        if len(cores) == 0:
            raise ValueError("a tensor train needs at least one core")
        for j, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {j} has order {c.ndim}, expected 3")
            if min(c.shape) < 1:
                raise ValueError(f"core {j} has an empty dimension {c.shape}")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary ranks must be 1")
        for j in range(len(cores) - 1):
            if cores[j].shape[2] != cores[j + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {j} and {j + 1}: "
                    f"{cores[j].shape[2]} != {cores[j + 1].shape[0]}"
                )
        for c in cores:
            c.flags.writeable = False
        self._cores = tuple(cores)
        self.canonical = canonical or CanonicalForm()

    @property
    def cores(self) -> tuple[np.ndarray, ...]:
        return self._cores

    @property
    def ndim(self) -> int:
        return len(self._cores)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self._cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self._cores)

    @property
    def storage(self) -> int:
        """Number of stored floats, ``sum_j n_j r_{j-1} r_j``."""
        return sum(c.size for c in self._cores)

    def __repr__(self):
        return f"TensorTrain(mode_sizes={self.mode_sizes}, ranks={self.ranks})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, alpha):
        return scale(self, alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))


def _check_same_modes(a: TensorTrain, b: TensorTrain):
    if a.mode_sizes != b.mode_sizes:
        raise ValueError(f"mode sizes differ: {a.mode_sizes} vs {b.mode_sizes}")


def evaluate_entry(tt: TensorTrain, index: Sequence[int]) -> float:
    """Return a single entry as the product of the selected core slices."""
    index = tuple(int(i) for i in index)
    if len(index) != tt.ndim:
        raise IndexError(f"expected {tt.ndim} indices, got {len(index)}")
    v = np.ones((1,))
    for j, (i, c) in enumerate(zip(index, tt.cores)):
        if not 0 <= i < c.shape[1]:
            raise IndexError(f"index {i} out of range for mode {j} of size {c.shape[1]}")
        v = v @ c[:, i, :]
    return float(v[0])


def inner_product(a: TensorTrain, b: TensorTrain) -> float:
    """Euclidean inner product, contracted right to left.

    The cost is ``O(d n r^3)``; the full tensor is never formed.
    """
    _check_same_modes(a, b)
    env = np.ones((1, 1))
    for ca, cb in zip(reversed(a.cores), reversed(b.cores)):
        # env[a', b'] -> sum_i ca[a, i, a'] env[a', b'] cb[b, i, b']
        tmp = np.tensordot(ca, env, axes=(2, 0))  # (a, i, b')
        env = np.tensordot(tmp, cb, axes=((1, 2), (1, 2)))
    return float(env[0, 0])


def norm(tt: TensorTrain) -> float:
    if tt.canonical.kind in ("left", "mixed") and tt.canonical.site == tt.ndim - 1:
        return float(np.linalg.norm(tt.cores[-1]))
    if tt.canonical.kind in ("right", "mixed") and tt.canonical.site == 0:
        return float(np.linalg.norm(tt.cores[0]))
    return float(np.sqrt(max(inner_product(tt, tt), 0.0)))


def scale(tt: TensorTrain, alpha: float) -> TensorTrain:
    cores = list(tt.cores)
    # put the factor on the core that carries the norm, when there is one
    k = tt.canonical.site if tt.canonical.kind != "none" else 0
    cores[k] = cores[k] * alpha
    return TensorTrain(cores, tt.canonical)


def add(a: TensorTrain, b: TensorTrain) -> TensorTrain:
    """Entrywise sum; interior ranks add up."""
    _check_same_modes(a, b)
    d = a.ndim
    if d == 1:
        return TensorTrain([a.cores[0] + b.cores[0]])
    cores = []
    for j, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        ra0, n, ra1 = ca.shape
        rb0, _, rb1 = cb.shape
        if j == 0:
            cores.append(np.concatenate([ca, cb], axis=2))
        elif j == d - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            c = np.zeros((ra0 + rb0, n, ra1 + rb1))
            c[:ra0, :, :ra1] = ca
            c[ra0:, :, ra1:] = cb
            cores.append(c)
    return TensorTrain(cores)


def _qr_left(core: np.ndarray):
    """Split ``core`` into a left-orthonormal core and the remainder."""
    r0, n, r1 = core.shape
    q, r = np.linalg.qr(core.reshape(r0 * n, r1))
    return q.reshape(r0, n, q.shape[1]), r


def _qr_right(core: np.ndarray):
    """Split ``core`` into the remainder and a right-orthonormal core."""
    r0, n, r1 = core.shape
    q, r = np.linalg.qr(core.reshape(r0, n * r1).T)
    return r.T, q.T.reshape(q.shape[1], n, r1)


def orthogonalize(tt: TensorTrain, direction: str = "left") -> TensorTrain:
    """Return the same tensor with left- or right-orthonormal cores.

    With ``direction="left"`` every core but the last is left-orthonormal
    and the last core carries the norm; ``"right"`` is the mirror image.
    Ranks may shrink where they exceed the unfolding dimension.
    """
    cores = [c.copy() for c in tt.cores]
    d = len(cores)
    if direction == "left":
        for j in range(d - 1):
            cores[j], r = _qr_left(cores[j])
            cores[j + 1] = np.tensordot(r, cores[j + 1], axes=(1, 0))
        return TensorTrain(cores, CanonicalForm("left", d - 1))
    if direction == "right":
        for j in range(d - 1, 0, -1):
            r, cores[j] = _qr_right(cores[j])
            cores[j - 1] = np.tensordot(cores[j - 1], r, axes=(2, 0))
        return TensorTrain(cores, CanonicalForm("right", 0))
    raise ValueError(f"direction must be 'left' or 'right', got {direction!r}")


def truncation_rank(s: np.ndarray, delta: float, max_rank: int | None = None) -> int:
    """Smallest rank whose discarded singular values have 2-norm <= delta."""
    # tail[k] = norm of s[k:]
    tail = np.sqrt(np.cumsum((s**2)[::-1]))[::-1]
    keep = int(np.count_nonzero(tail > delta))
    keep = max(keep, 1)
    if max_rank is not None:
        keep = min(keep, max_rank)
    return keep


def tt_round(tt: TensorTrain, tol: float = 1e-12, max_rank: int | None = None) -> TensorTrain:
    """Recompress ``tt`` by truncated SVDs of its unfoldings.

    Each of the ``d - 1`` bonds gets an error budget of
    ``tol * ||tt|| / sqrt(d - 1)`` so that ``||tt - result|| <= tol * ||tt||``
    whenever ``max_rank`` does not bind. A zero tensor comes back as the
    zero train with all interior ranks 1.
    """
    if tol < 0:
        raise ValueError("tol must be non-negative")
    if max_rank is not None and max_rank < 1:
        raise ValueError("max_rank must be at least 1")
    d = tt.ndim
    rt = orthogonalize(tt, "right")
    nrm = float(np.linalg.norm(rt.cores[0]))
    if nrm == 0.0 or not np.isfinite(nrm):
        if nrm == 0.0:
            return zeros(tt.mode_sizes)
        raise FloatingPointError("non-finite tensor train norm")
    if d == 1:
        return rt
    delta = tol * nrm / np.sqrt(d - 1)
    cores = list(rt.cores)
    for j in range(d - 1):
        r0, n, r1 = cores[j].shape
        u, s, vt = np.linalg.svd(cores[j].reshape(r0 * n, r1), full_matrices=False)
        k = truncation_rank(s, delta, max_rank)
        cores[j] = u[:, :k].reshape(r0, n, k)
        sv = s[:k, None] * vt[:k]
        cores[j + 1] = np.tensordot(sv, cores[j + 1], axes=(1, 0))
    return TensorTrain(cores, CanonicalForm("left", d - 1))


def zeros(mode_sizes: Sequence[int]) -> TensorTrain:
    """The zero tensor with all ranks equal to 1."""
    return TensorTrain([np.zeros((1, n, 1)) for n in mode_sizes])


def rank_one(vectors: Sequence[np.ndarray]) -> TensorTrain:
    """Outer product of the given vectors."""
    return TensorTrain([np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors])


def random_tt(mode_sizes: Sequence[int], ranks: Sequence[int], rng=None) -> TensorTrain:
    """Tensor train with i.i.d. standard normal cores.

    ``ranks`` lists the ``d - 1`` interior ranks.
    """
    rng = np.random.default_rng(rng)
    full = [1, *ranks, 1]
    if len(full) != len(mode_sizes) + 1:
        raise ValueError("need len(mode_sizes) - 1 interior ranks")
    return TensorTrain(
        [rng.standard_normal((full[j], n, full[j + 1])) for j, n in enumerate(mode_sizes)]
    )


def from_dense(array: np.ndarray, tol: float = 1e-14, max_rank: int | None = None) -> TensorTrain:
    """TT-SVD of a dense array."""
    array = np.asarray(array, dtype=float)
    dims = array.shape
    d = len(dims)
    delta = tol * np.linalg.norm(array) / np.sqrt(max(d - 1, 1))
    cores = []
    rest = array.reshape(1, -1)
    r = 1
    for j in range(d - 1):
        rest = rest.reshape(r * dims[j], -1)
        u, s, vt = np.linalg.svd(rest, full_matrices=False)
        k = truncation_rank(s, delta, max_rank)
        cores.append(u[:, :k].reshape(r, dims[j], k))
        rest = s[:k, None] * vt[:k]
        r = k
    cores.append(rest.reshape(r, dims[-1], 1))
    return TensorTrain(cores)


def to_dense(tt: TensorTrain) -> np.ndarray:
    """Materialize the full tensor. Only meant for small tensors."""
    size = int(np.prod(tt.mode_sizes))
    if size > DENSE_CAP:
        raise MemoryError(f"dense tensor with {size} entries exceeds cap {DENSE_CAP}")
    out = tt.cores[0].reshape(tt.mode_sizes[0], -1)
    for c in tt.cores[1:]:
        out = np.tensordot(out, c, axes=(-1, 0))
    return out.reshape(tt.mode_sizes)


def save(tt: TensorTrain, f: BinaryIO):
    """Write the ``TTv1`` snapshot: little-endian int64 header, float64 cores."""
    d = tt.ndim
    f.write(_MAGIC)
    f.write(struct.pack(f"<{1 + d + d + 1}q", d, *tt.mode_sizes, *tt.ranks))
    for c in tt.cores:
        f.write(np.ascontiguousarray(c, dtype="<f8").tobytes())


def load(f: BinaryIO) -> TensorTrain:
    if f.read(4) != _MAGIC:
        raise ValueError("not a TTv1 snapshot")
    (d,) = struct.unpack("<q", f.read(8))
    if d < 1:
        raise ValueError(f"invalid order {d}")
    header = struct.unpack(f"<{2 * d + 1}q", f.read(8 * (2 * d + 1)))
    modes, ranks = header[:d], header[d:]
    cores = []
    for j in range(d):
        shape = (ranks[j], modes[j], ranks[j + 1])
        count = int(np.prod(shape))
        buf = f.read(8 * count)
        if len(buf) != 8 * count:
            raise ValueError("truncated TTv1 snapshot")
        cores.append(np.frombuffer(buf, dtype="<f8").reshape(shape))
    return TensorTrain(cores)
