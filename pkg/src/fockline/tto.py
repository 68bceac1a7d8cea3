"""Tensor train operators (matrix product operators).

Core ``j`` has shape ``(r_j, n_j, n_j, r_{j+1})``; the operator entry
``H[i_1..i_d, j_1..j_d]`` is ``P_1[i_1, j_1] @ ... @ P_d[i_d, j_d]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .tensor_train import TensorTrain, tt_round

__all__ = [
    "OperatorString",
    "TensorTrainOperator",
    "tto_from_strings",
    "identity",
    "apply",
    "compress",
    "add",
    "scale",
    "transpose",
    "tto_to_dense",
    "StringAccumulator",
]

DENSE_CAP = 2**14


@dataclass
class OperatorString:
    """``coefficient * factors[0] (x) ... (x) factors[d-1]``."""

    coefficient: float
    factors: list = field(default_factory=list)

    def __post_init__(self):
        self.factors = [np.asarray(f, dtype=float) for f in self.factors]
        for f in self.factors:
            if f.ndim != 2 or f.shape[0] != f.shape[1]:
                raise ValueError(f"string factors must be square matrices, got {f.shape}")

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def __matmul__(self, other: "OperatorString") -> "OperatorString":
        """Operator product, taken site by site."""
        if self.mode_sizes != other.mode_sizes:
            raise ValueError("cannot multiply strings of different shapes")
        return OperatorString(
            self.coefficient * other.coefficient,
            [a @ b for a, b in zip(self.factors, other.factors)],
        )

    def __mul__(self, alpha: float) -> "OperatorString":
        return OperatorString(self.coefficient * alpha, self.factors)

    __rmul__ = __mul__

    def transpose(self) -> "OperatorString":
        return OperatorString(self.coefficient, [f.T for f in self.factors])


class TensorTrainOperator:
    """Immutable TT operator with square local blocks."""

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = [np.array(c, dtype=float) for c in cores]
        if not cores:
            raise ValueError("an operator needs at least one core")
        for j, c in enumerate(cores):
            if c.ndim != 4:
                raise ValueError(f"core {j} has order {c.ndim}, expected 4")
            if c.shape[1] != c.shape[2]:
                raise ValueError(f"core {j} has non-square mode pair {c.shape[1:3]}")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("boundary ranks must be 1")
        for j in range(len(cores) - 1):
            if cores[j].shape[3] != cores[j + 1].shape[0]:
                raise ValueError(f"rank mismatch between cores {j} and {j + 1}")
        for c in cores:
            c.flags.writeable = False
        self._cores = tuple(cores)

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
        return (1,) + tuple(c.shape[3] for c in self._cores)

    def __repr__(self):
        return f"TensorTrainOperator(mode_sizes={self.mode_sizes}, ranks={self.ranks})"

    def __add__(self, other):
        return add(self, other)

    def __matmul__(self, tt: TensorTrain) -> TensorTrain:
        return apply(self, tt)

    def as_tt(self) -> TensorTrain:
        """View with each ``(i, j)`` mode pair fused into one mode of size ``n**2``."""
        return TensorTrain([c.reshape(c.shape[0], -1, c.shape[3]) for c in self._cores])

    @classmethod
    def from_tt(cls, tt: TensorTrain, mode_sizes: Sequence[int]) -> "TensorTrainOperator":
        return cls(
            [c.reshape(c.shape[0], n, n, c.shape[2]) for c, n in zip(tt.cores, mode_sizes)]
        )


def tto_from_strings(strings: Sequence[OperatorString]) -> TensorTrainOperator:
    """Block-diagonal TTO for a sum of operator strings.

    The interior ranks equal the number of strings; the coefficients are
    absorbed into the first core.
    """
    strings = list(strings)
    if not strings:
        raise ValueError("need at least one operator string")
    d = strings[0].ndim
    modes = strings[0].mode_sizes
    if d == 0:
        raise ValueError("operator strings must have at least one factor")
    for s in strings:
        if s.mode_sizes != modes:
            raise ValueError(f"inconsistent string shapes: {s.mode_sizes} vs {modes}")
    m = len(strings)
    coeffs = np.array([s.coefficient for s in strings], dtype=float)
    if d == 1:
        core = np.einsum("s,sij->ij", coeffs, np.stack([s.factors[0] for s in strings]))
        return TensorTrainOperator([core[None, :, :, None]])
    cores = []
    for j in range(d):
        f = np.stack([s.factors[j] for s in strings])  # (m, n, n)
        n = modes[j]
        if j == 0:
            cores.append((coeffs[:, None, None] * f).transpose(1, 2, 0)[None])
        elif j == d - 1:
            cores.append(f[:, :, :, None])
        else:
            c = np.zeros((m, n, n, m))
            idx = np.arange(m)
            c[idx, :, :, idx] = f
            cores.append(c)
    return TensorTrainOperator(cores)


def identity(mode_sizes: Sequence[int]) -> TensorTrainOperator:
    return TensorTrainOperator([np.eye(n)[None, :, :, None] for n in mode_sizes])


def apply(op: TensorTrainOperator, tt: TensorTrain) -> TensorTrain:
    """TTO times TT; result cores are ``sum_j P[i, j] (x) C[j]``."""
    if op.mode_sizes != tt.mode_sizes:
        raise ValueError(f"mode sizes differ: {op.mode_sizes} vs {tt.mode_sizes}")
    cores = []
    for p, c in zip(op.cores, tt.cores):
        w0, n, _, w1 = p.shape
        r0, _, r1 = c.shape
        d = np.einsum("aijb,cjd->acibd", p, c)
        cores.append(d.reshape(w0 * r0, n, w1 * r1))
    return TensorTrain(cores)


def add(a: TensorTrainOperator, b: TensorTrainOperator) -> TensorTrainOperator:
    if a.mode_sizes != b.mode_sizes:
        raise ValueError("mode sizes differ")
    s = a.as_tt() + b.as_tt()
    return TensorTrainOperator.from_tt(s, a.mode_sizes)


def scale(op: TensorTrainOperator, alpha: float) -> TensorTrainOperator:
    cores = list(op.cores)
    cores[0] = cores[0] * alpha
    return TensorTrainOperator(cores)


def transpose(op: TensorTrainOperator) -> TensorTrainOperator:
    return TensorTrainOperator([c.transpose(0, 2, 1, 3) for c in op.cores])


def compress(op: TensorTrainOperator, tol: float = 1e-12, max_rank: int | None = None) -> TensorTrainOperator:
    """TT rounding applied to the fused ``(i, j)`` modes."""
    return TensorTrainOperator.from_tt(tt_round(op.as_tt(), tol, max_rank), op.mode_sizes)


def tto_to_dense(op: TensorTrainOperator) -> np.ndarray:
    """Dense matrix of the operator; row index is ``(i_1, ..., i_d)`` in C order."""
    size = int(np.prod(op.mode_sizes))
    if size > DENSE_CAP:
        raise MemoryError(f"dense operator of dimension {size} exceeds cap {DENSE_CAP}")
    out = op.cores[0][0]  # (n, n, r)
    for c in op.cores[1:]:
        out = np.einsum("ija,aklb->ikjlb", out, c)
        out = out.reshape(out.shape[0] * out.shape[1], out.shape[2] * out.shape[3], -1)
    return out[:, :, 0]


class StringAccumulator:
    """Sum operator strings into a TTO with periodic compression.

    Strings are buffered ``batch_size`` at a time. Each full buffer is turned
    into a TTO, compressed, and merged into a stack of partial sums in
    binary-counter fashion, so partial sums of similar size are added and
    recompressed together.
    """

    def __init__(self, mode_sizes: Sequence[int], batch_size: int = 32, tol: float = 1e-12):
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.mode_sizes = tuple(mode_sizes)
        self.batch_size = batch_size
        self.tol = tol
        self._buffer: list[OperatorString] = []
        self._stack: list[tuple[int, TensorTrainOperator]] = []
        self.count = 0

    def add(self, string: OperatorString):
        if string.mode_sizes != self.mode_sizes:
            raise ValueError("string shape does not match accumulator")
        self._buffer.append(string)
        self.count += 1
        if len(self._buffer) >= self.batch_size:
            self._flush()

    def extend(self, strings: Iterable[OperatorString]):
        for s in strings:
            self.add(s)

    def _flush(self):
        if not self._buffer:
            return
        op = compress(tto_from_strings(self._buffer), self.tol)
        self._buffer = []
        level = 0
        while self._stack and self._stack[-1][0] == level:
            _, other = self._stack.pop()
            op = compress(add(other, op), self.tol)
            level += 1
        self._stack.append((level, op))

    def result(self) -> TensorTrainOperator:
        self._flush()
        if not self._stack:
            return tto_from_strings(
                [OperatorString(0.0, [np.zeros((n, n)) for n in self.mode_sizes])]
            )
        op = self._stack[-1][1]
        for _, other in reversed(self._stack[:-1]):
            op = compress(add(other, op), self.tol)
        return op
