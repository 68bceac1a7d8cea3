"""Antisymmetric neural ansatz built on the principal simplex.

Particles ``r_1 .. r_N`` in ``[0, 1]^kappa`` are sorted by their modulus
``|r_i|``; the sorted configuration lies in the principal simplex ``S``.
A feed-forward network ``f`` is evaluated on the sorted point only and the
result is multiplied by a smooth surrogate of the sorting permutation's
sign::

    psi(r) = eps(r) * f(Pi r),
    eps(r) = sign(s) * prod_{k < l} tanh(m_(l) - m_(k)),

where ``m_(1) <= ... <= m_(N)`` are the sorted moduli. Written over the
sorted moduli the product is nonnegative, and it equals
``prod_{i < j} tanh(|r_j| - |r_i|)`` over the raw particle order. Computing
it from sorted data makes ``psi`` exactly antisymmetric in floating point,
since a transposition changes only the parity. ``psi`` vanishes wherever
two moduli coincide.

Gradients with respect to the inputs treat the projection as the fixed
permutation matrix of the current sort. Training minimizes the Monte Carlo
Dirichlet energy ``mean_i sum_j |grad_{r_j} psi(r_i)|^2`` on the toy
Poisson-Neumann problem in ``[0, 1]^N`` with plain gradient descent,
renormalizing the output layer after every step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SimplexPoint",
    "SimplexNetModel",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "NonSmoothPointError",
    "ExactToySolution",
    "project",
    "smooth_signature",
    "init_model",
    "psi",
    "grad_psi_inputs",
    "mc_energy",
    "rayleigh_energy",
    "sample_domain",
    "l2_error",
    "parameter_gradients",
    "train",
]

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the training energy exceeds the divergence threshold.

    The partial result is attached as ``result``.
    """

    def __init__(self, message, result):
        super().__init__(message)
        self.result = result


class NonSmoothPointError(ValueError):
    pass


# ---------------------------------------------------------------- projection

@dataclass
class SimplexPoint:
    """Sorted configuration ``Pi r`` with its sorting permutation.

    ``coordinates[k] == r[permutation[k]]``, so ``permutation`` is ``s``
    with ``(r_s(1), ..., r_s(N)) = Pi r``.
    """

    coordinates: np.ndarray
    permutation: np.ndarray
    parity: int


def _as_batch(r) -> tuple[np.ndarray, bool]:
    r = np.asarray(r, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    single = r.ndim == 2
    if single:
        r = r[None]
    if r.ndim != 3:
        raise ValueError(f"expected an (N, kappa) point or an (n, N, kappa) batch, got shape {r.shape}")
    return r, single


def _moduli(r: np.ndarray) -> np.ndarray:
    return r[..., 0].__abs__() if r.shape[-1] == 1 else np.sqrt(np.sum(r * r, axis=-1))


def _parity(perm: np.ndarray) -> np.ndarray:
    """Sign of each row permutation, from its inversion count."""
    perm = np.atleast_2d(perm)
    n = perm.shape[1]
    inv = np.zeros(perm.shape[0], dtype=np.int64)
    for i in range(n):
        inv += np.sum(perm[:, i:i + 1] > perm[:, i + 1:], axis=1)
    return np.where(inv % 2, -1, 1)


def _sort(r: np.ndarray):
    m = _moduli(r)
    perm = np.argsort(m, axis=1, kind="stable")
    xs = np.take_along_axis(r, perm[:, :, None], axis=1)
    ms = np.take_along_axis(m, perm, axis=1)
    return perm, xs, ms


def project(r) -> SimplexPoint:
    """Stable sort of the particles of one configuration by modulus."""
    r = np.asarray(r, dtype=float)
    batch, _ = _as_batch(r)
    if batch.shape[0] != 1:
        raise ValueError("project takes a single configuration")
    perm, xs, _ = _sort(batch)
    return SimplexPoint(xs[0].reshape(r.shape), perm[0], int(_parity(perm)[0]))


def _pair_index(n):
    return np.triu_indices(n, k=1)


def _signature_and_grad(ms: np.ndarray, parity: np.ndarray, need_grad: bool):
    """``eps`` and its derivative with respect to each sorted modulus.

    The derivative uses leave-one-out products (prefix times suffix), so it
    stays exact when one factor vanishes.
    """
    n_s, n = ms.shape
    iu, ju = _pair_index(n)
    t = np.tanh(ms[:, ju] - ms[:, iu])  # nonnegative, one column per pair
    eps = parity * np.prod(t, axis=1)
    if not need_grad:
        return eps, None
    grad = np.zeros_like(ms)
    if len(iu):
        ones = np.ones((n_s, 1))
        prefix = np.cumprod(np.hstack([ones, t[:, :-1]]), axis=1)
        suffix = np.cumprod(np.hstack([ones, t[:, :0:-1]]), axis=1)[:, ::-1]
        dfac = parity[:, None] * prefix * suffix * (1.0 - t * t)
        np.add.at(grad.T, ju, dfac.T)
        np.subtract.at(grad.T, iu, dfac.T)
    return eps, grad


def smooth_signature(r) -> float | np.ndarray:
    """``prod_{i < j} tanh(|r_j| - |r_i|)`` over the raw particle order.

    Accepts one configuration ``(N, kappa)`` or a batch ``(n, N, kappa)``.
    """
    batch, single = _as_batch(r)
    perm, _, ms = _sort(batch)
    eps, _ = _signature_and_grad(ms, _parity(perm), False)
    return float(eps[0]) if single else eps


# --------------------------------------------------------------------- model

@dataclass
class SimplexNetModel:
    """Fully connected tanh network with a linear scalar output.

    ``weights[l]`` has shape ``(width_l, width_{l-1})`` with input width
    ``N * kappa``. The output is ``out_w . h_L + out_b``; per-step
    normalization rescales ``out_w`` and ``out_b``.
    """

    n_particles: int
    kappa: int
    weights: list
    biases: list
    out_w: np.ndarray
    out_b: float = 0.0

    @property
    def input_width(self) -> int:
        return self.n_particles * self.kappa

    @property
    def hidden(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights)

    def copy(self) -> "SimplexNetModel":
        return SimplexNetModel(
            self.n_particles,
            self.kappa,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.out_w.copy(),
            float(self.out_b),
        )

    def scale_output(self, alpha: float):
        self.out_w = self.out_w * alpha
        self.out_b = float(self.out_b * alpha)


def init_model(n_particles: int, kappa: int, hidden: Sequence[int] | int = (1000,), seed=None,
               zero_output: bool = False) -> SimplexNetModel:
    """Random network with ``N(0, 1/fan_in)`` weights and zero biases."""
    if isinstance(hidden, (int, np.integer)):
        hidden = (int(hidden),)
    hidden = tuple(int(w) for w in hidden)
    if n_particles < 1 or kappa < 1:
        raise ValueError("need at least one particle and one dimension")
    if not hidden or min(hidden) < 1:
        raise ValueError("hidden widths must be positive")
    rng = np.random.default_rng(seed)
    widths = (n_particles * kappa,) + hidden
    weights = [rng.standard_normal((widths[l + 1], widths[l])) / math.sqrt(widths[l]) for l in range(len(hidden))]
    biases = [np.zeros(w) for w in hidden]
    out_w = np.zeros(hidden[-1]) if zero_output else rng.standard_normal(hidden[-1]) / math.sqrt(hidden[-1])
    return SimplexNetModel(n_particles, kappa, weights, biases, out_w, 0.0)


@dataclass
class _Forward:
    perm: np.ndarray
    x: np.ndarray          # sorted, flattened inputs (n, N*kappa)
    hs: list               # hidden activations, hs[0] = x
    f: np.ndarray
    eps: np.ndarray
    deps: np.ndarray | None  # d eps / d raw r, shape (n, N, kappa)


def _check_shape(model: SimplexNetModel, r: np.ndarray):
    if r.shape[1:] != (model.n_particles, model.kappa):
        raise ValueError(f"expected configurations of shape {(model.n_particles, model.kappa)}, got {r.shape[1:]}")


def _forward(model: SimplexNetModel, r: np.ndarray, need_grad: bool) -> _Forward:
    _check_shape(model, r)
    n = r.shape[0]
    perm, xs, ms = _sort(r)
    eps, deps_sorted = _signature_and_grad(ms, _parity(perm), need_grad)
    x = xs.reshape(n, -1)
    hs = [x]
    for w, b in zip(model.weights, model.biases):
        hs.append(np.tanh(hs[-1] @ w.T + b))
    f = hs[-1] @ model.out_w + model.out_b
    deps = None
    if need_grad:
        # d m_i / d r_i = r_i / |r_i|, zero at the origin
        m = np.take_along_axis(ms, np.argsort(perm, axis=1), axis=1)
        unit = np.divide(r, m[:, :, None], out=np.zeros_like(r), where=m[:, :, None] > 0)
        deps_raw = np.empty_like(ms)
        np.put_along_axis(deps_raw, perm, deps_sorted, axis=1)
        deps = deps_raw[:, :, None] * unit
    return _Forward(perm, x, hs, f, eps, deps)


def _unsort(perm: np.ndarray, sorted_rows: np.ndarray) -> np.ndarray:
    out = np.empty_like(sorted_rows)
    np.put_along_axis(out, perm[:, :, None], sorted_rows, axis=1)
    return out


def _sort_rows(perm: np.ndarray, raw_rows: np.ndarray) -> np.ndarray:
    return np.take_along_axis(raw_rows, perm[:, :, None], axis=1)


def _grad_f_sorted(model: SimplexNetModel, fw: _Forward) -> np.ndarray:
    """``d f / d x`` on the sorted inputs, shape ``(n, N*kappa)``."""
    g = np.broadcast_to(model.out_w, fw.hs[-1].shape)
    for l in range(len(model.weights) - 1, -1, -1):
        g = (g * (1.0 - fw.hs[l + 1] ** 2)) @ model.weights[l]
    return g


def _input_gradients(model: SimplexNetModel, fw: _Forward, shape) -> np.ndarray:
    n = shape[0]
    gx = _grad_f_sorted(model, fw).reshape(shape)
    # forced Jacobian: the projection acts as the fixed permutation M_s
    return fw.f[:, None, None] * fw.deps + fw.eps[:, None, None] * _unsort(fw.perm, gx).reshape(n, *shape[1:])


def psi(model: SimplexNetModel, r) -> float | np.ndarray:
    """``eps(r) * f(Pi r)`` for one configuration or a batch."""
    batch, single = _as_batch(r)
    fw = _forward(model, batch, False)
    val = fw.eps * fw.f
    return float(val[0]) if single else val


def _coincident(r: np.ndarray) -> np.ndarray:
    _, _, ms = _sort(r)
    return np.any(np.diff(ms, axis=1) == 0, axis=1) if ms.shape[1] > 1 else np.zeros(len(r), bool)


def grad_psi_inputs(model: SimplexNetModel, r) -> np.ndarray:
    """Gradient of ``psi`` with respect to every particle coordinate.

    Raises :class:`NonSmoothPointError` when two moduli coincide, where the
    sort (and hence ``psi``) is not differentiable.
    """
    batch, single = _as_batch(r)
    bad = _coincident(batch)
    if np.any(bad):
        raise NonSmoothPointError(f"{int(bad.sum())} configuration(s) have coincident moduli")
    fw = _forward(model, batch, True)
    g = _input_gradients(model, fw, batch.shape)
    return g[0].reshape(np.shape(r)) if single else g


# ------------------------------------------------------------------- energies

class ExactToySolution:
    """``cos(pi r_1) - cos(pi r_2)``, the N=2, kappa=1 ground state.

    It has unit norm on ``[0, 1]^2`` and Dirichlet energy ``pi^2``.
    """

    n_particles = 2
    kappa = 1

    def psi(self, r):
        r, _ = _as_batch(r)
        return np.cos(np.pi * r[:, 0, 0]) - np.cos(np.pi * r[:, 1, 0])

    def input_gradients(self, r):
        r, _ = _as_batch(r)
        g = np.empty_like(r)
        g[:, 0, 0] = -np.pi * np.sin(np.pi * r[:, 0, 0])
        g[:, 1, 0] = np.pi * np.sin(np.pi * r[:, 1, 0])
        return g


def _values_and_gradients(model, samples):
    samples, _ = _as_batch(samples)
    if samples.shape[0] == 0:
        raise ValueError("empty sample set")
    if isinstance(model, SimplexNetModel):
        fw = _forward(model, samples, True)
        return fw.eps * fw.f, _input_gradients(model, fw, samples.shape)
    return model.psi(samples), model.input_gradients(samples)


def mc_energy(model, samples) -> float:
    """``mean_i sum_j |grad_{r_j} psi(r_i)|^2`` over the samples.

    ``model`` is a :class:`SimplexNetModel` or any object with ``psi`` and
    ``input_gradients`` batch methods.
    """
    _, g = _values_and_gradients(model, samples)
    return float(np.mean(np.sum(g * g, axis=(1, 2))))


def rayleigh_energy(model, samples) -> float:
    """Monte Carlo Rayleigh quotient ``mc_energy / mean(psi^2)``."""
    v, g = _values_and_gradients(model, samples)
    den = float(np.mean(v * v))
    if den == 0.0:
        return 0.0
    return float(np.mean(np.sum(g * g, axis=(1, 2)))) / den


def sample_domain(n: int, n_particles: int, kappa: int, rng) -> np.ndarray:
    """Uniform samples in ``[0, 1]^(N x kappa)`` with pairwise distinct moduli.

    The coincidence set has measure zero; the rare hits are redrawn.
    """
    r = rng.random((n, n_particles, kappa))
    bad = _coincident(r)
    while np.any(bad):
        r[bad] = rng.random((int(bad.sum()), n_particles, kappa))
        bad = _coincident(r)
    return r


def l2_error(model, samples, reference=None) -> float:
    """Monte Carlo ``min_{+-} ||psi -+ phi||_{L^2}`` against the reference."""
    reference = reference or ExactToySolution()
    v = psi(model, samples) if isinstance(model, SimplexNetModel) else model.psi(samples)
    phi = reference.psi(samples)
    return float(min(np.sqrt(np.mean((v - phi) ** 2)), np.sqrt(np.mean((v + phi) ** 2))))


# ------------------------------------------------------------------ gradients

def _param_backward(model: SimplexNetModel, fw: _Forward, f_bar: np.ndarray, a: np.ndarray, fdot_bar: np.ndarray):
    """Gradient of ``sum_i f_bar_i f(x_i) + fdot_bar_i (D_{a_i} f)(x_i)``.

    ``D_a f`` is the directional derivative along ``a`` (sorted inputs),
    obtained by propagating tangents forward; one reverse pass over the
    primal and tangent values gives the parameter gradient.
    """
    L = len(model.weights)
    hs = fw.hs
    ss = [None] + [1.0 - h * h for h in hs[1:]]
    hdots = [a]
    zdots = [None]
    for l in range(L):
        zd = hdots[-1] @ model.weights[l].T
        zdots.append(zd)
        hdots.append(ss[l + 1] * zd)

    g_out_w = f_bar @ hs[-1] + fdot_bar @ hdots[-1]
    g_out_b = float(np.sum(f_bar))
    h_bar = f_bar[:, None] * model.out_w
    hd_bar = fdot_bar[:, None] * model.out_w
    g_w, g_b = [None] * L, [None] * L
    for l in range(L, 0, -1):
        zd_bar = hd_bar * ss[l]
        s_bar = hd_bar * zdots[l]
        h_bar = h_bar - 2.0 * s_bar * hs[l]
        z_bar = h_bar * ss[l]
        g_w[l - 1] = z_bar.T @ hs[l - 1] + zd_bar.T @ hdots[l - 1]
        g_b[l - 1] = z_bar.sum(axis=0)
        if l > 1:
            h_bar = z_bar @ model.weights[l - 1]
            hd_bar = zd_bar @ model.weights[l - 1]
    return g_w, g_b, g_out_w, g_out_b


def parameter_gradients(model: SimplexNetModel, samples, objective: str = "rayleigh"):
    """Energy estimate and its gradient with respect to all parameters.

    ``objective="energy"`` differentiates ``mc_energy``;
    ``objective="rayleigh"`` differentiates ``mc_energy / mean(psi^2)``.
    Returns ``(value, (grad_weights, grad_biases, grad_out_w, grad_out_b))``.
    """
    samples, _ = _as_batch(samples)
    n = samples.shape[0]
    fw = _forward(model, samples, True)
    g = _input_gradients(model, fw, samples.shape)
    num = float(np.mean(np.sum(g * g, axis=(1, 2))))
    # d|g|^2 = 2 g . (u df + eps M_s^T d grad f)
    beta = np.sum(g * fw.deps, axis=(1, 2))
    a = (fw.eps[:, None, None] * _sort_rows(fw.perm, g)).reshape(n, -1)
    f_bar = 2.0 * beta / n
    fdot_bar = np.full(n, 2.0 / n)
    value = num
    if objective == "rayleigh":
        vals = fw.eps * fw.f
        den = float(np.mean(vals * vals))
        if den == 0.0:
            raise FloatingPointError("the network output vanishes on every sample")
        value = num / den
        f_bar = (f_bar - value * 2.0 * vals * fw.eps / n) / den
        fdot_bar = fdot_bar / den
    elif objective != "energy":
        raise ValueError(f"unknown objective {objective!r}")
    return value, _param_backward(model, fw, f_bar, a, fdot_bar)


# ------------------------------------------------------------------- training

@dataclass
class TrainConfig:
    """Settings for SimplexNet training on the Poisson-Neumann toy problem.

    The step size is ``lr`` until ``decay_at * steps`` and
    ``lr * decay_factor`` afterwards. ``resample=True`` draws a fresh
    dataset every step instead of reusing one fixed set of ``batch``
    samples. ``validation`` samples are evaluated every step for the
    norm and L2 error traces; ``test_samples`` only once at the end.
    """

    n_particles: int = 2
    kappa: int = 1
    hidden: tuple = (1000,)
    batch: int = 1000
    lr: float = 1e-2
    steps: int = 500
    seed: int = 0
    decay_at: float = 0.8
    decay_factor: float = 0.1
    resample: bool = False
    objective: str = "rayleigh"
    validation: int = 2000
    test_samples: int = 20000
    divergence: float = 1e3
    zero_output: bool = False

    def __post_init__(self):
        if isinstance(self.hidden, (int, np.integer)):
            self.hidden = (int(self.hidden),)
        self.hidden = tuple(int(w) for w in self.hidden)
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if not self.hidden or min(self.hidden) < 1:
            raise ValueError("hidden widths must be at least 1")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.objective not in ("energy", "rayleigh"):
            raise ValueError(f"unknown objective {self.objective!r}")

    @property
    def has_reference(self) -> bool:
        return self.n_particles == 2 and self.kappa == 1


@dataclass
class TrainResult:
    """Per-step traces; entry ``k`` is measured after ``k`` updates."""

    model: SimplexNetModel
    energy: list = field(default_factory=list)
    l2_error: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    rescues: int = 0
    test_energy: float = float("nan")

    @property
    def final_energy(self) -> float:
        return self.energy[-1]

    def rows(self):
        for k, (e, l2, nm) in enumerate(zip(self.energy, self.l2_error, self.norm)):
            yield k, e, l2, nm


def _normalize(model: SimplexNetModel, samples, rng) -> tuple[float, bool]:
    """Rescale the output layer to unit mean square on ``samples``.

    A vanishing output is re-drawn at random first (``rescued=True``).
    Returns the norm before rescaling.
    """
    v = psi(model, samples)
    norm = float(np.sqrt(np.mean(v * v)))
    rescued = False
    if not np.isfinite(norm):
        raise FloatingPointError("network output is not finite")
    if norm < 1e-12:
        model.out_w = rng.standard_normal(model.out_w.shape) / math.sqrt(model.out_w.size)
        model.out_b = 0.0
        rescued = True
        v = psi(model, samples)
        norm = float(np.sqrt(np.mean(v * v)))
    model.scale_output(1.0 / norm)
    return norm, rescued


def train(config: TrainConfig, model: SimplexNetModel | None = None) -> TrainResult:
    """Gradient descent on the Monte Carlo energy with per-step normalization.

    Trace entry ``k`` is taken after ``k`` updates and a normalization:
    the energy is the Rayleigh quotient on the training set, the norm is
    the root mean square of ``psi`` on a fixed validation set, and for
    ``N=2, kappa=1`` the L2 error against the exact solution is measured on
    the validation set. ``TrainResult.test_energy`` is the final Rayleigh
    quotient on ``config.test_samples`` fresh samples, an estimate free of
    the bias of reusing one training set.

    Raises :class:`TrainingDiverged` if the energy exceeds
    ``config.divergence``.
    """
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = init_model(config.n_particles, config.kappa, config.hidden, rng, config.zero_output)
    else:
        model = model.copy()
    data = sample_domain(config.batch, config.n_particles, config.kappa, rng)
    valid = sample_domain(config.validation, config.n_particles, config.kappa, rng)
    res = TrainResult(model)
    decay_step = int(config.decay_at * config.steps)

    for step in range(config.steps + 1):
        if config.resample and step:
            data = sample_domain(config.batch, config.n_particles, config.kappa, rng)
        _, rescued = _normalize(model, data, rng)
        res.rescues += rescued
        if step < config.steps:
            e, (gw, gb, gow, gob) = parameter_gradients(model, data, config.objective)
            if config.objective == "energy":
                e = mc_energy(model, data) / float(np.mean(psi(model, data) ** 2))
        else:
            e = rayleigh_energy(model, data)
        v = psi(model, valid)
        res.energy.append(e)
        res.norm.append(float(np.sqrt(np.mean(v * v))))
        if config.has_reference:
            phi = ExactToySolution().psi(valid)
            res.l2_error.append(float(min(np.sqrt(np.mean((v - phi) ** 2)), np.sqrt(np.mean((v + phi) ** 2)))))
        else:
            res.l2_error.append(float("nan"))
        if not np.isfinite(e) or e > config.divergence:
            raise TrainingDiverged(f"energy {e:.3e} exceeds {config.divergence:g} after {step} steps", res)
        if step == config.steps:
            break
        lr = config.lr * (config.decay_factor if step >= decay_step else 1.0)
        for l in range(len(model.weights)):
            model.weights[l] -= lr * gw[l]
            model.biases[l] -= lr * gb[l]
        model.out_w = model.out_w - lr * gow
        model.out_b = float(model.out_b - lr * gob)
    if config.test_samples:
        test = sample_domain(config.test_samples, config.n_particles, config.kappa, rng)
        res.test_energy = rayleigh_energy(model, test)
    log.info("trained %d steps: E = %.6f", config.steps, res.energy[-1])
    return res
