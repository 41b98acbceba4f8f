"""Dense networks in float64 numpy: forward, analytic backward, Adam, diagonal Gaussians.

Weight matrices are stored ``(out, in)`` so a layer computes ``x @ W.T + b`` on a
batch of row vectors. Every function accepts a single vector or a ``(B, n)`` batch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu")
LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when an array does not have the size a network expects."""

    def __init__(self, what, expected, actual):
        super().__init__(f"{what}: expected size {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class NonFiniteError(FloatingPointError):
    """A NaN or Inf reached a quantity that must stay finite."""


@dataclass
class MlpParams:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: list[str] = field(default_factory=list)
    log_std: np.ndarray | None = None

    def __post_init__(self):
        self.layer_sizes = [int(n) for n in self.layer_sizes]
        n_hidden = len(self.layer_sizes) - 2
        if isinstance(self.activation, str):
            self.activation = [self.activation] * n_hidden
        elif not self.activation:
            self.activation = ["tanh"] * n_hidden
        self.validate()

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def validate(self):
        sizes = self.layer_sizes
        if len(sizes) < 2 or any(n <= 0 for n in sizes):
            raise ValueError(f"layer_sizes must hold >= 2 positive ints, got {sizes}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("one weight matrix and one bias vector per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i + 1], sizes[i]):
                raise ShapeError(f"weights[{i}]", (sizes[i + 1], sizes[i]), w.shape)
            if b.shape != (sizes[i + 1],):
                raise ShapeError(f"biases[{i}]", (sizes[i + 1],), b.shape)
        if len(self.activation) != len(sizes) - 2:
            raise ValueError("need one activation per hidden layer")
        for a in self.activation:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.log_std is not None and self.log_std.shape != (sizes[-1],):
            raise ShapeError("log_std", (sizes[-1],), self.log_std.shape)

    def arrays(self) -> list[np.ndarray]:
        """All trainable arrays in a fixed order (weights, biases, then log_std)."""
        out = [*self.weights, *self.biases]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activation),
            None if self.log_std is None else self.log_std.copy(),
        )

    def zeros_like(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_sizes),
            [np.zeros_like(w) for w in self.weights],
            [np.zeros_like(b) for b in self.biases],
            list(self.activation),
            None if self.log_std is None else np.zeros_like(self.log_std),
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": list(self.activation),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "log_std": None if self.log_std is None else self.log_std.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        log_std = d.get("log_std")
        return cls(
            d["layer_sizes"],
            [np.asarray(w, dtype=np.float64).reshape(len(w), -1) for w in d["weights"]],
            [np.asarray(b, dtype=np.float64) for b in d["biases"]],
            d.get("activation", "tanh"),
            None if log_std is None else np.asarray(log_std, dtype=np.float64),
        )


def orthogonal(shape, gain, rng):
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def init_mlp(layer_sizes, rng, *, output_gain=1.0, hidden_gain=math.sqrt(2.0),
             activation="tanh", policy=False) -> MlpParams:
    """Orthogonal init, zero biases; ``policy=True`` adds a zero log_std vector."""
    sizes = [int(n) for n in layer_sizes]
    weights, biases = [], []
    for i in range(len(sizes) - 1):
        gain = output_gain if i == len(sizes) - 2 else hidden_gain
        weights.append(orthogonal((sizes[i + 1], sizes[i]), gain, rng))
        biases.append(np.zeros(sizes[i + 1]))
    log_std = np.zeros(sizes[-1]) if policy else None
    return MlpParams(sizes, weights, biases, activation, log_std)


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    return (z > 0.0).astype(z.dtype)


def _as_batch(params: MlpParams, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != params.n_in:
        raise ShapeError("mlp input", params.n_in, x.shape[-1] if x.ndim else x.shape)
    return xb, single


def forward_cached(params: MlpParams, x):
    """Forward pass on a batch, returning the output and the per-layer cache for backward."""
    xb, _ = _as_batch(params, x)
    cache = []
    h = xb
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T + b
        if i < last:
            a = _act(params.activation[i], z)
            cache.append((h, z, a))
            h = a
        else:
            cache.append((h, z, z))
            h = z
    return h, cache


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    out, _ = forward_cached(params, x)
    return out[0] if np.ndim(x) == 1 else out


def backward_cached(params: MlpParams, cache, output_grad) -> MlpParams:
    """Gradients of ``sum(output * output_grad)`` given a cache from :func:`forward_cached`."""
    g = np.asarray(output_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache[-1][2].shape:
        raise ShapeError("output_grad", cache[-1][2].shape, g.shape)
    grads = params.zeros_like()
    for i in range(len(params.weights) - 1, -1, -1):
        h_in, z, a = cache[i]
        if i < len(params.weights) - 1:
            g = g * _act_grad(params.activation[i], z, a)
        grads.weights[i] = g.T @ h_in
        grads.biases[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i]
    return grads


def mlp_backward(params: MlpParams, x, output_grad) -> MlpParams:
    """Exact gradient of ``output . output_grad`` (summed over a batch) w.r.t. every weight and bias."""
    _, cache = forward_cached(params, x)
    return backward_cached(params, cache, output_grad)


def _views(buf, shapes):
    out, off = [], 0
    for shp in shapes:
        n = int(np.prod(shp))
        out.append(buf[off:off + n].reshape(shp))
        off += n
    return out


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        # keep both moments in one contiguous buffer each; the lists hold views into it
        self._m = np.concatenate([np.asarray(a, np.float64).reshape(-1) for a in self.first_moment]) \
            if self.first_moment else np.zeros(0)
        self._v = np.concatenate([np.asarray(a, np.float64).reshape(-1) for a in self.second_moment]) \
            if self.second_moment else np.zeros(0)
        self.first_moment = _views(self._m, [np.shape(a) for a in self.first_moment])
        self.second_moment = _views(self._v, [np.shape(a) for a in self.second_moment])

    def flat_moments(self):
        return self._m, self._v

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate=3e-4, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays],
                   0, learning_rate, **kw)

    def to_dict(self) -> dict:
        return {
            "moments": {
                "first": [m.tolist() for m in self.first_moment],
                "second": [v.tolist() for v in self.second_moment],
            },
            "step_count": self.step_count,
            "hyperparameters": {
                "learning_rate": self.learning_rate,
                "beta1": self.beta1,
                "beta2": self.beta2,
                "epsilon": self.epsilon,
            },
        }

    @classmethod
    def from_dict(cls, d: dict, like: MlpParams) -> "AdamState":
        shapes = [a.shape for a in like.arrays()]
        first = [np.asarray(m, dtype=np.float64).reshape(s) for m, s in zip(d["moments"]["first"], shapes)]
        second = [np.asarray(v, dtype=np.float64).reshape(s) for v, s in zip(d["moments"]["second"], shapes)]
        return cls(first, second, int(d["step_count"]), **d["hyperparameters"])


def adam_step(adam: AdamState, params: MlpParams, grads: MlpParams):
    """One bias-corrected Adam update, applied in place. Returns ``(params, adam)``."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays):
        raise ShapeError("grads", len(p_arrays), len(g_arrays))
    for p, g in zip(p_arrays, g_arrays):
        if p.shape != g.shape:
            raise ShapeError("grad", p.shape, g.shape)
    g = np.concatenate([x.reshape(-1) for x in g_arrays])
    if not np.isfinite(g).all():
        raise NonFiniteError("non-finite gradient passed to adam_step")
    adam.step_count += 1
    t = adam.step_count
    m, v = adam.flat_moments()
    m *= adam.beta1
    m += (1.0 - adam.beta1) * g
    v *= adam.beta2
    v += (1.0 - adam.beta2) * (g * g)
    step = (adam.learning_rate / (1.0 - adam.beta1 ** t)) * m
    step /= np.sqrt(v / (1.0 - adam.beta2 ** t)) + adam.epsilon
    off = 0
    for p in p_arrays:
        p -= step[off:off + p.size].reshape(p.shape)
        off += p.size
    if params.log_std is not None:
        np.clip(params.log_std, LOG_STD_MIN, LOG_STD_MAX, out=params.log_std)
    return params, adam


@dataclass
class GaussianAction:
    mean: np.ndarray
    log_std: np.ndarray
    sample: np.ndarray
    log_prob: float | np.ndarray


def clamp_log_std(log_std):
    return np.clip(np.asarray(log_std, dtype=np.float64), LOG_STD_MIN, LOG_STD_MAX)


def gaussian_log_prob(x, mean, log_std):
    """Diagonal Gaussian log density, summed over the last axis."""
    log_std = clamp_log_std(log_std)
    z = (np.asarray(x) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - _HALF_LOG_2PI, axis=-1)


def gaussian_entropy(log_std) -> float:
    log_std = clamp_log_std(log_std)
    return float(np.sum(log_std + 0.5 + _HALF_LOG_2PI))


def gaussian_sample(mean, log_std, rng) -> GaussianAction:
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    if mean.shape[-1] != log_std.shape[-1]:
        raise ShapeError("log_std", mean.shape[-1], log_std.shape[-1])
    ls = clamp_log_std(log_std)
    sample = mean + np.exp(ls) * rng.standard_normal(mean.shape)
    return GaussianAction(mean, ls, sample, gaussian_log_prob(sample, mean, ls))
