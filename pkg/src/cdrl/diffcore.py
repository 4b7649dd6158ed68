"""Dense feed-forward networks with hand-written gradients.

Everything here works on float64 numpy arrays. A network is described by an
:class:`MlpSpec` and its weights live in a single flat :class:`ParamSet`
vector, which is what gets synchronized, checkpointed and updated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple

import numpy as np

from .exceptions import ParameterError, ShapeError

ACTIVATIONS = ("relu", "identity")


class ParamSet:
    """Flat parameter vector with a named per-layer layout.

    Parameters
    ----------
    layout : sequence of (name, rows, cols, has_bias)
        Layer ``name`` owns a ``rows x cols`` weight matrix followed by a
        ``cols`` bias vector when ``has_bias`` is true.
    data : array-like, optional
        Initial values. Zeros when omitted. Always copied.
    """

    def __init__(self, layout, data=None):
        self.layout = tuple((str(n), int(r), int(c), bool(b)) for n, r, c, b in layout)
        size = sum(r * c + (c if b else 0) for _, r, c, b in self.layout)
        if data is None:
            self.data = np.zeros(size)
        else:
            self.data = np.array(data, dtype=np.float64).ravel()
            if self.data.size != size:
                raise ShapeError(f"layout needs {size} values, got {self.data.size}")
        self._spans = {}
        self._views = {}
        offset = 0
        for name, rows, cols, has_bias in self.layout:
            if name in self._spans:
                raise ShapeError(f"duplicate layer name {name!r}")
            start = offset
            w = self.data[offset:offset + rows * cols].reshape(rows, cols)
            offset += rows * cols
            b = None
            if has_bias:
                b = self.data[offset:offset + cols]
                offset += cols
            self._spans[name] = slice(start, offset)
            self._views[name] = (w, b)

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return self.data.size

    def __repr__(self):
        names = ", ".join(n for n, *_ in self.layout)
        return f"ParamSet(size={self.size}, layers=[{names}])"

    def weight(self, name):
        return self._views[name][0]

    def bias(self, name):
        return self._views[name][1]

    def span(self, name) -> slice:
        """Slice of :attr:`data` holding layer ``name`` (weights then bias)."""
        return self._spans[name]

    @property
    def layer_names(self):
        return [n for n, *_ in self.layout]

    def zeros_like(self) -> "ParamSet":
        return ParamSet(self.layout)

    def copy(self) -> "ParamSet":
        return ParamSet(self.layout, self.data)

    def with_data(self, data) -> "ParamSet":
        return ParamSet(self.layout, data)

    def check_compatible(self, other: "ParamSet"):
        if other.layout != self.layout:
            raise ShapeError("parameter layouts differ")


@dataclass(frozen=True)
class MlpSpec:
    """Shape of a trunk of hidden layers with several linear output heads.

    ``hidden`` lists ``(width, activation)`` per trunk layer; every head reads
    the final trunk activation (or the raw input when there are no hidden
    layers).
    """

    input_dim: int
    hidden: tuple = ((64, "relu"), (64, "relu"))
    heads: tuple = (("out", 1),)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple((int(w), str(a)) for w, a in self.hidden))
        heads = self.heads.items() if isinstance(self.heads, Mapping) else self.heads
        object.__setattr__(self, "heads", tuple((str(n), int(w)) for n, w in heads))
        if self.input_dim < 1:
            raise ShapeError("input_dim must be >= 1")
        if not self.heads:
            raise ShapeError("an MlpSpec needs at least one head")
        for width, act in self.hidden:
            if width < 1:
                raise ShapeError("hidden widths must be >= 1")
            if act not in ACTIVATIONS:
                raise ParameterError(f"unknown activation {act!r}")
        names = [n for n, _ in self.heads]
        if len(set(names)) != len(names):
            raise ShapeError("duplicate head names")
        for name, width in self.heads:
            if width < 1:
                raise ShapeError(f"head {name!r} must have width >= 1")

    @property
    def head_dims(self):
        return dict(self.heads)

    @property
    def trunk_dim(self):
        return self.hidden[-1][0] if self.hidden else self.input_dim

    def layout(self):
        out = []
        fan_in = self.input_dim
        for i, (width, _) in enumerate(self.hidden):
            out.append((f"hidden{i}", fan_in, width, True))
            fan_in = width
        for name, width in self.heads:
            out.append((f"head_{name}", fan_in, width, True))
        return out

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden": [list(h) for h in self.hidden],
            "heads": [list(h) for h in self.heads],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["input_dim"]), tuple(map(tuple, d["hidden"])), tuple(map(tuple, d["heads"])))


def init_params(spec: MlpSpec, rng: np.random.Generator) -> ParamSet:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    params = ParamSet(spec.layout())
    for name, rows, cols, _ in params.layout:
        bound = 1.0 / np.sqrt(rows)
        params.weight(name)[...] = rng.uniform(-bound, bound, size=(rows, cols))
    return params


class Tape(NamedTuple):
    """Activation record produced by :func:`mlp_forward`."""

    inputs: list      # input to each trunk layer
    preacts: list     # pre-activation of each trunk layer
    trunk: np.ndarray  # final trunk activation, shared by every head


def _check_finite(z, what):
    if not np.all(np.isfinite(z)):
        raise ParameterError(f"{what} contains non-finite values")


def softmax_tempered(z, tau=1.0):
    """Softmax of ``z / tau`` along the last axis, max-subtracted."""
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise ShapeError("softmax needs a non-empty logits vector")
    _check_finite(z, "logits")
    s = z / tau
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise ShapeError("log_softmax needs a non-empty logits vector")
    _check_finite(z, "logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _check_params(spec, params):
    if params.layout != tuple((n, r, c, b) for n, r, c, b in spec.layout()):
        raise ShapeError("parameter layout does not match the network spec")


def mlp_forward(spec: MlpSpec, params: ParamSet, x, check=True):
    """Evaluate every head for one input vector or a batch of rows.

    Returns ``(outputs, tape)`` where ``outputs`` maps head name to its
    output (same leading shape as ``x``).
    """
    x = np.asarray(x, dtype=np.float64)
    if check:
        _check_params(spec, params)
        if x.ndim not in (1, 2) or x.shape[-1] != spec.input_dim:
            raise ShapeError(f"expected input of width {spec.input_dim}, got shape {x.shape}")
    views = params._views
    inputs, preacts = [], []
    h = x
    for i, (_, act) in enumerate(spec.hidden):
        w, b = views[f"hidden{i}"]
        z = h @ w + b
        inputs.append(h)
        preacts.append(z)
        h = np.maximum(z, 0.0) if act == "relu" else z
    outputs = {}
    for name, _ in spec.heads:
        w, b = views["head_" + name]
        outputs[name] = h @ w + b
    return outputs, Tape(inputs, preacts, h)


def mlp_backward(spec: MlpSpec, params: ParamSet, tape: Tape, head_grads):
    """Backpropagate head gradients to parameters and input.

    ``head_grads`` maps head names to dLoss/dOutput; heads that are left out
    contribute nothing. For batched tapes the gradient is summed over rows.

    Returns ``(grads, dx)`` with ``grads`` a :class:`ParamSet` of the same
    layout as ``params``.
    """
    _check_params(spec, params)
    dims = spec.head_dims
    unknown = set(head_grads) - set(dims)
    if unknown:
        raise ShapeError(f"unknown heads: {sorted(unknown)}")
    grads = params.zeros_like()
    h = tape.trunk
    batched = h.ndim == 2
    dh = np.zeros_like(h)
    for name, g in head_grads.items():
        g = np.asarray(g, dtype=np.float64)
        if g.shape != h.shape[:-1] + (dims[name],):
            raise ShapeError(f"gradient for head {name!r} has shape {g.shape}")
        w = params.weight("head_" + name)
        if batched:
            grads.weight("head_" + name)[...] = h.T @ g
            grads.bias("head_" + name)[...] = g.sum(axis=0)
        else:
            grads.weight("head_" + name)[...] = np.outer(h, g)
            grads.bias("head_" + name)[...] = g
        dh += g @ w.T
    for i in range(len(spec.hidden) - 1, -1, -1):
        act = spec.hidden[i][1]
        dz = dh * (tape.preacts[i] > 0) if act == "relu" else dh
        inp = tape.inputs[i]
        name = f"hidden{i}"
        if batched:
            grads.weight(name)[...] = inp.T @ dz
            grads.bias(name)[...] = dz.sum(axis=0)
        else:
            grads.weight(name)[...] = np.outer(inp, dz)
            grads.bias(name)[...] = dz
        dh = dz @ params.weight(name).T
    return grads, dh


def finite_difference_grad(f: Callable[[ParamSet], float], params: ParamSet, eps=1e-5) -> ParamSet:
    """Central-difference gradient of a scalar function of ``params``."""
    if eps <= 0:
        raise ParameterError("eps must be positive")
    out = params.zeros_like()
    probe = params.copy()
    for i in range(params.size):
        orig = probe.data[i]
        probe.data[i] = orig + eps
        hi = f(probe)
        probe.data[i] = orig - eps
        lo = f(probe)
        probe.data[i] = orig
        out.data[i] = (hi - lo) / (2 * eps)
    return out


def relative_error(a, b, floor=1e-6):
    """Max elementwise ``|a-b| / max(|a|, |b|, floor)``.

    The floor keeps coordinates whose true gradient is essentially zero from
    turning finite-difference round-off into a huge ratio.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0
