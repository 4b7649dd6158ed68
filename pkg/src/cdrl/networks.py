"""Actor-critic networks built on :mod:`cdrl.diffcore`.

A student has one shared trunk and three linear heads: ``policy`` (drives
action selection), ``distill`` (receives transferred knowledge only) and
``value``. A teacher has ``policy`` and ``value`` heads. Any network whose
spec has a ``policy`` and a ``value`` head can act as a teacher, which is
how trained students get promoted.
"""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from . import envs
from .diffcore import MlpSpec, Tape, init_params, mlp_forward, softmax_tempered
from .exceptions import ConfigError, ShapeError

DEFAULT_HIDDEN = ((64, "relu"), (64, "relu"))


class PolicyOutput(NamedTuple):
    policy_logits: np.ndarray
    distill_logits: Optional[np.ndarray]
    value: float
    tape: Tape


class ActorCriticNetwork:
    """Shared-trunk network bound to one environment's descriptor."""

    head_names = ("policy", "value")

    def __init__(self, env, params=None, hidden=DEFAULT_HIDDEN, seed=0, spec=None):
        self.env = env if isinstance(env, envs.EnvDescriptor) else envs.describe(env)
        if spec is None:
            spec = self.build_spec(self.env, hidden)
        self.spec = spec
        dims = spec.head_dims
        for name in self.head_names:
            if name not in dims:
                raise ShapeError(f"network spec lacks a {name!r} head")
        if spec.input_dim != self.env.obs_dim:
            raise ConfigError(f"network input {spec.input_dim} != {self.env.name} obs_dim {self.env.obs_dim}")
        if dims["policy"] != self.env.action_dim:
            raise ConfigError(
                f"policy head width {dims['policy']} != {self.env.name} action_dim {self.env.action_dim}"
            )
        if params is None:
            params = init_params(spec, np.random.default_rng(seed))
        elif params.layout != tuple(spec.layout()):
            raise ShapeError("parameter layout does not match the network spec")
        self.params = params

    @classmethod
    def build_spec(cls, env, hidden=DEFAULT_HIDDEN):
        heads = [(n, 1 if n == "value" else env.action_dim) for n in cls.head_names]
        return MlpSpec(env.obs_dim, tuple(hidden), tuple(heads))

    @property
    def action_dim(self):
        return self.env.action_dim

    def forward(self, obs) -> PolicyOutput:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1:] != (self.spec.input_dim,) or obs.ndim > 2:
            raise ShapeError(f"expected observation of width {self.spec.input_dim}, got {obs.shape}")
        out, tape = mlp_forward(self.spec, self.params, obs, check=False)
        value = out["value"][..., 0]
        if obs.ndim == 1:
            value = float(value)
        return PolicyOutput(out["policy"], out.get("distill"), value, tape)

    def action_probabilities(self, obs):
        return softmax_tempered(self.forward(obs).policy_logits)

    def with_params(self, params):
        return type(self)(self.env, params=params, spec=self.spec)

    def copy(self):
        return self.with_params(self.params.copy())


class StudentNetwork(ActorCriticNetwork):
    head_names = ("policy", "distill", "value")


class TeacherNetwork(ActorCriticNetwork):
    """Read-only source of logits; ``forward`` never touches ``params``."""

    head_names = ("policy", "value")

    @classmethod
    def from_network(cls, net: ActorCriticNetwork) -> "TeacherNetwork":
        return cls(net.env, params=net.params.copy(), spec=net.spec)


def student_forward(net: StudentNetwork, obs) -> PolicyOutput:
    return net.forward(obs)


def sample_action(policy_logits, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from softmax(policy_logits) using one uniform."""
    p = softmax_tempered(policy_logits)
    u = rng.random()
    c = np.cumsum(p)
    a = int(np.searchsorted(c, u * c[-1], side="right"))
    return min(a, p.size - 1)


def greedy_action(policy_logits) -> int:
    """Argmax with ties broken toward the lowest index."""
    return int(np.argmax(np.asarray(policy_logits)))


def pad_or_truncate(z, dim):
    """Identity-style map of logits into ``dim`` actions (zero padding)."""
    z = np.asarray(z, dtype=np.float64)
    k = z.shape[-1]
    if k >= dim:
        return z[..., :dim].copy()
    pad = np.zeros(z.shape[:-1] + (dim - k,))
    return np.concatenate([z, pad], axis=-1)
