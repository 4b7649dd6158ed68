"""Training objectives and their analytic gradients.

All losses are sums over steps (not means). The distillation losses compare
a tempered *target* distribution against an untempered *student*
distribution, ``KL(softmax(target / tau) || softmax(student))``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .diffcore import log_softmax, mlp_backward, mlp_forward
from .exceptions import ParameterError, ShapeError


@dataclass
class Rollout:
    """One worker segment of at most ``t_max`` environment steps.

    Per-step arrays are stacked row-wise. ``teacher_logits`` holds NaN rows
    for steps taken before teacher logits were being recorded.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    policy_logits: np.ndarray
    distill_logits: Optional[np.ndarray] = None
    teacher_logits: Optional[np.ndarray] = None
    bootstrap_value: float = 0.0
    terminal: bool = False

    def __post_init__(self):
        n = len(self.actions)
        if n < 1:
            raise ShapeError("a rollout needs at least one step")
        for name in ("obs", "rewards", "values", "policy_logits"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"rollout field {name!r} has wrong length")
        if self.terminal and self.bootstrap_value != 0.0:
            raise ShapeError("terminal rollouts must bootstrap from 0")

    def __len__(self):
        return len(self.actions)

    def teacher_mask(self):
        if self.teacher_logits is None:
            return np.zeros(len(self), dtype=bool)
        return ~np.isnan(self.teacher_logits).any(axis=1)


class GaeResult(NamedTuple):
    advantages: np.ndarray
    returns: np.ndarray


@dataclass
class LogitsBatch:
    """Teacher/student logit pairs; teacher side is tempered by ``tau``."""

    teacher: np.ndarray
    student: np.ndarray
    tau: float = 1.0

    def __post_init__(self):
        self.teacher = np.atleast_2d(np.asarray(self.teacher, dtype=np.float64))
        self.student = np.atleast_2d(np.asarray(self.student, dtype=np.float64))
        if self.teacher.shape != self.student.shape:
            raise ShapeError(f"teacher {self.teacher.shape} vs student {self.student.shape}")
        if self.teacher.shape[0] == 0:
            raise ShapeError("empty logits batch")
        if self.tau <= 0:
            raise ParameterError("tau must be positive")


def gae(rewards, values, bootstrap, gamma=0.99, lam=1.0) -> GaeResult:
    """Backward GAE recursion over one rollout.

    ``A`` starts at 0 and ``R`` at ``bootstrap``; for ``i`` from last to
    first, ``delta = r_i + gamma v_{i+1} - v_i``, ``A = delta + gamma lam A``
    and ``R = r_i + gamma R``, where ``v_n`` is the bootstrap value.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.ndim != 1 or rewards.shape != values.shape or rewards.size == 0:
        raise ShapeError("rewards and values must be equal-length non-empty vectors")
    if not 0 <= gamma <= 1:
        raise ParameterError(f"gamma must be in [0, 1], got {gamma}")
    if not 0 <= lam <= 1:
        raise ParameterError(f"lambda must be in [0, 1], got {lam}")
    n = rewards.size
    adv = np.empty(n)
    ret = np.empty(n)
    a = 0.0
    r = float(bootstrap)
    v_next = float(bootstrap)
    for i in range(n - 1, -1, -1):
        delta = rewards[i] + gamma * v_next - values[i]
        a = delta + gamma * lam * a
        r = rewards[i] + gamma * r
        adv[i] = a
        ret[i] = r
        v_next = values[i]
    return GaeResult(adv, ret)


def gae_closed_form(rewards, values, bootstrap, gamma, lam) -> GaeResult:
    """Direct sums ``A_i = sum_k (gamma lam)^k delta_{i+k}``, ``R_i = sum_k gamma^k r_{i+k} + gamma^(n-i) b``."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = rewards.size
    v_ext = np.append(values, bootstrap)
    deltas = rewards + gamma * v_ext[1:] - values
    adv = np.zeros(n)
    ret = np.zeros(n)
    for i in range(n):
        for k in range(n - i):
            adv[i] += (gamma * lam) ** k * deltas[i + k]
            ret[i] += gamma ** k * rewards[i + k]
        ret[i] += gamma ** (n - i) * bootstrap
    return GaeResult(adv, ret)


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 ln 0 taken as 0."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or not np.isfinite(p).all() or abs(p.sum() - 1) > 1e-9:
        raise ParameterError("entropy needs a probability vector")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _entropy_rows(logp, p):
    return -(p * logp).sum(axis=-1)


def actor_critic_loss(rollout: Rollout, net, adv_ret: GaeResult, entropy_coef=0.01, value_coef=0.5, params=None):
    """Scalar actor-critic loss with advantages and returns held constant."""
    params = net.params if params is None else params
    out, _ = mlp_forward(net.spec, params, rollout.obs)
    logp = log_softmax(out["policy"])
    p = np.exp(logp)
    idx = np.arange(len(rollout))
    pg = -(logp[idx, rollout.actions] * adv_ret.advantages).sum()
    v = out["value"][:, 0]
    vl = value_coef * ((adv_ret.returns - v) ** 2).sum()
    ent = _entropy_rows(logp, p).sum()
    return pg + vl - entropy_coef * ent


def actor_critic_grads(rollout: Rollout, net, adv_ret: GaeResult, entropy_coef=0.01, value_coef=0.5):
    """Gradient of the summed actor-critic loss over a rollout.

    Per step the loss is ``-log pi(a|s) A + value_coef (R - v(s))^2
    - entropy_coef H(pi(.|s))``. ``A`` and ``R`` come from ``adv_ret`` and
    are constants.

    Returns ``(grads, stats)`` where ``stats`` holds the summed
    ``policy_loss``, ``value_loss`` and mean ``entropy``.
    """
    n = len(rollout)
    if adv_ret.advantages.shape != (n,) or adv_ret.returns.shape != (n,):
        raise ShapeError("GAE result does not match the rollout length")
    out, tape = mlp_forward(net.spec, net.params, rollout.obs, check=False)
    logp = log_softmax(out["policy"])
    p = np.exp(logp)
    idx = np.arange(n)
    adv = adv_ret.advantages
    onehot = np.zeros_like(p)
    onehot[idx, rollout.actions] = 1.0
    ent = _entropy_rows(logp, p)
    g_policy = adv[:, None] * (p - onehot)
    # dH/dz_j = -p_j (log p_j + H)
    g_policy += entropy_coef * p * (logp + ent[:, None])
    v = out["value"][:, 0]
    g_value = (value_coef * 2.0 * (v - adv_ret.returns))[:, None]
    grads, _ = mlp_backward(net.spec, net.params, tape, {"policy": g_policy, "value": g_value})
    stats = {
        "policy_loss": float(-(logp[idx, rollout.actions] * adv).sum()),
        "value_loss": float(value_coef * ((adv_ret.returns - v) ** 2).sum()),
        "entropy": float(ent.mean()),
    }
    return grads, stats


def kl_distill_loss(batch: LogitsBatch):
    """Summed ``KL(softmax(teacher / tau) || softmax(student))``.

    Returns ``(loss, grad)`` where ``grad[t] = q_t - p_t`` is the gradient
    with respect to each student logit row. The teacher gets no gradient.
    """
    logp = log_softmax(batch.teacher / batch.tau)
    p = np.exp(logp)
    logq = log_softmax(batch.student)
    loss = float((p * (logp - logq)).sum())
    return loss, np.exp(logq) - p


def deep_kd_loss(net, obs, target_logits, tau=1.0, head="distill", params=None):
    """Distill ``target_logits`` into one student head through the shared trunk.

    ``target_logits`` are treated as constants (for deep distillation they are
    the aligned teacher logits). Only the chosen head and the trunk receive
    gradient; every other head gets exactly zero.

    Returns ``(loss, grads)``.
    """
    params = net.params if params is None else params
    obs = np.atleast_2d(obs)
    target_logits = np.atleast_2d(target_logits)
    if target_logits.shape[1] != net.spec.head_dims[head]:
        raise ShapeError(
            f"target logits have {target_logits.shape[1]} actions, head {head!r} has {net.spec.head_dims[head]}"
        )
    out, tape = mlp_forward(net.spec, params, obs, check=False)
    loss, g = kl_distill_loss(LogitsBatch(target_logits, out[head], tau))
    grads, _ = mlp_backward(net.spec, params, tape, {head: g})
    return loss, grads


def tempered_kl_rows(target_logits, student_logits, tau=1.0):
    """Per-row ``KL(softmax(target / tau) || softmax(student))``."""
    logp = log_softmax(np.asarray(target_logits, dtype=np.float64) / tau)
    logq = log_softmax(student_logits)
    return (np.exp(logp) * (logp - logq)).sum(axis=-1)
