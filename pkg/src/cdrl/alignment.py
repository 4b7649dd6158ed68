"""Deep alignment network mapping teacher logits into a student action space.

The network ``F`` is trained so that ``softmax(F(z_teacher))`` matches the
tempered target-task policy ``softmax(z_target / tau)`` on the same states.
After training, ``F(z_teacher)`` is what gets distilled into the student's
distillation head.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .diffcore import MlpSpec, ParamSet, init_params, mlp_backward, mlp_forward
from .exceptions import ConfigError, ParameterError, ShapeError
from .losses import LogitsBatch, kl_distill_loss, tempered_kl_rows
from .networks import greedy_action, sample_action


def alignment_spec(d_alpha, d_beta, hidden_width=32, n_hidden=4):
    return MlpSpec(d_alpha, tuple((hidden_width, "relu") for _ in range(n_hidden)), (("out", d_beta),))


def align_forward(spec: MlpSpec, params: ParamSet, z_alpha):
    z_alpha = np.asarray(z_alpha, dtype=np.float64)
    if z_alpha.shape[-1] != spec.input_dim:
        raise ShapeError(f"teacher logits have {z_alpha.shape[-1]} entries, alignment expects {spec.input_dim}")
    out, _ = mlp_forward(spec, params, z_alpha)
    return out["out"]


def alignment_loss_and_grad(spec, params, z_alpha, z_beta, tau=1.0):
    """Summed ``KL(softmax(z_beta / tau) || softmax(F(z_alpha)))`` and its gradient in ``params``."""
    z_alpha = np.atleast_2d(z_alpha)
    z_beta = np.atleast_2d(z_beta)
    if z_beta.shape[1] != spec.head_dims["out"]:
        raise ShapeError(f"target logits have {z_beta.shape[1]} entries, alignment outputs {spec.head_dims['out']}")
    if z_alpha.shape[0] != z_beta.shape[0]:
        raise ShapeError("teacher and target batches differ in length")
    out, tape = mlp_forward(spec, params, z_alpha)
    loss, g = kl_distill_loss(LogitsBatch(z_beta, out["out"], tau))
    grads, _ = mlp_backward(spec, params, tape, {"out": g})
    return loss, grads


def align_train_step(spec, params, z_alpha, z_beta, tau=1.0, lr=0.001, max_grad_norm=None):
    """One in-place SGD step on ``params``; returns the pre-step batch loss."""
    if len(z_alpha) == 0:
        raise ShapeError("empty alignment batch")
    loss, grads = alignment_loss_and_grad(spec, params, z_alpha, z_beta, tau)
    if max_grad_norm is not None:
        norm = float(np.sqrt(grads.data @ grads.data))
        if norm > max_grad_norm:
            grads.data *= max_grad_norm / norm
    params.data -= lr * grads.data
    return loss


class AlignmentNetwork(TransformerMixin, BaseEstimator):
    """Learned map from teacher logits to student-space logits.

    Parameters
    ----------
    hidden_width : int
        Width of every hidden ReLU layer.
    n_hidden : int
        Number of hidden layers (0 gives a single affine map).
    tau : float
        Temperature applied to the target logits.
    learning_rate : float
        SGD step size. Gradients are summed over the minibatch.
    max_grad_norm : float or None
        Clip each step's gradient to this global L2 norm.
    batch_size : int
    max_iter : int
        Step budget for :meth:`fit`.
    tol : float
        A check counts as no improvement when the full-data loss fails to
        beat the best so far by this fraction.
    check_every : int
        Steps between full-data loss checks.
    n_iter_no_change : int
        :meth:`fit` stops after this many consecutive checks without
        improvement.
    random_state : int

    The parameters with the lowest full-data loss seen at a check are kept
    when :meth:`fit` returns.
    """

    def __init__(self, hidden_width=32, n_hidden=4, tau=1.0, learning_rate=0.001, max_grad_norm=20.0,
                 batch_size=256, max_iter=20000, tol=1e-4, check_every=1000, n_iter_no_change=3,
                 random_state=0):
        self.hidden_width = hidden_width
        self.n_hidden = n_hidden
        self.tau = tau
        self.learning_rate = learning_rate
        self.max_grad_norm = max_grad_norm
        self.batch_size = batch_size
        self.max_iter = max_iter
        self.tol = tol
        self.check_every = check_every
        self.n_iter_no_change = n_iter_no_change
        self.random_state = random_state

    def _init(self, d_alpha, d_beta):
        self.spec_ = alignment_spec(d_alpha, d_beta, self.hidden_width, self.n_hidden)
        self.params_ = init_params(self.spec_, np.random.default_rng(self.random_state))
        self.n_features_in_ = d_alpha
        self.n_outputs_ = d_beta
        self.n_iter_ = 0
        self.loss_curve_ = []

    @classmethod
    def from_params(cls, spec: MlpSpec, params: ParamSet, **kwargs):
        net = cls(hidden_width=spec.hidden[0][0] if spec.hidden else 0, n_hidden=len(spec.hidden), **kwargs)
        net.spec_ = spec
        net.params_ = params
        net.n_features_in_ = spec.input_dim
        net.n_outputs_ = spec.head_dims["out"]
        net.n_iter_ = 0
        net.loss_curve_ = []
        return net

    @classmethod
    def identity(cls, dim, **kwargs):
        """Single affine stage initialised to the identity map."""
        spec = MlpSpec(dim, (), (("out", dim),))
        params = ParamSet(spec.layout())
        params.weight("head_out")[...] = np.eye(dim)
        return cls.from_params(spec, params, **kwargs)

    def _validate(self, z_alpha, z_beta=None):
        z_alpha = check_array(z_alpha, dtype=np.float64)
        if z_beta is not None:
            z_beta = check_array(z_beta, dtype=np.float64)
            if len(z_beta) != len(z_alpha):
                raise ShapeError("z_alpha and z_beta differ in length")
        return z_alpha, z_beta

    def partial_fit(self, z_alpha, z_beta):
        """One SGD step on the given pairs (the whole input is one batch)."""
        z_alpha, z_beta = self._validate(z_alpha, z_beta)
        if not hasattr(self, "params_"):
            self._init(z_alpha.shape[1], z_beta.shape[1])
        loss = align_train_step(self.spec_, self.params_, z_alpha, z_beta, self.tau, self.learning_rate,
                                self.max_grad_norm)
        self.n_iter_ += 1
        return loss

    def fit(self, z_alpha, z_beta):
        """Minibatch SGD until the loss stops improving or ``max_iter`` steps."""
        if self.tau <= 0:
            raise ParameterError("tau must be positive")
        z_alpha, z_beta = self._validate(z_alpha, z_beta)
        if not hasattr(self, "params_"):
            self._init(z_alpha.shape[1], z_beta.shape[1])
        rng = np.random.default_rng(self.random_state)
        n = len(z_alpha)
        best = self.mean_kl(z_alpha, z_beta)
        best_data = self.params_.data.copy()
        self.loss_curve_.append(best)
        stale = 0
        for it in range(1, self.max_iter + 1):
            idx = rng.integers(0, n, size=min(self.batch_size, n))
            align_train_step(self.spec_, self.params_, z_alpha[idx], z_beta[idx], self.tau, self.learning_rate,
                             self.max_grad_norm)
            self.n_iter_ += 1
            if it % self.check_every == 0:
                cur = self.mean_kl(z_alpha, z_beta)
                self.loss_curve_.append(cur)
                if cur < best * (1 - self.tol):
                    stale = 0
                else:
                    stale += 1
                if cur < best:
                    best = cur
                    best_data = self.params_.data.copy()
                if stale >= self.n_iter_no_change:
                    break
        self.params_.data[...] = best_data
        return self

    def transform(self, z_alpha):
        check_is_fitted(self, "params_")
        z_alpha = np.asarray(z_alpha, dtype=np.float64)
        return align_forward(self.spec_, self.params_, z_alpha)

    def mean_kl(self, z_alpha, z_beta):
        """Mean per-pair ``KL(softmax(z_beta / tau) || softmax(F(z_alpha)))``."""
        return float(tempered_kl_rows(z_beta, self.transform(z_alpha), self.tau).mean())


def collect_logit_pairs(teacher, expert, env, steps, seed=0, greedy=False):
    """Roll ``expert`` in ``env`` and record both networks' policy logits per state.

    Both networks see the identical observation each step.
    """
    rng = np.random.default_rng(seed)
    obs = env.reset(seed)
    episode = 0
    observations = np.empty((steps, env.obs_dim))
    for t in range(steps):
        observations[t] = obs
        logits = expert.forward(obs).policy_logits
        a = greedy_action(logits) if greedy else sample_action(logits, rng)
        res = env.step(a)
        obs = res.observation
        if res.terminal:
            episode += 1
            obs = env.reset(seed * 1_000_003 + episode)
    z_alpha = teacher.forward(observations).policy_logits
    z_beta = expert.forward(observations).policy_logits
    return z_alpha, z_beta, observations


def offline_train_alignment(teacher, expert, env, steps, cfg=None, n_samples=10000, seed=0):
    """Fit an alignment network from a teacher to a target-task expert.

    ``steps`` is the SGD step budget; zero leaves the freshly initialised
    parameters untouched. ``cfg`` holds :class:`AlignmentNetwork`
    hyperparameters.
    """
    if expert.env.name != env.descriptor.name:
        raise ConfigError(f"expert is for {expert.env.name}, environment is {env.descriptor.name}")
    if teacher.spec.input_dim != env.obs_dim:
        raise ConfigError("teacher cannot read the target environment's observations")
    params = dict(cfg or {})
    params.setdefault("random_state", seed)
    net = AlignmentNetwork(max_iter=steps, **params)
    net._init(teacher.action_dim, expert.action_dim)
    if steps <= 0:
        return net
    z_alpha, z_beta, _ = collect_logit_pairs(teacher, expert, env, n_samples, seed=seed)
    return net.fit(z_alpha, z_beta)
