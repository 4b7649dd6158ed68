"""Scikit-learn style wrapper around :func:`cdrl.orchestrator.run_experiment`.

Training data comes from the environment, so ``fit`` ignores ``X``; the
prediction methods take observation arrays.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .diffcore import softmax_tempered
from .evaluation import evaluate
from .networks import TeacherNetwork
from .orchestrator import ExperimentSpec, WorkerConfig, run_experiment


class ActorCriticAgent(BaseEstimator):
    """Asynchronous actor-critic agent with optional knowledge transfer.

    Parameters mirror the run configuration keys. ``teacher`` and
    ``alignment`` accept in-memory networks in place of checkpoint paths.

    Examples
    --------
    >>> agent = ActorCriticAgent(env="catch3", T_max=2000, workers=1, scheduler="round_robin")
    >>> agent.fit().predict(np.zeros((2, 3))).shape
    (2,)
    """

    def __init__(self, mode="a3c", env="catch3", teacher_env=None, teacher_checkpoint=None,
                 align_checkpoint=None, teacher=None, alignment=None, workers=8, teacher_workers=None,
                 scheduler="threads", hidden_width=64, hidden_layers=2, t_max=20, T_max=300_000, T1=None,
                 T2=None, distill_stop=None, gamma=0.9, gae_lambda=1.0, tau=1.0, entropy_coef=0.01,
                 distill_weight=1.0, lr=0.02, max_grad_norm=5.0, random_state=0, n_eval_episodes=100):
        self.mode = mode
        self.env = env
        self.teacher_env = teacher_env
        self.teacher_checkpoint = teacher_checkpoint
        self.align_checkpoint = align_checkpoint
        self.teacher = teacher
        self.alignment = alignment
        self.workers = workers
        self.teacher_workers = teacher_workers
        self.scheduler = scheduler
        self.hidden_width = hidden_width
        self.hidden_layers = hidden_layers
        self.t_max = t_max
        self.T_max = T_max
        self.T1 = T1
        self.T2 = T2
        self.distill_stop = distill_stop
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.tau = tau
        self.entropy_coef = entropy_coef
        self.distill_weight = distill_weight
        self.lr = lr
        self.max_grad_norm = max_grad_norm
        self.random_state = random_state
        self.n_eval_episodes = n_eval_episodes

    def to_spec(self) -> ExperimentSpec:
        worker = WorkerConfig(
            t_max=self.t_max, T_max=self.T_max, T1=self.T1, T2=self.T2, distill_stop=self.distill_stop,
            gamma=self.gamma, gae_lambda=self.gae_lambda, tau=self.tau, entropy_coef=self.entropy_coef,
            distill_weight=self.distill_weight, lr=self.lr, max_grad_norm=self.max_grad_norm,
            seed=self.random_state,
        )
        return ExperimentSpec(
            mode=self.mode, env=self.env, teacher_env=self.teacher_env,
            teacher_checkpoint=self.teacher_checkpoint, align_checkpoint=self.align_checkpoint,
            workers=self.workers, teacher_workers=self.teacher_workers, hidden_width=self.hidden_width,
            hidden_layers=self.hidden_layers, scheduler=self.scheduler, worker=worker,
        )

    def fit(self, X=None, y=None, out_dir=None):
        """Train in the environment. ``X`` and ``y`` are ignored."""
        result = run_experiment(self.to_spec(), out_dir=out_dir, teacher=self.teacher, alignment=self.alignment)
        self.result_ = result
        self.network_ = result.student
        self.n_features_in_ = result.student.spec.input_dim
        self.n_actions_ = result.student.action_dim
        self.episode_rewards_ = result.episode_rewards()
        return self

    def _check(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, agent expects {self.n_features_in_}")
        return X

    def decision_function(self, X):
        """Policy logits, one row per observation."""
        X = self._check(X)
        return self.network_.forward(X).policy_logits

    def predict_proba(self, X):
        return softmax_tempered(self.decision_function(X))

    def predict(self, X):
        """Greedy actions."""
        return np.argmax(self.decision_function(X), axis=1)

    def predict_value(self, X):
        X = self._check(X)
        return np.atleast_1d(self.network_.forward(X).value)

    def as_teacher(self) -> TeacherNetwork:
        check_is_fitted(self, "network_")
        return TeacherNetwork.from_network(self.network_)

    def score(self, X=None, y=None):
        """Mean sampled-policy return over ``n_eval_episodes`` fresh episodes."""
        check_is_fitted(self, "network_")
        return float(evaluate(self.network_, self.env, self.n_eval_episodes, seed=self.random_state).mean())
