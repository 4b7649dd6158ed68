"""Two seeded toy games with deliberately mismatched action spaces.

``catch3`` (3 actions) catches falling balls with a paddle; ``aimfire5``
(5 actions) walks to a target and fires. Action index 1 means *left* in
catch3 but *right* in aimfire5, so naive logit transfer between the two is
actively misleading.

Randomness comes from :func:`mix_seed`, a SplitMix64 finalizer applied to
``(seed, round_index, draw_index)``. Each spawn is therefore a pure function
of the episode seed and the round number, independent of how many workers
exist or how many steps earlier rounds took.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, ParameterError, StateError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integers into one well-mixed 64-bit value."""
    h = 0
    for p in parts:
        h = splitmix64(h ^ (int(p) & _MASK64))
    return h


@dataclass(frozen=True)
class EnvDescriptor:
    name: str
    action_dim: int
    obs_dim: int
    max_episode_steps: int
    action_labels: tuple

    def __post_init__(self):
        if self.action_dim < 2:
            raise ParameterError("an environment needs at least two actions")


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool


class _Env:
    descriptor: EnvDescriptor

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.reset(seed)

    @property
    def action_dim(self):
        return self.descriptor.action_dim

    @property
    def obs_dim(self):
        return self.descriptor.obs_dim

    def _check_action(self, action):
        if self.terminal:
            raise StateError("episode is over; call reset() first")
        a = int(action)
        if a != action or not 0 <= a < self.descriptor.action_dim:
            raise ParameterError(
                f"action {action!r} outside [0, {self.descriptor.action_dim})"
            )
        return a

    def _draw(self, round_index, k):
        return mix_seed(self.seed, round_index, k)


class Catch3(_Env):
    """Catch balls dropped on a 7x7 grid.

    An episode is 8 drops. Each drop spawns a ball at a random column of the
    top row; it falls one row per step and the drop is scored (+1 caught,
    -1 missed) when it reaches the bottom row. The paddle starts each episode
    in the middle column and keeps its position between drops.

    Observation: ``[ball_col, ball_row, paddle_col] / 6``.
    """

    WIDTH = 7
    HEIGHT = 7
    DROPS = 8
    STAY, LEFT, RIGHT = 0, 1, 2
    descriptor = EnvDescriptor("catch3", 3, 3, DROPS * (HEIGHT - 1), ("stay", "left", "right"))

    def reset(self, seed=None):
        if seed is not None:
            self.seed = int(seed)
        self.drop = 0
        self.paddle = self.WIDTH // 2
        self.terminal = False
        self._spawn()
        return self.observation()

    def _spawn(self):
        self.ball_col = self._draw(self.drop, 0) % self.WIDTH
        self.ball_row = 0

    def observation(self):
        return np.array([self.ball_col, self.ball_row, self.paddle], dtype=np.float64) / (self.WIDTH - 1)

    def step(self, action) -> StepResult:
        a = self._check_action(action)
        if a == self.LEFT:
            self.paddle = max(self.paddle - 1, 0)
        elif a == self.RIGHT:
            self.paddle = min(self.paddle + 1, self.WIDTH - 1)
        self.ball_row += 1
        reward = 0.0
        if self.ball_row == self.HEIGHT - 1:
            reward = 1.0 if self.paddle == self.ball_col else -1.0
            self.drop += 1
            if self.drop == self.DROPS:
                self.terminal = True
            else:
                self._spawn()
        return StepResult(self.observation(), reward, self.terminal)


class AimFire5(_Env):
    """Walk to a stationary target on a 7-cell track and shoot it.

    An episode is 8 rounds. Each round spawns the agent and target at
    distinct random columns. ``fire`` scores +1 only when aligned,
    ``long-fire`` scores +1 when within one cell; either ends the round
    with -1 otherwise. A round with 10 steps and no shot ends with -1.

    Observation: ``[agent_col / 6, target_col / 6, steps_left / 10]``.
    """

    WIDTH = 7
    ROUNDS = 8
    ROUND_STEPS = 10
    FIRE, RIGHT, STAY, LEFT, LONG_FIRE = 0, 1, 2, 3, 4
    descriptor = EnvDescriptor(
        "aimfire5", 5, 3, ROUNDS * ROUND_STEPS, ("fire", "right", "stay", "left", "long-fire")
    )

    def reset(self, seed=None):
        if seed is not None:
            self.seed = int(seed)
        self.round = 0
        self.terminal = False
        self._spawn()
        return self.observation()

    def _spawn(self):
        self.agent = self._draw(self.round, 0) % self.WIDTH
        offset = 1 + self._draw(self.round, 1) % (self.WIDTH - 1)
        self.target = (self.agent + offset) % self.WIDTH
        self.steps_left = self.ROUND_STEPS

    def observation(self):
        return np.array(
            [self.agent / (self.WIDTH - 1), self.target / (self.WIDTH - 1), self.steps_left / self.ROUND_STEPS]
        )

    def step(self, action) -> StepResult:
        a = self._check_action(action)
        reward = 0.0
        round_over = False
        if a == self.FIRE:
            reward = 1.0 if self.agent == self.target else -1.0
            round_over = True
        elif a == self.LONG_FIRE:
            reward = 1.0 if abs(self.agent - self.target) <= 1 else -1.0
            round_over = True
        else:
            if a == self.RIGHT:
                self.agent = min(self.agent + 1, self.WIDTH - 1)
            elif a == self.LEFT:
                self.agent = max(self.agent - 1, 0)
            self.steps_left -= 1
            if self.steps_left == 0:
                reward = -1.0
                round_over = True
        if round_over:
            self.round += 1
            if self.round == self.ROUNDS:
                self.terminal = True
            else:
                self._spawn()
        return StepResult(self.observation(), reward, self.terminal)


ENVIRONMENTS = {"catch3": Catch3, "aimfire5": AimFire5}


def make_env(name: str, seed: int = 0):
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(seed)


def describe(name: str) -> EnvDescriptor:
    try:
        return ENVIRONMENTS[name].descriptor
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None


def catch3_new(seed: int) -> Catch3:
    return Catch3(seed)


def aimfire5_new(seed: int) -> AimFire5:
    return AimFire5(seed)


def step(env, action) -> StepResult:
    return env.step(action)


def reset(env, seed) -> np.ndarray:
    return env.reset(seed)


def greedy_catch3(obs) -> int:
    """Hand-coded optimal Catch-3 policy: chase the ball column."""
    ball, _, paddle = np.rint(np.asarray(obs) * 6).astype(int)
    if ball < paddle:
        return Catch3.LEFT
    if ball > paddle:
        return Catch3.RIGHT
    return Catch3.STAY


def greedy_aimfire5(obs) -> int:
    """Hand-coded optimal AimFire-5 policy: close to within one cell, then long-fire."""
    agent, target = np.rint(np.asarray(obs[:2]) * 6).astype(int)
    if abs(agent - target) <= 1:
        return AimFire5.LONG_FIRE
    return AimFire5.RIGHT if target > agent else AimFire5.LEFT


def run_episode(env, policy, seed):
    """Play one episode with ``policy(obs) -> action``; return total reward."""
    obs = env.reset(seed)
    total = 0.0
    while True:
        res = env.step(policy(obs))
        total += res.reward
        if res.terminal:
            return total
        obs = res.observation
