"""Policy evaluation and action-distribution diagnostics."""
from __future__ import annotations

import numpy as np

from . import envs
from .diffcore import softmax_tempered
from .exceptions import ConfigError
from .networks import greedy_action, pad_or_truncate, sample_action


def evaluate(net, env_name, episodes, greedy=False, seed=0):
    """Per-episode returns of ``net`` on fresh episode seeds."""
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    rng = np.random.default_rng([seed, 3])
    env = envs.make_env(env_name)
    out = []
    for i in range(episodes):
        obs = env.reset(envs.mix_seed(seed, 0xE7A1, i))
        total = 0.0
        while True:
            logits = net.forward(obs).policy_logits
            res = env.step(greedy_action(logits) if greedy else sample_action(logits, rng))
            total += res.reward
            obs = res.observation
            if res.terminal:
                break
        out.append(total)
    return np.array(out)


def action_distribution(net, env_name, steps, align=None, pad=False, behavior=None, seed=0):
    """Mean action probabilities over ``steps`` visited states.

    States are visited by sampling from ``behavior`` (defaults to the
    distribution being measured). With ``align`` the network's logits go
    through the alignment map; with ``pad`` they are zero-padded or cut to
    the environment's action count.
    """
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    desc = envs.describe(env_name)

    def logits_of(obs):
        z = net.forward(obs).policy_logits
        if align is not None:
            if align.n_features_in_ != z.shape[-1] or align.n_outputs_ != desc.action_dim:
                raise ConfigError("alignment network does not map this checkpoint into the environment")
            return align.transform(z)
        if pad:
            return pad_or_truncate(z, desc.action_dim)
        if z.shape[-1] != desc.action_dim:
            raise ConfigError(f"checkpoint has {z.shape[-1]} actions, {desc.name} has {desc.action_dim}")
        return z

    rng = np.random.default_rng([seed, 5])
    env = envs.make_env(env_name)
    obs = env.reset(seed)
    episode = 0
    total = np.zeros(desc.action_dim)
    for _ in range(steps):
        z = logits_of(obs)
        total += softmax_tempered(z)
        act_logits = z if behavior is None else behavior.forward(obs).policy_logits
        res = env.step(sample_action(act_logits, rng))
        obs = res.observation
        if res.terminal:
            episode += 1
            obs = env.reset(envs.mix_seed(seed, episode))
    return total / steps
