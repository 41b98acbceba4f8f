"""Clipped-surrogate PPO with GAE over the numpy networks in :mod:`rtw.nn`."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rtw._jit import njit, select
from rtw.nn import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    AdamState,
    MlpParams,
    NonFiniteError,
    ShapeError,
    adam_step,
    backward_cached,
    clamp_log_std,
    forward_cached,
    gaussian_entropy,
    gaussian_log_prob,
    init_mlp,
    mlp_forward,
)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class PpoConfig:
    clip_epsilon: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    learning_rate: float = 3e-4
    max_grad_norm: float | None = 0.5

    def __post_init__(self):
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be > 0")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if self.epochs < 0 or self.minibatch_size < 1:
            raise ValueError("epochs must be >= 0 and minibatch_size >= 1")


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    bootstrap_value: np.ndarray
    done_flags: np.ndarray
    env_ids: np.ndarray

    def __post_init__(self):
        t = len(self.rewards)
        if t == 0:
            raise ValueError("RolloutBatch must hold at least one transition")
        for name in ("observations", "actions", "log_probs", "values", "done_flags", "env_ids"):
            if len(getattr(self, name)) != t:
                raise ShapeError(name, t, len(getattr(self, name)))
        if not np.all(np.isfinite(self.log_probs)):
            raise NonFiniteError("non-finite log_probs in rollout batch")
        self.bootstrap_value = np.atleast_1d(np.asarray(self.bootstrap_value, dtype=np.float64))

    def __len__(self):
        return len(self.rewards)


@dataclass
class UpdateStats:
    loss: float = float("nan")
    clip_frac: float = float("nan")
    entropy: float = float("nan")
    value_err: float = float("nan")
    n_minibatches: int = 0

    def as_row(self) -> dict:
        return {"loss": self.loss, "clip_frac": self.clip_frac,
                "entropy": self.entropy, "value_err": self.value_err}


# --- GAE -------------------------------------------------------------------

@njit
def _gae_loop(rewards, values, dones, bootstrap, gamma, lam):
    n_t, n_env = rewards.shape
    adv = np.zeros((n_t, n_env))
    for e in range(n_env):
        last = 0.0
        for t in range(n_t - 1, -1, -1):
            next_v = bootstrap[e] if t == n_t - 1 else values[t + 1, e]
            nonterm = 1.0 - dones[t, e]
            delta = rewards[t, e] + gamma * next_v * nonterm - values[t, e]
            last = delta + gamma * lam * nonterm * last
            adv[t, e] = last
    return adv


def _gae_numpy(rewards, values, dones, bootstrap, gamma, lam):
    n_t = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_v = np.append(values[1:], bootstrap[None, :], axis=0)
    nonterm = 1.0 - dones
    deltas = rewards + gamma * next_v * nonterm - values
    last = np.zeros(rewards.shape[1])
    for t in range(n_t - 1, -1, -1):
        last = deltas[t] + gamma * lam * nonterm[t] * last
        adv[t] = last
    return adv


gae_kernel = select(_gae_loop, _gae_numpy)


def compute_gae(rewards, values, done_flags, bootstrap_value, gamma, gae_lambda):
    """Advantages and returns for a time-major ``(T,)`` or ``(T, n_envs)`` rollout.

    ``done_flags[t]`` marks that the episode ended with transition ``t``; nothing is
    bootstrapped across it.
    """
    r = np.asarray(rewards, dtype=np.float64)
    single = r.ndim == 1
    r2 = r[:, None] if single else r
    v2 = np.asarray(values, dtype=np.float64).reshape(r2.shape)
    d2 = np.asarray(done_flags, dtype=np.float64).reshape(r2.shape)
    boot = np.atleast_1d(np.asarray(bootstrap_value, dtype=np.float64))
    if boot.shape != (r2.shape[1],):
        raise ShapeError("bootstrap_value", r2.shape[1], boot.shape)
    if not (0.0 <= gamma <= 1.0 and 0.0 <= gae_lambda <= 1.0):
        raise ValueError("gamma and gae_lambda must lie in [0, 1]")
    adv = gae_kernel(r2, v2, d2, boot, float(gamma), float(gae_lambda))
    ret = adv + v2
    if single:
        return adv[:, 0], ret[:, 0]
    return adv, ret


def batch_gae(batch: RolloutBatch, gamma, gae_lambda):
    """GAE on a flat batch, split per ``env_ids`` in stored order."""
    adv = np.zeros(len(batch))
    for k, e in enumerate(np.unique(batch.env_ids)):
        idx = np.flatnonzero(batch.env_ids == e)
        boot = batch.bootstrap_value[e] if len(batch.bootstrap_value) > 1 else batch.bootstrap_value[0]
        a, _ = compute_gae(batch.rewards[idx], batch.values[idx], batch.done_flags[idx],
                           boot, gamma, gae_lambda)
        adv[idx] = a
    return adv, adv + batch.values


# --- actor-critic ----------------------------------------------------------

class ActorCritic:
    """Gaussian policy MLP with a state-independent log_std, plus a separate value MLP."""

    def __init__(self, obs_dim, act_dim, policy_hidden=(64, 64), value_hidden=(64, 64),
                 rng=None, learning_rate=3e-4, *, policy=None, value=None,
                 policy_opt=None, value_opt=None):
        if policy is None:
            rng = np.random.default_rng(0) if rng is None else rng
            policy = init_mlp([obs_dim, *policy_hidden, act_dim], rng, output_gain=0.01, policy=True)
            value = init_mlp([obs_dim, *value_hidden, 1], rng, output_gain=1.0)
        self.policy: MlpParams = policy
        self.value: MlpParams = value
        self.policy_opt = policy_opt or AdamState.for_params(policy, learning_rate)
        self.value_opt = value_opt or AdamState.for_params(value, learning_rate)

    @property
    def obs_dim(self):
        return self.policy.n_in

    @property
    def act_dim(self):
        return self.policy.n_out

    def set_learning_rate(self, lr):
        self.policy_opt.learning_rate = lr
        self.value_opt.learning_rate = lr

    def act(self, obs, rng, deterministic=False):
        """Return ``(action, log_prob, value)`` for one observation or a batch."""
        mean = mlp_forward(self.policy, obs)
        log_std = clamp_log_std(self.policy.log_std)
        if deterministic:
            action = mean
        else:
            action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        logp = gaussian_log_prob(action, mean, log_std)
        val = mlp_forward(self.value, obs)[..., 0]
        return action, logp, val

    def predict_value(self, obs):
        return mlp_forward(self.value, obs)[..., 0]

    def to_dict(self):
        return {
            "policy": {**self.policy.to_dict(), "adam": self.policy_opt.to_dict()},
            "value": {**self.value.to_dict(), "adam": self.value_opt.to_dict()},
        }

    @classmethod
    def from_dict(cls, d):
        policy = MlpParams.from_dict(d["policy"])
        value = MlpParams.from_dict(d["value"])
        return cls(policy.n_in, policy.n_out, policy=policy, value=value,
                   policy_opt=AdamState.from_dict(d["policy"]["adam"], policy),
                   value_opt=AdamState.from_dict(d["value"]["adam"], value))


# --- loss and update -------------------------------------------------------

def ppo_loss(policy: MlpParams, value: MlpParams, observations, actions, old_log_probs,
             advantages, returns, config: PpoConfig):
    """Clipped PPO loss and its exact gradients.

    Returns ``(loss, (policy_grads, value_grads), info)`` where ``info`` carries the
    clip fraction, entropy, value error and the policy term on its own.
    """
    obs = np.asarray(observations, dtype=np.float64)
    acts = np.asarray(actions, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    ret = np.asarray(returns, dtype=np.float64)
    n = len(obs)
    eps = config.clip_epsilon

    mean, pcache = forward_cached(policy, obs)
    raw_ls = policy.log_std
    ls = clamp_log_std(raw_ls)
    inv_std = np.exp(-ls)
    z = (acts - mean) * inv_std
    logp = np.sum(-0.5 * z * z - ls - _HALF_LOG_2PI, axis=1)
    ratio = np.exp(logp - old_log_probs)
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    s1 = ratio * adv
    s2 = clipped * adv
    policy_term = -np.mean(np.minimum(s1, s2))
    entropy = gaussian_entropy(raw_ls)

    v, vcache = forward_cached(value, obs)
    v = v[:, 0]
    value_err = float(np.mean((v - ret) ** 2))
    loss = policy_term + config.value_coef * value_err - config.entropy_coef * entropy
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite PPO loss ({loss})")

    d_logp = -(adv * (s1 <= s2)) * ratio / n
    g_mean = d_logp[:, None] * z * inv_std
    pgrads = backward_cached(policy, pcache, g_mean)
    g_ls = np.sum(d_logp[:, None] * (z * z - 1.0), axis=0) - config.entropy_coef
    in_range = (raw_ls >= LOG_STD_MIN) & (raw_ls <= LOG_STD_MAX)
    pgrads.log_std = np.where(in_range, g_ls, 0.0)

    g_v = 2.0 * config.value_coef * (v - ret) / n
    vgrads = backward_cached(value, vcache, g_v[:, None])

    info = {
        "policy_term": float(policy_term),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "entropy": entropy,
        "value_err": value_err,
    }
    return float(loss), (pgrads, vgrads), info


def _clip_grads(grads: MlpParams, max_norm):
    if max_norm is None:
        return grads
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.arrays()))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.arrays():
            g *= scale
    return grads


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=np.float64)
    std = adv.std()
    if std < 1e-8:
        return adv - adv.mean()
    return (adv - adv.mean()) / std


def ppo_update(agent: ActorCritic, batch: RolloutBatch, config: PpoConfig, rng,
               advantages=None, returns=None) -> UpdateStats:
    """Run ``config.epochs`` passes of shuffled minibatch PPO; parameters change in place."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    if config.epochs == 0:
        return UpdateStats()
    if advantages is None:
        advantages, returns = batch_gae(batch, config.gamma, config.gae_lambda)
    adv = normalize_advantages(advantages)
    agent.set_learning_rate(config.learning_rate)

    n = len(batch)
    mb = min(config.minibatch_size, n)
    totals = np.zeros(4)
    count = 0
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            loss, (pg, vg), info = ppo_loss(
                agent.policy, agent.value, batch.observations[idx], batch.actions[idx],
                batch.log_probs[idx], adv[idx], returns[idx], config)
            adam_step(agent.policy_opt, agent.policy, _clip_grads(pg, config.max_grad_norm))
            adam_step(agent.value_opt, agent.value, _clip_grads(vg, config.max_grad_norm))
            totals += (loss, info["clip_frac"], info["entropy"], info["value_err"])
            count += 1
    if not (agent.policy.all_finite() and agent.value.all_finite()):
        raise NonFiniteError("parameters became non-finite during PPO update")
    t = totals / count
    return UpdateStats(float(t[0]), float(t[1]), float(t[2]), float(t[3]), count)
