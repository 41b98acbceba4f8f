"""The weight-emitting teacher: history state, logistic-squashed Gaussian actions, PPO updates."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from rtw.nn import ShapeError
from rtw.ppo import ActorCritic, PpoConfig, RolloutBatch, UpdateStats, compute_gae, ppo_update

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TeacherRecord:
    weights: np.ndarray
    mean_primary: float
    mean_aux: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        a = np.asarray(self.mean_aux, dtype=np.float64)
        if w.shape != a.shape:
            raise ShapeError("mean_aux", w.shape, a.shape)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(a)) and np.isfinite(self.mean_primary)):
            raise ValueError("teacher record must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mean_aux", a)

    @property
    def k(self):
        return self.weights.shape[0]

    @classmethod
    def zero(cls, k):
        return cls(np.zeros(k), 0.0, np.zeros(k))


@dataclass(frozen=True)
class TeacherState:
    """The last ``horizon`` records, oldest first, zero-padded at cold start."""

    records: tuple
    horizon: int
    k: int
    primary_scale: float = 1.0
    aux_scale: np.ndarray | None = None

    @classmethod
    def empty(cls, horizon, k, primary_scale=1.0, aux_scale=None):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        scale = np.ones(k) if aux_scale is None else np.asarray(aux_scale, dtype=np.float64)
        return cls(tuple(TeacherRecord.zero(k) for _ in range(horizon)), horizon, k,
                   float(primary_scale), scale)

    @property
    def width(self):
        return 2 * self.k + 1

    @property
    def size(self):
        return self.horizon * self.width


def push_record(state: TeacherState, record: TeacherRecord) -> TeacherState:
    if record.k != state.k:
        raise ShapeError("teacher record K", state.k, record.k)
    records = state.records[1:] + (record,)
    return TeacherState(records, state.horizon, state.k, state.primary_scale, state.aux_scale)


def flatten_state(state: TeacherState) -> np.ndarray:
    """``[w, p, r]`` per record, oldest first, with p and r divided by the state's scales."""
    aux_scale = np.ones(state.k) if state.aux_scale is None else state.aux_scale
    parts = []
    for rec in state.records:
        parts.append(rec.weights)
        parts.append([rec.mean_primary / state.primary_scale])
        parts.append(rec.mean_aux / aux_scale)
    return np.concatenate(parts).astype(np.float64)


def logistic(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


class WeightDraw(NamedTuple):
    weights: np.ndarray
    action: np.ndarray
    log_prob: float
    value: float
    observation: np.ndarray


def generate_weights(teacher_policy: ActorCritic, state: TeacherState, rng, deterministic=False) -> WeightDraw:
    if teacher_policy.act_dim != state.k:
        raise ShapeError("teacher action dim", state.k, teacher_policy.act_dim)
    obs = flatten_state(state)
    action, logp, value = teacher_policy.act(obs, rng, deterministic=deterministic)
    return WeightDraw(logistic(action), action, float(logp), float(value), obs)


def teacher_reward(iteration_metrics) -> float:
    """Mean per-episode primary reward of one student iteration (0.0 if no episode finished)."""
    episodes = list(iteration_metrics.episode_primary)
    if not episodes:
        log.warning("student iteration finished no episodes; teacher reward set to 0")
        return 0.0
    return float(np.mean(episodes))


class TeacherTransition(NamedTuple):
    observation: np.ndarray
    action: np.ndarray
    log_prob: float
    reward: float
    value: float


def teacher_update(teacher_policy: ActorCritic, transitions: Sequence[TeacherTransition],
                   bootstrap_value: float, config: PpoConfig, rng) -> UpdateStats:
    """One PPO update over a run of consecutive teacher transitions."""
    if not transitions:
        raise ValueError("teacher update needs at least one transition")
    n = len(transitions)
    batch = RolloutBatch(
        observations=np.stack([t.observation for t in transitions]),
        actions=np.stack([t.action for t in transitions]),
        log_probs=np.array([t.log_prob for t in transitions]),
        rewards=np.array([t.reward for t in transitions]),
        values=np.array([t.value for t in transitions]),
        bootstrap_value=np.array([bootstrap_value]),
        done_flags=np.zeros(n, dtype=bool),
        env_ids=np.zeros(n, dtype=np.int64),
    )
    adv, ret = compute_gae(batch.rewards, batch.values, batch.done_flags, bootstrap_value,
                           config.gamma, config.gae_lambda)
    return ppo_update(teacher_policy, batch, config, rng, adv, ret)


class Teacher:
    """Stateful wrapper used by the training loop: holds the history and the PPO buffer."""

    def __init__(self, k, horizon=5, *, primary_scale=1.0, aux_scale=None,
                 config: PpoConfig | None = None, episodes_per_update=10,
                 hidden=(64, 64), rng=None):
        self.config = config or PpoConfig(learning_rate=3e-4, epochs=10)
        self.episodes_per_update = int(episodes_per_update)
        self.state = TeacherState.empty(horizon, k, primary_scale, aux_scale)
        self.agent = ActorCritic(self.state.size, k, hidden, hidden, rng=rng,
                                 learning_rate=self.config.learning_rate)
        self.buffer: list[TeacherTransition] = []

    @property
    def k(self):
        return self.state.k

    def act(self, rng, deterministic=False) -> WeightDraw:
        return generate_weights(self.agent, self.state, rng, deterministic)

    def observe(self, draw: WeightDraw | None, reward: float, record: TeacherRecord, rng) -> UpdateStats | None:
        """Push ``record``; with a ``draw`` also store the transition and update once the buffer is full."""
        self.state = push_record(self.state, record)
        if draw is None:
            return None
        self.buffer.append(TeacherTransition(draw.observation, draw.action, draw.log_prob,
                                             float(reward), draw.value))
        if len(self.buffer) < self.episodes_per_update:
            return None
        bootstrap = float(self.agent.predict_value(flatten_state(self.state)))
        stats = teacher_update(self.agent, self.buffer, bootstrap, self.config, rng)
        self.buffer = []
        return stats

    def to_dict(self):
        return {
            "agent": self.agent.to_dict(),
            "horizon": self.state.horizon,
            "k": self.state.k,
            "records": [
                {"weights": r.weights.tolist(), "mean_primary": r.mean_primary, "mean_aux": r.mean_aux.tolist()}
                for r in self.state.records
            ],
        }
