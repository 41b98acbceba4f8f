"""Task adapters (env + reward + action mapping) and the vectorised rollout runner."""
from __future__ import annotations

import math

import numpy as np

from rtw.baselines import MppiConfig, NavMppi, OffroadMppi
from rtw.envs.nav import NavConfig, NavEnv, generate_map
from rtw.envs.offroad import OffroadConfig, OffroadEnv, generate_terrain
from rtw.harness.config import derive_rng
from rtw.harness.metrics import EpisodeRecord
from rtw.ppo import RolloutBatch, compute_gae
from rtw.rewards import (
    NavRewardParams,
    OffroadRewardParams,
    nav_reward_components,
    offroad_reward_components,
)


class NavTask:
    name = "nav"
    k = 3
    act_dim = 2
    primary_scale = 20.0
    # rough per-episode magnitudes of the auxiliary sums: one collision, ~10 m progress, ~100 safe steps
    default_aux_scale = (2.0, 20.0, 100.0)

    def __init__(self, env_config: NavConfig | None = None):
        self.env_config = env_config or NavConfig()
        self.reward_params = NavRewardParams(self.env_config.safety_radius)
        self._worlds = {}

    @property
    def obs_dim(self):
        return self.env_config.obs_dim

    @property
    def dt(self):
        return self.env_config.dt

    def make_env(self, pool=None) -> NavEnv:
        return NavEnv(self.env_config, maps=pool)

    def make_world(self, seed):
        return generate_map(seed, self.env_config)

    def command(self, raw):
        """Policy output in roughly [-1, 1]^2 to (v, omega) commands."""
        c = self.env_config
        return np.array([0.5 * c.max_speed * (raw[0] + 1.0), c.max_turn_rate * raw[1]])

    def breakdown(self, tr):
        return nav_reward_components(tr.prev, tr.action, tr.next, self.reward_params)

    def reset_env(self, env, world):
        return env.reset(nav_map=world)

    def planner(self, mppi: dict):
        return NavMppi(self.env_config, MppiConfig(dt=self.env_config.dt, **mppi))


class OffroadTask:
    name = "offroad"
    k = 4
    act_dim = 2
    primary_scale = 1000.0
    # ~20 m of progress, ~100 full-speed steps, ~100 stalled or tilted steps
    default_aux_scale = (100.0, 100.0, 50.0, 50.0)

    def __init__(self, env_config: OffroadConfig | None = None):
        self.env_config = env_config or OffroadConfig()
        c = self.env_config
        self.reward_params = OffroadRewardParams(math.radians(c.penalty_deg), c.stall_speed, c.stall_window)

    @property
    def obs_dim(self):
        return self.env_config.obs_dim

    @property
    def dt(self):
        return self.env_config.dt

    def make_env(self, pool=None) -> OffroadEnv:
        return OffroadEnv(self.env_config, terrains=pool)

    def make_world(self, seed):
        return generate_terrain(seed, self.env_config)

    def command(self, raw):
        """Policy output to (throttle in [0, 1], steering in [-1, 1])."""
        return np.array([0.5 * (raw[0] + 1.0), raw[1]])

    def breakdown(self, tr):
        return offroad_reward_components(tr.prev, tr.action, tr.next, self.reward_params)

    def reset_env(self, env, world):
        return env.reset(terrain=world)

    def planner(self, mppi: dict):
        return OffroadMppi(self.env_config, MppiConfig(dt=self.env_config.dt, **mppi))


def make_task(task: str, env: dict | None = None):
    if task == "nav":
        return NavTask(NavConfig.from_dict(env or {}))
    if task == "offroad":
        return OffroadTask(OffroadConfig.from_dict(env or {}))
    raise ValueError(f"unknown task {task!r}")


class _Accumulator:
    __slots__ = ("steps", "primary", "aux", "speed", "roll", "pitch")

    def __init__(self, k):
        self.steps = 0
        self.primary = 0.0
        self.aux = np.zeros(k)
        self.speed = 0.0
        self.roll = []
        self.pitch = []

    def add(self, tr, br, task_name):
        self.steps += 1
        self.primary += br.primary
        self.aux += br.aux
        if task_name == "nav":
            self.speed += tr.next.linear_vel
        else:
            self.speed += tr.next.speed
            self.roll.append(abs(math.degrees(tr.next.roll)))
            self.pitch.append(abs(math.degrees(tr.next.pitch)))

    def finish(self, outcome, final_distance, dt):
        return EpisodeRecord(outcome, self.steps, self.steps * dt, self.primary, self.aux.copy(),
                             final_distance, self.speed / max(self.steps, 1),
                             np.asarray(self.roll), np.asarray(self.pitch))


def run_episode(task, env, policy, world, rng=None) -> EpisodeRecord:
    """Play one episode on ``world`` with ``policy(env, obs, rng) -> command``."""
    obs = task.reset_env(env, world)
    acc = _Accumulator(task.k)
    outcome = "running"
    while outcome == "running":
        obs, tr, outcome = env.step(policy(env, obs, rng))
        acc.add(tr, task.breakdown(tr), task.name)
    return acc.finish(outcome, env.state.goal_dist, task.dt)


class VecRunner:
    """Steps ``num_envs`` independent environments in lock-step and collects PPO batches."""

    def __init__(self, task, num_envs, reset_rng, pool=None):
        self.task = task
        self.reset_rng = reset_rng
        self.envs = [task.make_env(pool) for _ in range(num_envs)]
        self.obs = np.stack([e.reset(seed=self._next_seed()) for e in self.envs])
        self.acc = [_Accumulator(task.k) for _ in self.envs]

    def _next_seed(self):
        return int(self.reset_rng.integers(2 ** 62))

    def collect(self, agent, n_steps, weights, rng, gamma, gae_lambda):
        """Roll every env for ``n_steps`` with rewards composed under ``weights``.

        Returns ``(batch, advantages, returns, finished_episodes)``.
        """
        task = self.task
        n = len(self.envs)
        w = np.asarray(weights, dtype=np.float64)
        obs_buf = np.zeros((n_steps, n, task.obs_dim))
        act_buf = np.zeros((n_steps, n, task.act_dim))
        logp_buf = np.zeros((n_steps, n))
        val_buf = np.zeros((n_steps, n))
        rew_buf = np.zeros((n_steps, n))
        done_buf = np.zeros((n_steps, n), dtype=bool)
        finished = []
        for t in range(n_steps):
            actions, logp, values = agent.act(self.obs, rng)
            obs_buf[t] = self.obs
            act_buf[t] = actions
            logp_buf[t] = logp
            val_buf[t] = values
            for i, env in enumerate(self.envs):
                o, tr, outcome = env.step(task.command(actions[i]))
                br = task.breakdown(tr)
                rew_buf[t, i] = br.primary + float(np.dot(w, br.aux))
                self.acc[i].add(tr, br, task.name)
                if outcome != "running":
                    finished.append(self.acc[i].finish(outcome, tr.next.goal_dist, task.dt))
                    self.acc[i] = _Accumulator(task.k)
                    done_buf[t, i] = True
                    o = env.reset(seed=self._next_seed())
                self.obs[i] = o
        bootstrap = agent.predict_value(self.obs)
        adv, ret = compute_gae(rew_buf, val_buf, done_buf, bootstrap, gamma, gae_lambda)
        batch = RolloutBatch(
            observations=obs_buf.reshape(n_steps * n, -1),
            actions=act_buf.reshape(n_steps * n, -1),
            log_probs=logp_buf.ravel(),
            rewards=rew_buf.ravel(),
            values=val_buf.ravel(),
            bootstrap_value=bootstrap,
            done_flags=done_buf.ravel(),
            env_ids=np.tile(np.arange(n), n_steps),
        )
        return batch, adv.ravel(), ret.ravel(), finished


def build_pool(task, size, rng):
    if size <= 0:
        return None
    return [task.make_world(int(rng.integers(2 ** 62))) for _ in range(size)]


def eval_worlds(task, seed, n_trials):
    rng = derive_rng(seed, "eval-suite", task.name)
    return [task.make_world(int(rng.integers(2 ** 62))) for _ in range(n_trials)]
