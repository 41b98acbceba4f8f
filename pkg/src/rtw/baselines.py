"""Comparison methods: fixed expert weights, random weights, and an MPPI planner."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from rtw.kernels import nav_rollout_costs, offroad_rollout_costs

log = logging.getLogger(__name__)

TASK_K = {"nav": 3, "offroad": 4}


def er_weights(task) -> np.ndarray:
    """Expert weights: every auxiliary component at its listed magnitude, i.e. weight 1."""
    return np.ones(TASK_K[task])


def rr_weights(task, rng) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=TASK_K[task])


@dataclass
class MppiConfig:
    horizon_seconds: float = 2.0
    dt: float = 0.1
    num_samples: int = 256
    temperature: float = 1.0
    noise_scale: float = 0.5  # fraction of each control range
    control_noise_std: tuple | None = None

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ValueError("horizon must cover at least one step")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")

    @property
    def horizon_steps(self) -> int:
        return max(int(round(self.horizon_seconds / self.dt)), 0)

    def noise_std(self, low, high):
        if self.control_noise_std is not None:
            return np.asarray(self.control_noise_std, dtype=np.float64)
        return self.noise_scale * (np.asarray(high, float) - np.asarray(low, float))


def mppi_weights(costs, temperature):
    """Normalised exponentiated-cost weights; min-subtracted, infinite costs get zero weight."""
    costs = np.asarray(costs, dtype=np.float64)
    finite = np.isfinite(costs)
    if not finite.any():
        return None
    shifted = np.where(finite, costs - costs[finite].min(), np.inf)
    w = np.exp(-shifted / temperature)
    return w / w.sum()


def _combine(samples, costs, temperature):
    w = mppi_weights(costs, temperature)
    if w is None:
        log.warning("all MPPI rollouts had infinite cost; returning zero controls")
        zeros = np.zeros(samples.shape[1:])
        return zeros[0], zeros
    avg = np.tensordot(w, samples, axes=1)
    shifted = np.concatenate([avg[1:], avg[-1:]], axis=0)
    return avg[0].copy(), shifted


def sample_controls(prev_controls, config: MppiConfig, rng, low, high):
    prev = np.asarray(prev_controls, dtype=np.float64)
    std = config.noise_std(low, high)
    noise = rng.standard_normal((config.num_samples, *prev.shape)) * std
    return np.clip(prev[None] + noise, low, high)


def mppi_plan_from_costs(rollout_costs, prev_controls, config: MppiConfig, rng, low, high):
    """MPPI step given a function mapping sampled sequences ``(N, H, U)`` to costs ``(N,)``."""
    samples = sample_controls(prev_controls, config, rng, low, high)
    costs = rollout_costs(samples)
    return _combine(samples, costs, config.temperature)


def mppi_plan(dynamics_model, cost_fn, current_state, prev_control_sequence, config: MppiConfig, rng,
              low, high, terminal_cost=None):
    """One MPPI planning step.

    ``dynamics_model(states, controls)`` advances a batch ``(N, S)`` by one step;
    ``cost_fn(states, controls)`` gives the running cost of that step and
    ``terminal_cost(states)`` (optional) the cost of the final states.
    Returns ``(first_control, warm_start_sequence)``.
    """
    def rollout(samples):
        n = samples.shape[0]
        states = np.repeat(np.asarray(current_state, dtype=np.float64)[None], n, axis=0)
        total = np.zeros(n)
        for t in range(samples.shape[1]):
            states = dynamics_model(states, samples[:, t])
            total += cost_fn(states, samples[:, t])
        if terminal_cost is not None:
            total += terminal_cost(states)
        return total

    return mppi_plan_from_costs(rollout, prev_control_sequence, config, rng, low, high)


class NavMppi:
    """Perfect-model MPPI for the navigation task: terminal goal distance plus collision cost."""

    low = np.array([0.0, -2.0])
    high = np.array([2.0, 2.0])
    collision_cost = 1e4

    def __init__(self, env_config, config: MppiConfig | None = None):
        self.env_config = env_config
        self.config = config or MppiConfig(dt=env_config.dt)
        self.low = np.array([0.0, -env_config.max_turn_rate])
        self.high = np.array([env_config.max_speed, env_config.max_turn_rate])
        self.reset()

    def reset(self):
        h = self.config.horizon_steps
        self.controls = np.tile(0.5 * (self.low + self.high), (h, 1))

    def act(self, env, rng):
        st, m, c = env.state, env.map, self.env_config

        def costs(samples):
            return nav_rollout_costs(m.grid, m.resolution, st.x, st.y, st.heading, samples, c.dt,
                                     c.robot_radius, float(m.goal[0]), float(m.goal[1]), self.collision_cost)

        first, self.controls = mppi_plan_from_costs(costs, self.controls, self.config, rng, self.low, self.high)
        return first


class OffroadMppi:
    """Perfect-model MPPI for off-road driving: goal distance, attitude breaches, rollovers."""

    low = np.array([0.0, -1.0])
    high = np.array([1.0, 1.0])
    breach_cost = 1e3
    rollover_cost = 1e4

    def __init__(self, env_config, config: MppiConfig | None = None):
        self.env_config = env_config
        self.config = config or MppiConfig(dt=env_config.dt)
        self.reset()

    def reset(self):
        h = self.config.horizon_steps
        self.controls = np.tile(0.5 * (self.low + self.high), (h, 1))

    def act(self, env, rng):
        st, t, c = env.state, env.terrain, self.env_config

        def costs(samples):
            return offroad_rollout_costs(
                t.heightmap, t.resolution, st.x, st.y, st.heading, st.pitch, samples, c.dt, c.wheelbase,
                math.radians(c.max_steer_deg), c.max_speed, math.radians(c.rollover_deg),
                c.margin, t.extent - c.margin, c.footprint_length, c.footprint_width,
                c.footprint_samples[0], c.footprint_samples[1], float(t.goal[0]), float(t.goal[1]),
                math.radians(c.penalty_deg), math.radians(c.rollover_deg),
                self.breach_cost, self.rollover_cost)

        first, self.controls = mppi_plan_from_costs(costs, self.controls, self.config, rng, self.low, self.high)
        return first
