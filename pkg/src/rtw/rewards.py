"""Primary-plus-weighted-auxiliary rewards and the two tasks' component definitions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NAV_GOAL_REWARD = 20.0
NAV_COLLISION_PENALTY = -2.0
NAV_PROGRESS_SCALE = 2.0
NAV_SAFE_BONUS = 1.0

OFFROAD_GOAL_REWARD = 1000.0
OFFROAD_PROGRESS_SCALE = 5.0
OFFROAD_SPEED_BONUS = 1.0
OFFROAD_MAX_SPEED = 4.0
OFFROAD_STALL_PENALTY = -0.5
OFFROAD_ATTITUDE_PENALTY = -0.5

NAV_K = 3
OFFROAD_K = 4


def weight_vector(w, k=None) -> np.ndarray:
    """A float64 copy of ``w`` clamped into [0, 1]; ``k`` checks the length."""
    arr = np.clip(np.asarray(w, dtype=np.float64).reshape(-1), 0.0, 1.0)
    if k is not None and arr.shape[0] != k:
        raise ValueError(f"expected {k} weights, got {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class RewardBreakdown:
    primary: float
    aux: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "aux", np.asarray(self.aux, dtype=np.float64))


def compose_reward(breakdown: RewardBreakdown, weights) -> float:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != breakdown.aux.shape:
        raise ValueError(f"weights length {w.shape} does not match aux length {breakdown.aux.shape}")
    return float(breakdown.primary + np.dot(w, breakdown.aux))


def compose_rewards(primary, aux, weights):
    """Vectorised :func:`compose_reward` over leading batch axes."""
    return np.asarray(primary) + np.asarray(aux) @ np.asarray(weights, dtype=np.float64)


# Navigation -----------------------------------------------------------------

@dataclass
class NavRewardParams:
    safety_radius: float = 0.3


def nav_reward_components(prev_state, action, next_state, params: NavRewardParams | None = None):
    """Goal bonus, collision penalty, progress and safe-clearance bonus for one step.

    States need ``goal_dist``, ``collided``, ``reached`` and ``clearance`` attributes.
    """
    params = params or NavRewardParams()
    primary = NAV_GOAL_REWARD if next_state.reached and not next_state.collided else 0.0
    aux = np.array([
        NAV_COLLISION_PENALTY if next_state.collided else 0.0,
        NAV_PROGRESS_SCALE * (prev_state.goal_dist - next_state.goal_dist),
        NAV_SAFE_BONUS if next_state.clearance >= params.safety_radius else 0.0,
    ])
    return RewardBreakdown(primary, aux)


def nav_aux_step_bounds(max_step_progress):
    return np.array([abs(NAV_COLLISION_PENALTY), NAV_PROGRESS_SCALE * max_step_progress, NAV_SAFE_BONUS])


# Off-road ------------------------------------------------------------------

@dataclass
class OffroadRewardParams:
    attitude_threshold: float = math.radians(15.0)
    stall_speed: float = 0.1
    stall_window: int = 10


def offroad_reward_components(prev_state, action, next_state, params: OffroadRewardParams | None = None):
    """Goal bonus, progress, speed, stall penalty and attitude penalty for one step.

    States need ``goal_dist``, ``speed``, ``stall_counter``, ``roll``, ``pitch``, ``reached``.
    """
    params = params or OffroadRewardParams()
    primary = OFFROAD_GOAL_REWARD if next_state.reached else 0.0
    stalled = next_state.stall_counter >= params.stall_window
    tilted = (abs(next_state.roll) > params.attitude_threshold
              or abs(next_state.pitch) > params.attitude_threshold)
    aux = np.array([
        OFFROAD_PROGRESS_SCALE * (prev_state.goal_dist - next_state.goal_dist),
        OFFROAD_SPEED_BONUS * min(max(next_state.speed, 0.0), OFFROAD_MAX_SPEED) / OFFROAD_MAX_SPEED,
        OFFROAD_STALL_PENALTY if stalled else 0.0,
        OFFROAD_ATTITUDE_PENALTY if tilted else 0.0,
    ])
    return RewardBreakdown(primary, aux)


def offroad_aux_step_bounds(max_step_progress):
    return np.array([OFFROAD_PROGRESS_SCALE * max_step_progress, OFFROAD_SPEED_BONUS,
                     abs(OFFROAD_STALL_PENALTY), abs(OFFROAD_ATTITUDE_PENALTY)])
