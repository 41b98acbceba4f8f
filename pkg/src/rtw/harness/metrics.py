"""Episode summaries and the per-iteration / per-evaluation metric record."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

METRIC_FIELDS = (
    "success_rate",
    "mean_traversal_time",
    "mean_final_distance",
    "mean_speed",
    "mean_abs_roll",
    "var_abs_roll",
    "mean_abs_pitch",
    "var_abs_pitch",
)


@dataclass
class EpisodeRecord:
    outcome: str
    steps: int
    duration: float
    primary: float
    aux: np.ndarray
    final_distance: float
    mean_speed: float
    abs_roll_deg: np.ndarray = field(default_factory=lambda: np.zeros(0))
    abs_pitch_deg: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def success(self):
        return self.outcome == "success"


@dataclass
class MetricsRecord:
    iteration: int = 0
    episodes: int = 0
    success_rate: float | None = None
    mean_traversal_time: float | None = None
    mean_final_distance: float | None = None
    mean_speed: float | None = None
    mean_abs_roll: float | None = None
    var_abs_roll: float | None = None
    mean_abs_pitch: float | None = None
    var_abs_pitch: float | None = None
    episode_primary: list = field(default_factory=list)
    mean_aux: np.ndarray | None = None
    weights: np.ndarray | None = None
    teacher_reward: float | None = None

    def metric_values(self) -> dict:
        return {f: getattr(self, f) for f in METRIC_FIELDS}


def compute_metrics(episodes, task: str, k: int, iteration: int = 0) -> MetricsRecord:
    """Aggregate finished episodes; traversal time only over successes, attitude only off-road."""
    rec = MetricsRecord(iteration=iteration, episodes=len(episodes))
    rec.episode_primary = [e.primary for e in episodes]
    if not episodes:
        rec.mean_aux = np.zeros(k)
        return rec
    succ = [e for e in episodes if e.success]
    rec.success_rate = 100.0 * len(succ) / len(episodes)
    if succ:
        rec.mean_traversal_time = float(np.mean([e.duration for e in succ]))
    rec.mean_final_distance = float(np.mean([e.final_distance for e in episodes]))
    rec.mean_aux = np.mean([e.aux for e in episodes], axis=0)
    if task == "nav":
        rec.mean_speed = float(np.mean([e.mean_speed for e in episodes]))
    else:
        roll = np.concatenate([e.abs_roll_deg for e in episodes])
        pitch = np.concatenate([e.abs_pitch_deg for e in episodes])
        if roll.size:
            rec.mean_abs_roll = float(roll.mean())
            rec.var_abs_roll = float(roll.var())
            rec.mean_abs_pitch = float(pitch.mean())
            rec.var_abs_pitch = float(pitch.var())
    return rec


def fmt(x) -> str:
    """Stable CSV text for a number; blank for missing values."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def mean_std(values):
    """Population mean and std (ddof=0) over the non-missing values."""
    vals = [float(v) for v in values if v is not None and not (isinstance(v, float) and math.isnan(v))]
    if not vals:
        return None, None
    arr = np.asarray(vals)
    return float(arr.mean()), float(arr.std())
