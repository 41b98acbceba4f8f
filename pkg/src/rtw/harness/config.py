"""Experiment configuration (JSON), per-task defaults and seed streams."""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from rtw.baselines import TASK_K

TASKS = ("nav", "offroad")
METHODS = ("rtw", "er", "rr", "mppi")


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


def derive_rng(master_seed: int, *names) -> np.random.Generator:
    """Independent generator for a named component of a run.

    The stream is ``SeedSequence([master_seed, crc32(name_1), crc32(name_2), ...])`` so
    each component (maps, init, actions, shuffling, random weights, ...) reproduces on
    its own regardless of how much the others consumed.
    """
    return np.random.default_rng(derive_seed(master_seed, *names))


def derive_seed(master_seed: int, *names) -> np.random.SeedSequence:
    key = [int(master_seed)]
    for n in names:
        key.append(zlib.crc32(str(n).encode()) if not isinstance(n, (int, np.integer)) else int(n))
    return np.random.SeedSequence(key)


@dataclass
class StudentConfig:
    policy_hidden: list = field(default_factory=lambda: [64, 64])
    value_hidden: list = field(default_factory=lambda: [64, 64])
    learning_rate: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 64
    timesteps_per_iter: int = 256
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float | None = 0.5


@dataclass
class TeacherConfig:
    horizon: int = 5
    hidden: list = field(default_factory=lambda: [64, 64])
    learning_rate: float = 3e-4
    epochs: int = 10
    episodes_per_update: int = 10
    # one teacher step is a whole student iteration; a short horizon keeps the credit signal usable
    gamma: float = 0.5
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float | None = 0.5
    primary_scale: float | None = None
    aux_scale: list | None = None


@dataclass
class ExperimentConfig:
    task: str = "nav"
    method: str = "rtw"
    seeds: list = field(default_factory=lambda: [0])
    iterations: int = 300
    num_envs: int = 16
    student: StudentConfig = field(default_factory=StudentConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    env: dict = field(default_factory=dict)
    mppi: dict = field(default_factory=dict)
    map_pool_size: int = 256
    eval_every: int = 25
    eval_trials: int = 10
    final_eval_trials: int = 30
    eval_seed: int = 10_000
    checkpoint_every: int = 100
    output_dir: str = "runs"

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.iterations < 0 or self.num_envs < 1:
            raise ConfigError("iterations must be >= 0 and num_envs >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.teacher.horizon < 1:
            raise ConfigError("teacher horizon must be >= 1")
        if self.teacher.aux_scale is not None and len(self.teacher.aux_scale) != TASK_K[self.task]:
            raise ConfigError(f"teacher.aux_scale needs {TASK_K[self.task]} entries for task {self.task}")
        if self.student.timesteps_per_iter < 1 or self.student.minibatch_size < 1:
            raise ConfigError("timesteps_per_iter and minibatch_size must be >= 1")
        for name in ("policy_hidden", "value_hidden"):
            if not all(int(h) > 0 for h in getattr(self.student, name)):
                raise ConfigError(f"student.{name} widths must be positive")
        try:
            self.env_config()
        except TypeError as exc:
            raise ConfigError(f"bad env parameter: {exc}") from exc
        return self

    @property
    def k(self) -> int:
        return TASK_K[self.task]

    @property
    def steps_per_env(self) -> int:
        return max(1, -(-self.student.timesteps_per_iter // self.num_envs))

    def env_config(self):
        from rtw.envs.nav import NavConfig
        from rtw.envs.offroad import OffroadConfig
        cls = NavConfig if self.task == "nav" else OffroadConfig
        return cls.from_dict(self.env)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            student = StudentConfig(**d.pop("student", {}))
            teacher = TeacherConfig(**d.pop("teacher", {}))
            cfg = cls(student=student, teacher=teacher, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")


def default_config(task: str) -> ExperimentConfig:
    """Full-scale configuration for a task."""
    if task == "nav":
        # gamma 0.9: the +1 per-step clearance bonus must not outweigh the +20 goal bonus
        student = StudentConfig(policy_hidden=[512, 512], value_hidden=[512, 512], learning_rate=3e-4,
                                epochs=10, minibatch_size=64, timesteps_per_iter=256, gamma=0.9)
        teacher = TeacherConfig(episodes_per_update=10)
        num_envs = 128
    elif task == "offroad":
        student = StudentConfig(policy_hidden=[64, 64], value_hidden=[64, 64], learning_rate=5e-4,
                                epochs=5, minibatch_size=1500, timesteps_per_iter=3000)
        teacher = TeacherConfig(episodes_per_update=2)
        num_envs = 5
    else:
        raise ConfigError(f"unknown task {task!r}")
    cfg = ExperimentConfig(task=task, student=student, teacher=teacher, num_envs=num_envs)
    cfg.env = cfg.env_config().to_dict()
    return cfg.validate()


DESK_NAV_ENV = {
    "width": 6.0,
    "height": 6.0,
    "n_rooms": 2,
    "corridor_width": [1.0, 1.4],
    "n_obstacles": 2,
    "min_start_goal_dist": 2.5,
}


# denser rock field: a greedy drive-at-the-goal controller succeeds about half the time
DESK_OFFROAD_ENV = {"n_bumps": 80}


def desk_config(task: str) -> ExperimentConfig:
    """Reduced-scale setup used by the acceptance experiments (small nets, short runs)."""
    cfg = default_config(task)
    if task == "nav":
        cfg.num_envs = 16
        cfg.iterations = 300
        cfg.student.policy_hidden = [64, 64]
        cfg.student.value_hidden = [64, 64]
        cfg.student.timesteps_per_iter = 1024
        cfg.env.update(DESK_NAV_ENV)
        cfg.seeds = [0, 1, 2, 3, 4]
    else:
        cfg.iterations = 200
        cfg.env.update(DESK_OFFROAD_ENV)
        cfg.seeds = [0, 1, 2]
    cfg.map_pool_size = 64
    cfg.eval_every = 50
    cfg.eval_trials = 10
    cfg.checkpoint_every = 0
    return cfg.validate()
