"""Off-road mobility: procedural heightmaps and a kinematic bicycle with terrain-plane attitude."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from rtw.envs.nav import EpisodeDoneError
from rtw.kernels import bilinear, plane_fit, attitude_from_plane, vehicle_step

OUTCOMES = ("running", "success", "rollover", "stuck", "timeout")


@dataclass
class OffroadConfig:
    extent: float = 40.0
    resolution: float = 0.25
    slope_deg: tuple = (0.0, 8.0)
    roughness: float = 0.25
    roughness_scales: tuple = (6.0, 3.0, 1.5)
    n_bumps: int = 20
    bump_height: tuple = (0.4, 1.4)
    bump_sigma: tuple = (0.8, 2.0)
    start_goal_dist: tuple = (16.0, 22.0)
    start_heading_noise_deg: float = 30.0
    goal_radius: float = 1.0
    dt: float = 0.1
    max_steps: int = 600
    max_speed: float = 4.0
    wheelbase: float = 0.5
    max_steer_deg: float = 30.0
    footprint_length: float = 0.8
    footprint_width: float = 0.5
    footprint_samples: tuple = (5, 3)
    rollover_deg: float = 30.0
    penalty_deg: float = 15.0
    stall_speed: float = 0.1
    stall_window: int = 10
    stuck_steps: int = 50
    patch_size: int = 8
    patch_forward: tuple = (-2.0, 5.0)
    patch_lateral: tuple = (-3.5, 3.5)
    patch_height_scale: float = 2.0

    @property
    def obs_dim(self):
        return self.patch_size * self.patch_size + 6

    @property
    def max_step_progress(self):
        return self.max_speed * self.dt

    @property
    def margin(self):
        return 0.5 * math.hypot(self.footprint_length, self.footprint_width) + self.resolution

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k, v in d.items():
            if isinstance(v, list):
                d[k] = tuple(v)
        return cls(**d)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class Terrain:
    heightmap: np.ndarray
    resolution: float
    start: np.ndarray
    start_heading: float
    goal: np.ndarray
    slope_deg: float = 0.0
    roughness: float = 0.0

    @property
    def extent(self):
        return (self.heightmap.shape[0] - 1) * self.resolution

    def height_at(self, x, y):
        return float(bilinear(self.heightmap, self.resolution, np.array([float(x)]), np.array([float(y)]))[0])

    def to_json(self) -> str:
        return json.dumps({
            "resolution": self.resolution,
            "extent": self.extent,
            "heightmap": self.heightmap.tolist(),
            "start": [float(self.start[0]), float(self.start[1]), float(self.start_heading)],
            "goal": [float(self.goal[0]), float(self.goal[1])],
            "slope_deg": self.slope_deg,
            "roughness": self.roughness,
        })

    @classmethod
    def from_json(cls, text: str) -> "Terrain":
        d = json.loads(text)
        return cls(np.asarray(d["heightmap"], dtype=np.float64), float(d["resolution"]),
                   np.array(d["start"][:2]), float(d["start"][2]), np.array(d["goal"]),
                   float(d.get("slope_deg", 0.0)), float(d.get("roughness", 0.0)))


def _range(rng, r):
    lo, hi = r
    return lo if lo == hi else rng.uniform(lo, hi)


def generate_terrain(seed, config: OffroadConfig | None = None) -> Terrain:
    """Incline + multi-octave smoothed noise + Gaussian rock bumps; deterministic per seed."""
    cfg = config or OffroadConfig()
    rng = np.random.default_rng(seed)
    res = cfg.resolution
    n = int(round(cfg.extent / res)) + 1
    coords = np.arange(n) * res
    xx, yy = np.meshgrid(coords, coords)
    slope = math.radians(_range(rng, cfg.slope_deg))
    direction = rng.uniform(-math.pi, math.pi)
    h = math.tan(slope) * (xx * math.cos(direction) + yy * math.sin(direction))

    if cfg.roughness > 0:
        for octave, scale in enumerate(cfg.roughness_scales):
            field = ndimage.gaussian_filter(rng.standard_normal((n, n)), scale / res, mode="wrap")
            field /= field.std() + 1e-12
            h += cfg.roughness * 0.5 ** octave * field

    margin = 4.0
    lo_d, hi_d = cfg.start_goal_dist
    for _ in range(1000):
        start = rng.uniform(margin, cfg.extent - margin, size=2)
        ang = rng.uniform(-math.pi, math.pi)
        goal = start + _range(rng, (lo_d, hi_d)) * np.array([math.cos(ang), math.sin(ang)])
        if np.all(goal >= margin) and np.all(goal <= cfg.extent - margin):
            break
    heading = ang + math.radians(rng.uniform(-cfg.start_heading_noise_deg, cfg.start_heading_noise_deg))

    for _ in range(cfg.n_bumps):
        c = rng.uniform(0.0, cfg.extent, size=2)
        height = _range(rng, cfg.bump_height)
        sigma = _range(rng, cfg.bump_sigma)
        if np.hypot(*(c - start)) < 2.0 + 2.0 * sigma:
            continue
        h += height * np.exp(-((xx - c[0]) ** 2 + (yy - c[1]) ** 2) / (2.0 * sigma * sigma))
    if cfg.roughness == 0 and slope == 0 and cfg.n_bumps == 0:
        h = np.zeros_like(h)
    return Terrain(h, res, start, float(heading), goal, math.degrees(slope), cfg.roughness)


def flat_terrain(cfg: OffroadConfig, start, goal, heading=0.0, slope_deg=0.0, slope_dir=0.0) -> Terrain:
    res = cfg.resolution
    n = int(round(cfg.extent / res)) + 1
    coords = np.arange(n) * res
    xx, yy = np.meshgrid(coords, coords)
    h = math.tan(math.radians(slope_deg)) * (xx * math.cos(slope_dir) + yy * math.sin(slope_dir))
    return Terrain(h, res, np.asarray(start, float), float(heading), np.asarray(goal, float), slope_deg, 0.0)


def vehicle_attitude(terrain: Terrain, position, heading, config: OffroadConfig | None = None):
    """(roll, pitch) in radians from a least-squares plane under the vehicle footprint."""
    cfg = config or OffroadConfig()
    x, y = float(position[0]), float(position[1])
    ext = terrain.extent
    if not (0.0 <= x <= ext and 0.0 <= y <= ext):
        raise ValueError(f"position ({x:.3f}, {y:.3f}) outside terrain extent [0, {ext}]")
    _, b, c, _ = plane_fit(terrain.heightmap, terrain.resolution, x, y, float(heading),
                           cfg.footprint_length, cfg.footprint_width, *cfg.footprint_samples)
    return attitude_from_plane(b, c)


@dataclass
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    stall_counter: int = 0
    steps_elapsed: int = 0
    goal_dist: float = 0.0
    reached: bool = False


@dataclass
class OffroadTransition:
    prev: VehicleState
    action: np.ndarray
    next: VehicleState
    outcome: str


class OffroadEnv:
    def __init__(self, config: OffroadConfig | None = None, fixed_terrain: Terrain | None = None, terrains=None):
        self.config = config or OffroadConfig()
        self.fixed_terrain = fixed_terrain
        self.terrains = terrains
        self.terrain: Terrain | None = None
        self.state: VehicleState | None = None
        self.outcome = "running"
        c = self.config
        u = np.linspace(*c.patch_forward, c.patch_size)
        v = np.linspace(*c.patch_lateral, c.patch_size)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        self._patch_u = uu.ravel()
        self._patch_v = vv.ravel()

    @property
    def obs_dim(self):
        return self.config.obs_dim

    def reset(self, seed=None, terrain: Terrain | None = None):
        if terrain is not None:
            self.terrain = terrain
        elif self.fixed_terrain is not None:
            self.terrain = self.fixed_terrain
        elif self.terrains is not None:
            rng = np.random.default_rng(seed)
            self.terrain = self.terrains[int(rng.integers(len(self.terrains)))]
        else:
            self.terrain = generate_terrain(seed, self.config)
        t = self.terrain
        roll, pitch = vehicle_attitude(t, t.start, t.start_heading, self.config)
        gd = math.hypot(t.goal[0] - t.start[0], t.goal[1] - t.start[1])
        self.state = VehicleState(float(t.start[0]), float(t.start[1]), float(t.start_heading),
                                  0.0, roll, pitch, 0, 0, gd, gd <= self.config.goal_radius)
        self.outcome = "running"
        return self.observe()

    def observe(self):
        return offroad_observe(self.state, self.terrain, self.config, self._patch_u, self._patch_v)

    def step(self, action):
        if self.outcome != "running":
            raise EpisodeDoneError(f"episode already finished ({self.outcome})")
        c, t, prev = self.config, self.terrain, self.state
        throttle = min(max(float(action[0]), 0.0), 1.0)
        steer = min(max(float(action[1]), -1.0), 1.0)
        lo = c.margin
        hi = t.extent - c.margin
        x, y, psi, v, roll, pitch = vehicle_step(
            t.heightmap, t.resolution, prev.x, prev.y, prev.heading, prev.pitch, throttle, steer,
            c.dt, c.wheelbase, math.radians(c.max_steer_deg), c.max_speed, math.radians(c.rollover_deg),
            lo, hi, c.footprint_length, c.footprint_width, *c.footprint_samples)
        stall = prev.stall_counter + 1 if v < c.stall_speed else 0
        gd = math.hypot(t.goal[0] - x, t.goal[1] - y)
        limit = math.radians(c.rollover_deg)
        rolled = abs(roll) > limit or abs(pitch) > limit
        reached = (not rolled) and gd <= c.goal_radius
        nxt = VehicleState(x, y, (psi + math.pi) % (2 * math.pi) - math.pi, v, roll, pitch, stall,
                           prev.steps_elapsed + 1, gd, reached)
        if rolled:
            outcome = "rollover"
        elif reached:
            outcome = "success"
        elif stall >= c.stuck_steps:
            outcome = "stuck"
        elif nxt.steps_elapsed >= c.max_steps:
            outcome = "timeout"
        else:
            outcome = "running"
        self.state = nxt
        self.outcome = outcome
        return self.observe(), OffroadTransition(prev, np.array([throttle, steer]), nxt, outcome), outcome


def offroad_observe(state: VehicleState, terrain: Terrain, config: OffroadConfig,
                    patch_u=None, patch_v=None) -> np.ndarray:
    """Relative-height patch in the vehicle frame, goal distance and bearing, speed, roll and pitch."""
    c = config
    if patch_u is None:
        u = np.linspace(*c.patch_forward, c.patch_size)
        v = np.linspace(*c.patch_lateral, c.patch_size)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        patch_u, patch_v = uu.ravel(), vv.ravel()
    ch, sh = math.cos(state.heading), math.sin(state.heading)
    xs = state.x + ch * patch_u - sh * patch_v
    ys = state.y + sh * patch_u + ch * patch_v
    res = terrain.resolution
    pts = bilinear(terrain.heightmap, res, xs, ys)
    here = bilinear(terrain.heightmap, res, np.array([state.x]), np.array([state.y]))[0]
    patch = np.clip((pts - here) / c.patch_height_scale, -1.0, 1.0)
    dx = terrain.goal[0] - state.x
    dy = terrain.goal[1] - state.y
    bearing = math.atan2(dy, dx) - state.heading
    lim = math.radians(c.rollover_deg)
    tail = np.array([min(math.hypot(dx, dy) / (terrain.extent * math.sqrt(2.0)), 1.0),
                     math.sin(bearing), math.cos(bearing), state.speed / c.max_speed,
                     state.roll / lim, state.pitch / lim])
    return np.concatenate([patch, tail])
