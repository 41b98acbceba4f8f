"""Confined-space navigation: room-and-corridor occupancy maps and a unicycle robot with a range scanner."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import ndimage

from rtw.kernels import min_obstacle_dist, raycast

OUTCOMES = ("running", "success", "collision", "timeout")


class MapGenerationError(RuntimeError):
    pass


class EpisodeDoneError(RuntimeError):
    pass


@dataclass
class NavConfig:
    width: float = 8.0
    height: float = 8.0
    resolution: float = 0.05
    n_rooms: int = 3
    room_size: tuple = (1.6, 3.0)
    corridor_width: tuple = (0.5, 1.0)
    n_obstacles: int = 3
    obstacle_size: tuple = (0.2, 0.5)
    min_start_goal_dist: float = 3.0
    robot_radius: float = 0.2
    goal_radius: float = 0.3
    safety_radius: float = 0.3
    clearance_cap: float = 0.5
    dt: float = 0.1
    max_steps: int = 500
    n_beams: int = 24
    max_range: float = 5.0
    max_speed: float = 2.0
    max_turn_rate: float = 2.0
    max_retries: int = 100

    @property
    def obs_dim(self):
        return self.n_beams + 4

    @property
    def max_step_progress(self):
        return self.max_speed * self.dt

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("room_size", "corridor_width", "obstacle_size"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        for k in ("room_size", "corridor_width", "obstacle_size"):
            d[k] = list(d[k])
        return d


@dataclass
class NavMap:
    grid: np.ndarray
    resolution: float
    start: np.ndarray
    start_heading: float
    goal: np.ndarray
    corridor_width_range: tuple = (0.5, 1.0)
    corridors: list = field(default_factory=list)

    @property
    def width(self):
        return self.grid.shape[1] * self.resolution

    @property
    def height(self):
        return self.grid.shape[0] * self.resolution

    def to_json(self) -> str:
        flat = self.grid.ravel().astype(np.int8)
        change = np.flatnonzero(np.diff(flat)) + 1
        bounds = np.concatenate([[0], change, [flat.size]])
        return json.dumps({
            "resolution": self.resolution,
            "shape": list(self.grid.shape),
            "rle": {"first": int(flat[0]), "runs": np.diff(bounds).tolist()},
            "start": [float(self.start[0]), float(self.start[1]), float(self.start_heading)],
            "goal": [float(self.goal[0]), float(self.goal[1])],
            "corridor_width_range": list(self.corridor_width_range),
            "corridors": self.corridors,
        })

    @classmethod
    def from_json(cls, text: str) -> "NavMap":
        d = json.loads(text)
        runs = d["rle"]["runs"]
        values = (np.arange(len(runs)) + d["rle"]["first"]) % 2
        grid = np.repeat(values.astype(bool), runs).reshape(d["shape"])
        return cls(grid, float(d["resolution"]), np.array(d["start"][:2]), float(d["start"][2]),
                   np.array(d["goal"]), tuple(d.get("corridor_width_range", (0.5, 1.0))),
                   [tuple(c) for c in d.get("corridors", [])])


def _carve(grid, x0, x1, y0, y1, res):
    ny, nx = grid.shape
    i0 = max(int(round(x0 / res)), 1)
    i1 = min(int(round(x1 / res)), nx - 1)
    j0 = max(int(round(y0 / res)), 1)
    j1 = min(int(round(y1 / res)), ny - 1)
    grid[j0:j1, i0:i1] = False


def _carve_corridor(grid, a, b, horizontal, n_cells, res):
    """Carve an axis-aligned band ``n_cells`` wide between points a and b; returns its centreline.

    Ends overshoot by one cell so an L-bend stays full width after rounding.
    """
    half = n_cells * res / 2.0
    if horizontal:
        k0 = int(round((a[1] - half) / res))
        centre = (k0 + n_cells / 2.0) * res
        lo, hi = sorted((a[0], b[0]))
        grid[k0:k0 + n_cells, max(int(math.floor((lo - half) / res)) - 1, 1):int(math.ceil((hi + half) / res)) + 1] = False
        return (lo, centre, hi, centre, n_cells * res)
    k0 = int(round((a[0] - half) / res))
    centre = (k0 + n_cells / 2.0) * res
    lo, hi = sorted((a[1], b[1]))
    grid[max(int(math.floor((lo - half) / res)) - 1, 1):int(math.ceil((hi + half) / res)) + 1, k0:k0 + n_cells] = False
    return (centre, lo, centre, hi, n_cells * res)


def cspace_free(grid, res, robot_radius):
    """Cells whose centre keeps a disc of ``robot_radius`` off every occupied cell (conservative)."""
    padded = np.pad(~grid, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1] * res
    return dist - res * math.sqrt(0.5) >= robot_radius


def connected(grid, res, robot_radius, start, goal):
    free = cspace_free(grid, res, robot_radius)
    labels, _ = ndimage.label(free)
    s = labels[int(start[1] / res), int(start[0] / res)]
    g = labels[int(goal[1] / res), int(goal[0] / res)]
    return s != 0 and s == g


def _try_generate(rng, cfg: NavConfig):
    res = cfg.resolution
    nx = int(round(cfg.width / res))
    ny = int(round(cfg.height / res))
    grid = np.ones((ny, nx), dtype=bool)
    margin = 0.3
    rooms = []
    for _ in range(cfg.n_rooms * 30):
        if len(rooms) == cfg.n_rooms:
            break
        w, h = rng.uniform(*cfg.room_size, size=2)
        if w > cfg.width - 2 * margin or h > cfg.height - 2 * margin:
            continue
        x0 = rng.uniform(margin, cfg.width - margin - w)
        y0 = rng.uniform(margin, cfg.height - margin - h)
        box = (x0, x0 + w, y0, y0 + h)
        if all(box[1] + margin < r[0] or r[1] + margin < box[0] or box[3] + margin < r[2] or r[3] + margin < box[2]
               for r in rooms):
            rooms.append(box)
    if len(rooms) < 2:
        return None
    # chain rooms from the left so corridors stay short
    rooms.sort(key=lambda r: (r[0] + r[1]) / 2)
    for r in rooms:
        _carve(grid, r[0], r[1], r[2], r[3], res)
    corridors = []
    centres = [np.array([(r[0] + r[1]) / 2, (r[2] + r[3]) / 2]) for r in rooms]
    for a, b in zip(centres[:-1], centres[1:]):
        n_cells = int(round(rng.uniform(*cfg.corridor_width) / res))
        corner = np.array([b[0], a[1]]) if rng.random() < 0.5 else np.array([a[0], b[1]])
        horizontal_first = corner[1] == a[1]
        corridors.append(_carve_corridor(grid, a, corner, horizontal_first, n_cells, res))
        corridors.append(_carve_corridor(grid, corner, b, not horizontal_first, n_cells, res))

    start_room, goal_room = rooms[0], rooms[-1]

    def pick(room):
        inset = cfg.robot_radius + 0.15
        return np.array([rng.uniform(room[0] + inset, room[1] - inset),
                         rng.uniform(room[2] + inset, room[3] - inset)])

    start, goal = pick(start_room), pick(goal_room)
    if np.linalg.norm(goal - start) < cfg.min_start_goal_dist:
        return None
    for _ in range(cfg.n_obstacles):
        room = rooms[rng.integers(len(rooms))]
        sx, sy = rng.uniform(*cfg.obstacle_size, size=2)
        cx = rng.uniform(room[0], room[1])
        cy = rng.uniform(room[2], room[3])
        if min(np.hypot(cx - start[0], cy - start[1]), np.hypot(cx - goal[0], cy - goal[1])) < 0.8:
            continue
        i0, i1 = int((cx - sx / 2) / res), int(math.ceil((cx + sx / 2) / res))
        j0, j1 = int((cy - sy / 2) / res), int(math.ceil((cy + sy / 2) / res))
        grid[max(j0, 0):j1, max(i0, 0):i1] = True
    for p in (start, goal):
        if min_obstacle_dist(grid, res, p[0], p[1], 1.0) < cfg.robot_radius + 0.05:
            return None
    if not connected(grid, res, cfg.robot_radius, start, goal):
        return None
    heading = float(rng.uniform(-math.pi, math.pi))
    return NavMap(grid, res, start, heading, goal, tuple(cfg.corridor_width), corridors)


def generate_map(seed, config: NavConfig | None = None) -> NavMap:
    """Random room-and-corridor map, deterministic per seed, with start-goal connectivity verified."""
    cfg = config or NavConfig()
    if cfg.corridor_width[0] <= 2 * cfg.robot_radius:
        raise ValueError("corridor minimum width must exceed the robot diameter")
    rng = np.random.default_rng(seed)
    for _ in range(cfg.max_retries):
        m = _try_generate(rng, cfg)
        if m is not None:
            return m
    raise MapGenerationError(f"no connected map after {cfg.max_retries} attempts (seed {seed})")


def open_map(cfg: NavConfig, start, goal, heading=0.0) -> NavMap:
    """A walled arena with no interior obstacles."""
    res = cfg.resolution
    grid = np.zeros((int(round(cfg.height / res)), int(round(cfg.width / res))), dtype=bool)
    grid[0, :] = grid[-1, :] = grid[:, 0] = grid[:, -1] = True
    return NavMap(grid, res, np.asarray(start, float), float(heading), np.asarray(goal, float))


@dataclass
class NavState:
    x: float
    y: float
    heading: float
    linear_vel: float = 0.0
    angular_vel: float = 0.0
    steps_elapsed: int = 0
    goal_dist: float = 0.0
    clearance: float = 0.0
    collided: bool = False
    reached: bool = False


@dataclass
class NavTransition:
    prev: NavState
    action: np.ndarray
    next: NavState
    outcome: str


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


class NavEnv:
    """One navigation episode at a time on a generated, pooled or fixed map."""

    def __init__(self, config: NavConfig | None = None, fixed_map: NavMap | None = None, maps=None):
        self.config = config or NavConfig()
        self.fixed_map = fixed_map
        self.maps = maps
        self.map: NavMap | None = None
        self.state: NavState | None = None
        self.outcome = "running"
        c = self.config
        self._beam_offsets = np.arange(c.n_beams) * (2.0 * math.pi / c.n_beams)

    @property
    def obs_dim(self):
        return self.config.obs_dim

    def _measure(self, st: NavState):
        c, m = self.config, self.map
        d = min_obstacle_dist(m.grid, m.resolution, st.x, st.y, c.robot_radius + c.clearance_cap)
        st.clearance = d - c.robot_radius
        st.collided = d < c.robot_radius
        st.goal_dist = math.hypot(m.goal[0] - st.x, m.goal[1] - st.y)
        st.reached = (not st.collided) and st.goal_dist <= c.goal_radius
        return st

    def reset(self, seed=None, nav_map: NavMap | None = None):
        if nav_map is not None:
            self.map = nav_map
        elif self.fixed_map is not None:
            self.map = self.fixed_map
        elif self.maps is not None:
            rng = np.random.default_rng(seed)
            self.map = self.maps[int(rng.integers(len(self.maps)))]
        else:
            self.map = generate_map(seed, self.config)
        m = self.map
        self.state = self._measure(NavState(float(m.start[0]), float(m.start[1]), float(m.start_heading)))
        self.outcome = "running"
        return self.observe()

    def observe(self) -> np.ndarray:
        return nav_observe(self.state, self.map, self.config, self._beam_offsets)

    def step(self, action):
        if self.outcome != "running":
            raise EpisodeDoneError(f"episode already finished ({self.outcome})")
        c = self.config
        v = float(np.clip(action[0], 0.0, c.max_speed))
        w = float(np.clip(action[1], -c.max_turn_rate, c.max_turn_rate))
        prev = self.state
        x = prev.x + v * math.cos(prev.heading) * c.dt
        y = prev.y + v * math.sin(prev.heading) * c.dt
        x = min(max(x, 0.0), self.map.width)
        y = min(max(y, 0.0), self.map.height)
        nxt = self._measure(NavState(x, y, _wrap(prev.heading + w * c.dt), v, w, prev.steps_elapsed + 1))
        if nxt.collided:
            outcome = "collision"
        elif nxt.reached:
            outcome = "success"
        elif nxt.steps_elapsed >= c.max_steps:
            outcome = "timeout"
        else:
            outcome = "running"
        self.state = nxt
        self.outcome = outcome
        return self.observe(), NavTransition(prev, np.array([v, w]), nxt, outcome), outcome


def nav_observe(state: NavState, nav_map: NavMap, config: NavConfig, beam_offsets=None) -> np.ndarray:
    """Normalised ranges (beam 0 straight ahead, counter-clockwise), goal distance, goal bearing sin/cos, speed."""
    c = config
    if beam_offsets is None:
        beam_offsets = np.arange(c.n_beams) * (2.0 * math.pi / c.n_beams)
    ranges = raycast(nav_map.grid, nav_map.resolution, state.x, state.y,
                     state.heading + beam_offsets, c.max_range) / c.max_range
    dx = nav_map.goal[0] - state.x
    dy = nav_map.goal[1] - state.y
    diag = math.hypot(nav_map.width, nav_map.height)
    bearing = math.atan2(dy, dx) - state.heading
    extra = np.array([min(math.hypot(dx, dy) / diag, 1.0), math.sin(bearing), math.cos(bearing),
                      state.linear_vel / c.max_speed])
    return np.concatenate([ranges, extra])
