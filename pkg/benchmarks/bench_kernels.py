"""Time each compiled kernel against its numpy twin.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import math
import timeit

import numpy as np

from rtw import kernels as K
from rtw.envs.nav import generate_map
from rtw.envs.offroad import OffroadConfig, generate_terrain
from rtw.ppo import _gae_loop, _gae_numpy


def cases():
    m = generate_map(0)
    t = generate_terrain(0)
    c = OffroadConfig()
    rng = np.random.default_rng(0)
    angles = np.linspace(-math.pi, math.pi, 24, endpoint=False)
    nav_ctrl = np.stack([rng.uniform(0, 2, (256, 20)), rng.uniform(-2, 2, (256, 20))], axis=-1)
    off_ctrl = np.stack([rng.uniform(0, 1, (256, 20)), rng.uniform(-1, 1, (256, 20))], axis=-1)
    common = (c.dt, c.wheelbase, math.radians(c.max_steer_deg), c.max_speed, math.radians(c.rollover_deg),
              c.margin, t.extent - c.margin, c.footprint_length, c.footprint_width, *c.footprint_samples)
    r, v = rng.normal(size=(64, 16)), rng.normal(size=(64, 16))
    d = (rng.random((64, 16)) < 0.05).astype(float)
    boot = rng.normal(size=16)
    g, res = m.grid, m.resolution
    return [
        ("raycast 24 beams", K._raycast_loop, K._raycast_numpy, (g, res, *m.start, angles, 5.0)),
        ("min_obstacle_dist", K._min_obstacle_dist_loop, K._min_obstacle_dist_numpy, (g, res, *m.start, 1.0)),
        ("nav MPPI costs 256x20", K._nav_rollout_costs_loop, K._nav_rollout_costs_numpy,
         (g, res, *m.start, m.start_heading, nav_ctrl, 0.1, 0.2, *m.goal, 1e4)),
        ("plane fit", K._plane_fit_loop, K._plane_fit_numpy, (t.heightmap, t.resolution, 20.0, 20.0, 0.3,
                                                             0.8, 0.5, 5, 3)),
        ("vehicle step", K._vehicle_step_loop, K._vehicle_step_numpy,
         (t.heightmap, t.resolution, 20.0, 20.0, 0.3, 0.0, 0.7, 0.2, *common)),
        ("offroad MPPI costs 256x20", K._offroad_rollout_costs_loop, K._offroad_rollout_costs_numpy,
         (t.heightmap, t.resolution, *t.start, t.start_heading, 0.0, off_ctrl, *common, *t.goal,
          math.radians(c.penalty_deg), math.radians(c.rollover_deg), 1e3, 1e4)),
        ("GAE 64x16", _gae_loop, _gae_numpy, (r, v, d, boot, 0.99, 0.95)),
    ]


def best_time(fn, args, repeat):
    fn(*args)  # compile / warm up
    timer = timeit.Timer(lambda: fn(*args))
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"{'kernel':28s} {'numba':>12s} {'numpy':>12s} {'speedup':>8s}")
    for name, jit_fn, np_fn, a in cases():
        tj, tn = best_time(jit_fn, a, args.repeat), best_time(np_fn, a, args.repeat)
        print(f"{name:28s} {tj * 1e6:10.1f}us {tn * 1e6:10.1f}us {tn / tj:7.1f}x")


if __name__ == "__main__":
    main()
