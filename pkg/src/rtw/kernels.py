"""Hot geometry kernels for the simulators and MPPI rollouts.

Each kernel exists twice: a loop version compiled with numba and a vectorised numpy
version. The module-level names pick one according to ``rtw._jit.USE_NUMBA``.

Grid conventions: ``grid[iy, ix]`` covers ``[ix*res, (ix+1)*res) x [iy*res, (iy+1)*res)``
and everything outside the array counts as occupied. Heightmaps store node values,
``height[iy, ix]`` at ``(ix*res, iy*res)``.
"""
import math

import numpy as np

from rtw._jit import njit, select


# --- ray casting -------------------------------------------------------------

@njit
def _raycast_loop(grid, res, x, y, angles, max_range):
    ny, nx = grid.shape
    out = np.empty(angles.shape[0])
    for k in range(angles.shape[0]):
        dx = math.cos(angles[k])
        dy = math.sin(angles[k])
        ix = int(math.floor(x / res))
        iy = int(math.floor(y / res))
        if ix < 0 or iy < 0 or ix >= nx or iy >= ny or grid[iy, ix]:
            out[k] = 0.0
            continue
        if dx > 0.0:
            sx = 1
            tmx = ((ix + 1) * res - x) / dx
            tdx = res / dx
        elif dx < 0.0:
            sx = -1
            tmx = (ix * res - x) / dx
            tdx = -res / dx
        else:
            sx = 0
            tmx = np.inf
            tdx = np.inf
        if dy > 0.0:
            sy = 1
            tmy = ((iy + 1) * res - y) / dy
            tdy = res / dy
        elif dy < 0.0:
            sy = -1
            tmy = (iy * res - y) / dy
            tdy = -res / dy
        else:
            sy = 0
            tmy = np.inf
            tdy = np.inf
        hit = max_range
        while True:
            if tmx < tmy:
                t = tmx
                ix += sx
                tmx += tdx
            else:
                t = tmy
                iy += sy
                tmy += tdy
            if t >= max_range:
                break
            if ix < 0 or iy < 0 or ix >= nx or iy >= ny or grid[iy, ix]:
                hit = t
                break
        out[k] = hit
    return out


def _raycast_numpy(grid, res, x, y, angles, max_range):
    ny, nx = grid.shape
    n = angles.shape[0]
    dx = np.cos(angles)
    dy = np.sin(angles)
    ix = np.full(n, int(math.floor(x / res)))
    iy = np.full(n, int(math.floor(y / res)))
    out = np.full(n, float(max_range))

    def blocked(ix, iy):
        inside = (ix >= 0) & (iy >= 0) & (ix < nx) & (iy < ny)
        b = ~inside
        b[inside] = grid[iy[inside], ix[inside]]
        return b

    start_blocked = blocked(ix, iy)
    out[start_blocked] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = np.sign(dx).astype(np.int64)
        sy = np.sign(dy).astype(np.int64)
        tmx = np.where(dx > 0, ((ix + 1) * res - x) / dx, np.where(dx < 0, (ix * res - x) / dx, np.inf))
        tmy = np.where(dy > 0, ((iy + 1) * res - y) / dy, np.where(dy < 0, (iy * res - y) / dy, np.inf))
        tdx = np.where(dx != 0, res / np.abs(dx), np.inf)
        tdy = np.where(dy != 0, res / np.abs(dy), np.inf)
    active = ~start_blocked
    while active.any():
        step_x = active & (tmx < tmy)
        step_y = active & ~step_x
        t = np.where(step_x, tmx, tmy)
        ix = np.where(step_x, ix + sx, ix)
        tmx = np.where(step_x, tmx + tdx, tmx)
        iy = np.where(step_y, iy + sy, iy)
        tmy = np.where(step_y, tmy + tdy, tmy)
        done_range = active & (t >= max_range)
        active &= ~done_range
        hit = active & blocked(ix, iy)
        out[hit] = t[hit]
        active &= ~hit
    return out


raycast = select(_raycast_loop, _raycast_numpy)


# --- disc vs occupied cells --------------------------------------------------

@njit
def _min_obstacle_dist_loop(grid, res, x, y, search_radius):
    """Distance from (x, y) to the nearest occupied cell square, capped at ``search_radius``."""
    ny, nx = grid.shape
    i0 = int(math.floor((x - search_radius) / res))
    i1 = int(math.floor((x + search_radius) / res))
    j0 = int(math.floor((y - search_radius) / res))
    j1 = int(math.floor((y + search_radius) / res))
    best2 = search_radius * search_radius
    for j in range(j0, j1 + 1):
        cy0 = j * res
        ddy = max(cy0 - y, 0.0, y - (cy0 + res))
        if ddy * ddy >= best2:
            continue
        for i in range(i0, i1 + 1):
            if 0 <= i < nx and 0 <= j < ny and not grid[j, i]:
                continue
            cx0 = i * res
            ddx = max(cx0 - x, 0.0, x - (cx0 + res))
            d2 = ddx * ddx + ddy * ddy
            if d2 < best2:
                best2 = d2
    return math.sqrt(best2)


def _min_obstacle_dist_numpy(grid, res, x, y, search_radius):
    ny, nx = grid.shape
    i = np.arange(int(math.floor((x - search_radius) / res)), int(math.floor((x + search_radius) / res)) + 1)
    j = np.arange(int(math.floor((y - search_radius) / res)), int(math.floor((y + search_radius) / res)) + 1)
    jj, ii = np.meshgrid(j, i, indexing="ij")
    inside = (ii >= 0) & (jj >= 0) & (ii < nx) & (jj < ny)
    occ = ~inside
    occ[inside] = grid[jj[inside], ii[inside]]
    if not occ.any():
        return float(search_radius)
    cx0 = ii[occ] * res
    cy0 = jj[occ] * res
    ddx = np.maximum(np.maximum(cx0 - x, 0.0), x - (cx0 + res))
    ddy = np.maximum(np.maximum(cy0 - y, 0.0), y - (cy0 + res))
    d2 = np.min(ddx * ddx + ddy * ddy)
    return float(math.sqrt(min(d2, search_radius * search_radius)))


min_obstacle_dist = select(_min_obstacle_dist_loop, _min_obstacle_dist_numpy)


# --- MPPI rollouts on the navigation grid -------------------------------------

@njit
def _nav_rollout_costs_loop(grid, res, x0, y0, th0, controls, dt, robot_radius,
                            goal_x, goal_y, collision_cost):
    n, h, _ = controls.shape
    costs = np.zeros(n)
    for s in range(n):
        x = x0
        y = y0
        th = th0
        c = 0.0
        for t in range(h):
            v = controls[s, t, 0]
            w = controls[s, t, 1]
            x += v * math.cos(th) * dt
            y += v * math.sin(th) * dt
            th += w * dt
            if _min_obstacle_dist_loop(grid, res, x, y, robot_radius) < robot_radius:
                c += collision_cost
        c += math.hypot(x - goal_x, y - goal_y)
        costs[s] = c
    return costs


def _nav_rollout_costs_numpy(grid, res, x0, y0, th0, controls, dt, robot_radius,
                             goal_x, goal_y, collision_cost):
    n, h, _ = controls.shape
    x = np.full(n, float(x0))
    y = np.full(n, float(y0))
    th = np.full(n, float(th0))
    costs = np.zeros(n)
    for t in range(h):
        v = controls[:, t, 0]
        w = controls[:, t, 1]
        x = x + v * np.cos(th) * dt
        y = y + v * np.sin(th) * dt
        th = th + w * dt
        for s in range(n):
            if _min_obstacle_dist_numpy(grid, res, x[s], y[s], robot_radius) < robot_radius:
                costs[s] += collision_cost
    return costs + np.hypot(x - goal_x, y - goal_y)


nav_rollout_costs = select(_nav_rollout_costs_loop, _nav_rollout_costs_numpy)


# --- heightmap sampling and attitude ------------------------------------------

@njit
def _bilinear_loop(height, res, xs, ys):
    ny, nx = height.shape
    out = np.empty(xs.shape[0])
    xmax = (nx - 1) * res
    ymax = (ny - 1) * res
    for k in range(xs.shape[0]):
        x = min(max(xs[k], 0.0), xmax)
        y = min(max(ys[k], 0.0), ymax)
        fx = x / res
        fy = y / res
        i = min(int(math.floor(fx)), nx - 2)
        j = min(int(math.floor(fy)), ny - 2)
        tx = fx - i
        ty = fy - j
        out[k] = ((1.0 - tx) * (1.0 - ty) * height[j, i] + tx * (1.0 - ty) * height[j, i + 1]
                  + (1.0 - tx) * ty * height[j + 1, i] + tx * ty * height[j + 1, i + 1])
    return out


def _bilinear_numpy(height, res, xs, ys):
    ny, nx = height.shape
    x = np.clip(xs, 0.0, (nx - 1) * res)
    y = np.clip(ys, 0.0, (ny - 1) * res)
    fx = x / res
    fy = y / res
    i = np.minimum(np.floor(fx).astype(np.int64), nx - 2)
    j = np.minimum(np.floor(fy).astype(np.int64), ny - 2)
    tx = fx - i
    ty = fy - j
    return ((1.0 - tx) * (1.0 - ty) * height[j, i] + tx * (1.0 - ty) * height[j, i + 1]
            + (1.0 - tx) * ty * height[j + 1, i] + tx * ty * height[j + 1, i + 1])


bilinear = select(_bilinear_loop, _bilinear_numpy)


@njit
def _plane_fit_loop(height, res, x, y, heading, length, width, n_long, n_lat):
    """Least-squares plane ``z = a + b*u + c*v`` over a centred ``n_long x n_lat`` footprint grid.

    ``u`` runs forward along ``heading``, ``v`` to the left. Returns ``(a, b, c, max_abs_residual)``.
    """
    c_h = math.cos(heading)
    s_h = math.sin(heading)
    n = n_long * n_lat
    us = np.empty(n)
    vs = np.empty(n)
    k = 0
    for i in range(n_long):
        u = -0.5 * length + length * i / (n_long - 1)
        for j in range(n_lat):
            v = -0.5 * width + width * j / (n_lat - 1)
            us[k] = u
            vs[k] = v
            k += 1
    xs = x + c_h * us - s_h * vs
    ys = y + s_h * us + c_h * vs
    zs = _bilinear_loop(height, res, xs, ys)
    # centred symmetric grid: normal equations are diagonal
    a = 0.0
    suz = 0.0
    svz = 0.0
    suu = 0.0
    svv = 0.0
    for k in range(n):
        a += zs[k]
        suz += us[k] * zs[k]
        svz += vs[k] * zs[k]
        suu += us[k] * us[k]
        svv += vs[k] * vs[k]
    a /= n
    b = suz / suu
    c = svz / svv
    resid = 0.0
    for k in range(n):
        r = abs(zs[k] - (a + b * us[k] + c * vs[k]))
        if r > resid:
            resid = r
    return a, b, c, resid


def _plane_fit_numpy(height, res, x, y, heading, length, width, n_long, n_lat):
    u = np.linspace(-0.5 * length, 0.5 * length, n_long)
    v = np.linspace(-0.5 * width, 0.5 * width, n_lat)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    uu = uu.ravel()
    vv = vv.ravel()
    c_h, s_h = math.cos(heading), math.sin(heading)
    zs = _bilinear_numpy(height, res, x + c_h * uu - s_h * vv, y + s_h * uu + c_h * vv)
    a = zs.mean()
    b = np.dot(uu, zs) / np.dot(uu, uu)
    c = np.dot(vv, zs) / np.dot(vv, vv)
    resid = float(np.max(np.abs(zs - (a + b * uu + c * vv))))
    return float(a), float(b), float(c), resid


plane_fit = select(_plane_fit_loop, _plane_fit_numpy)


@njit
def _attitude_from_plane(b, c):
    pitch = math.atan(b)
    roll = math.atan(c / math.sqrt(1.0 + b * b))
    return roll, pitch


def attitude_from_plane(b, c):
    """(roll, pitch) of a body resting on a plane with forward slope ``b`` and leftward slope ``c``.

    Nose-up pitch is positive; roll is positive when the right side sits lower.
    """
    return math.atan(c / math.sqrt(1.0 + b * b)), math.atan(b)


# --- off-road vehicle step and MPPI rollouts -----------------------------------

@njit
def _vehicle_step_loop(height, res, x, y, psi, pitch_prev, throttle, steer, dt, wheelbase,
                       max_steer, max_speed, pitch_limit, lo, hi, length, width, n_long, n_lat):
    traction = 1.0 - pitch_prev / pitch_limit
    traction = min(1.0, max(0.0, traction))
    v = throttle * max_speed * traction
    x = x + v * math.cos(psi) * dt
    y = y + v * math.sin(psi) * dt
    psi = psi + v / wheelbase * math.tan(steer * max_steer) * dt
    x = min(max(x, lo), hi)
    y = min(max(y, lo), hi)
    a, b, c, _ = _plane_fit_loop(height, res, x, y, psi, length, width, n_long, n_lat)
    roll, pitch = _attitude_from_plane(b, c)
    return x, y, psi, v, roll, pitch


def _vehicle_step_numpy(height, res, x, y, psi, pitch_prev, throttle, steer, dt, wheelbase,
                        max_steer, max_speed, pitch_limit, lo, hi, length, width, n_long, n_lat):
    traction = min(1.0, max(0.0, 1.0 - pitch_prev / pitch_limit))
    v = throttle * max_speed * traction
    x = x + v * math.cos(psi) * dt
    y = y + v * math.sin(psi) * dt
    psi = psi + v / wheelbase * math.tan(steer * max_steer) * dt
    x = min(max(x, lo), hi)
    y = min(max(y, lo), hi)
    _, b, c, _ = _plane_fit_numpy(height, res, x, y, psi, length, width, n_long, n_lat)
    roll, pitch = attitude_from_plane(b, c)
    return x, y, psi, v, roll, pitch


vehicle_step = select(_vehicle_step_loop, _vehicle_step_numpy)


@njit
def _offroad_rollout_costs_loop(height, res, x0, y0, psi0, pitch0, controls, dt, wheelbase,
                                max_steer, max_speed, pitch_limit, lo, hi, length, width,
                                n_long, n_lat, goal_x, goal_y, penalty_angle, rollover_angle,
                                breach_cost, rollover_cost):
    n, h, _ = controls.shape
    costs = np.zeros(n)
    for s in range(n):
        x = x0
        y = y0
        psi = psi0
        pitch = pitch0
        c = 0.0
        for t in range(h):
            x, y, psi, v, roll, pitch = _vehicle_step_loop(
                height, res, x, y, psi, pitch, controls[s, t, 0], controls[s, t, 1], dt, wheelbase,
                max_steer, max_speed, pitch_limit, lo, hi, length, width, n_long, n_lat)
            if abs(roll) > rollover_angle or abs(pitch) > rollover_angle:
                c += rollover_cost
                break
            if abs(roll) > penalty_angle or abs(pitch) > penalty_angle:
                c += breach_cost
        costs[s] = c + math.hypot(x - goal_x, y - goal_y)
    return costs


def _offroad_rollout_costs_numpy(height, res, x0, y0, psi0, pitch0, controls, dt, wheelbase,
                                 max_steer, max_speed, pitch_limit, lo, hi, length, width,
                                 n_long, n_lat, goal_x, goal_y, penalty_angle, rollover_angle,
                                 breach_cost, rollover_cost):
    n, h, _ = controls.shape
    costs = np.zeros(n)
    for s in range(n):
        x, y, psi, pitch = x0, y0, psi0, pitch0
        c = 0.0
        for t in range(h):
            x, y, psi, v, roll, pitch = _vehicle_step_numpy(
                height, res, x, y, psi, pitch, controls[s, t, 0], controls[s, t, 1], dt, wheelbase,
                max_steer, max_speed, pitch_limit, lo, hi, length, width, n_long, n_lat)
            if abs(roll) > rollover_angle or abs(pitch) > rollover_angle:
                c += rollover_cost
                break
            if abs(roll) > penalty_angle or abs(pitch) > penalty_angle:
                c += breach_cost
        costs[s] = c + math.hypot(x - goal_x, y - goal_y)
    return costs


offroad_rollout_costs = select(_offroad_rollout_costs_loop, _offroad_rollout_costs_numpy)
