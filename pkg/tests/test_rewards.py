import math
from types import SimpleNamespace as NS

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rtw.rewards import (
    RewardBreakdown,
    compose_reward,
    compose_rewards,
    nav_aux_step_bounds,
    nav_reward_components,
    offroad_aux_step_bounds,
    offroad_reward_components,
    weight_vector,
)


def nav(goal_dist, collided=False, reached=False, clearance=1.0):
    return NS(goal_dist=goal_dist, collided=collided, reached=reached, clearance=clearance)


def car(goal_dist, speed=0.0, stall=0, roll=0.0, pitch=0.0, reached=False):
    return NS(goal_dist=goal_dist, speed=speed, stall_counter=stall, roll=roll, pitch=pitch, reached=reached)


def test_compose_zero_weights_is_primary():
    assert compose_reward(RewardBreakdown(20.0, [-2.0, 0.4, 1.0]), [0, 0, 0]) == 20.0


def test_compose_goal_with_collision():
    assert compose_reward(RewardBreakdown(20.0, [-2.0, 0.0, 0.0]), [1, 0, 0]) == 18.0


def test_compose_length_mismatch():
    with pytest.raises(ValueError):
        compose_reward(RewardBreakdown(0.0, [1.0, 2.0]), [1.0, 1.0, 1.0])


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_compose_matches_independent_sum(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 6))
    primary, aux, w = float(rng.normal() * 100), rng.normal(size=k) * 10, rng.random(k)
    oracle = primary
    for a, b in zip(aux, w):
        oracle += a * b
    assert compose_reward(RewardBreakdown(primary, aux), w) == pytest.approx(oracle, abs=1e-9)


def test_compose_permutation_invariance():
    rng = np.random.default_rng(0)
    aux, w = rng.normal(size=4), rng.random(4)
    perm = rng.permutation(4)
    a = compose_reward(RewardBreakdown(1.0, aux), w)
    b = compose_reward(RewardBreakdown(1.0, aux[perm]), w[perm])
    assert a == pytest.approx(b, abs=1e-12)


def test_vectorised_compose():
    rng = np.random.default_rng(1)
    p, aux, w = rng.normal(size=5), rng.normal(size=(5, 3)), rng.random(3)
    ref = [compose_reward(RewardBreakdown(p[i], aux[i]), w) for i in range(5)]
    np.testing.assert_allclose(compose_rewards(p, aux, w), ref, atol=1e-12)


def test_weight_vector_clamps_and_checks_length():
    np.testing.assert_array_equal(weight_vector([-0.5, 0.3, 1.7]), [0.0, 0.3, 1.0])
    with pytest.raises(ValueError):
        weight_vector([0.1, 0.2], k=3)


def test_nav_goal_step():
    b = nav_reward_components(nav(0.35), None, nav(0.25, reached=True, clearance=0.5))
    assert b.primary == 20.0
    np.testing.assert_allclose(b.aux, [0.0, 0.2, 1.0], atol=1e-12)


def test_nav_stationary_safe():
    b = nav_reward_components(nav(3.0), None, nav(3.0, clearance=0.8))
    assert b.primary == 0.0
    np.testing.assert_array_equal(b.aux, [0.0, 0.0, 1.0])


def test_nav_collision():
    b = nav_reward_components(nav(2.0, clearance=0.1), None, nav(1.95, collided=True, clearance=-0.01))
    assert b.primary == 0.0 and b.aux[0] == -2.0 and b.aux[2] == 0.0


def test_nav_clearance_boundary_inclusive():
    assert nav_reward_components(nav(1.0), None, nav(1.0, clearance=0.3)).aux[2] == 1.0
    assert nav_reward_components(nav(1.0), None, nav(1.0, clearance=0.2999)).aux[2] == 0.0


def test_offroad_goal():
    assert offroad_reward_components(car(1.2), None, car(0.9, speed=2.0, reached=True)).primary == 1000.0


def test_offroad_level_fast_step():
    b = offroad_reward_components(car(5.0), None, car(4.8, speed=4.0))
    np.testing.assert_allclose(b.aux, [1.0, 1.0, 0.0, 0.0], atol=1e-12)


def test_offroad_speed_saturates():
    assert offroad_reward_components(car(5.0), None, car(5.0, speed=6.0)).aux[1] == 1.0


def test_offroad_stalled_on_steep_face():
    b = offroad_reward_components(car(5.0, stall=9), None,
                                  car(5.0, speed=0.0, stall=10, pitch=math.radians(20)))
    assert b.aux[2] == -0.5 and b.aux[3] == -0.5 and b.primary == 0.0


def test_offroad_stall_needs_full_window():
    assert offroad_reward_components(car(5.0), None, car(5.0, stall=9)).aux[2] == 0.0


@settings(max_examples=200, deadline=None)
@given(d0=st.floats(0, 10), step=st.floats(-0.2, 0.2), clear=st.floats(-0.1, 1.0), coll=st.booleans())
def test_nav_aux_bounded(d0, step, clear, coll):
    b = nav_reward_components(nav(d0), None, nav(d0 - step, collided=coll, clearance=clear))
    assert np.all(np.abs(b.aux) <= nav_aux_step_bounds(0.2) + 1e-12)


@settings(max_examples=200, deadline=None)
@given(d0=st.floats(0, 30), step=st.floats(-0.4, 0.4), speed=st.floats(0, 4), stall=st.integers(0, 60),
       roll=st.floats(-1, 1), pitch=st.floats(-1, 1))
def test_offroad_aux_bounded(d0, step, speed, stall, roll, pitch):
    b = offroad_reward_components(car(d0), None, car(d0 - step, speed, stall, roll, pitch))
    assert np.all(np.abs(b.aux) <= offroad_aux_step_bounds(0.4) + 1e-12)
