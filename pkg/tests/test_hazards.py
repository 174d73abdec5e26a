"""Fire, flood and wind models in isolation."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from helpers import category, obj, scene
from rescuesim.fire import (FireField, FireParams, env_temperature, spread_floor_fire, spread_probability,
                            step_temperature, update_burn_status)
from rescuesim.flood import (FloodParams, FloodState, apply_flood_damage, buoyancy_force, drag_magnitude,
                             flood_forces, submerged_volume, water_height_at)
from rescuesim.physics import World, step_frame
from rescuesim.vec import Vec3
from rescuesim.wind import WindParams, main_force, mark_out_of_reach, wind_load
from rescuesim.world import Bounds, Status

temps = st.floats(-100, 1000, allow_nan=False)


# -- fire -------------------------------------------------------------------

def test_step_temperature_fixed_point_and_closed_form():
    assert step_temperature(55.0, 55.0, 0.1) == 55.0
    t = 100.0
    for k in range(1, 30):
        t = step_temperature(t, 20.0, 0.1)
        assert abs(t - 20.0) == pytest.approx(0.9 ** k * 80.0, rel=1e-12)


@given(temps, temps, st.floats(0.001, 0.999))
def test_step_temperature_stays_between_its_inputs(t, env, d):
    out = step_temperature(t, env, d)
    assert min(t, env) - 1e-9 <= out <= max(t, env) + 1e-9


def test_env_temperature_includes_burning_cells():
    p = FireParams(room_weight=1.0)
    o = obj(1, category(), 0.625, 0.625, y=0.0)
    field = FireField(Bounds(0, 0, 10, 10), 0.25)
    field.ignite(2, 2, 0)
    # the cell centre coincides with the object, so the capped weight D^-2 = 1 applies
    assert env_temperature(o, scene("fire", [o]), field, p) == pytest.approx((20.0 + 500.0) / 2.0)


def test_burning_neighbour_radiates_flame_temperature():
    p = FireParams(room_weight=1.0)
    a, b = obj(1, category(), 5.0, 5.0), obj(2, category(), 6.0, 5.0)
    b.status, b.temperature = Status.BURNING, 20.0
    assert env_temperature(a, scene("fire", [a, b]), None, p) == pytest.approx(260.0)


def test_burn_status_thresholds():
    p = FireParams()
    o = obj(1, category(ignition=200.0, burn=200), 1.0, 1.0)
    o.temperature = 200.0 - 1e-9
    assert update_burn_status(o, 50, p) is None
    o.temperature = 200.0
    assert update_burn_status(o, 100, p) == "ignite" and o.damaged and o.ignition_frame == 100
    assert update_burn_status(o, 299, p) is None
    assert update_burn_status(o, 300, p) == "burnout" and o.status is Status.BURNT
    o.temperature = 900.0
    assert update_burn_status(o, 400, p) is None and o.status is Status.BURNT and o.damaged


@given(st.lists(st.floats(-100, 2000), min_size=2, max_size=20))
def test_spread_probability_is_monotone_and_clamped(ages):
    p = FireParams()
    ages = sorted(ages)
    probs = [spread_probability(a, p) for a in ages]
    assert all(0.0 <= x <= 1.0 for x in probs)
    assert all(x <= y for x, y in zip(probs, probs[1:]))


def test_spread_at_zero_age_and_custom_slope():
    rng = np.random.default_rng(0)
    f = FireField.for_shape(3, 3)
    f.ignite(1, 1, 0)
    assert spread_floor_fire(f, 0, rng, FireParams()) == []
    p = FireParams(spread_slope=0.001, spread_cap_frames=1000)
    hits = 0
    for _ in range(10_000):
        f = FireField.for_shape(3, 3)
        f.ignite(1, 1, 0)
        hits += len(spread_floor_fire(f, 300, rng, p))
    assert abs(hits / 40_000 - 0.30) < 0.02


def test_spread_is_four_connected():
    f = FireField.for_shape(3, 3)
    f.ignite(1, 1, 0)
    new = spread_floor_fire(f, 600, np.random.default_rng(1), FireParams())
    assert sorted(new) == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_fire_evolution_is_seed_deterministic(cats):
    s = scene("fire", [obj(1, cats["book"], 3.0, 3.0)], sources=[(5.0, 5.0)])
    runs = []
    for _ in range(2):
        w = World(s, seed=42)
        cells = []
        for _ in range(150):
            step_frame(w)
            cells.append(w.fire.field.ignition_frame.copy())
        runs.append(cells)
    assert all(np.array_equal(a, b) for a, b in zip(*runs))


def test_burning_object_ignites_its_floor_cell():
    hot = category(ignition=21.0)
    o = obj(1, hot, 2.1, 2.1)
    o.temperature = 30.0
    w = World(scene("fire", [o]))
    step_frame(w)
    assert w.objects[0].status is Status.BURNING
    assert w.fire.field.cell_of(2.1, 2.1) in w.fire.field.burning_cells


# -- flood --------------------------------------------------------------------

def test_water_height_plane():
    p = FloodParams(surface_slope=0.1)
    b = Bounds(0, 0, 10, 10)
    assert water_height_at(FloodState(), p, Vec3(3, 0, 3), b) == 0.0
    st_ = FloodState(front_position=4.0, base_height=0.5)
    assert water_height_at(st_, p, Vec3(4, 0, 1), b) == 0.5
    assert water_height_at(st_, p, Vec3(6, 0, 1), b) == pytest.approx(0.3)


def test_submerged_volume_cases():
    cube = obj(1, category(), 1.0, 1.0, half=(0.5, 0.5, 0.5))
    assert submerged_volume(cube, -0.1) == (0.0, 0.0)
    assert submerged_volume(cube, 2.0) == (1.0, 1.0)
    assert submerged_volume(cube, 0.5) == (0.5, 0.5)


def test_buoyancy_and_drag_examples():
    assert buoyancy_force(1000.0, 0.5, 9.81) == Vec3(0.0, 4905.0, 0.0)
    assert drag_magnitude(1000.0, 1.0, 1.0, 0.5) == 250.0
    dry = obj(1, category(), 1.0, 1.0)
    assert flood_forces(dry, FloodState(), FloodParams(), Bounds(0, 0, 10, 10)) == (Vec3(), Vec3())


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_buoyancy_is_vertical_and_linear(v1, v2):
    a, b = buoyancy_force(1000.0, v1), buoyancy_force(1000.0, v2)
    assert a.x == a.z == 0.0
    assert a.y + b.y == pytest.approx(buoyancy_force(1000.0, v1 + v2).y)


def test_flood_damage_rules():
    p = FloodParams()
    dry_box = obj(1, category(waterproof=True), 1.0, 1.0)
    assert apply_flood_damage(dry_box, 1.0, p) is None
    o = obj(2, category(), 1.0, 1.0)
    assert apply_flood_damage(o, 0.99, p) is None
    assert apply_flood_damage(o, 1.0, p) == "damage" and o.damaged
    assert apply_flood_damage(o, 0.0, p) is None and o.damaged


def test_water_never_drops_at_a_point():
    w = World(scene("flood"))
    pts = [Vec3(x, 0.0, 5.0) for x in (0.5, 3.0, 9.5)]
    last = [0.0] * 3
    for _ in range(600):
        step_frame(w)
        now = [w.water_height(p) for p in pts]
        assert all(a <= b + 1e-12 for a, b in zip(last, now))
        last = now


# -- wind --------------------------------------------------------------------

def test_wind_main_force_and_zero_wind():
    p = WindParams(air_density=1.2)
    # a 0.5 m^2 face square to the wind
    o = obj(1, category(wind=True), 1.0, 1.0, half=(0.1, 0.25, 0.5))
    f1 = main_force(o, p, Vec3(10.0, 0.0, 0.0))
    assert f1.norm() == pytest.approx(60.0)
    rng = np.random.default_rng(0)
    force, torque = wind_load(o, p, Vec3(), rng)
    assert force == Vec3() and torque.norm() == pytest.approx(p.torque_magnitude)


def test_wind_samples_are_reproducible():
    o = obj(1, category(wind=True), 1.0, 1.0)
    seqs = []
    for _ in range(2):
        rng = np.random.default_rng(9)
        seqs.append([wind_load(o, WindParams(), Vec3(3.0, 0.0, 1.0), rng) for _ in range(20)])
    assert seqs[0] == seqs[1]


def test_zero_wind_consumes_the_stream_like_nonzero_wind():
    o = obj(1, category(wind=True), 1.0, 1.0)
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    wind_load(o, WindParams(), Vec3(), a)
    wind_load(o, WindParams(), Vec3(2.0, 0.0, 0.0), b)
    # both streams advanced past one direction sample and one torque sample
    assert a.random() == b.random()


def test_out_of_reach_boundary():
    p = WindParams(out_of_bounds_margin=1.0)
    inside = obj(1, category(), 5.0, 5.0)
    edge = obj(2, category(), 5.0, 5.0)
    edge.position = Vec3(11.0, 0.1, 5.0)
    past = obj(3, category(), 5.0, 5.0)
    past.position = Vec3(11.0 + 1e-6, 0.1, 5.0)
    s = scene("wind", [inside, edge, past])
    assert mark_out_of_reach(s, p) == [3]
    assert s.objects[2].lost and not s.objects[1].lost
    assert mark_out_of_reach(scene("wind", [obj(4, category(), 1.0, 1.0)]), p) == []


def test_heavy_objects_ignore_the_wind():
    cart = obj(1, category("cart", density=200.0, wind=False), 5.0, 5.0, half=(0.4, 0.5, 0.3))
    w = World(scene("wind", [cart]))
    for _ in range(60):
        step_frame(w)
    assert w.objects[0].position.x == pytest.approx(5.0)
    assert math.isclose(w.objects[0].position.z, 5.0)
