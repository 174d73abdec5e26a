import dataclasses
import json
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import box, category, obj, scene
from rescuesim.cli import RunConfig
from rescuesim.vec import Vec3, angle_diff, heading_to, heading_vector
from rescuesim.world import (Bounds, SceneError, Status, builtin_categories, builtin_pool, dumps_scene,
                             effective_value, load_scene, rasterize_grid, save_scene, scene_from_dict)


def test_pools_have_the_expected_sizes():
    assert len(builtin_pool("fire_flood")) == 22
    assert len(builtin_pool("wind")) == 11
    assert all(c.value > 0 for c in builtin_categories().values())


def test_empty_scene_loads(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(dumps_scene(scene()))
    assert load_scene(p).objects == []


def test_object_outside_bounds_names_the_id(tmp_path, cats):
    s = scene(objects=[obj(7, cats["book"], 12.0, 5.0)])
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(s.to_dict()))
    with pytest.raises(SceneError, match="object 7"):
        load_scene(p)


def test_round_trip_and_byte_identical_saves(tmp_path, cats):
    s = scene("flood", [obj(1, cats["book"], 2.0, 3.0, target=True), obj(2, cats["vase"], 4.0, 4.0)],
              statics=[box("table", 5.0, 5.0, 0.5, 0.5, 0.8)], edge="zmax")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_scene(s, a)
    save_scene(load_scene(a), b)
    assert a.read_bytes() == b.read_bytes()
    back = load_scene(a)
    assert back.to_dict() == s.to_dict()
    assert [o.category for o in back.objects] == [o.category for o in s.objects]


def test_invalid_scene_is_refused_without_writing(tmp_path, cats):
    s = scene(objects=[obj(1, cats["book"], 1.0, 1.0), obj(1, cats["book"], 2.0, 2.0)])
    p = tmp_path / "dup.json"
    with pytest.raises(SceneError, match="duplicate"):
        save_scene(s, p)
    assert not p.exists()


def test_unknown_category_is_rejected(cats):
    d = scene(objects=[obj(1, cats["book"], 1.0, 1.0)]).to_dict()
    d["objects"][0]["category"] = "unicorn"
    with pytest.raises(SceneError, match="unicorn"):
        scene_from_dict(d)


def test_rasterize_empty_and_unit_box():
    assert not rasterize_grid(scene()).height_of.any()
    s = scene(size=(4.0, 4.0), statics=[box("cube", 2.0, 2.0, 0.5, 0.5, 1.0)])
    s.bounds = Bounds(-2.0, -2.0, 2.0, 2.0)
    s.statics = [box("cube", 0.0, 0.0, 0.5, 0.5, 1.0)]
    s.agent_spawn = (Vec3(1.5, 0.0, 1.5), 0.0)
    g = rasterize_grid(s)
    assert g.cell_size == 0.25
    covered = np.argwhere(g.height_of == 1.0)
    assert len(covered) == 16 and not ((g.height_of != 0) & (g.height_of != 1.0)).any()
    assert {tuple(c) for c in covered} == {(i, j) for i in range(6, 10) for j in range(6, 10)}
    assert np.array_equal(rasterize_grid(s).height_of, g.height_of)


def test_effective_value_halves_on_damage():
    o = obj(1, category(value=40.0), 1.0, 1.0)
    assert effective_value(o) == 40.0
    o.damaged = True
    assert effective_value(o) == 20.0
    with pytest.raises(SceneError):
        category(value=0.0)


def test_status_never_moves_backwards():
    o = obj(1, category(), 1.0, 1.0)
    o.set_status(Status.BURNING)
    o.set_status(Status.BURNT)
    with pytest.raises(ValueError):
        o.set_status(Status.NORMAL)


@given(st.floats(-720, 720), st.floats(-720, 720))
def test_angle_diff_is_the_short_way_round(a, b):
    d = angle_diff(a, b)
    assert -180.0 - 1e-9 <= d <= 180.0 + 1e-9
    assert abs(((a + d - b) + 180.0) % 360.0 - 180.0) < 1e-6


@settings(max_examples=50)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_heading_to_points_along_heading_vector(x, z):
    if abs(x) + abs(z) < 1e-3:
        return
    h = heading_to(Vec3(), Vec3(x, 0.0, z))
    v = heading_vector(h)
    n = (x * x + z * z) ** 0.5
    assert v.x == pytest.approx(x / n, abs=1e-9) and v.z == pytest.approx(z / n, abs=1e-9)


def _schema(name):
    return json.loads((resources.files("rescuesim") / "data" / f"{name}.schema.json").read_text())


def test_schemas_describe_what_is_written(cats):
    sch = _schema("scene")
    d = scene("wind", [obj(1, cats["book"], 2.0, 2.0, target=True)],
              statics=[box("table", 5.0, 5.0, 0.5, 0.5, 0.8)]).to_dict()
    assert set(d) == set(sch["required"]) == set(sch["properties"])
    props = sch["properties"]
    assert set(d["objects"][0]) == set(props["objects"]["items"]["required"])
    assert set(d["statics"][0]) == set(props["statics"]["items"]["required"])
    for task, h in (("fire", {"task", "fire_sources"}), ("flood", {"task", "flood_edge"}),
                    ("wind", {"task", "wind_direction"})):
        assert set(scene(task).to_dict()["hazard"]) == h
    item = _schema("category")["items"]
    for rec in json.loads((resources.files("rescuesim") / "data" / "pool_fire_flood.json").read_text()):
        assert set(item["required"]) <= set(rec) <= set(item["properties"])
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    assert fields == set(_schema("runconfig")["properties"])
