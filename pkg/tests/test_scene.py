"""Procedural scenes: determinism, placement invariants, schema round-trip."""

import json

import pytest

from insitugen.errors import SchemaVersionError
from insitugen.geometry import Box3, Rect3
from insitugen.scene import (CATEGORY_SIZES, STACKABLE, SURFACES, AgentPose,
                             CameraModel, Scene, SceneEntity, SceneProfile,
                             generate_scene)


def boxes_overlap(a: Box3, b: Box3, tol=1e-9) -> bool:
    return all(a.lo[i] < b.hi[i] - tol and b.lo[i] < a.hi[i] - tol
               for i in range(3))


def test_generation_is_deterministic():
    for seed in (0, 7, 123):
        a = generate_scene(seed)
        b = generate_scene(seed)
        assert a.to_json() == b.to_json()
    assert generate_scene(5).to_json() != generate_scene(6).to_json()


def test_scene_invariants_over_seeds():
    profile = SceneProfile()
    saw_mirror = saw_stack = False
    for seed in range(30):
        scene = generate_scene(seed, profile)
        scene.validate()
        lo, hi = profile.entity_count
        solids = [e for e in scene.entities if not e.is_mirror]
        assert lo <= len(solids) <= hi

        # no two solid bodies interpenetrate
        for i, a in enumerate(solids):
            for b in solids[i + 1:]:
                assert not boxes_overlap(a.bbox3d, b.bbox3d), \
                    f"seed {seed}: {a.id} overlaps {b.id}"

        for e in scene.entities:
            if e.is_mirror:
                saw_mirror = True
                assert e.mirror_plane is not None
                continue
            assert e.label in CATEGORY_SIZES
            assert e.bbox3d.lo[2] >= -1e-9
            if e.bbox3d.lo[2] > 1e-6:  # resting on another body
                saw_stack = True
                assert e.label in STACKABLE
                support = [s for s in solids
                           if s.label in SURFACES
                           and abs(s.bbox3d.hi[2] - e.bbox3d.lo[2]) < 1e-6]
                assert support, f"seed {seed}: {e.id} floats"

        spawn = scene.agent_spawn
        assert scene.bounds.contains_point(spawn.position)
        assert spawn.pitch_deg == 0.0

        sp = scene.surveillance_pose
        assert sp.eye[2] > scene.bounds.hi[2] * 0.8  # mounted high
        assert sp.pitch_deg < 0.0  # looks down

    assert saw_mirror and saw_stack


def test_mirror_lies_on_a_wall():
    found = 0
    for seed in range(40):
        scene = generate_scene(seed)
        for e in scene.entities:
            if not e.is_mirror:
                continue
            found += 1
            r = e.mirror_plane
            flat = [k for k in range(3)
                    if abs(r.u[k]) < 1e-9 and abs(r.v[k]) < 1e-9]
            assert len(flat) == 1 and flat[0] != 2  # vertical wall plane
            axis = flat[0]
            wall = r.origin[axis]
            assert (abs(wall - scene.bounds.lo[axis]) < 0.1
                    or abs(wall - scene.bounds.hi[axis]) < 0.1)
    assert found >= 5


def test_entity_numbers_are_stable_and_one_based():
    scene = generate_scene(9)
    nums = [scene.entity_number(e.id) for e in scene.entities]
    assert nums == list(range(1, len(scene.entities) + 1))
    assert scene.entity(scene.entities[3].id) is scene.entities[3]
    assert scene.has_entity(scene.entities[0].id)
    assert not scene.has_entity("nope")


def test_json_roundtrip_exact():
    scene = generate_scene(17)
    again = Scene.from_json(json.loads(json.dumps(scene.to_json())))
    assert again.to_json() == scene.to_json()
    again.validate()


def test_save_load(tmp_path):
    scene = generate_scene(4)
    p = tmp_path / "scene.json"
    scene.save(p)
    assert Scene.load(p).to_json() == scene.to_json()


def test_schema_mismatch_rejected():
    doc = generate_scene(2).to_json()
    bad = dict(doc, schema_version=doc["schema_version"] + 1)
    with pytest.raises(SchemaVersionError):
        Scene.from_json(bad)
    bad = dict(doc, schema="something/else")
    with pytest.raises(SchemaVersionError):
        Scene.from_json(bad)


def test_validate_catches_bad_scenes():
    scene = generate_scene(1)
    outside = SceneEntity("rogue", "box", "red",
                          Box3((-5, -5, 0), (-4, -4, 0.5)))
    broken = Scene(scene.id, scene.bounds, scene.entities + (outside,),
                   scene.agent_spawn, scene.surveillance_pose)
    with pytest.raises(ValueError, match="outside scene bounds"):
        broken.validate()

    inside_spawn = AgentPose(scene.entities[-1].bbox3d.center, 0.0)
    broken = Scene(scene.id, scene.bounds, scene.entities,
                   inside_spawn, scene.surveillance_pose)
    with pytest.raises(ValueError, match="spawn inside"):
        broken.validate()


def test_mirror_entity_requires_rect_on_face():
    box = Box3((0, 0, 0), (0.02, 2, 2))
    good = SceneEntity("m", "mirror", "silver", box, is_mirror=True,
                       mirror_plane=Rect3((0.02, 0.2, 0.2),
                                          (0, 1.6, 0), (0, 0, 1.6)))
    good.validate()
    off_face = SceneEntity("m", "mirror", "silver",
                           Box3((0, 0, 0), (0.5, 2, 2)), is_mirror=True,
                           mirror_plane=Rect3((0.25, 0.2, 0.2),
                                              (0, 1.6, 0), (0, 0, 1.6)))
    with pytest.raises(ValueError, match="off the box face"):
        off_face.validate()
    with pytest.raises(ValueError, match="disagree"):
        SceneEntity("m", "mirror", "silver", box, is_mirror=True).validate()


def test_camera_model_defaults_and_validation():
    cam = CameraModel()
    assert cam.width == 128 and cam.height == 96
    assert cam.hfov_deg == pytest.approx(90.0)
    assert cam.eye_height_m == pytest.approx(1.6)
    with pytest.raises(ValueError):
        CameraModel(width=0)
    with pytest.raises(ValueError):
        CameraModel(hfov_deg=180.0)


def test_profile_is_respected():
    profile = SceneProfile(room_xy_m=(5.0, 5.0), room_height_m=(2.6, 2.6),
                           entity_count=(3, 3), mirror_probability=0.0,
                           categories=("table", "chair"))
    for seed in range(5):
        scene = generate_scene(seed, profile)
        assert scene.bounds.hi[0] - scene.bounds.lo[0] == pytest.approx(5.0)
        assert scene.bounds.hi[2] - scene.bounds.lo[2] == pytest.approx(2.6)
        solids = [e for e in scene.entities if not e.is_mirror]
        assert len(solids) == 3
        assert all(e.label in ("table", "chair") for e in scene.entities)
