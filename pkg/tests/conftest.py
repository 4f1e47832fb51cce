"""Shared helpers: small observation corpora and a raster-level answer oracle
that recomputes every stored answer from the raw render arrays."""

import math

import numpy as np

from insitugen.generators import GenCaps
from insitugen.rng import substream
from insitugen.scene import AgentPose, generate_scene
from insitugen.sim import camera_basis, observe, random_walk, render
from insitugen.taskmodel import TaskType


def make_corpus(seed, steps=20):
    scene = generate_scene(seed)
    rng = substream(seed, "testgen", "walk")
    poses = random_walk(scene, scene.agent_spawn, steps, rng)
    records = [observe(scene, p, i) for i, p in enumerate(poses)]
    return scene, records


def raster_facts(scene, pose):
    """Per-(entity, mirrored) pixel stats straight from the render arrays."""
    res = render(scene, pose)
    facts = {}
    for mirrored in (False, True):
        side = res.via_mirror if mirrored else ~res.via_mirror
        for num in np.unique(res.instance[side & (res.instance > 0)]):
            ent = scene.entities[int(num) - 1]
            mask = (res.instance == num) & side
            rows, cols = np.nonzero(mask)
            facts[(ent.id, mirrored)] = {
                "label": ent.label, "color": ent.color,
                "box": (int(cols.min()), int(rows.min()),
                        int(cols.max()) + 1, int(rows.max()) + 1),
                "pixels": int(mask.sum()),
                "depth": float(res.depth[mask].mean()),
            }
    return facts


def rect_distance_xy(point, lo, hi):
    dx = max(lo[0] - point[0], 0.0, point[0] - hi[0])
    dy = max(lo[1] - point[1], 0.0, point[1] - hi[1])
    return math.hypot(dx, dy)


def relation_oracle(scene, pose, a_id, b_id):
    a, b = scene.entity(a_id), scene.entity(b_id)
    overlap = (a.bbox3d.lo[0] < b.bbox3d.hi[0] and b.bbox3d.lo[0] < a.bbox3d.hi[0]
               and a.bbox3d.lo[1] < b.bbox3d.hi[1] and b.bbox3d.lo[1] < a.bbox3d.hi[1])
    if overlap and abs(a.bbox3d.lo[2] - b.bbox3d.hi[2]) < 0.05:
        return "on_top_of"
    if overlap and abs(b.bbox3d.lo[2] - a.bbox3d.hi[2]) < 0.05:
        return "below"
    fwd, right, _ = camera_basis(pose)
    da = np.asarray(a.position) - pose.eye
    db = np.asarray(b.position) - pose.eye
    d_right = float(da @ right - db @ right)
    d_fwd = float(da @ fwd - db @ fwd)
    if abs(d_right) >= abs(d_fwd):
        return "left_of" if d_right < 0 else "right_of"
    return "in_front_of" if d_fwd < 0 else "behind"


def check_answer_against_raster(scene, task, caps=GenCaps()):
    """Assert one instance's stored answer against a fresh re-render."""
    pose = AgentPose.from_json(task.meta["pose"])
    facts = raster_facts(scene, pose)
    direct = {eid: f for (eid, m), f in facts.items() if not m}
    mirrored = {eid: f for (eid, m), f in facts.items() if m}
    by_id = {e.id: e for e in scene.entities}
    payload = task.answer_payload()
    tt = task.task_type
    if tt is TaskType.CLASSIFICATION:
        ref = task.initial.vertex("obj").slots["image"]
        assert not ref["via_mirror"]
        f = direct[ref["entity_id"]]
        assert payload["obj.label"] == f["label"]
        assert tuple(ref["pixel_box"]) == f["box"]
        assert f["pixels"] >= caps.min_pixels
    elif tt is TaskType.LOCALIZATION:
        label = task.initial.vertex("obj").slots["label"]
        hits = [f for f in direct.values() if f["label"] == label]
        assert len(hits) == 1  # the label alone identifies the object
        assert tuple(payload["obj.bbox2d"]) == hits[0]["box"]
    elif tt is TaskType.DEPTH_ESTIMATION:
        label = task.initial.vertex("obj").slots["label"]
        hits = [f for f in direct.values() if f["label"] == label]
        assert len(hits) == 1
        assert payload["obj.depth_m"] == round(hits[0]["depth"], 3)
    elif tt is TaskType.EMBODIED_COUNTING:
        label = task.initial.vertex("obj").slots["label"]
        want = sum(1 for f in direct.values() if f["label"] == label)
        assert payload["obj.count"] == want
    elif tt is TaskType.MIRROR_COUNTING:
        assert any(by_id[eid].is_mirror for eid in direct)
        label = task.initial.vertex("target").slots["label"]
        want = sum(1 for f in mirrored.values() if f["label"] == label)
        assert payload["target.count"] == want
    elif tt is TaskType.PATTERN_COUNTING:
        color = task.initial.vertex("obj").slots["color"]
        want = sum(1 for f in direct.values() if f["color"] == color)
        assert payload["obj.count"] == want
    elif tt is TaskType.RELATIONSHIP_DETECTION:
        ra = task.initial.vertex("a").slots["image"]["entity_id"]
        rb = task.initial.vertex("b").slots["image"]["entity_id"]
        assert ra in direct and rb in direct
        want = relation_oracle(scene, pose, ra, rb)
        assert payload["a|b|spatial.relation"] == want
    elif tt is TaskType.IN_VIEW_CHECK:
        slots = task.initial.vertex("obj").slots
        want = any(e.label == slots["label"] and e.color == slots["color"]
                   and e.id in direct for e in scene.entities)
        assert payload["agent|obj|visibility.in_view"] == want
    elif tt is TaskType.NAVIGATION_LABEL:
        label = task.initial.vertex("target").slots["label"]
        matches = [e for e in scene.entities if e.label == label]
        assert len(matches) == 1
        d = rect_distance_xy(pose.position, matches[0].bbox3d.lo,
                             matches[0].bbox3d.hi)
        assert caps.nav_min_m <= d <= caps.nav_max_m
    elif tt is TaskType.NAVIGATION_PICTURE:
        ref = task.initial.vertex("target").slots["image"]
        ent = by_id[ref["entity_id"]]
        assert direct[ent.id]["pixels"] >= caps.min_pixels
        d = rect_distance_xy(pose.position, ent.bbox3d.lo, ent.bbox3d.hi)
        assert caps.nav_min_m <= d <= caps.nav_max_m
    else:
        raise AssertionError(f"unhandled task type {tt}")
