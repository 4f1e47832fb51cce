"""Ground-truth evaluators.

Everything a generator binds into a task answer is computed here from the
scene and an observation record, never copied from another task. Counting
questions are scoped to the current view; reflections count only for the
mirror question.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import MissingEntity, NoVisibleEntity
from .scene import AgentPose, Scene
from .sim import ObservationRecord, VisibleEntity, camera_basis

RELATIONS = ("left_of", "right_of", "in_front_of", "behind", "on_top_of", "below")


def direct_detections(record: ObservationRecord) -> list[VisibleEntity]:
    return [d for d in record.detections if not d.via_mirror]


def mirrored_detections(record: ObservationRecord) -> list[VisibleEntity]:
    return [d for d in record.detections if d.via_mirror]


def detection_of(record: ObservationRecord, entity_id: str,
                 via_mirror: bool = False) -> VisibleEntity:
    for d in record.detections:
        if d.entity_id == entity_id and d.via_mirror == via_mirror:
            return d
    raise NoVisibleEntity(f"{entity_id} not in view of {record.record_id}")


def is_visible(record: ObservationRecord, entity_id: str) -> bool:
    return any(d.entity_id == entity_id and not d.via_mirror
               for d in record.detections)


def count_label_in_view(record: ObservationRecord, label: str) -> int:
    return len({d.entity_id for d in direct_detections(record) if d.label == label})


def count_color_in_view(record: ObservationRecord, color: str) -> int:
    return len({d.entity_id for d in direct_detections(record) if d.color == color})


def count_label_in_mirror(record: ObservationRecord, label: str) -> int:
    return len({d.entity_id for d in mirrored_detections(record) if d.label == label})


def label_is_unique(scene: Scene, label: str) -> bool:
    return sum(1 for e in scene.entities if e.label == label) == 1


def crop_ref(record: ObservationRecord, det: VisibleEntity) -> dict:
    """Stable reference to a picture crop; the raster itself is recomputable
    from (scene, pose), so only coordinates travel with the task."""
    return {"record_id": record.record_id, "entity_id": det.entity_id,
            "pixel_box": list(det.pixel_box), "via_mirror": det.via_mirror}


def spatial_relation(scene: Scene, pose: AgentPose, a_id: str, b_id: str) -> str:
    """Relation of a with respect to b, in the viewer's frame. Vertical
    stacking wins over horizontal placement; ties break toward depth."""
    a, b = scene.entity(a_id), scene.entity(b_id)

    xy_overlap = (a.bbox3d.lo[0] < b.bbox3d.hi[0] and b.bbox3d.lo[0] < a.bbox3d.hi[0]
                  and a.bbox3d.lo[1] < b.bbox3d.hi[1] and b.bbox3d.lo[1] < a.bbox3d.hi[1])
    if xy_overlap and abs(a.bbox3d.lo[2] - b.bbox3d.hi[2]) < 0.05:
        return "on_top_of"
    if xy_overlap and abs(b.bbox3d.lo[2] - a.bbox3d.hi[2]) < 0.05:
        return "below"

    forward, right, _ = camera_basis(pose)
    eye = pose.eye
    da = np.asarray(a.position) - eye
    db = np.asarray(b.position) - eye
    d_right = float(da @ right - db @ right)
    d_fwd = float(da @ forward - db @ forward)
    if abs(d_right) >= abs(d_fwd):
        return "left_of" if d_right < 0 else "right_of"
    return "in_front_of" if d_fwd < 0 else "behind"


def footprint_distance(scene: Scene, point, entity_id: str) -> float:
    """XY distance from a point to the entity's ground rectangle; zero inside."""
    ent = scene.entity(entity_id)
    x, y = float(point[0]), float(point[1])
    dx = max(ent.bbox3d.lo[0] - x, 0.0, x - ent.bbox3d.hi[0])
    dy = max(ent.bbox3d.lo[1] - y, 0.0, y - ent.bbox3d.hi[1])
    return math.hypot(dx, dy)


def entities_with_label(scene: Scene, label: str) -> list[str]:
    return [e.id for e in scene.entities if e.label == label]


def require_entity(scene: Scene, entity_id: str) -> None:
    if not scene.has_entity(entity_id):
        raise MissingEntity(f"{entity_id} not in scene {scene.id}")
