"""Deterministic first-person simulator.

Rendering casts one ray per pixel through the pixel grid's top-left corners,
so doubling the resolution reuses every coarse ray exactly. Buffers hold ray
path length (not z-depth) and 1-based entity indices. Mirrors bounce a single
secondary ray; reflected pixels carry the summed path length and a mask bit.

Motion is a point agent with a thin collision skin, truncated at the first
obstacle or wall along the heading.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (Box3, cast_rays, rect_local_coords, reflect_direction,
                       yaw_to_heading)
from .scene import AgentPose, Scene

AGENT_SKIN_M = 0.01
STEP_MIN_M = 0.2
STEP_MAX_M = 1.0


def camera_basis(pose: AgentPose) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    yaw = math.radians(pose.yaw_deg)
    pitch = math.radians(pose.pitch_deg)
    cp = math.cos(pitch)
    forward = np.array([math.cos(yaw) * cp, math.sin(yaw) * cp, math.sin(pitch)])
    right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
    up = np.cross(right, forward)
    return forward, right, up


def camera_rays(pose: AgentPose) -> tuple[np.ndarray, np.ndarray]:
    """Unit ray directions, shape (H, W, 3), plus the shared eye origin."""
    cam = pose.camera
    forward, right, up = camera_basis(pose)
    tan_h = math.tan(math.radians(cam.hfov_deg) / 2.0)
    tan_v = tan_h * cam.height / cam.width
    cols = np.arange(cam.width, dtype=float)
    rows = np.arange(cam.height, dtype=float)
    u = 2.0 * cols / cam.width - 1.0          # pixel top-left corners
    v = 1.0 - 2.0 * rows / cam.height
    uu, vv = np.meshgrid(u * tan_h, v * tan_v)
    dirs = (forward[None, None, :]
            + uu[:, :, None] * right[None, None, :]
            + vv[:, :, None] * up[None, None, :])
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    return pose.eye, dirs


@dataclass(frozen=True)
class RenderResult:
    """instance: uint16 entity numbers (0 empty); depth: ray path length,
    inf on miss; via_mirror: pixel shows a reflection."""

    instance: np.ndarray
    depth: np.ndarray
    via_mirror: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.instance.shape


def render(scene: Scene, pose: AgentPose) -> RenderResult:
    eye, dirs = camera_rays(pose)
    h, w, _ = dirs.shape
    flat_dirs = dirs.reshape(-1, 3)
    origins = np.broadcast_to(eye, flat_dirs.shape)
    los, his = scene.boxes()

    t, idx = cast_rays(origins, flat_dirs, los, his)
    via = np.zeros(t.shape, dtype=bool)

    for m, ent in enumerate(scene.entities):
        if not ent.is_mirror:
            continue
        rect = ent.mirror_plane
        normal = np.asarray(rect.normal)
        hit_m = np.flatnonzero(idx == m)
        if hit_m.size == 0:
            continue
        d = flat_dirs[hit_m]
        facing = d @ normal < -1e-12
        pts = origins[hit_m] + t[hit_m, None] * d
        s, tt = rect_local_coords(pts, rect)
        on_glass = facing & (s >= 0.0) & (s <= 1.0) & (tt >= 0.0) & (tt <= 1.0)
        sel = hit_m[on_glass]
        if sel.size == 0:
            continue
        refl = reflect_direction(flat_dirs[sel], normal)
        # re-cast against everything except the mirror itself
        keep = np.array([i for i in range(len(scene.entities)) if i != m],
                        dtype=int)
        t2, idx2 = cast_rays(pts[on_glass], refl, los[keep], his[keep], t_min=1e-6)
        hit2 = idx2 >= 0
        tgt = sel[hit2]
        idx[tgt] = keep[idx2[hit2]]
        t[tgt] = t[tgt] + t2[hit2]
        via[tgt] = True
        # reflected rays that escape the room keep showing the mirror glass

    instance = np.zeros(t.shape, dtype=np.uint16)
    hit = idx >= 0
    instance[hit] = (idx[hit] + 1).astype(np.uint16)
    return RenderResult(instance.reshape(h, w), t.reshape(h, w),
                        via.reshape(h, w))


@dataclass(frozen=True)
class VisibleEntity:
    """One detection; an entity seen directly and in a mirror yields two."""

    entity_id: str
    label: str
    color: str
    pixel_box: tuple[int, int, int, int]  # x0, y0, x1, y1; upper bounds exclusive
    pixel_count: int
    mean_depth_m: float
    via_mirror: bool

    def to_json(self) -> dict:
        return {"entity_id": self.entity_id, "label": self.label,
                "color": self.color, "pixel_box": list(self.pixel_box),
                "pixel_count": self.pixel_count,
                "mean_depth_m": self.mean_depth_m, "via_mirror": self.via_mirror}

    @classmethod
    def from_json(cls, d: dict) -> "VisibleEntity":
        return cls(d["entity_id"], d["label"], d["color"],
                   tuple(int(x) for x in d["pixel_box"]), int(d["pixel_count"]),
                   float(d["mean_depth_m"]), bool(d["via_mirror"]))


def extract_detections(scene: Scene, result: RenderResult) -> list[VisibleEntity]:
    out: list[VisibleEntity] = []
    for mirrored in (False, True):
        mask_side = result.via_mirror if mirrored else ~result.via_mirror
        present = np.unique(result.instance[mask_side & (result.instance > 0)])
        for num in present:
            ent = scene.entities[int(num) - 1]
            mask = (result.instance == num) & mask_side
            rows, cols = np.nonzero(mask)
            out.append(VisibleEntity(
                entity_id=ent.id, label=ent.label, color=ent.color,
                pixel_box=(int(cols.min()), int(rows.min()),
                           int(cols.max()) + 1, int(rows.max()) + 1),
                pixel_count=int(mask.sum()),
                mean_depth_m=float(result.depth[mask].mean()),
                via_mirror=mirrored,
            ))
    out.sort(key=lambda d: (d.entity_id, d.via_mirror))
    return out


@dataclass(frozen=True)
class ObservationRecord:
    """One egocentric observation. Rasters are reattachable at any time
    because rendering is pure in (scene, pose)."""

    record_id: str
    scene_id: str
    tick: int
    pose: AgentPose
    detections: tuple[VisibleEntity, ...]
    raster: RenderResult | None = field(default=None, compare=False)

    def to_json(self) -> dict:
        return {"record_id": self.record_id, "scene_id": self.scene_id,
                "tick": self.tick, "pose": self.pose.to_json(),
                "detections": [d.to_json() for d in self.detections]}

    @classmethod
    def from_json(cls, d: dict) -> "ObservationRecord":
        return cls(d["record_id"], d["scene_id"], int(d["tick"]),
                   AgentPose.from_json(d["pose"]),
                   tuple(VisibleEntity.from_json(v) for v in d["detections"]))


def _record_id(scene_id: str, tick: int, pose: AgentPose) -> str:
    payload = json.dumps([scene_id, tick, pose.to_json()], sort_keys=True)
    return "obs-" + hashlib.blake2b(payload.encode(), digest_size=8).hexdigest()


def observe(scene: Scene, pose: AgentPose, tick: int,
            keep_raster: bool = False) -> ObservationRecord:
    result = render(scene, pose)
    return ObservationRecord(
        record_id=_record_id(scene.id, tick, pose),
        scene_id=scene.id,
        tick=tick,
        pose=pose,
        detections=tuple(extract_detections(scene, result)),
        raster=result if keep_raster else None,
    )


# --- motion -------------------------------------------------------------------


def _collision_limit(scene: Scene, pose: AgentPose, heading: np.ndarray,
                     forward_m: float) -> float:
    """Largest travel distance along heading with the skin kept clear."""
    p = np.asarray(pose.position, dtype=float)
    z_lo, z_hi = p[2], p[2] + pose.camera.eye_height_m
    limit = forward_m

    b = scene.bounds
    for axis in (0, 1):
        d = heading[axis]
        if abs(d) < 1e-12:
            continue
        wall = b.hi[axis] - AGENT_SKIN_M if d > 0 else b.lo[axis] + AGENT_SKIN_M
        limit = min(limit, (wall - p[axis]) / d)

    los, his = scene.boxes()
    if len(scene.entities):
        overlap = (los[:, 2] < z_hi - 1e-9) & (his[:, 2] > z_lo + 1e-9)
        lo2 = los[overlap, :2] - AGENT_SKIN_M
        hi2 = his[overlap, :2] + AGENT_SKIN_M
        for k in range(lo2.shape[0]):
            t_in, t_out = -math.inf, math.inf
            for axis in (0, 1):
                d = heading[axis]
                if abs(d) < 1e-12:
                    if not lo2[k, axis] <= p[axis] <= hi2[k, axis]:
                        t_in = math.inf
                        break
                    continue
                a = (lo2[k, axis] - p[axis]) / d
                bb = (hi2[k, axis] - p[axis]) / d
                t_in = max(t_in, min(a, bb))
                t_out = min(t_out, max(a, bb))
            if t_in < t_out and t_out > 0:
                limit = min(limit, max(t_in, 0.0))
    return max(limit, 0.0)


def step(scene: Scene, pose: AgentPose, turn_deg: float,
         forward_m: float) -> tuple[AgentPose, float]:
    """Turn, then advance; returns the new pose and the distance covered."""
    yaw = (pose.yaw_deg + turn_deg) % 360.0
    heading = np.asarray(yaw_to_heading(yaw))
    turned = replace(pose, yaw_deg=yaw)
    travel = _collision_limit(scene, turned, heading, forward_m)
    if travel <= 0.0:
        return turned, 0.0
    p = np.asarray(pose.position) + travel * heading
    return replace(turned, position=tuple(float(x) for x in p)), float(travel)


def random_walk(scene: Scene, pose: AgentPose, n_steps: int,
                rng: np.random.Generator) -> list[AgentPose]:
    """Trajectory of n_steps uniform-random turn-and-go moves, start included."""
    poses = [pose]
    for _ in range(n_steps):
        turn = float(rng.uniform(0.0, 360.0))
        forward = float(rng.uniform(STEP_MIN_M, STEP_MAX_M))
        pose, _ = step(scene, pose, turn, forward)
        poses.append(pose)
    return poses
