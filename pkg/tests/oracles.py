"""Shared reference implementations the tests compare the package against.

Everything here is written independently of the library internals it checks:
visibility by dense surface sampling, brute-force set enumeration, and the
scipy statistics routines.
"""

import math

import numpy as np

from insitugen.geometry import segment_blocked
from insitugen.scene import AgentPose, Scene
from insitugen.sim import camera_basis


def point_in_frustum(pose: AgentPose, point) -> bool:
    """Camera frustum test; slightly wider than the sampled ray grid."""
    cam = pose.camera
    forward, right, up = camera_basis(pose)
    v = np.asarray(point, float) - pose.eye
    z = float(v @ forward)
    if z <= 1e-9:
        return False
    tan_h = math.tan(math.radians(cam.hfov_deg) / 2.0)
    tan_v = tan_h * cam.height / cam.width
    return (abs(float(v @ right)) <= tan_h * z
            and abs(float(v @ up)) <= tan_v * z)


def surface_grid(lo, hi, per_face: int) -> np.ndarray:
    """Stratified per_face x per_face point grid on each of the six faces."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    ticks = np.linspace(0.0, 1.0, per_face)
    pts = []
    for axis in range(3):
        others = [k for k in range(3) if k != axis]
        a, b = np.meshgrid(ticks, ticks)
        for plane in (lo[axis], hi[axis]):
            p = np.empty((per_face * per_face, 3))
            p[:, axis] = plane
            p[:, others[0]] = lo[others[0]] + a.ravel() * (hi[others[0]] - lo[others[0]])
            p[:, others[1]] = lo[others[1]] + b.ravel() * (hi[others[1]] - lo[others[1]])
            pts.append(p)
    return np.concatenate(pts)


def sampling_visible_set(scene: Scene, pose: AgentPose,
                         per_face: int = 41) -> set[str]:
    """Entity ids with at least one surface sample directly visible.

    6 * per_face^2 samples per entity (41 -> 10086); a sample counts when it
    sits inside the frustum and the eye-to-sample segment crosses no solid
    box interior, the entity's own included.
    """
    eye = pose.eye
    los, his = scene.boxes()
    out = set()
    for ent in scene.entities:
        for pt in surface_grid(ent.bbox3d.lo, ent.bbox3d.hi, per_face):
            if not point_in_frustum(pose, pt):
                continue
            if not segment_blocked(eye, pt, los, his):
                out.add(ent.id)
                break
    return out


def angular_size_deg(pose: AgentPose, lo, hi) -> float:
    """Upper bound on the box's angular diameter as seen from the eye."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    center = (lo + hi) / 2
    radius = float(np.linalg.norm(hi - lo)) / 2
    dist = float(np.linalg.norm(center - pose.eye))
    if dist <= radius:
        return 180.0
    return math.degrees(2 * math.asin(radius / dist))


def visible_pixel_span(scene: Scene, pose: AgentPose, entity_id: str,
                       per_face: int = 41) -> tuple[float, float]:
    """Pixel-space extent (du, dv) of an entity's directly visible surface.

    Projects every unoccluded surface sample onto the image plane; a span
    below one pixel in either axis means the visible sliver can fall between
    pixel-center rays, so a raster renderer may legitimately miss it.
    """
    ent = scene.entity(entity_id)
    eye = pose.eye
    los, his = scene.boxes()
    vis = [pt for pt in surface_grid(ent.bbox3d.lo, ent.bbox3d.hi, per_face)
           if point_in_frustum(pose, pt)
           and not segment_blocked(eye, pt, los, his)]
    if not vis:
        return 0.0, 0.0
    cam = pose.camera
    forward, right, up = camera_basis(pose)
    rel = np.asarray(vis, float) - eye
    z = rel @ forward
    tan_h = math.tan(math.radians(cam.hfov_deg) / 2.0)
    tan_v = tan_h * cam.height / cam.width
    u = ((rel @ right) / (z * tan_h) + 1.0) / 2.0 * cam.width
    v = (1.0 - ((rel @ up) / (z * tan_v) + 1.0) / 2.0) * cam.height
    return float(u.max() - u.min()), float(v.max() - v.min())
