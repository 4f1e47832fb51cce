"""Axis-aligned box geometry and vectorized ray casting.

Coordinates are meters in a right-handed frame with Z up. Pixel boxes are
(x0, y0, x1, y1) with exclusive upper edges, image row 0 at the top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Vec3 = tuple[float, float, float]

EPS = 1e-9


@dataclass(frozen=True)
class Box3:
    """Closed axis-aligned box, lo <= hi per axis."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        if any(l > h + EPS for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"box min exceeds max: {self.lo} > {self.hi}")

    @property
    def center(self) -> Vec3:
        return tuple((l + h) / 2.0 for l, h in zip(self.lo, self.hi))  # type: ignore[return-value]

    @property
    def extents(self) -> Vec3:
        return tuple(h - l for l, h in zip(self.lo, self.hi))  # type: ignore[return-value]

    @property
    def volume(self) -> float:
        ex, ey, ez = self.extents
        return ex * ey * ez

    def contains_point(self, p, tol: float = 0.0) -> bool:
        return all(l - tol <= c <= h + tol for c, l, h in zip(p, self.lo, self.hi))

    def contains_box(self, other: "Box3", tol: float = EPS) -> bool:
        return all(sl - tol <= ol and oh <= sh + tol
                   for sl, sh, ol, oh in zip(self.lo, self.hi, other.lo, other.hi))

    def intersects(self, other: "Box3", tol: float = 0.0) -> bool:
        return all(l1 < h2 - tol and l2 < h1 - tol
                   for l1, h1, l2, h2 in zip(self.lo, self.hi, other.lo, other.hi))

    def union(self, other: "Box3") -> "Box3":
        lo = tuple(min(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(max(a, b) for a, b in zip(self.hi, other.hi))
        return Box3(lo, hi)  # type: ignore[arg-type]

    def to_json(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_json(cls, d: dict) -> "Box3":
        return cls(tuple(float(x) for x in d["lo"]), tuple(float(x) for x in d["hi"]))


def enclosing_box(boxes) -> Box3:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("enclosing_box of empty sequence")
    out = boxes[0]
    for b in boxes[1:]:
        out = out.union(b)
    return out


@dataclass(frozen=True)
class Rect3:
    """Oriented rectangle: origin corner plus two orthogonal edge vectors."""

    origin: Vec3
    u: Vec3
    v: Vec3

    @property
    def normal(self) -> Vec3:
        n = np.cross(np.asarray(self.u), np.asarray(self.v))
        norm = float(np.linalg.norm(n))
        if norm < EPS:
            raise ValueError("degenerate rectangle: u and v are parallel")
        n = n / norm
        return tuple(float(x) for x in n)  # type: ignore[return-value]

    def to_json(self) -> dict:
        return {"origin": list(self.origin), "u": list(self.u), "v": list(self.v)}

    @classmethod
    def from_json(cls, d: dict) -> "Rect3":
        return cls(tuple(float(x) for x in d["origin"]),
                   tuple(float(x) for x in d["u"]),
                   tuple(float(x) for x in d["v"]))


def yaw_to_heading(yaw_deg: float) -> np.ndarray:
    """Unit heading in the XY plane; yaw 0 is +X, counterclockwise."""
    r = math.radians(yaw_deg)
    return np.array([math.cos(r), math.sin(r), 0.0])


def ray_box_intersect(origin, direction, lo, hi) -> float:
    """Distance to the first hit of one normalized ray on one box, or inf."""
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    t0, t1 = _slab_interval(origin[None, None, :], direction[None, None, :],
                            np.asarray(lo)[None, :], np.asarray(hi)[None, :])
    tn, tf = float(t0.reshape(-1)[0]), float(t1.reshape(-1)[0])
    if tn > tf or tf < 0.0:
        return math.inf
    return tn if tn >= 0.0 else tf


def _slab_interval(origins, dirs, los, his):
    """Entry/exit distances for rays (..., 3) against boxes (N, 3).

    Returns (t_near, t_far) with shape (..., N). Rays parallel to a slab and
    outside it yield t_near > t_far (a miss).
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs[..., None, :]
        ta = (los - origins[..., None, :]) * inv
        tb = (his - origins[..., None, :]) * inv
    tmin = np.minimum(ta, tb)
    tmax = np.maximum(ta, tb)
    # parallel ray: inv is +-inf; origin inside the slab gives (-inf, inf),
    # outside gives (inf, inf) or (-inf, -inf), both handled by min/max
    tmin = np.where(np.isnan(tmin), -np.inf, tmin)
    tmax = np.where(np.isnan(tmax), np.inf, tmax)
    t_near = tmin.max(axis=-1)
    t_far = tmax.min(axis=-1)
    return t_near, t_far


def cast_rays(origins: np.ndarray, dirs: np.ndarray,
              los: np.ndarray, his: np.ndarray,
              t_min: float = 0.0):
    """Nearest-box hit for a batch of rays.

    origins: (..., 3) or (3,) shared; dirs (..., 3) normalized; los/his (N, 3).
    Returns (t, idx): hit distance (inf on miss) and box index (-1 on miss),
    each shaped like dirs without the last axis.
    """
    if los.shape[0] == 0:
        shape = dirs.shape[:-1]
        return np.full(shape, np.inf), np.full(shape, -1, dtype=np.int64)
    if origins.ndim == 1:
        origins = np.broadcast_to(origins, dirs.shape)
    t_near, t_far = _slab_interval(origins, dirs, los, his)
    hit = (t_near <= t_far) & (t_far >= t_min)
    # ray starting inside a box hits at its exit; keep entry when valid
    t_hit = np.where(t_near >= t_min, t_near, t_far)
    t_hit = np.where(hit, t_hit, np.inf)
    idx = np.argmin(t_hit, axis=-1)
    t = np.take_along_axis(t_hit, idx[..., None], axis=-1)[..., 0]
    idx = np.where(np.isfinite(t), idx, -1)
    return t, idx


def reflect_direction(d: np.ndarray, normal: np.ndarray) -> np.ndarray:
    return d - 2.0 * np.sum(d * normal, axis=-1, keepdims=True) * normal


def reflect_point(p: np.ndarray, rect: Rect3) -> np.ndarray:
    """Mirror image of a point across the rectangle's plane."""
    n = np.asarray(rect.normal)
    d = np.dot(np.asarray(p) - np.asarray(rect.origin), n)
    return np.asarray(p) - 2.0 * d * n


def rect_local_coords(points: np.ndarray, rect: Rect3):
    """(s, t) coordinates of points in rectangle units, each in [0,1] inside."""
    u = np.asarray(rect.u)
    v = np.asarray(rect.v)
    rel = points - np.asarray(rect.origin)
    s = rel @ u / (u @ u)
    t = rel @ v / (v @ v)
    return s, t


def segment_blocked(a: np.ndarray, b: np.ndarray, los: np.ndarray, his: np.ndarray,
                    skip=(), tol: float = 1e-6) -> bool:
    """True when the open segment a->b is interrupted by any box.

    skip: box indices ignored (e.g. the target itself).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    length = float(np.linalg.norm(d))
    if length < tol:
        return False
    d = d / length
    if los.shape[0] == 0:
        return False
    t_near, t_far = _slab_interval(a[None, None, :], d[None, None, :], los, his)
    tn = t_near[0, 0]
    tf = t_far[0, 0]
    hit = (tn <= tf) & (tf > tol) & (tn < length - tol)
    for s in skip:
        hit[s] = False
    return bool(hit.any())


def iou_2d(a, b) -> float:
    """Intersection over union of two (x0, y0, x1, y1) pixel boxes."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0
