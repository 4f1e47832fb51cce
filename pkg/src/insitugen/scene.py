"""Household box-world scenes.

A scene is a bounded room populated with labeled, colored axis-aligned boxes.
At most a few entities are wall mirrors: thin boxes carrying a reflective
rectangle on their room-facing face. Scenes are immutable after generation
and serialize to a schema-versioned JSON document.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import PlacementFailure, SchemaVersionError
from .geometry import Box3, Rect3, Vec3
from .rng import substream

SCENE_SCHEMA = "insitugen/scene"
SCENE_SCHEMA_VERSION = 1

DEFAULT_EYE_HEIGHT_M = 1.6
DEFAULT_HFOV_DEG = 90.0
DEFAULT_WIDTH = 128
DEFAULT_HEIGHT = 96


@dataclass(frozen=True)
class CameraModel:
    hfov_deg: float = DEFAULT_HFOV_DEG
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    eye_height_m: float = DEFAULT_EYE_HEIGHT_M

    def __post_init__(self):
        if not 0.0 < self.hfov_deg < 180.0:
            raise ValueError(f"horizontal FOV must be in (0, 180): {self.hfov_deg}")
        if self.width < 8 or self.height < 8:
            raise ValueError(f"resolution below 8x8: {self.width}x{self.height}")

    def to_json(self) -> dict:
        return {"hfov_deg": self.hfov_deg, "width": self.width,
                "height": self.height, "eye_height_m": self.eye_height_m}

    @classmethod
    def from_json(cls, d: dict) -> "CameraModel":
        return cls(float(d["hfov_deg"]), int(d["width"]),
                   int(d["height"]), float(d["eye_height_m"]))


@dataclass(frozen=True)
class AgentPose:
    """Foot position plus view direction; the eye sits eye_height_m above."""

    position: Vec3
    yaw_deg: float
    camera: CameraModel = CameraModel()
    pitch_deg: float = 0.0  # surveillance cameras look down; agents stay level

    @property
    def eye(self) -> np.ndarray:
        return np.array([self.position[0], self.position[1],
                         self.position[2] + self.camera.eye_height_m])

    def to_json(self) -> dict:
        return {"position": list(self.position), "yaw_deg": self.yaw_deg,
                "pitch_deg": self.pitch_deg, "camera": self.camera.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "AgentPose":
        return cls(tuple(float(x) for x in d["position"]), float(d["yaw_deg"]),
                   CameraModel.from_json(d["camera"]), float(d.get("pitch_deg", 0.0)))


@dataclass(frozen=True)
class SceneEntity:
    id: str
    label: str
    color: str
    bbox3d: Box3
    is_mirror: bool = False
    mirror_plane: Rect3 | None = None

    @property
    def position(self) -> Vec3:
        return self.bbox3d.center

    def validate(self) -> None:
        if not self.bbox3d.contains_point(self.position, tol=1e-9):
            raise ValueError(f"{self.id}: box does not contain its center")
        if self.is_mirror != (self.mirror_plane is not None):
            raise ValueError(f"{self.id}: mirror flag and plane disagree")
        if self.mirror_plane is not None:
            r = self.mirror_plane
            corners = [np.asarray(r.origin),
                       np.asarray(r.origin) + np.asarray(r.u),
                       np.asarray(r.origin) + np.asarray(r.v),
                       np.asarray(r.origin) + np.asarray(r.u) + np.asarray(r.v)]
            for c in corners:
                if not self.bbox3d.contains_point(c, tol=1e-6):
                    raise ValueError(f"{self.id}: mirror rectangle leaves its box")
            # rectangle must lie on one box face
            n = np.abs(np.asarray(r.normal))
            axis = int(np.argmax(n))
            plane_val = float(np.asarray(r.origin)[axis])
            if not (abs(plane_val - self.bbox3d.lo[axis]) < 1e-6
                    or abs(plane_val - self.bbox3d.hi[axis]) < 1e-6):
                raise ValueError(f"{self.id}: mirror rectangle off the box face")

    def to_json(self) -> dict:
        d = {"id": self.id, "label": self.label, "color": self.color,
             "position": list(self.position), "bbox3d": self.bbox3d.to_json(),
             "is_mirror": self.is_mirror}
        if self.mirror_plane is not None:
            d["mirror_plane"] = self.mirror_plane.to_json()
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SceneEntity":
        return cls(d["id"], d["label"], d["color"], Box3.from_json(d["bbox3d"]),
                   bool(d.get("is_mirror", False)),
                   Rect3.from_json(d["mirror_plane"]) if d.get("mirror_plane") else None)


@dataclass(frozen=True)
class Scene:
    id: str
    bounds: Box3
    entities: tuple[SceneEntity, ...]
    agent_spawn: AgentPose
    surveillance_pose: AgentPose

    def __post_init__(self):
        object.__setattr__(self, "_index", {e.id: i for i, e in enumerate(self.entities)})

    def entity(self, entity_id: str) -> SceneEntity:
        return self.entities[self._index[entity_id]]

    def has_entity(self, entity_id: str) -> bool:
        return entity_id in self._index

    def entity_number(self, entity_id: str) -> int:
        """1-based raster id; 0 is reserved for empty pixels."""
        return self._index[entity_id] + 1

    def boxes(self):
        """Stacked (N, 3) lo/hi arrays in entity order, cached."""
        cached = getattr(self, "_boxes", None)
        if cached is None:
            los = np.array([e.bbox3d.lo for e in self.entities], dtype=float).reshape(-1, 3)
            his = np.array([e.bbox3d.hi for e in self.entities], dtype=float).reshape(-1, 3)
            cached = (los, his)
            object.__setattr__(self, "_boxes", cached)
        return cached

    def validate(self) -> None:
        seen = set()
        for e in self.entities:
            if e.id in seen:
                raise ValueError(f"duplicate entity id {e.id}")
            seen.add(e.id)
            e.validate()
            if not self.bounds.contains_box(e.bbox3d, tol=1e-6):
                raise ValueError(f"{e.id}: box outside scene bounds")
        spawn = self.agent_spawn.position
        for e in self.entities:
            if e.bbox3d.contains_point(spawn):
                raise ValueError(f"agent spawn inside entity {e.id}")
        if not self.bounds.contains_point(spawn):
            raise ValueError("agent spawn outside bounds")

    def to_json(self) -> dict:
        return {
            "schema": SCENE_SCHEMA,
            "schema_version": SCENE_SCHEMA_VERSION,
            "id": self.id,
            "bounds": self.bounds.to_json(),
            "agent_spawn": self.agent_spawn.to_json(),
            "surveillance_pose": self.surveillance_pose.to_json(),
            "entities": [e.to_json() for e in self.entities],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Scene":
        if d.get("schema") != SCENE_SCHEMA or d.get("schema_version") != SCENE_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"expected {SCENE_SCHEMA} v{SCENE_SCHEMA_VERSION}, "
                f"got {d.get('schema')!r} v{d.get('schema_version')!r}")
        return cls(
            id=d["id"],
            bounds=Box3.from_json(d["bounds"]),
            entities=tuple(SceneEntity.from_json(e) for e in d["entities"]),
            agent_spawn=AgentPose.from_json(d["agent_spawn"]),
            surveillance_pose=AgentPose.from_json(d["surveillance_pose"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Scene":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


# --- procedural generation ---------------------------------------------------

# footprint x/y and height, meters; jittered +-20% at placement
CATEGORY_SIZES = {
    "table":  (1.2, 0.8, 0.75),
    "chair":  (0.5, 0.5, 0.9),
    "sofa":   (1.9, 0.9, 0.8),
    "shelf":  (0.9, 0.35, 1.8),
    "lamp":   (0.3, 0.3, 1.5),
    "tv":     (1.0, 0.15, 0.6),
    "plant":  (0.4, 0.4, 1.0),
    "box":    (0.5, 0.5, 0.5),
    "cup":    (0.10, 0.10, 0.12),
    "book":   (0.22, 0.16, 0.06),
    "bottle": (0.09, 0.09, 0.26),
}
STACKABLE = ("cup", "book", "bottle")
SURFACES = ("table", "shelf", "box")
DEFAULT_COLORS = ("red", "green", "blue", "yellow", "white",
                  "black", "brown", "gray", "orange", "purple")


@dataclass(frozen=True)
class SceneProfile:
    """Knobs for procedural rooms; ranges are inclusive."""

    room_xy_m: tuple[float, float] = (6.0, 10.0)
    room_height_m: tuple[float, float] = (2.6, 3.2)
    entity_count: tuple[int, int] = (8, 16)
    categories: tuple[str, ...] = tuple(CATEGORY_SIZES)
    colors: tuple[str, ...] = DEFAULT_COLORS
    mirror_probability: float = 0.35
    stack_probability: float = 0.35
    camera: CameraModel = CameraModel()
    max_place_retries: int = 200


def _place_floor_entity(rng, bounds: Box3, size, placed: list[Box3],
                        retries: int) -> Box3 | None:
    sx, sy, sz = size
    margin = 0.3
    for _ in range(retries):
        cx = rng.uniform(bounds.lo[0] + sx / 2 + margin, bounds.hi[0] - sx / 2 - margin)
        cy = rng.uniform(bounds.lo[1] + sy / 2 + margin, bounds.hi[1] - sy / 2 - margin)
        box = Box3((cx - sx / 2, cy - sy / 2, 0.0), (cx + sx / 2, cy + sy / 2, sz))
        if not any(box.intersects(p, tol=-0.05) for p in placed):
            return box
    return None


def _place_on_surface(rng, base: Box3, size, placed: list[Box3]) -> Box3 | None:
    sx, sy, sz = size
    bx0, by0 = base.lo[0], base.lo[1]
    bx1, by1 = base.hi[0], base.hi[1]
    if bx1 - bx0 < sx + 0.02 or by1 - by0 < sy + 0.02:
        return None
    for _ in range(20):
        cx = rng.uniform(bx0 + sx / 2 + 0.01, bx1 - sx / 2 - 0.01)
        cy = rng.uniform(by0 + sy / 2 + 0.01, by1 - sy / 2 - 0.01)
        z0 = base.hi[2]
        box = Box3((cx - sx / 2, cy - sy / 2, z0), (cx + sx / 2, cy + sy / 2, z0 + sz))
        if not any(box.intersects(p) for p in placed):
            return box
    return None


def _make_mirror(rng, bounds: Box3, placed: list[Box3], ident: str) -> SceneEntity | None:
    """Thin wall-mounted mirror; reflective rectangle on the room-facing face."""
    width = rng.uniform(1.0, 1.6)
    height = rng.uniform(1.2, 1.6)
    z0 = rng.uniform(0.4, 0.7)
    thick = 0.06
    wall = int(rng.integers(0, 4))  # 0:-x 1:+x 2:-y 3:+y
    for _ in range(40):
        # wind u x v so the glass normal points into the room
        if wall in (0, 1):
            cy = rng.uniform(bounds.lo[1] + width / 2 + 0.3, bounds.hi[1] - width / 2 - 0.3)
            if wall == 0:
                lo = (bounds.lo[0], cy - width / 2, z0)
                hi = (bounds.lo[0] + thick, cy + width / 2, z0 + height)
                face_x = hi[0]
                u, v = (0.0, width, 0.0), (0.0, 0.0, height)   # normal +x
            else:
                lo = (bounds.hi[0] - thick, cy - width / 2, z0)
                hi = (bounds.hi[0], cy + width / 2, z0 + height)
                face_x = lo[0]
                u, v = (0.0, 0.0, height), (0.0, width, 0.0)   # normal -x
            box = Box3(lo, hi)
            rect = Rect3((face_x, lo[1], lo[2]), u, v)
        else:
            cx = rng.uniform(bounds.lo[0] + width / 2 + 0.3, bounds.hi[0] - width / 2 - 0.3)
            if wall == 2:
                lo = (cx - width / 2, bounds.lo[1], z0)
                hi = (cx + width / 2, bounds.lo[1] + thick, z0 + height)
                face_y = hi[1]
                u, v = (0.0, 0.0, height), (width, 0.0, 0.0)   # normal +y
            else:
                lo = (cx - width / 2, bounds.hi[1] - thick, z0)
                hi = (cx + width / 2, bounds.hi[1], z0 + height)
                face_y = lo[1]
                u, v = (width, 0.0, 0.0), (0.0, 0.0, height)   # normal -y
            box = Box3(lo, hi)
            rect = Rect3((lo[0], face_y, lo[2]), u, v)
        if not any(box.intersects(p) for p in placed):
            return SceneEntity(ident, "mirror", "silver", box,
                               is_mirror=True, mirror_plane=rect)
        wall = int(rng.integers(0, 4))
    return None


def generate_scene(seed: int, profile: SceneProfile | None = None,
                   scene_id: str | None = None) -> Scene:
    """Deterministic procedural room; raises PlacementFailure when the
    profile cannot be satisfied within its retry budget."""
    profile = profile or SceneProfile()
    rng = substream(seed, "scene-gen")
    sx = rng.uniform(*profile.room_xy_m)
    sy = rng.uniform(*profile.room_xy_m)
    sz = rng.uniform(*profile.room_height_m)
    bounds = Box3((0.0, 0.0, 0.0), (float(sx), float(sy), float(sz)))

    n_entities = int(rng.integers(profile.entity_count[0], profile.entity_count[1] + 1))
    entities: list[SceneEntity] = []
    placed: list[Box3] = []
    surfaces: list[Box3] = []

    if rng.uniform() < profile.mirror_probability:
        mirror = _make_mirror(rng, bounds, placed, "ent000")
        if mirror is not None:
            entities.append(mirror)
            placed.append(mirror.bbox3d)

    k = len(entities)
    attempts = 0
    while len(entities) < n_entities:
        attempts += 1
        if attempts > profile.max_place_retries * n_entities:
            raise PlacementFailure(
                f"placed {len(entities)}/{n_entities} entities for seed {seed}")
        cat = str(rng.choice(profile.categories))
        if cat == "mirror":
            continue
        base_size = CATEGORY_SIZES.get(cat, (0.5, 0.5, 0.5))
        size = tuple(s * rng.uniform(0.8, 1.2) for s in base_size)
        color = str(rng.choice(profile.colors))
        box = None
        if cat in STACKABLE and surfaces and rng.uniform() < profile.stack_probability:
            base = surfaces[int(rng.integers(0, len(surfaces)))]
            box = _place_on_surface(rng, base, size, placed)
        if box is None:
            box = _place_floor_entity(rng, bounds, size, placed, profile.max_place_retries)
        if box is None:
            continue
        ident = f"ent{k:03d}"
        k += 1
        entities.append(SceneEntity(ident, cat, color, box))
        placed.append(box)
        if cat in SURFACES:
            surfaces.append(box)

    spawn = None
    for _ in range(profile.max_place_retries):
        px = rng.uniform(bounds.lo[0] + 0.4, bounds.hi[0] - 0.4)
        py = rng.uniform(bounds.lo[1] + 0.4, bounds.hi[1] - 0.4)
        p = (float(px), float(py), 0.0)
        clear = all(not e.bbox3d.contains_point((p[0], p[1], z), tol=0.15)
                    for e in entities for z in (0.1, 1.0))
        if clear:
            spawn = AgentPose(p, float(rng.uniform(0.0, 360.0)), profile.camera)
            break
    if spawn is None:
        raise PlacementFailure(f"no free spawn position for seed {seed}")

    # fixed policy: top corner camera aimed at the room centroid
    corner = np.array([bounds.hi[0] - 0.25, bounds.hi[1] - 0.25, bounds.hi[2] - 0.2])
    centroid = np.asarray(bounds.center)
    look = centroid - corner
    yaw = math.degrees(math.atan2(look[1], look[0]))
    pitch = math.degrees(math.atan2(look[2], math.hypot(look[0], look[1])))
    surveillance = AgentPose(tuple(float(x) for x in corner), float(yaw),
                             replace(profile.camera, eye_height_m=0.0), float(pitch))

    scene = Scene(
        id=scene_id or f"scene-{seed:04d}",
        bounds=bounds,
        entities=tuple(entities),
        agent_spawn=spawn,
        surveillance_pose=surveillance,
    )
    scene.validate()
    return scene
