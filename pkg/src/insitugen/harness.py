"""Benchmark harness.

Solvers see a symbolic view of tasks and observations: labels, colors, pixel
boxes, depths, and a reflection flag, but never scene entity ids. Static
tasks are scored against the answer encoded in the task's final state;
navigation runs an action loop in the simulator and scores the final pose.

The oracle solver holds the generated instances and the scene, so its static
answers certify that stored answers and the scorer agree. Its navigation
policy plans shortest clear paths on a per-scene waypoint lattice and falls
back to simulating candidate moves where no path exists.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (MalformedResponse, NoDistantTarget, SolverFailure,
                     Unreachable)
from .geometry import iou_2d, reflect_point, segment_blocked
from .groundtruth import footprint_distance, is_visible
from .scene import AgentPose, Scene
from .sim import (STEP_MAX_M, STEP_MIN_M, ObservationRecord, observe, step)
from .taskmodel import Task, TaskType

SUCCESS_RADIUS_M = 1.0
MAX_NAV_STEPS = 10
MAX_PITCH_DEG = 60.0
PLAN_GRID_M = 0.2


def task_view(task: Task) -> dict:
    """What a solver is shown: prompt, type, pose context, crop geometry.
    No entity ids."""
    crops = []
    for g in (task.initial,):
        for vx in g.vertices:
            ref = vx.slots.get("image")
            if isinstance(ref, dict) and "pixel_box" in ref:
                crops.append({"pixel_box": list(ref["pixel_box"]),
                              "via_mirror": bool(ref.get("via_mirror", False)),
                              "record_id": ref.get("record_id")})
    return {"task_id": task.task_id, "task_type": task.task_type.value,
            "prompt": task.prompt, "pose": task.meta.get("pose"),
            "crops": crops}


def observation_view(record: ObservationRecord) -> dict:
    """Symbolic view of one observation. The agent's own pose is its own
    state (odometry), so it travels with the view; entity ids do not."""
    return {"tick": record.tick, "pose": record.pose.to_json(),
            "detections": [{"label": d.label, "color": d.color,
                            "pixel_box": list(d.pixel_box),
                            "pixel_count": d.pixel_count,
                            "mean_depth_m": d.mean_depth_m,
                            "via_mirror": d.via_mirror}
                           for d in record.detections]}


ANSWER_KEYS = {
    TaskType.CLASSIFICATION: ("label", "obj.label"),
    TaskType.LOCALIZATION: ("bbox2d", "obj.bbox2d"),
    TaskType.DEPTH_ESTIMATION: ("depth_m", "obj.depth_m"),
    TaskType.EMBODIED_COUNTING: ("count", "obj.count"),
    TaskType.MIRROR_COUNTING: ("count", "target.count"),
    TaskType.PATTERN_COUNTING: ("count", "obj.count"),
    TaskType.RELATIONSHIP_DETECTION: ("relation", "a|b|spatial.relation"),
    TaskType.IN_VIEW_CHECK: ("in_view", "agent|obj|visibility.in_view"),
}

DEPTH_TOL_ABS_M = 0.25
DEPTH_TOL_REL = 0.10
IOU_PASS = 0.5


def expected_answer(task: Task) -> dict:
    """The stored answer in solver answer format."""
    field_name, payload_key = ANSWER_KEYS[task.task_type]
    payload = task.answer_payload()
    if payload_key not in payload:
        raise Unreachable(f"{task.task_id} has no {payload_key} in its answer")
    return {field_name: payload[payload_key]}


def score_answer(task: Task, answer: dict) -> tuple[bool, float | None]:
    """(correct, iou). iou is set for localization only."""
    field_name, _ = ANSWER_KEYS[task.task_type]
    expected = expected_answer(task)[field_name]
    got = answer.get(field_name)
    if task.task_type is TaskType.LOCALIZATION:
        if got is None or len(got) != 4:
            return False, 0.0
        iou = iou_2d(tuple(expected), tuple(int(x) for x in got))
        return iou >= IOU_PASS, iou
    if task.task_type is TaskType.DEPTH_ESTIMATION:
        if got is None:
            return False, None
        tol = max(DEPTH_TOL_ABS_M, DEPTH_TOL_REL * float(expected))
        return abs(float(got) - float(expected)) <= tol, None
    return got == expected, None


def navigation_target(scene: Scene, task: Task) -> str:
    """Entity a navigation task points at, re-derived from the graph."""
    tgt = task.initial.vertex("target")
    ref = tgt.slots.get("image")
    if isinstance(ref, dict) and ref.get("entity_id"):
        if scene.has_entity(ref["entity_id"]):
            return ref["entity_id"]
        raise NoDistantTarget(f"{task.task_id}: crop entity not in scene")
    label = tgt.slots.get("label")
    matches = [e.id for e in scene.entities if e.label == label]
    if len(matches) != 1:
        raise NoDistantTarget(f"{task.task_id}: label {label!r} not unique")
    return matches[0]


# --- solvers --------------------------------------------------------------------


class OracleSolver:
    """Answers from the stored instances and navigates by simulating its own
    candidate moves; the reference upper bound for every metric."""

    def __init__(self, scene: Scene, tasks: list[Task]):
        self.scene = scene
        self.store = {t.task_id: t for t in tasks}
        self._lattice = None  # per-scene waypoint grid, built on first use

    def register(self, tasks: list[Task]) -> None:
        for t in tasks:
            self.store[t.task_id] = t

    def answer(self, view: dict) -> dict:
        task = self.store[view["task_id"]]
        return expected_answer(task)

    def _target_los(self, eye, target_id: str) -> bool:
        ent = self.scene.entity(target_id)
        los, his = self.scene.boxes()
        skip = (self.scene.entity_number(target_id) - 1,)
        c = np.asarray(ent.bbox3d.center)
        top = np.array([c[0], c[1], ent.bbox3d.hi[2] - 1e-3])
        return not (segment_blocked(eye, c, los, his, skip=skip)
                    and segment_blocked(eye, top, los, his, skip=skip))

    def _facing(self, pose: AgentPose, target_id: str) -> tuple[float, float]:
        ent = self.scene.entity(target_id)
        c = ent.bbox3d.center
        dx, dy = c[0] - pose.position[0], c[1] - pose.position[1]
        yaw = math.degrees(math.atan2(dy, dx))
        d_xy = math.hypot(dx, dy)
        eye_z = pose.position[2] + pose.camera.eye_height_m
        pitch = math.degrees(math.atan2(c[2] - eye_z, max(d_xy, 1e-6)))
        return yaw, max(-MAX_PITCH_DEG, min(MAX_PITCH_DEG, pitch))

    def _would_see(self, pose: AgentPose, target_id: str) -> bool:
        yaw, pitch = self._facing(pose, target_id)
        look = AgentPose(pose.position, yaw, pose.camera, pitch)
        return is_visible(observe(self.scene, look, 0), target_id)

    def _clear(self, p, q, z: float, camera) -> bool:
        """Straight walk from p to q stays collision free."""
        dist = math.hypot(q[0] - p[0], q[1] - p[1])
        if dist < 1e-9:
            return True
        yaw = math.degrees(math.atan2(q[1] - p[1], q[0] - p[0]))
        _, moved = step(self.scene,
                        AgentPose((p[0], p[1], z), yaw, camera), 0.0, dist)
        return moved >= dist - 1e-9

    def _grid(self, pose: AgentPose) -> tuple:
        """Walkable lattice: cell centers plus mutually clear 8-neighbours."""
        key = (round(pose.position[2], 6), pose.camera)
        if self._lattice is not None and self._lattice[0] == key:
            return self._lattice
        z, camera = pose.position[2], pose.camera
        b = self.scene.bounds
        xs = np.arange(b.lo[0] + PLAN_GRID_M / 2, b.hi[0], PLAN_GRID_M)
        ys = np.arange(b.lo[1] + PLAN_GRID_M / 2, b.hi[1], PLAN_GRID_M)
        cells = {}
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                cells[(i, j)] = (float(x), float(y))
        adj: dict[tuple, list] = {c: [] for c in cells}
        for (i, j), p in cells.items():
            for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
                nb = (i + di, j + dj)
                q = cells.get(nb)
                if q is None:
                    continue
                if self._clear(p, q, z, camera):
                    w = math.hypot(q[0] - p[0], q[1] - p[1])
                    adj[(i, j)].append((nb, w))
                    adj[nb].append(((i, j), w))
        self._lattice = (key, cells, adj)
        return self._lattice

    def _planned_move(self, pose: AgentPose, target: str) -> dict | None:
        """One step along the shortest clear path into the stop disc."""
        z, camera = pose.position[2], pose.camera
        _, cells, adj = self._grid(pose)
        pos = (pose.position[0], pose.position[1])

        dist: dict[tuple, float] = {}
        prev: dict[tuple, tuple | None] = {}
        heap = []
        for cell, p in cells.items():
            w = math.hypot(p[0] - pos[0], p[1] - pos[1])
            if w <= 1.5 * PLAN_GRID_M and self._clear(pos, p, z, camera):
                dist[cell] = w
                prev[cell] = None
                heapq.heappush(heap, (w, cell))

        goal = None
        while heap:
            d_cur, cell = heapq.heappop(heap)
            if d_cur > dist.get(cell, math.inf):
                continue
            p = cells[cell]
            here = (p[0], p[1], z)
            if footprint_distance(self.scene, here, target) \
                    <= SUCCESS_RADIUS_M - 0.15 \
                    and self._would_see(AgentPose(here, 0.0, camera), target):
                goal = cell
                break
            for nb, w in adj[cell]:
                nd = d_cur + w
                if nd < dist.get(nb, math.inf):
                    dist[nb] = nd
                    prev[nb] = cell
                    heapq.heappush(heap, (nd, nb))
        if goal is None:
            return None

        path = [cells[goal]]
        back = prev[goal]
        while back is not None:
            path.append(cells[back])
            back = prev[back]
        # farthest path point directly walkable from here wins; the nearest
        # path point is start-adjacent, so the scan always finds one
        for point in path:
            if self._clear(pos, point, z, camera):
                waypoint = point
                break
        span = math.hypot(waypoint[0] - pos[0], waypoint[1] - pos[1])
        yaw = math.degrees(math.atan2(waypoint[1] - pos[1],
                                      waypoint[0] - pos[0]))
        return {"turn_deg": yaw - pose.yaw_deg,
                "forward_m": min(STEP_MAX_M, span)}

    def act(self, view: dict, obs: dict) -> dict:
        task = self.store[view["task_id"]]
        target = navigation_target(self.scene, task)
        if "pose" not in obs:
            raise SolverFailure("observation view lacks the agent pose")
        pose = AgentPose.from_json(obs["pose"])
        d = footprint_distance(self.scene, pose.position, target)

        if d <= SUCCESS_RADIUS_M - 0.05 and self._would_see(pose, target):
            yaw, pitch = self._facing(pose, target)
            return {"stop": True, "turn_deg": yaw - pose.yaw_deg,
                    "pitch_deg": pitch}

        move = self._planned_move(pose, target)
        if move is not None:
            return move

        bearing, _ = self._facing(pose, target)
        best = None
        for offset in (0, 20, -20, 40, -40, 60, -60, 80, -80,
                       100, -100, 120, -120, 140, -140, 160, 180):
            yaw = bearing + offset
            forward = min(STEP_MAX_M, max(d - 0.4, STEP_MIN_M))
            new_pose, moved = step(self.scene, pose, yaw - pose.yaw_deg, forward)
            nd = footprint_distance(self.scene, new_pose.position, target)
            terminal = nd <= SUCCESS_RADIUS_M - 0.05 \
                and self._would_see(new_pose, target)
            key = (0 if terminal else 1, nd, abs(offset))
            if best is None or key < best[0]:
                best = (key, yaw - pose.yaw_deg, forward)
        _, turn, forward = best
        return {"turn_deg": turn, "forward_m": forward}


class RemoteSolver:
    """HTTP bridge: POST /solve for answers, POST /act for actions, with
    retries and exponential backoff."""

    def __init__(self, base_url: str, timeout_s: float = 10.0,
                 retries: int = 3, backoff_s: float = 0.5):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s

    def _post(self, route: str, payload: dict) -> dict:
        import requests
        last = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(f"{self.base_url}{route}", json=payload,
                                     timeout=self.timeout_s)
                resp.raise_for_status()
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"{route}: body is not JSON") from exc
            except Exception as exc:  # noqa: BLE001 - network layer
                last = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff_s * (2 ** attempt))
        raise SolverFailure(f"{route} failed after {self.retries} tries: {last}")

    def answer(self, view: dict) -> dict:
        body = self._post("/solve", {"task": view})
        if "answer" not in body or not isinstance(body["answer"], dict):
            raise MalformedResponse("/solve reply lacks an answer object")
        return body["answer"]

    def act(self, view: dict, obs: dict) -> dict:
        body = self._post("/act", {"task": view, "observation": obs})
        if "action" not in body or not isinstance(body["action"], dict):
            raise MalformedResponse("/act reply lacks an action object")
        return body["action"]


# --- static benchmarking ---------------------------------------------------------


@dataclass(frozen=True)
class StaticReport:
    n: int
    n_correct: int
    accuracy: float
    mean_iou: float | None
    per_type: dict

    def to_json(self) -> dict:
        return {"n": self.n, "n_correct": self.n_correct,
                "accuracy": self.accuracy, "mean_iou": self.mean_iou,
                "per_type": self.per_type}


def run_static(tasks: list[Task], solver) -> StaticReport:
    n = n_correct = 0
    ious: list[float] = []
    per_type: dict[str, list[int]] = {}
    for task in tasks:
        if task.is_interactive or task.is_template:
            continue
        answer = solver.answer(task_view(task))
        correct, iou = score_answer(task, answer)
        n += 1
        n_correct += int(correct)
        stats = per_type.setdefault(task.task_type.value, [0, 0])
        stats[0] += 1
        stats[1] += int(correct)
        if iou is not None:
            ious.append(iou)
    return StaticReport(
        n=n, n_correct=n_correct,
        accuracy=(n_correct / n) if n else 0.0,
        mean_iou=(sum(ious) / len(ious)) if ious else None,
        per_type={k: {"n": v[0], "correct": v[1]} for k, v in per_type.items()})


# --- navigation episodes ----------------------------------------------------------


@dataclass
class NavEpisode:
    task_id: str
    target_entity_id: str
    trajectory: list[AgentPose]
    actions: list[dict]
    distances: list[float]
    target_seen: list[bool]
    target_mirrored: list[bool]
    success: bool
    stopped: bool
    start_tick: int
    end_tick: int
    observations: list[ObservationRecord] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"task_id": self.task_id,
                "target_entity_id": self.target_entity_id,
                "trajectory": [p.to_json() for p in self.trajectory],
                "actions": self.actions, "distances": self.distances,
                "target_seen": self.target_seen,
                "target_mirrored": self.target_mirrored,
                "success": self.success, "stopped": self.stopped,
                "start_tick": self.start_tick, "end_tick": self.end_tick}

    @classmethod
    def from_json(cls, d: dict) -> "NavEpisode":
        return cls(d["task_id"], d["target_entity_id"],
                   [AgentPose.from_json(p) for p in d["trajectory"]],
                   d["actions"], d["distances"], d["target_seen"],
                   d["target_mirrored"], d["success"], d["stopped"],
                   d["start_tick"], d["end_tick"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NavEpisode":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _apply_action(scene: Scene, pose: AgentPose, action: dict) -> AgentPose:
    turn = float(action.get("turn_deg", 0.0))
    forward = float(action.get("forward_m", 0.0))
    forward = max(0.0, min(forward, STEP_MAX_M))
    new_pose, _ = step(scene, pose, turn, forward)
    if "pitch_deg" in action:
        pitch = max(-MAX_PITCH_DEG, min(MAX_PITCH_DEG,
                                        float(action["pitch_deg"])))
        new_pose = AgentPose(new_pose.position, new_pose.yaw_deg,
                             new_pose.camera, pitch)
    return new_pose


def run_navigation(scene: Scene, task: Task, solver,
                   start_pose: AgentPose | None = None,
                   max_steps: int = MAX_NAV_STEPS, epsilon: float = 0.0,
                   rng: np.random.Generator | None = None,
                   start_tick: int = 0,
                   keep_observations: bool = True) -> NavEpisode:
    """Action loop for one navigation instance. With epsilon > 0 each step
    is replaced by a random one with that probability."""
    if epsilon > 0.0 and rng is None:
        raise ValueError("epsilon mixing needs a random generator")
    target = navigation_target(scene, task)
    pose = start_pose or AgentPose.from_json(task.meta["pose"])
    view = task_view(task)

    tick = start_tick
    trajectory = [pose]
    actions: list[dict] = []
    distances = [footprint_distance(scene, pose.position, target)]
    seen: list[bool] = []
    mirrored: list[bool] = []
    observations: list[ObservationRecord] = []
    stopped = False

    for _ in range(max_steps):
        record = observe(scene, pose, tick)
        tick += 1
        if keep_observations:
            observations.append(record)
        seen.append(is_visible(record, target))
        mirrored.append(any(d.entity_id == target and d.via_mirror
                            for d in record.detections))
        if epsilon > 0.0 and rng.uniform() < epsilon:
            action = {"turn_deg": float(rng.uniform(0.0, 360.0)),
                      "forward_m": float(rng.uniform(STEP_MIN_M, STEP_MAX_M))}
        else:
            action = solver.act(view, observation_view(record))
        actions.append(action)
        pose = _apply_action(scene, pose, action)
        trajectory.append(pose)
        distances.append(footprint_distance(scene, pose.position, target))
        if action.get("stop"):
            stopped = True
            break

    final_record = observe(scene, pose, tick)
    tick += 1
    if keep_observations:
        observations.append(final_record)
    seen.append(is_visible(final_record, target))
    mirrored.append(any(d.entity_id == target and d.via_mirror
                        for d in final_record.detections))

    success = distances[-1] <= SUCCESS_RADIUS_M and seen[-1]
    return NavEpisode(task.task_id, target, trajectory, actions, distances,
                      seen, mirrored, success, stopped, start_tick, tick,
                      observations)


def replay_episode(scene: Scene, episode: NavEpisode) -> bool:
    """Re-run the recorded actions; True when the trajectory matches."""
    pose = episode.trajectory[0]
    for action, expected in zip(episode.actions, episode.trajectory[1:]):
        pose = _apply_action(scene, pose, action)
        if not np.allclose(pose.position, expected.position, atol=1e-9) \
                or abs((pose.yaw_deg - expected.yaw_deg + 180) % 360 - 180) > 1e-9:
            return False
    return True


@dataclass(frozen=True)
class NavMetrics:
    n_episodes: int
    success_rate: float
    mean_nav_gain: float
    target_neglect_rate: float
    lack_3d_awareness_rate: float
    mean_steps: float

    def to_json(self) -> dict:
        return {"n_episodes": self.n_episodes,
                "success_rate": self.success_rate,
                "mean_nav_gain": self.mean_nav_gain,
                "target_neglect_rate": self.target_neglect_rate,
                "lack_3d_awareness_rate": self.lack_3d_awareness_rate,
                "mean_steps": self.mean_steps}


def _episode_nav_gain(ep: NavEpisode) -> float:
    d0, dt = ep.distances[0], ep.distances[-1]
    if d0 <= 0.0:
        return 0.0
    return max(-1.0, min(1.0, (d0 - dt) / d0))


def _episode_target_neglect(ep: NavEpisode) -> bool:
    if True not in ep.target_seen[:-1]:
        return False
    first = ep.target_seen.index(True)
    moves = [(a, b) for a, b in zip(ep.distances[first:], ep.distances[first + 1:])]
    if not moves:
        return False
    worse = sum(1 for a, b in moves if b > a + 1e-9)
    return worse * 2 > len(moves)


def _episode_lack_3d(ep: NavEpisode, scene: Scene, max_steps: int) -> bool:
    if ep.success:
        return False
    never_seen = not any(ep.target_seen)
    early = ep.stopped and len(ep.actions) < max_steps
    if early and never_seen:
        return True
    # chasing the reflection: while the target is only visible in a mirror,
    # the agent closes in on the mirror-image point instead of the target
    mirrors = [e for e in scene.entities if e.is_mirror]
    if not mirrors:
        return False
    target = scene.entity(ep.target_entity_id)
    for mirror in mirrors:
        ghost = reflect_point(np.asarray(target.position), mirror.mirror_plane)
        for t in range(len(ep.actions)):
            if ep.target_seen[t] or not ep.target_mirrored[t]:
                continue
            p0 = np.asarray(ep.trajectory[t].position)
            p1 = np.asarray(ep.trajectory[t + 1].position)
            d0 = float(np.hypot(*(ghost[:2] - p0[:2])))
            d1 = float(np.hypot(*(ghost[:2] - p1[:2])))
            if d1 < d0 - 0.05:
                return True
    return False


def nav_metrics(episodes: list[NavEpisode], scene: Scene,
                max_steps: int = MAX_NAV_STEPS) -> NavMetrics:
    if not episodes:
        return NavMetrics(0, 0.0, 0.0, 0.0, 0.0, 0.0)
    n = len(episodes)
    return NavMetrics(
        n_episodes=n,
        success_rate=sum(e.success for e in episodes) / n,
        mean_nav_gain=sum(_episode_nav_gain(e) for e in episodes) / n,
        target_neglect_rate=sum(_episode_target_neglect(e)
                                for e in episodes) / n,
        lack_3d_awareness_rate=sum(_episode_lack_3d(e, scene, max_steps)
                                   for e in episodes) / n,
        mean_steps=sum(len(e.actions) for e in episodes) / n,
    )
