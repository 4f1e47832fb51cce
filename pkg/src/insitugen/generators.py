"""Task generation in the agent loop.

Generation is a pure function of (scene, observation records, seed): every
record gets its own named random substream, so growing the record pool never
changes the tasks earlier records produced. The loop alternates exploration
and task-driven movement: a loop with epsilon 1 is a pure random walk and the
solver is never invoked; epsilon 0 hands movement to the solver on a capped,
optionally diversity-filtered set of navigation tasks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import filtering, harness
from .errors import EmptyDataSet, MissingEntity, UnboundSlot
from .groundtruth import (count_color_in_view, count_label_in_mirror,
                          count_label_in_view, crop_ref, direct_detections,
                          label_is_unique, mirrored_detections,
                          spatial_relation, footprint_distance)
from .rng import substream
from .scene import Scene
from .sim import ObservationRecord, observe, random_walk
from .taskmodel import (Task, TaskType, content_id, template_for)

TYPE_ORDER = tuple(TaskType)


@dataclass(frozen=True)
class GenCaps:
    min_pixels: int = 8
    per_type_cap: int = 2
    pair_cap: int = 2
    nav_min_m: float = 2.0
    nav_max_m: float = 8.0


def _pose_bucket(pose) -> tuple:
    return (round(pose.position[0] / 0.5), round(pose.position[1] / 0.5),
            round(pose.yaw_deg / 15.0) % 24, round(pose.pitch_deg / 15.0))


def _binding_signature(task: Task) -> str:
    """Bound content of the initial state with picture crops collapsed to the
    entity they show; near-identical crops of one object are duplicates."""
    import json

    from .taskmodel import UNBOUND
    parts = []
    for v in task.initial.vertices:
        slots = {}
        for name, val in sorted(v.slots.items()):
            if val is UNBOUND:
                slots[name] = "?"
            elif name == "image" and isinstance(val, dict):
                slots[name] = ["crop", val.get("entity_id"), val.get("via_mirror")]
            else:
                slots[name] = val
        parts.append([v.semantic_type.value, slots])
    for e in task.initial.edges:
        parts.append([e.kind.value,
                      {k: ("?" if v is UNBOUND else v)
                       for k, v in sorted(e.slots.items())}])
    return json.dumps(parts, sort_keys=True)


def dedupe_key(task: Task) -> tuple:
    from .scene import AgentPose
    pose = AgentPose.from_json(task.meta["pose"])
    return (task.task_type.value, task.meta["scene_id"],
            _binding_signature(task), _pose_bucket(pose))


def ground(task_type: TaskType, scene: Scene, record: ObservationRecord,
           question_slots: dict, answer_slots: dict | None = None,
           answer_edge_slots: dict | None = None,
           source: str = "interaction") -> Task:
    """Bind a blueprint against one observation into a full instance.

    Question slots go into both states; answer slots and answer edge slots
    go into the final state only, so the state difference is exactly the
    answer. Raises MissingEntity when a picture reference points at nothing
    in the scene and UnboundSlot when the bindings leave any slot open.
    """
    from .prompts import render_prompt
    for slots in question_slots.values():
        ref = slots.get("image")
        if isinstance(ref, dict) and not scene.has_entity(ref.get("entity_id", "")):
            raise MissingEntity(f"picture references unknown entity "
                                f"{ref.get('entity_id')!r}")
    tpl = template_for(task_type)
    initial = tpl.initial.bind(question_slots)
    final_slots = {vid: dict(slots) for vid, slots in question_slots.items()}
    for vid, upd in (answer_slots or {}).items():
        final_slots.setdefault(vid, {}).update(upd)
    final = tpl.final.bind(final_slots, answer_edge_slots)
    if initial.is_template or final.is_template:
        raise UnboundSlot(f"{task_type.value}: bindings leave slots open: "
                          f"{initial.unbound() + final.unbound()}")
    meta = {"scene_id": scene.id, "record_id": record.record_id,
            "tick": record.tick, "pose": record.pose.to_json(),
            "source": source}
    task = Task(content_id(task_type, initial, final, meta), task_type,
                initial, final, meta=meta)
    return Task(task.task_id, task_type, initial, final,
                prompt=render_prompt(task), meta=meta)


def _pick(rng, items: list, cap: int) -> list:
    if len(items) <= cap:
        return list(items)
    idx = sorted(rng.choice(len(items), size=cap, replace=False).tolist())
    return [items[i] for i in idx]


def g_classification(scene, record, rng, caps: GenCaps) -> list[Task]:
    dets = [d for d in direct_detections(record) if d.pixel_count >= caps.min_pixels]
    out = []
    for det in _pick(rng, dets, caps.per_type_cap):
        out.append(ground(
            TaskType.CLASSIFICATION, scene, record,
            {"obj": {"image": crop_ref(record, det)}},
            {"obj": {"label": det.label}}))
    return out


def _label_unique_dets(record, caps):
    """Directly seen objects whose label alone picks them out in the view.
    Questions built from these can carry just the label and stay well
    posed: the answer is a function of question plus observation."""
    by_label: dict[str, list] = {}
    for d in direct_detections(record):
        by_label.setdefault(d.label, []).append(d)
    return [ds[0] for _, ds in sorted(by_label.items())
            if len(ds) == 1 and ds[0].pixel_count >= caps.min_pixels]


def g_localization(scene, record, rng, caps: GenCaps) -> list[Task]:
    out = []
    for det in _pick(rng, _label_unique_dets(record, caps),
                     caps.per_type_cap):
        out.append(ground(
            TaskType.LOCALIZATION, scene, record,
            {"obj": {"label": det.label}},
            {"obj": {"bbox2d": list(det.pixel_box)}}))
    return out


def g_depth_estimation(scene, record, rng, caps: GenCaps) -> list[Task]:
    out = []
    for det in _pick(rng, _label_unique_dets(record, caps),
                     caps.per_type_cap):
        out.append(ground(
            TaskType.DEPTH_ESTIMATION, scene, record,
            {"obj": {"label": det.label}},
            {"obj": {"depth_m": round(det.mean_depth_m, 3)}}))
    return out


def g_embodied_counting(scene, record, rng, caps: GenCaps) -> list[Task]:
    labels = sorted({d.label for d in direct_detections(record)})
    out = []
    for label in _pick(rng, labels, caps.per_type_cap):
        out.append(ground(
            TaskType.EMBODIED_COUNTING, scene, record,
            {"obj": {"label": label}},
            {"obj": {"count": count_label_in_view(record, label)}}))
    return out


def g_mirror_counting(scene, record, rng, caps: GenCaps) -> list[Task]:
    mirror_visible = any(scene.entity(d.entity_id).is_mirror
                         for d in direct_detections(record))
    reflected = mirrored_detections(record)
    if not mirror_visible or not reflected:
        return []
    labels = sorted({d.label for d in reflected})
    out = []
    for label in _pick(rng, labels, caps.per_type_cap):
        out.append(ground(
            TaskType.MIRROR_COUNTING, scene, record,
            {"target": {"label": label}},
            {"target": {"count": count_label_in_mirror(record, label)}}))
    return out


def g_pattern_counting(scene, record, rng, caps: GenCaps) -> list[Task]:
    colors = sorted({d.color for d in direct_detections(record)})
    out = []
    for color in _pick(rng, colors, caps.per_type_cap):
        out.append(ground(
            TaskType.PATTERN_COUNTING, scene, record,
            {"obj": {"color": color}},
            {"obj": {"count": count_color_in_view(record, color)}}))
    return out


def g_relationship_detection(scene, record, rng, caps: GenCaps) -> list[Task]:
    uniq = _label_unique_dets(record, caps)
    pairs = [(a, b) for i, a in enumerate(uniq)
             for j, b in enumerate(uniq) if i < j]
    out = []
    for a, b in _pick(rng, pairs, caps.pair_cap):
        rel = spatial_relation(scene, record.pose, a.entity_id, b.entity_id)
        out.append(ground(
            TaskType.RELATIONSHIP_DETECTION, scene, record,
            {"a": {"image": crop_ref(record, a), "label": a.label},
             "b": {"image": crop_ref(record, b), "label": b.label}},
            answer_edge_slots={("a", "b", "spatial"): {"relation": rel}}))
    return out


def g_in_view_check(scene, record, rng, caps: GenCaps) -> list[Task]:
    visible_ids = {d.entity_id for d in direct_detections(record)}

    def question_for(ent_id):
        # the blueprint asks for label and color, so bind both even when
        # the label alone would disambiguate
        ent = scene.entity(ent_id)
        return {"obj": {"label": ent.label, "color": ent.color}}

    def answer_for(ref):
        return any(e.label == ref["obj"]["label"]
                   and e.color == ref["obj"]["color"]
                   and e.id in visible_ids
                   for e in scene.entities)

    out = []
    vis = sorted(visible_ids)
    if vis:
        ref = question_for(vis[int(rng.integers(0, len(vis)))])
        out.append(ground(
            TaskType.IN_VIEW_CHECK, scene, record, ref,
            answer_edge_slots={("agent", "obj", "visibility"):
                               {"in_view": answer_for(ref)}}))
    hidden = sorted(e.id for e in scene.entities if e.id not in visible_ids)
    if hidden:
        ref = question_for(hidden[int(rng.integers(0, len(hidden)))])
        out.append(ground(
            TaskType.IN_VIEW_CHECK, scene, record, ref,
            answer_edge_slots={("agent", "obj", "visibility"):
                               {"in_view": answer_for(ref)}}))
    return out


def _nav_targets(scene, record, caps):
    out = []
    for e in scene.entities:
        d = footprint_distance(scene, record.pose.position, e.id)
        if caps.nav_min_m <= d <= caps.nav_max_m:
            out.append(e)
    return out


def g_navigation_label(scene, record, rng, caps: GenCaps) -> list[Task]:
    targets = [e for e in _nav_targets(scene, record, caps)
               if label_is_unique(scene, e.label)]
    out = []
    for ent in _pick(rng, targets, caps.per_type_cap):
        out.append(ground(TaskType.NAVIGATION_LABEL, scene, record,
                          {"target": {"label": ent.label}}))
    return out


def g_navigation_picture(scene, record, rng, caps: GenCaps) -> list[Task]:
    eligible_ids = {e.id for e in _nav_targets(scene, record, caps)}
    dets = [d for d in direct_detections(record)
            if d.entity_id in eligible_ids and d.pixel_count >= caps.min_pixels]
    out = []
    for det in _pick(rng, dets, caps.per_type_cap):
        out.append(ground(TaskType.NAVIGATION_PICTURE, scene, record,
                          {"target": {"image": crop_ref(record, det)}}))
    return out


GENERATORS = {
    TaskType.CLASSIFICATION: g_classification,
    TaskType.LOCALIZATION: g_localization,
    TaskType.DEPTH_ESTIMATION: g_depth_estimation,
    TaskType.EMBODIED_COUNTING: g_embodied_counting,
    TaskType.MIRROR_COUNTING: g_mirror_counting,
    TaskType.PATTERN_COUNTING: g_pattern_counting,
    TaskType.RELATIONSHIP_DETECTION: g_relationship_detection,
    TaskType.IN_VIEW_CHECK: g_in_view_check,
    TaskType.NAVIGATION_LABEL: g_navigation_label,
    TaskType.NAVIGATION_PICTURE: g_navigation_picture,
}


def generate_tasks(scene: Scene, records: list[ObservationRecord], seed: int,
                   types: tuple[TaskType, ...] | None = None,
                   caps: GenCaps = GenCaps()) -> list[Task]:
    """All task instances the record pool supports, deduplicated. Adding
    records only ever adds tasks: each record draws from its own substream."""
    if not records:
        raise EmptyDataSet("no observation records to generate from")
    active = types or TYPE_ORDER
    out: list[Task] = []
    seen: set[tuple] = set()
    for record in records:
        for t in TYPE_ORDER:
            if t not in active:
                continue
            rng = substream(seed, "gen", record.record_id, t.value)
            for task in GENERATORS[t](scene, record, rng, caps):
                key = dedupe_key(task)
                if key not in seen:
                    seen.add(key)
                    out.append(task)
    return out


def interactive_subset(tasks: list[Task]) -> list[Task]:
    return [t for t in tasks if t.is_interactive]


def static_subset(tasks: list[Task]) -> list[Task]:
    return [t for t in tasks if not t.is_interactive]


# --- the interaction loop -------------------------------------------------------


@dataclass(frozen=True)
class LoopConfig:
    seed: int
    epsilon: tuple[float, ...] = (1.0, 0.0)
    walk_steps: int = 12
    exec_cap: int = 5
    filter_enabled: bool = True
    filter_clusters: int = 5
    keep_per_loop: int | None = 48
    per_step_epsilon: bool = False
    include_surveillance: bool = True
    nav_max_steps: int = 10
    types: tuple[TaskType, ...] | None = None
    caps: GenCaps = GenCaps()


@dataclass
class LoopResult:
    records: list[ObservationRecord] = field(default_factory=list)
    tasks_by_loop: list[list[Task]] = field(default_factory=list)
    executed: list["harness.NavEpisode"] = field(default_factory=list)

    @property
    def final_tasks(self) -> list[Task]:
        return self.tasks_by_loop[-1] if self.tasks_by_loop else []


def _select_for_execution(tasks: list[Task], config: LoopConfig,
                          seed: int) -> list[Task]:
    nav = interactive_subset(tasks)
    if not nav:
        return []
    cap = min(config.exec_cap, len(nav))
    if not config.filter_enabled or len(nav) <= cap:
        return nav[:cap]
    sim_matrix = filtering.similarity(nav)
    reps = filtering.select_representatives(
        sim_matrix, nav, n_clusters=min(config.filter_clusters, cap, len(nav)),
        seed=seed)
    return reps[:cap]


def _reduce_pool(tasks: list[Task], config: LoopConfig,
                 seed: int) -> list[Task]:
    """Per-loop growth control: the filter keeps one medoid per cluster; the
    ablation keeps the first arrivals, so both arms emit the same count."""
    cap = config.keep_per_loop
    if cap is None or len(tasks) <= cap:
        return tasks
    if not config.filter_enabled:
        return tasks[:cap]
    sim_matrix = filtering.similarity(tasks)
    reps = filtering.select_representatives(sim_matrix, tasks,
                                            n_clusters=cap, seed=seed)
    return reps[:cap]


def run_loop(scene: Scene, solver, config: LoopConfig) -> LoopResult:
    """Alternate data collection and generation for len(epsilon) rounds."""
    result = LoopResult()
    pose = scene.agent_spawn
    tick = 0
    if config.include_surveillance:
        result.records.append(observe(scene, scene.surveillance_pose, tick))
        tick += 1
    result.records.append(observe(scene, pose, tick))
    tick += 1

    for loop_idx, eps in enumerate(config.epsilon):
        walk_rng = substream(config.seed, "walk", loop_idx)
        if eps >= 1.0 or solver is None:
            poses = random_walk(scene, pose, config.walk_steps, walk_rng)
            for p in poses[1:]:
                result.records.append(observe(scene, p, tick))
                tick += 1
            pose = poses[-1]
        else:
            prior = result.tasks_by_loop[-1] if result.tasks_by_loop else []
            chosen = _select_for_execution(
                prior, config, substream_seed(config.seed, 2 * loop_idx))
            if not chosen:
                poses = random_walk(scene, pose, config.walk_steps, walk_rng)
                for p in poses[1:]:
                    result.records.append(observe(scene, p, tick))
                    tick += 1
                pose = poses[-1]
            register = getattr(solver, "register", None)
            if register is not None:
                register(chosen)
            for task in chosen:
                episode = harness.run_navigation(
                    scene, task, solver, start_pose=pose,
                    max_steps=config.nav_max_steps,
                    epsilon=eps if config.per_step_epsilon else 0.0,
                    rng=walk_rng, start_tick=tick)
                result.executed.append(episode)
                for rec in episode.observations:
                    result.records.append(rec)
                tick = episode.end_tick
                pose = episode.trajectory[-1]
        pool = generate_tasks(scene, result.records, config.seed,
                              types=config.types, caps=config.caps)
        result.tasks_by_loop.append(
            _reduce_pool(pool, config,
                         substream_seed(config.seed, 2 * loop_idx + 1)))
    return result


def substream_seed(seed: int, loop_idx: int) -> int:
    """Stable derived seed for the per-loop filter."""
    return (seed * 1_000_003 + loop_idx) & 0x7FFFFFFF
