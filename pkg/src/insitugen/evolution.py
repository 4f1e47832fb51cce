"""Task evolution: reuse and recombination.

Reuse embeds a target blueprint's answer state into an existing instance's
answer state; every embedding donates its bound question slots to a fresh
instance whose answer is re-derived from the scene and the (reproducible)
observation, never copied from the donor.

Recombination swaps interchangeable question-slot sets between two
blueprints' initial states, keeps each side's own answer structure, and
pushes the valid results through type inference, which is how a picture
navigation blueprint falls out of label navigation plus classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BudgetExceeded, NoExchangeableVertices
from .generators import GENERATORS, GenCaps, dedupe_key, generate_tasks
from .groundtruth import (count_color_in_view, count_label_in_mirror,
                          count_label_in_view, direct_detections,
                          footprint_distance, label_is_unique,
                          spatial_relation)
from .prompts import render_prompt
from .rng import substream
from .scene import AgentPose, Scene
from .sim import ObservationRecord, observe
from .taskmodel import (Task, TaskType, UNBOUND, Vertex, content_id,
                        find_embeddings, infer_task_type, reconstruct,
                        state_diff, tasks_equivalent, template_for,
                        validate_template)

SWAPPABLE_SLOT_SETS = (
    (frozenset({"label"}), frozenset({"image"})),
    (frozenset({"position"}), frozenset({"bbox3d"})),
)


def _record_for(scene: Scene, task: Task) -> ObservationRecord:
    """Rebuild the observation a task was asked from; rendering is pure, so
    this is the original record bit for bit."""
    pose = AgentPose.from_json(task.meta["pose"])
    return observe(scene, pose, int(task.meta.get("tick", 0)))


def _unique_detection(record: ObservationRecord, label: str):
    dets = [d for d in direct_detections(record) if d.label == label]
    return dets[0] if len(dets) == 1 else None


def _rederive(task_type: TaskType, scene: Scene, record: ObservationRecord,
              init: dict[str, dict], caps: GenCaps) -> tuple[dict, dict] | None:
    """Answer bindings for a question whose initial slots are already fixed;
    None when the question is not well posed against this observation."""
    t = task_type
    if t is TaskType.CLASSIFICATION:
        ref = init["obj"]["image"]
        if not scene.has_entity(ref.get("entity_id", "")):
            return None
        return {"obj": {"label": scene.entity(ref["entity_id"]).label}}, {}
    if t is TaskType.LOCALIZATION:
        det = _unique_detection(record, init["obj"]["label"])
        if det is None or det.pixel_count < caps.min_pixels:
            return None
        return {"obj": {"bbox2d": list(det.pixel_box)}}, {}
    if t is TaskType.DEPTH_ESTIMATION:
        det = _unique_detection(record, init["obj"]["label"])
        if det is None or det.pixel_count < caps.min_pixels:
            return None
        return {"obj": {"depth_m": round(det.mean_depth_m, 3)}}, {}
    if t is TaskType.EMBODIED_COUNTING:
        label = init["obj"]["label"]
        return {"obj": {"count": count_label_in_view(record, label)}}, {}
    if t is TaskType.MIRROR_COUNTING:
        if not any(scene.entity(d.entity_id).is_mirror
                   for d in direct_detections(record)):
            return None
        label = init["target"]["label"]
        return {"target": {"count": count_label_in_mirror(record, label)}}, {}
    if t is TaskType.PATTERN_COUNTING:
        color = init["obj"]["color"]
        return {"obj": {"count": count_color_in_view(record, color)}}, {}
    if t is TaskType.RELATIONSHIP_DETECTION:
        ra, rb = init["a"].get("image"), init["b"].get("image")
        if not (isinstance(ra, dict) and isinstance(rb, dict)):
            return None
        ia, ib = ra.get("entity_id"), rb.get("entity_id")
        if not (scene.has_entity(ia or "") and scene.has_entity(ib or "")):
            return None
        visible = {d.entity_id for d in direct_detections(record)}
        if ia not in visible or ib not in visible or ia == ib:
            return None
        rel = spatial_relation(scene, record.pose, ia, ib)
        return ({"a": {"label": scene.entity(ia).label},
                 "b": {"label": scene.entity(ib).label}},
                {("a", "b", "spatial"): {"relation": rel}})
    if t is TaskType.IN_VIEW_CHECK:
        label = init["obj"].get("label")
        color = init["obj"].get("color")
        visible = {d.entity_id for d in direct_detections(record)}
        answer = any(e.label == label and (color is None or e.color == color)
                     and e.id in visible for e in scene.entities)
        return {}, {("agent", "obj", "visibility"): {"in_view": answer}}
    if t is TaskType.NAVIGATION_LABEL:
        label = init["target"]["label"]
        if not label_is_unique(scene, label):
            return None
        ent_id = next(e.id for e in scene.entities if e.label == label)
        d = footprint_distance(scene, record.pose.position, ent_id)
        if not caps.nav_min_m <= d <= caps.nav_max_m:
            return None
        return {}, {}
    if t is TaskType.NAVIGATION_PICTURE:
        ref = init["target"]["image"]
        if not (isinstance(ref, dict) and scene.has_entity(ref.get("entity_id", ""))):
            return None
        d = footprint_distance(scene, record.pose.position, ref["entity_id"])
        if not caps.nav_min_m <= d <= caps.nav_max_m:
            return None
        return {}, {}
    return None


def reuse(source: Task, target_type: TaskType, scene: Scene,
          caps: GenCaps = GenCaps()) -> list[Task]:
    """Instances of target_type carved out of one source instance. Empty
    when the blueprint's answer state does not embed into the source."""
    if source.is_template:
        return []
    tpl = template_for(target_type)
    try:
        embeddings = find_embeddings(tpl.final, source.final)
    except Exception:
        return []
    if not embeddings:
        return []
    record = _record_for(scene, source)
    out = []
    seen_bindings = set()
    for emb in embeddings:
        init_bindings: dict[str, dict] = {}
        for vx in tpl.initial.vertices:
            src_v = source.final.vertex(emb[vx.id])
            picked = {}
            for name, val in vx.slots.items():
                if val is UNBOUND:
                    picked[name] = src_v.slots[name]
            if picked:
                init_bindings[vx.id] = picked
        sig = repr(sorted((k, sorted(v.items(), key=lambda kv: kv[0]))
                          for k, v in init_bindings.items()))
        if sig in seen_bindings:
            continue
        seen_bindings.add(sig)
        derived = _rederive(target_type, scene, record, init_bindings, caps)
        if derived is None:
            continue
        answer_v, answer_e = derived
        initial = tpl.initial.bind(init_bindings)
        # answers extend the final state only; the initial state is the question
        final_slots = {k: dict(v) for k, v in init_bindings.items()}
        for vid, upd in answer_v.items():
            final_slots.setdefault(vid, {}).update(upd)
        final = tpl.final.bind(final_slots, answer_e)
        if initial.is_template or final.is_template:
            continue
        meta = {"scene_id": scene.id, "record_id": record.record_id,
                "tick": record.tick, "pose": record.pose.to_json(),
                "source": "reuse", "evolved_from": [source.task_id]}
        task = Task(content_id(target_type, initial, final, meta),
                    target_type, initial, final, meta=meta)
        out.append(Task(task.task_id, target_type, initial, final,
                        prompt=render_prompt(task), meta=meta))
    return out


# --- recombination ---------------------------------------------------------------


def _swap_partner(slot_names: frozenset) -> frozenset | None:
    for left, right in SWAPPABLE_SLOT_SETS:
        if slot_names == left:
            return right
        if slot_names == right:
            return left
    return None


def _with_initial_slots(task: Task, vertex_id: str,
                        new_names: frozenset) -> Task | None:
    """Parent template with one initial vertex's question slots replaced,
    its own answer structure reapplied on top."""
    diff = state_diff(task.initial, task.final)
    new_vertices = []
    for vx in task.initial.vertices:
        if vx.id == vertex_id:
            new_vertices.append(Vertex(vx.id, vx.semantic_type,
                                       {name: UNBOUND for name in sorted(new_names)}))
        else:
            new_vertices.append(vx)
    try:
        initial = type(task.initial)(tuple(new_vertices), task.initial.edges)
        final = reconstruct(initial, diff)
    except (ValueError, KeyError):
        return None
    return Task(f"recombined-{task.task_type.value}-{vertex_id}",
                task.task_type, initial, final)


def recombine_pair(a: Task, b: Task) -> list[Task]:
    """All valid templates from swapping interchangeable question slots
    between two blueprints. Raises when no vertex pair is exchangeable."""
    candidates: list[Task] = []
    exchanged = False
    for va in a.initial.vertices:
        for vb in b.initial.vertices:
            if va.semantic_type != vb.semantic_type:
                continue
            # only open question slots are swappable; bound slots are
            # structural constants the blueprint depends on
            if any(v is not UNBOUND for v in va.slots.values()) \
                    or any(v is not UNBOUND for v in vb.slots.values()):
                continue
            names_a, names_b = frozenset(va.slots), frozenset(vb.slots)
            if names_a == names_b:
                continue
            if _swap_partner(names_a) != names_b:
                continue
            exchanged = True
            for parent, vid, borrowed in ((a, va.id, names_b),
                                          (b, vb.id, names_a)):
                cand = _with_initial_slots(parent, vid, borrowed)
                if cand is not None:
                    candidates.append(cand)
    if not exchanged:
        raise NoExchangeableVertices(
            f"{a.task_type.value} x {b.task_type.value}: no swappable slots")

    out = []
    for cand in candidates:
        if validate_template(cand):
            continue
        if tasks_equivalent(_shape_probe(cand), _shape_probe(a)) \
                or tasks_equivalent(_shape_probe(cand), _shape_probe(b)):
            continue
        inferred = infer_task_type(cand.initial, cand.final)
        meta = {"source": "recombination",
                "evolved_from": [a.task_type.value, b.task_type.value],
                "novel_shape": inferred is None}
        out.append(Task(cand.task_id, inferred or cand.task_type,
                        cand.initial, cand.final, meta=meta))
    return out


def _shape_probe(t: Task) -> Task:
    # type inference compares shapes, not type tags
    return Task("probe", TaskType.CLASSIFICATION, t.initial, t.final)


@dataclass
class EvolveResult:
    instances: list[Task] = field(default_factory=list)
    templates: list[Task] = field(default_factory=list)
    budget_hit: bool = False


def evolve(scene: Scene, tasks: list[Task], seed: int, budget: int = 64,
           caps: GenCaps = GenCaps(), strict_budget: bool = False,
           records: list[ObservationRecord] | None = None) -> EvolveResult:
    """One evolution pass: reuse across all type pairs, then recombination
    with instantiation of any newly discovered blueprint."""
    result = EvolveResult()
    seen = {dedupe_key(t) for t in tasks if not t.is_template and "pose" in t.meta}

    def add(instance: Task) -> bool:
        if len(result.instances) >= budget:
            result.budget_hit = True
            if strict_budget:
                err = BudgetExceeded(f"evolution budget {budget} exhausted")
                err.partial = result
                raise err
            return False
        key = dedupe_key(instance)
        if key in seen:
            return True
        seen.add(key)
        result.instances.append(instance)
        return True

    instances = [t for t in tasks if not t.is_template]
    for source in instances:
        for target_type in TaskType:
            if target_type == source.task_type:
                continue
            for cand in reuse(source, target_type, scene, caps):
                if not add(cand):
                    return result

    present = []
    for t in instances:
        if t.task_type not in present:
            present.append(t.task_type)
    discovered: list[Task] = []
    for i, ta in enumerate(present):
        for tb in present[i + 1:]:
            try:
                combos = recombine_pair(template_for(ta), template_for(tb))
            except NoExchangeableVertices:
                continue
            for cand in combos:
                if any(tasks_equivalent(_shape_probe(cand), _shape_probe(d))
                       for d in discovered):
                    continue
                discovered.append(cand)
    result.templates = discovered

    if records:
        new_types = tuple(
            d.task_type for d in discovered
            if not d.meta.get("novel_shape") and d.task_type not in present)
        if new_types:
            fresh = generate_tasks(scene, records, seed, types=new_types,
                                   caps=caps)
            for cand in fresh:
                meta = dict(cand.meta)
                meta["source"] = "recombination"
                meta["evolved_from"] = [t.value for t in new_types]
                stamped = Task(content_id(cand.task_type, cand.initial,
                                          cand.final, meta),
                               cand.task_type, cand.initial, cand.final,
                               prompt=cand.prompt, meta=meta)
                if not add(stamped):
                    return result
    return result
