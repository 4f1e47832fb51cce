"""Graph-structured tasks.

A task is a pair of attributed graphs: the state the agent starts from and
the state that answers the question (or, for navigation, satisfies the goal).
Slots hold plain JSON values or the UNBOUND placeholder; a graph with any
UNBOUND slot is a template, a fully bound pair is an instance.

The substructure relation drives task reuse: graph `a` embeds into graph `b`
when an injective vertex mapping preserves semantic types, slot names, and
edges. Slot values are deliberately ignored, so a blueprint embeds into every
instance shaped like it regardless of what the instance is about; duplicate
detection uses the exact mode, where values must agree too. Search is plain
backtracking with a hard vertex cap and an expansion budget.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import SearchBudgetExceeded, StructuralRegression, UnboundSlot

MAX_GRAPH_VERTICES = 32
MAX_SEARCH_EXPANSIONS = 200_000


class _Unbound:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUND"

    def __deepcopy__(self, memo):
        return self


UNBOUND = _Unbound()
_UNBOUND_JSON = {"__unbound__": True}


def slot_to_json(value):
    return _UNBOUND_JSON if value is UNBOUND else value

def slot_from_json(value):
    if isinstance(value, dict) and value.get("__unbound__") is True:
        return UNBOUND
    return value


class SemanticType(str, Enum):
    OBJECT = "object"
    SCENE = "scene"
    AGENT = "agent"
    REGION = "region"


class EdgeKind(str, Enum):
    SPATIAL = "spatial"
    OWNERSHIP = "ownership"
    CONTAINMENT = "containment"
    VISIBILITY = "visibility"


class TaskType(str, Enum):
    CLASSIFICATION = "classification"
    LOCALIZATION = "localization"
    DEPTH_ESTIMATION = "depth_estimation"
    EMBODIED_COUNTING = "embodied_counting"
    MIRROR_COUNTING = "mirror_counting"
    PATTERN_COUNTING = "pattern_counting"
    RELATIONSHIP_DETECTION = "relationship_detection"
    IN_VIEW_CHECK = "in_view_check"
    NAVIGATION_LABEL = "navigation_label"
    NAVIGATION_PICTURE = "navigation_picture"


INTERACTIVE_TYPES = frozenset({TaskType.NAVIGATION_LABEL, TaskType.NAVIGATION_PICTURE})


@dataclass(frozen=True)
class Vertex:
    id: str
    semantic_type: SemanticType
    slots: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "semantic_type": self.semantic_type.value,
                "slots": {k: slot_to_json(v) for k, v in sorted(self.slots.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "Vertex":
        return cls(d["id"], SemanticType(d["semantic_type"]),
                   {k: slot_from_json(v) for k, v in d["slots"].items()})


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: EdgeKind
    slots: dict = field(default_factory=dict)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.src, self.dst, self.kind.value)

    def to_json(self) -> dict:
        return {"src": self.src, "dst": self.dst, "kind": self.kind.value,
                "slots": {k: slot_to_json(v) for k, v in sorted(self.slots.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "Edge":
        return cls(d["src"], d["dst"], EdgeKind(d["kind"]),
                   {k: slot_from_json(v) for k, v in d["slots"].items()})


@dataclass(frozen=True)
class TaskGraph:
    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "vertices",
                           tuple(sorted(self.vertices, key=lambda v: v.id)))
        object.__setattr__(self, "edges",
                           tuple(sorted(self.edges, key=lambda e: e.key)))
        ids = [v.id for v in self.vertices]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate vertex ids")
        idset = set(ids)
        keys = set()
        for e in self.edges:
            if e.src == e.dst:
                raise ValueError(f"self-loop edge at {e.src}")
            if e.src not in idset or e.dst not in idset:
                raise ValueError(f"edge {e.key} references missing vertex")
            if e.key in keys:
                raise ValueError(f"parallel edge {e.key}")
            keys.add(e.key)

    def vertex(self, vid: str) -> Vertex:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def has_vertex(self, vid: str) -> bool:
        return any(v.id == vid for v in self.vertices)

    def edge(self, key: tuple[str, str, str]) -> Edge | None:
        for e in self.edges:
            if e.key == key:
                return e
        return None

    @property
    def is_template(self) -> bool:
        return any(v is UNBOUND for vx in self.vertices for v in vx.slots.values()) \
            or any(v is UNBOUND for e in self.edges for v in e.slots.values())

    def unbound(self) -> list[tuple]:
        """(\"v\", vertex_id, slot) and (\"e\", edge_key, slot) still unbound."""
        out = []
        for vx in self.vertices:
            for name, val in sorted(vx.slots.items()):
                if val is UNBOUND:
                    out.append(("v", vx.id, name))
        for e in self.edges:
            for name, val in sorted(e.slots.items()):
                if val is UNBOUND:
                    out.append(("e", e.key, name))
        return out

    def bind(self, vertex_slots: dict | None = None,
             edge_slots: dict | None = None) -> "TaskGraph":
        """New graph with the given slot values substituted in. Binding only
        fills declared slots; an unknown slot name is a KeyError, never a
        silent extension of the graph."""
        vertex_slots = vertex_slots or {}
        edge_slots = edge_slots or {}
        for vid in vertex_slots:
            for name in vertex_slots[vid]:
                if name not in self.vertex(vid).slots:
                    raise KeyError(f"vertex {vid} declares no slot {name!r}")
        for key in edge_slots:
            e = self.edge(key)
            if e is None:
                raise KeyError(f"no edge {key}")
            for name in edge_slots[key]:
                if name not in e.slots:
                    raise KeyError(f"edge {key} declares no slot {name!r}")
        new_v = []
        for vx in self.vertices:
            upd = vertex_slots.get(vx.id)
            new_v.append(Vertex(vx.id, vx.semantic_type, {**vx.slots, **upd})
                         if upd else vx)
        new_e = []
        for e in self.edges:
            upd = edge_slots.get(e.key)
            new_e.append(Edge(e.src, e.dst, e.kind, {**e.slots, **upd})
                         if upd else e)
        return TaskGraph(tuple(new_v), tuple(new_e))

    def to_json(self) -> dict:
        return {"vertices": [v.to_json() for v in self.vertices],
                "edges": [e.to_json() for e in self.edges]}

    @classmethod
    def from_json(cls, d: dict) -> "TaskGraph":
        return cls(tuple(Vertex.from_json(v) for v in d["vertices"]),
                   tuple(Edge.from_json(e) for e in d["edges"]))


# --- state diff ----------------------------------------------------------------


@dataclass(frozen=True)
class Diff:
    """What the final state adds over the initial one. A final state may only
    grow, so additions are the whole story; filling an UNBOUND slot counts as
    adding its value."""

    added_vertices: tuple[Vertex, ...] = ()
    added_edges: tuple[Edge, ...] = ()
    added_vertex_slots: tuple[tuple[str, str, object], ...] = ()
    added_edge_slots: tuple[tuple[tuple[str, str, str], str, object], ...] = ()

    @property
    def is_empty(self) -> bool:
        return not (self.added_vertices or self.added_edges
                    or self.added_vertex_slots or self.added_edge_slots)

    def to_json(self) -> dict:
        return {
            "added_vertices": [v.to_json() for v in self.added_vertices],
            "added_edges": [e.to_json() for e in self.added_edges],
            "added_vertex_slots": [[vid, s, slot_to_json(val)]
                                   for vid, s, val in self.added_vertex_slots],
            "added_edge_slots": [[list(k), s, slot_to_json(val)]
                                 for k, s, val in self.added_edge_slots],
        }


def _slot_additions(owner: str, a: dict, b: dict) -> list[tuple[str, object]]:
    dropped = sorted(set(a) - set(b))
    if dropped:
        raise StructuralRegression(f"{owner} drops slot(s) {', '.join(dropped)}")
    out = []
    for name in sorted(b):
        new = b[name]
        if name not in a:
            out.append((name, new))
            continue
        old = a[name]
        if old is UNBOUND:
            if new is not UNBOUND:
                out.append((name, new))
        elif new is UNBOUND:
            raise StructuralRegression(f"{owner} unbinds slot {name}")
        elif new != old:
            raise StructuralRegression(f"{owner} changes bound slot {name}")
    return out


def state_diff(initial: TaskGraph, final: TaskGraph) -> Diff:
    """Additions final makes over initial. Raises StructuralRegression when
    final drops or rewrites anything initial already has: a question only ever
    extends the state it starts from."""
    init_v = {v.id: v for v in initial.vertices}
    fin_v = {v.id: v for v in final.vertices}
    gone = sorted(set(init_v) - set(fin_v))
    if gone:
        raise StructuralRegression(f"final drops vertices {', '.join(gone)}")
    added_vertices = tuple(v for v in final.vertices if v.id not in init_v)

    v_add = []
    for vid in sorted(init_v):
        a, b = init_v[vid], fin_v[vid]
        if a.semantic_type != b.semantic_type:
            raise StructuralRegression(
                f"vertex {vid} changes semantic type "
                f"{a.semantic_type.value} -> {b.semantic_type.value}")
        v_add.extend((vid, name, val) for name, val in
                     _slot_additions(f"vertex {vid}", a.slots, b.slots))

    init_e = {e.key: e for e in initial.edges}
    fin_e = {e.key: e for e in final.edges}
    gone_e = sorted(set(init_e) - set(fin_e))
    if gone_e:
        raise StructuralRegression(f"final drops edges {gone_e}")
    added_edges = tuple(e for e in final.edges if e.key not in init_e)

    e_add = []
    for key in sorted(init_e):
        e_add.extend((key, name, val) for name, val in
                     _slot_additions(f"edge {key}", init_e[key].slots,
                                     fin_e[key].slots))

    return Diff(added_vertices, added_edges, tuple(v_add), tuple(e_add))


def reconstruct(initial: TaskGraph, diff: Diff) -> TaskGraph:
    """Final state from an initial state plus its additions; the inverse of
    state_diff on valid pairs."""
    vertices = {v.id: Vertex(v.id, v.semantic_type, dict(v.slots))
                for v in initial.vertices}
    for v in diff.added_vertices:
        if v.id in vertices:
            raise ValueError(f"added vertex {v.id} already present")
        vertices[v.id] = Vertex(v.id, v.semantic_type, dict(v.slots))
    for vid, name, value in diff.added_vertex_slots:
        vertices[vid].slots[name] = value

    edges = {e.key: Edge(e.src, e.dst, e.kind, dict(e.slots))
             for e in initial.edges}
    for e in diff.added_edges:
        if e.key in edges:
            raise ValueError(f"added edge {e.key} already present")
        edges[e.key] = Edge(e.src, e.dst, e.kind, dict(e.slots))
    for key, name, value in diff.added_edge_slots:
        edges[key].slots[name] = value

    return TaskGraph(tuple(vertices.values()), tuple(edges.values()))


# --- substructure embedding -----------------------------------------------------


def _vertex_compatible(a: Vertex, b: Vertex, exact: bool) -> bool:
    if a.semantic_type != b.semantic_type:
        return False
    if exact:
        return _slots_equal(a.slots, b.slots)
    # the loose relation is structural: slot names only, values ignored
    return set(a.slots) <= set(b.slots)


def _edge_slots_compatible(a: Edge, b: Edge, exact: bool) -> bool:
    if exact:
        return _slots_equal(a.slots, b.slots)
    return set(a.slots) <= set(b.slots)


def find_embeddings(a: TaskGraph, b: TaskGraph, limit: int | None = None,
                    exact: bool = False) -> list[dict[str, str]]:
    """Injective embeddings of `a` into `b` as vertex-id maps, in
    deterministic order. Raises SearchBudgetExceeded past the caps."""
    if len(a.vertices) > MAX_GRAPH_VERTICES or len(b.vertices) > MAX_GRAPH_VERTICES:
        raise SearchBudgetExceeded(
            f"graph too large: {len(a.vertices)} / {len(b.vertices)} vertices "
            f"(cap {MAX_GRAPH_VERTICES})")

    candidates: dict[str, list[str]] = {}
    for av in a.vertices:
        cs = [bv.id for bv in b.vertices if _vertex_compatible(av, bv, exact)]
        if not cs:
            return []
        candidates[av.id] = cs

    order = sorted(candidates, key=lambda vid: (len(candidates[vid]), vid))
    a_edges = list(a.edges)
    b_edge_map = {e.key: e for e in b.edges}

    results: list[dict[str, str]] = []
    mapping: dict[str, str] = {}
    used: set[str] = set()
    expansions = 0

    def edges_ok(vid: str) -> bool:
        for e in a_edges:
            if e.src == vid and e.dst in mapping:
                be = b_edge_map.get((mapping[vid], mapping[e.dst], e.kind.value))
            elif e.dst == vid and e.src in mapping:
                be = b_edge_map.get((mapping[e.src], mapping[vid], e.kind.value))
            else:
                continue
            if be is None or not _edge_slots_compatible(e, be, exact):
                return False
        return True

    def backtrack(depth: int) -> bool:
        nonlocal expansions
        if depth == len(order):
            results.append(dict(mapping))
            return limit is not None and len(results) >= limit
        vid = order[depth]
        for cand in candidates[vid]:
            if cand in used:
                continue
            expansions += 1
            if expansions > MAX_SEARCH_EXPANSIONS:
                raise SearchBudgetExceeded(
                    f"embedding search exceeded {MAX_SEARCH_EXPANSIONS} expansions")
            mapping[vid] = cand
            used.add(cand)
            if edges_ok(vid) and backtrack(depth + 1):
                return True
            del mapping[vid]
            used.discard(cand)
        return False

    backtrack(0)
    return results


def is_substructure(a: TaskGraph, b: TaskGraph) -> bool:
    return bool(find_embeddings(a, b, limit=1))


def graphs_isomorphic(a: TaskGraph, b: TaskGraph) -> bool:
    """Exact match up to vertex renaming: types, slot names, bound values,
    and edges must all coincide."""
    if len(a.vertices) != len(b.vertices) or len(a.edges) != len(b.edges):
        return False
    return bool(find_embeddings(a, b, limit=1, exact=True))


# --- tasks ----------------------------------------------------------------------


@dataclass(frozen=True)
class Task:
    task_id: str
    task_type: TaskType
    initial: TaskGraph
    final: TaskGraph
    prompt: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        # the final state may only add to the initial one
        missing = {v.id for v in self.initial.vertices} \
            - {v.id for v in self.final.vertices}
        if missing:
            raise StructuralRegression(
                f"{self.task_id}: final state drops vertices "
                f"{', '.join(sorted(missing))}")

    @property
    def is_template(self) -> bool:
        return self.initial.is_template or self.final.is_template

    @property
    def is_interactive(self) -> bool:
        return self.task_type in INTERACTIVE_TYPES

    def diff(self) -> Diff:
        return state_diff(self.initial, self.final)

    def answer_payload(self) -> dict:
        """Bound values the final state adds over the initial one, keyed by
        owner and slot. The answer of a question task lives here."""
        d = self.diff()
        out = {}
        for vid, name, value in d.added_vertex_slots:
            if value is UNBOUND:
                raise UnboundSlot(f"{self.task_id}: {vid}.{name} is unbound")
            out[f"{vid}.{name}"] = value
        for v in d.added_vertices:
            for name, value in sorted(v.slots.items()):
                if value is UNBOUND:
                    raise UnboundSlot(f"{self.task_id}: {v.id}.{name} is unbound")
                out[f"{v.id}.{name}"] = value
        for key, name, value in d.added_edge_slots:
            if value is UNBOUND:
                raise UnboundSlot(f"{self.task_id}: {key}.{name} is unbound")
            out[f"{'|'.join(key)}.{name}"] = value
        for e in d.added_edges:
            for name, value in sorted(e.slots.items()):
                if value is UNBOUND:
                    raise UnboundSlot(f"{self.task_id}: {e.key}.{name} is unbound")
                out[f"{'|'.join(e.key)}.{name}"] = value
        return out

    def to_json(self) -> dict:
        return {"task_id": self.task_id, "task_type": self.task_type.value,
                "prompt": self.prompt, "initial": self.initial.to_json(),
                "final": self.final.to_json(), "meta": self.meta}

    @classmethod
    def from_json(cls, d: dict) -> "Task":
        return cls(d["task_id"], TaskType(d["task_type"]),
                   TaskGraph.from_json(d["initial"]),
                   TaskGraph.from_json(d["final"]),
                   d.get("prompt"), d.get("meta", {}))


def content_id(task_type: TaskType, initial: TaskGraph, final: TaskGraph,
               meta: dict) -> str:
    payload = json.dumps(
        {"type": task_type.value, "initial": initial.to_json(),
         "final": final.to_json(), "meta": meta}, sort_keys=True)
    return "task-" + hashlib.blake2b(payload.encode(), digest_size=10).hexdigest()


def tasks_equivalent(a: Task, b: Task) -> bool:
    """Same template up to vertex renaming, with one renaming that works for
    both states at once."""
    if a.task_type != b.task_type:
        return False
    if len(a.initial.vertices) != len(b.initial.vertices) \
            or len(a.initial.edges) != len(b.initial.edges) \
            or len(a.final.vertices) != len(b.final.vertices) \
            or len(a.final.edges) != len(b.final.edges):
        return False
    try:
        maps = find_embeddings(a.initial, b.initial, exact=True)
    except SearchBudgetExceeded:
        return False
    # every initial vertex persists into the final state, so an initial
    # renaming extends to the finals directly; _rename aligns the leftovers
    # the final states added
    for m in maps:
        renamed = _rename(a.final, m, b.final)
        if renamed is not None and graphs_equal(renamed, b.final):
            return True
    return False


def _rename(g: TaskGraph, mapping: dict[str, str],
            target: TaskGraph) -> TaskGraph | None:
    extra = [v.id for v in g.vertices if v.id not in mapping]
    free = [v.id for v in target.vertices
            if v.id not in set(mapping.values())]
    if len(extra) != len(free):
        return None
    full = dict(mapping)
    # align leftovers by exact-compat backtracking over the small remainder
    if extra:
        tgt_v = {v.id: v for v in target.vertices}
        src_v = {v.id: v for v in g.vertices}
        perm = _match_leftovers(extra, free, src_v, tgt_v)
        if perm is None:
            return None
        full.update(perm)
    try:
        return TaskGraph(
            tuple(Vertex(full[v.id], v.semantic_type, dict(v.slots))
                  for v in g.vertices),
            tuple(Edge(full[e.src], full[e.dst], e.kind, dict(e.slots))
                  for e in g.edges))
    except ValueError:
        return None


def _match_leftovers(extra, free, src_v, tgt_v):
    if not extra:
        return {}
    head, rest = extra[0], extra[1:]
    for f in free:
        if _vertex_compatible(src_v[head], tgt_v[f], exact=True):
            sub = _match_leftovers(rest, [x for x in free if x != f], src_v, tgt_v)
            if sub is not None:
                return {head: f, **sub}
    return None


def graphs_equal(a: TaskGraph, b: TaskGraph) -> bool:
    """Identical graphs, vertex ids included; slot values compared with the
    unbound marker distinguished from every bound value."""
    if len(a.vertices) != len(b.vertices) or len(a.edges) != len(b.edges):
        return False
    for va, vb in zip(a.vertices, b.vertices):
        if va.id != vb.id or va.semantic_type != vb.semantic_type:
            return False
        if not _slots_equal(va.slots, vb.slots):
            return False
    for ea, eb in zip(a.edges, b.edges):
        if ea.key != eb.key or not _slots_equal(ea.slots, eb.slots):
            return False
    return True


def _slots_equal(a: dict, b: dict) -> bool:
    if set(a) != set(b):
        return False
    for k, v in a.items():
        o = b[k]
        if (v is UNBOUND) != (o is UNBOUND):
            return False
        if v is not UNBOUND and v != o:
            return False
    return True


# --- canonical templates ----------------------------------------------------------


def _agent() -> Vertex:
    return Vertex("agent", SemanticType.AGENT, {})


def make_template(task_type: TaskType) -> Task:
    """Blueprint task for a type: everything question-like is UNBOUND."""
    t = TaskType(task_type)
    if t is TaskType.CLASSIFICATION:
        initial = TaskGraph((Vertex("obj", SemanticType.OBJECT, {"image": UNBOUND}),))
        final = TaskGraph((Vertex("obj", SemanticType.OBJECT,
                                  {"image": UNBOUND, "label": UNBOUND}),))
    elif t is TaskType.LOCALIZATION:
        see = Edge("agent", "obj", EdgeKind.VISIBILITY)
        initial = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                              {"label": UNBOUND})), (see,))
        final = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                            {"label": UNBOUND, "bbox2d": UNBOUND})),
                          (see,))
    elif t is TaskType.DEPTH_ESTIMATION:
        see = Edge("agent", "obj", EdgeKind.VISIBILITY)
        initial = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                              {"label": UNBOUND})), (see,))
        final = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                            {"label": UNBOUND, "depth_m": UNBOUND})),
                          (see,))
    elif t is TaskType.EMBODIED_COUNTING:
        see = Edge("agent", "obj", EdgeKind.VISIBILITY)
        initial = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                              {"label": UNBOUND})), (see,))
        final = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                            {"label": UNBOUND, "count": UNBOUND})),
                          (see,))
    elif t is TaskType.MIRROR_COUNTING:
        see = Edge("agent", "mirror", EdgeKind.VISIBILITY)
        holds = Edge("mirror", "target", EdgeKind.CONTAINMENT)
        initial = TaskGraph(
            (_agent(), Vertex("mirror", SemanticType.OBJECT, {"label": "mirror"}),
             Vertex("target", SemanticType.OBJECT, {"label": UNBOUND})),
            (see, holds))
        final = TaskGraph(
            (_agent(), Vertex("mirror", SemanticType.OBJECT, {"label": "mirror"}),
             Vertex("target", SemanticType.OBJECT,
                    {"label": UNBOUND, "count": UNBOUND})),
            (see, holds))
    elif t is TaskType.PATTERN_COUNTING:
        see = Edge("agent", "obj", EdgeKind.VISIBILITY)
        initial = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                              {"color": UNBOUND})), (see,))
        final = TaskGraph((_agent(), Vertex("obj", SemanticType.OBJECT,
                                            {"color": UNBOUND, "count": UNBOUND})),
                          (see,))
    elif t is TaskType.RELATIONSHIP_DETECTION:
        va = Vertex("a", SemanticType.OBJECT, {"image": UNBOUND, "label": UNBOUND})
        vb = Vertex("b", SemanticType.OBJECT, {"image": UNBOUND, "label": UNBOUND})
        sees = (Edge("agent", "a", EdgeKind.VISIBILITY),
                Edge("agent", "b", EdgeKind.VISIBILITY))
        initial = TaskGraph((_agent(), va, vb),
                            sees + (Edge("a", "b", EdgeKind.SPATIAL),))
        final = TaskGraph((_agent(), va, vb),
                          sees + (Edge("a", "b", EdgeKind.SPATIAL,
                                       {"relation": UNBOUND}),))
    elif t is TaskType.IN_VIEW_CHECK:
        obj = Vertex("obj", SemanticType.OBJECT, {"label": UNBOUND, "color": UNBOUND})
        initial = TaskGraph((_agent(), obj))
        final = TaskGraph((_agent(), obj),
                          (Edge("agent", "obj", EdgeKind.VISIBILITY,
                                {"in_view": UNBOUND}),))
    elif t is TaskType.NAVIGATION_LABEL:
        tgt = Vertex("target", SemanticType.OBJECT, {"label": UNBOUND})
        initial = TaskGraph((_agent(), tgt))
        final = TaskGraph((_agent(), tgt),
                          (Edge("agent", "target", EdgeKind.SPATIAL,
                                {"relation": "near"}),))
    elif t is TaskType.NAVIGATION_PICTURE:
        tgt = Vertex("target", SemanticType.OBJECT, {"image": UNBOUND})
        initial = TaskGraph((_agent(), tgt))
        final = TaskGraph((_agent(), tgt),
                          (Edge("agent", "target", EdgeKind.SPATIAL,
                                {"relation": "near"}),))
    else:  # pragma: no cover - enum is closed
        raise ValueError(t)
    return Task(task_id=f"template-{t.value}", task_type=t,
                initial=initial, final=final)


_TEMPLATE_CACHE: dict[TaskType, Task] = {}


def template_for(task_type: TaskType) -> Task:
    t = TaskType(task_type)
    if t not in _TEMPLATE_CACHE:
        _TEMPLATE_CACHE[t] = make_template(t)
    return _TEMPLATE_CACHE[t]


def infer_task_type(initial: TaskGraph, final: TaskGraph) -> TaskType | None:
    """Match a template pair against the canonical blueprints; None when the
    shape is genuinely new."""
    probe = Task("probe", TaskType.CLASSIFICATION, initial, final)
    for t in TaskType:
        ref = template_for(t)
        cand = Task("cand", TaskType.CLASSIFICATION, ref.initial, ref.final)
        if tasks_equivalent(probe, cand):
            return t
    return None


def validate_template(task: Task) -> list[str]:
    """Problems that make a template unusable; empty list means valid."""
    issues = []
    if not task.is_template:
        issues.append("no unbound slot: nothing to ask")
    try:
        d = task.diff()
    except StructuralRegression as exc:
        issues.append(f"final state drops structure: {exc}")
    else:
        if d.is_empty:
            issues.append("empty state change: question adds nothing")
    return issues
