"""Diversity and distribution metrics.

Two tasks conflict when their similarity exceeds the threshold alpha; the
set-level diversity score is the size of a maximum independent set of the
conflict graph over the set size. Solved exactly up to 64 tasks by
branch-and-bound max clique on the complement graph with a greedy coloring
bound, bitsets throughout; larger inputs fall back to a greedy construction
and say so in the result.

Also here: the evolution gain ratio, per-axis spread of the objects the
tasks bind, and a paired two-sided t-test with its own incomplete-beta tail
so the package does not depend on scipy at runtime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyEvolvedSet, EmptyTaskSet, NoSpatialBinding
from .geometry import enclosing_box
from .scene import Scene
from .taskmodel import Task, UNBOUND

DEFAULT_ALPHA = 0.8
EXACT_LIMIT = 64


# --- maximum independent set -----------------------------------------------------


def conflict_masks(values: np.ndarray, alpha: float) -> list[int]:
    """Bitset adjacency of the conflict graph: i~j iff similarity > alpha."""
    n = len(values)
    masks = [0] * n
    for i in range(n):
        for j in range(i + 1, n):
            if values[i][j] > alpha or values[j][i] > alpha:
                masks[i] |= 1 << j
                masks[j] |= 1 << i
    return masks


def _greedy_coloring(adj: list[int], cand: int) -> tuple[list[int], list[int]]:
    """Vertices of cand ordered by color class; bounds[i] = class number."""
    order: list[int] = []
    bounds: list[int] = []
    color = 0
    remaining = cand
    while remaining:
        color += 1
        q = remaining
        while q:
            v = (q & -q).bit_length() - 1
            order.append(v)
            bounds.append(color)
            remaining &= ~(1 << v)
            q &= ~(1 << v)
            q &= ~adj[v]
    return order, bounds


def _max_clique(adj: list[int], start_cand: int) -> tuple[int, int]:
    best_size = 0
    best_mask = 0

    def expand(cand: int, cur_mask: int, cur_size: int) -> None:
        nonlocal best_size, best_mask
        if cand == 0:
            if cur_size > best_size:
                best_size, best_mask = cur_size, cur_mask
            return
        order, bounds = _greedy_coloring(adj, cand)
        for i in range(len(order) - 1, -1, -1):
            if cur_size + bounds[i] <= best_size:
                return
            v = order[i]
            expand(cand & adj[v], cur_mask | (1 << v), cur_size + 1)
            cand &= ~(1 << v)

    expand(start_cand, 0, 0)
    return best_size, best_mask


def _exists_clique(adj: list[int], cand: int, need: int) -> bool:
    if need <= 0:
        return True
    found = False

    def expand(cand: int, cur_size: int) -> None:
        nonlocal found
        if found:
            return
        if cur_size >= need:
            found = True
            return
        if cand == 0:
            return
        order, bounds = _greedy_coloring(adj, cand)
        for i in range(len(order) - 1, -1, -1):
            if found or cur_size + bounds[i] < need:
                return
            v = order[i]
            expand(cand & adj[v], cur_size + 1)
            cand &= ~(1 << v)

    expand(cand, 0)
    return found


@dataclass(frozen=True)
class MISResult:
    size: int
    witness: tuple[int, ...]
    n: int
    alpha: float
    exact: bool

    def to_json(self) -> dict:
        return {"size": self.size, "witness": list(self.witness), "n": self.n,
                "alpha": self.alpha, "exact": self.exact}


def max_independent_set(values: np.ndarray, alpha: float = DEFAULT_ALPHA,
                        exact_force: bool = False) -> MISResult:
    """Exact solution with the lexicographically least witness up to
    EXACT_LIMIT tasks (or when forced); greedy beyond that."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return MISResult(0, (), 0, alpha, True)
    conflicts = conflict_masks(values, alpha)

    if n > EXACT_LIMIT and not exact_force:
        return _greedy_mis(conflicts, n, alpha)

    full = (1 << n) - 1
    # independent sets of the conflict graph are cliques of its complement
    comp = [(~conflicts[v]) & full & ~(1 << v) for v in range(n)]
    size, _ = _max_clique(comp, full)

    chosen = 0
    chosen_count = 0
    cand = full
    for v in range(n):
        if not (cand >> v) & 1:
            continue
        trial_cand = cand & comp[v] & ~((1 << (v + 1)) - 1)
        if chosen_count + 1 + _best_possible(comp, trial_cand) >= size \
                and (chosen_count + 1 == size
                     or _exists_clique(comp, trial_cand, size - chosen_count - 1)):
            chosen |= 1 << v
            chosen_count += 1
            cand &= comp[v]
            if chosen_count == size:
                break
    witness = tuple(i for i in range(n) if (chosen >> i) & 1)
    return MISResult(size, witness, n, alpha, True)


def _best_possible(comp: list[int], cand: int) -> int:
    return bin(cand).count("1")


def _greedy_mis(conflicts: list[int], n: int, alpha: float) -> MISResult:
    """Repeatedly take the vertex with the fewest remaining conflicts."""
    remaining = (1 << n) - 1
    chosen: list[int] = []
    while remaining:
        best_v, best_deg = -1, n + 1
        m = remaining
        while m:
            v = (m & -m).bit_length() - 1
            m &= m - 1
            deg = bin(conflicts[v] & remaining).count("1")
            if deg < best_deg:
                best_v, best_deg = v, deg
        chosen.append(best_v)
        remaining &= ~(1 << best_v)
        remaining &= ~conflicts[best_v]
    chosen.sort()
    return MISResult(len(chosen), tuple(chosen), n, alpha, False)


@dataclass(frozen=True)
class MIRResult:
    ratio: float
    mis_size: int
    n: int
    alpha: float
    exact: bool

    def to_json(self) -> dict:
        return {"ratio": self.ratio, "mis_size": self.mis_size, "n": self.n,
                "alpha": self.alpha, "exact": self.exact}


def independence_ratio(values: np.ndarray, alpha: float = DEFAULT_ALPHA,
                       exact_force: bool = False) -> MIRResult:
    n = len(values)
    if n == 0:
        raise EmptyTaskSet("independence ratio of an empty set")
    r = max_independent_set(values, alpha, exact_force)
    return MIRResult(r.size / n, r.size, n, alpha, r.exact)


@dataclass(frozen=True)
class MIREResult:
    ratio: float
    mis_union: int
    mis_initial: int
    mis_evolved: int
    clamped: bool

    def to_json(self) -> dict:
        return {"ratio": self.ratio, "mis_union": self.mis_union,
                "mis_initial": self.mis_initial,
                "mis_evolved": self.mis_evolved, "clamped": self.clamped}


def evolution_gain(values: np.ndarray, n_initial: int,
                   alpha: float = DEFAULT_ALPHA,
                   exact_force: bool = False) -> MIREResult:
    """How much genuinely new diversity the evolved tail adds on top of the
    first n_initial tasks, as a fraction of what it could have added."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if not 0 <= n_initial <= n:
        raise ValueError(f"n_initial {n_initial} out of range for {n} tasks")
    if n_initial == n:
        raise EmptyEvolvedSet("no evolved tasks beyond the initial set")
    init = max_independent_set(values[:n_initial, :n_initial], alpha, exact_force)
    evo = max_independent_set(values[n_initial:, n_initial:], alpha, exact_force)
    union = max_independent_set(values, alpha, exact_force)
    if evo.size == 0:
        raise EmptyEvolvedSet("evolved set has an empty independent set")
    raw = (union.size - init.size) / evo.size
    return MIREResult(max(raw, 0.0), union.size, init.size, evo.size,
                      clamped=raw < 0.0)


# --- spatial statistics ----------------------------------------------------------


def bound_entities(scene: Scene, task: Task) -> set[str]:
    """Scene entities a task instance talks about, via crops or references."""
    ids: set[str] = set()
    for g in (task.initial, task.final):
        for vx in g.vertices:
            img = vx.slots.get("image")
            if isinstance(img, dict) and img.get("entity_id") is not None:
                if scene.has_entity(img["entity_id"]):
                    ids.add(img["entity_id"])
            label = vx.slots.get("label")
            color = vx.slots.get("color")
            label = None if label is UNBOUND else label
            color = None if color is UNBOUND else color
            if label is None and color is None:
                continue
            for e in scene.entities:
                if label is not None and e.label != label:
                    continue
                if color is not None and e.color != color:
                    continue
                ids.add(e.id)
    return ids


@dataclass(frozen=True)
class SpatialStats:
    volume_all_m3: float
    extent_m: tuple[float, float, float]
    spread_m: tuple[float, float, float]
    volume_per_task_mean_m3: float
    volume_per_task_std_m3: float
    n_objects: int
    n_tasks: int

    def to_json(self) -> dict:
        return {"volume_all_m3": self.volume_all_m3,
                "extent_m": list(self.extent_m),
                "spread_m": list(self.spread_m),
                "volume_per_task_mean_m3": self.volume_per_task_mean_m3,
                "volume_per_task_std_m3": self.volume_per_task_std_m3,
                "n_objects": self.n_objects, "n_tasks": self.n_tasks}


def spatial_stats(scene: Scene, tasks: list[Task]) -> SpatialStats:
    """Coverage of the scene by the objects the tasks bind: total enclosing
    volume, per-axis extent and standard deviation of the distinct object
    centers, and the per-task enclosing volume."""
    if not tasks:
        raise EmptyTaskSet("spatial statistics of an empty task set")
    per_task: list[set[str]] = []
    for t in tasks:
        ids = bound_entities(scene, t)
        if not ids:
            raise NoSpatialBinding(f"{t.task_id} binds no scene entity")
        per_task.append(ids)

    all_ids = sorted(set().union(*per_task))
    boxes = [scene.entity(i).bbox3d for i in all_ids]
    v_all = enclosing_box(boxes).volume
    centers = np.array([scene.entity(i).position for i in all_ids])
    extent = centers.max(axis=0) - centers.min(axis=0)
    spread = centers.std(axis=0)

    vols = np.array([enclosing_box([scene.entity(i).bbox3d for i in ids]).volume
                     for ids in per_task])
    return SpatialStats(
        volume_all_m3=float(v_all),
        extent_m=tuple(float(x) for x in extent),
        spread_m=tuple(float(x) for x in spread),
        volume_per_task_mean_m3=float(vols.mean()),
        volume_per_task_std_m3=float(vols.std()),
        n_objects=len(all_ids),
        n_tasks=len(tasks),
    )


# --- paired t-test ---------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                     + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


@dataclass(frozen=True)
class TTestResult:
    t: float
    p_value: float
    df: int
    mean_diff: float
    zero_variance: bool

    def to_json(self) -> dict:
        return {"t": self.t, "p_value": self.p_value, "df": self.df,
                "mean_diff": self.mean_diff, "zero_variance": self.zero_variance}


def paired_ttest(a, b) -> TTestResult:
    """Two-sided paired t-test. Identical differences across all pairs give
    a flagged result instead of an exception: zero mean reads as p = 1,
    a nonzero mean as p = 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired t-test needs two equal-length vectors")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    d = a - b
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, df, mean, True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, df, mean, True)
    t = mean / (sd / math.sqrt(n))
    x = df / (df + t * t)
    p = regularized_incomplete_beta(df / 2.0, 0.5, x)
    return TTestResult(float(t), float(min(max(p, 0.0), 1.0)), df, mean, False)
