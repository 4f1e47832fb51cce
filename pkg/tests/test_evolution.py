"""Evolution: reuse must re-derive answers from the scene (never copy them),
recombination must discover the picture-navigation blueprint, and the evolve
pass must respect budgets and dedupe against its inputs."""

import dataclasses

import pytest

from conftest import make_corpus
from insitugen.errors import BudgetExceeded, NoExchangeableVertices
from insitugen.evolution import (EvolveResult, evolve, recombine_pair, reuse)
from insitugen.generators import dedupe_key, generate_tasks
from insitugen.taskmodel import (Task, TaskGraph, TaskType, UNBOUND, Vertex,
                                 template_for, tasks_equivalent)

STATIC_POOL_TYPES = tuple(t for t in TaskType
                          if t is not TaskType.NAVIGATION_PICTURE)


def rebuild_with_final(task, final):
    return Task(task.task_id, task.task_type, task.initial, final,
                prompt=task.prompt, meta=task.meta)


def tamper_vertex_slot(graph, vertex_id, name, value):
    vertices = tuple(
        Vertex(v.id, v.semantic_type, {**v.slots, name: value})
        if v.id == vertex_id else v
        for v in graph.vertices)
    return TaskGraph(vertices, graph.edges)


def first_of_type(tasks, tt):
    for t in tasks:
        if t.task_type is tt:
            return t
    raise AssertionError(f"pool has no {tt.value} task")


def test_reuse_rederives_answers_from_scene():
    scene, records = make_corpus(32)
    pool = generate_tasks(scene, records, seed=32)
    source = first_of_type(pool, TaskType.RELATIONSHIP_DETECTION)

    # poison the stored answer labels; a copying implementation would leak
    # these into the derived classification tasks
    bad_final = tamper_vertex_slot(source.final, "a", "label", "bogus")
    bad_final = tamper_vertex_slot(bad_final, "b", "label", "bogus")
    bad_initial = tamper_vertex_slot(source.initial, "a", "label", "bogus")
    bad_initial = tamper_vertex_slot(bad_initial, "b", "label", "bogus")
    poisoned = Task(source.task_id, source.task_type, bad_initial, bad_final,
                    prompt=source.prompt, meta=source.meta)

    derived = reuse(poisoned, TaskType.CLASSIFICATION, scene)
    assert derived
    for t in derived:
        ref = t.initial.vertex("obj").slots["image"]
        truth = scene.entity(ref["entity_id"]).label
        assert truth != "bogus"
        assert t.answer_payload()["obj.label"] == truth


def test_reuse_output_shape_and_meta():
    scene, records = make_corpus(32)
    pool = generate_tasks(scene, records, seed=32)
    source = first_of_type(pool, TaskType.RELATIONSHIP_DETECTION)
    derived = reuse(source, TaskType.CLASSIFICATION, scene)
    assert derived
    for t in derived:
        assert t.task_type is TaskType.CLASSIFICATION
        assert not t.is_template
        assert t.prompt
        assert t.meta["source"] == "reuse"
        assert t.meta["evolved_from"] == [source.task_id]
        assert t.meta["scene_id"] == scene.id
        assert t.answer_payload()


def test_reuse_skips_templates_and_non_embeddings():
    scene, records = make_corpus(32)
    pool = generate_tasks(scene, records, seed=32)
    assert reuse(template_for(TaskType.CLASSIFICATION),
                 TaskType.LOCALIZATION, scene) == []
    # a one-vertex answer state cannot host the three-vertex relation state
    cls = first_of_type(pool, TaskType.CLASSIFICATION)
    assert reuse(cls, TaskType.RELATIONSHIP_DETECTION, scene) == []


def test_recombination_discovers_picture_navigation():
    combos = recombine_pair(template_for(TaskType.NAVIGATION_LABEL),
                            template_for(TaskType.CLASSIFICATION))
    picture = [c for c in combos if c.task_type is TaskType.NAVIGATION_PICTURE]
    assert picture
    cand = picture[0]
    assert cand.meta["novel_shape"] is False
    assert cand.meta["source"] == "recombination"
    assert set(cand.meta["evolved_from"]) == {"navigation_label",
                                              "classification"}
    assert tasks_equivalent(
        Task("x", TaskType.NAVIGATION_PICTURE, cand.initial, cand.final),
        template_for(TaskType.NAVIGATION_PICTURE))


def test_recombination_can_exceed_the_known_catalog():
    combos = recombine_pair(template_for(TaskType.LOCALIZATION),
                            template_for(TaskType.CLASSIFICATION))
    novel = [c for c in combos if c.meta["novel_shape"]]
    assert novel
    for c in novel:
        assert c.is_template
        assert not any(tasks_equivalent(
            Task("p", TaskType.CLASSIFICATION, c.initial, c.final),
            template_for(t)) for t in TaskType)


def test_recombination_requires_matching_slot_sets():
    with pytest.raises(NoExchangeableVertices):
        recombine_pair(template_for(TaskType.EMBODIED_COUNTING),
                       template_for(TaskType.PATTERN_COUNTING))
    with pytest.raises(NoExchangeableVertices):
        recombine_pair(template_for(TaskType.CLASSIFICATION),
                       template_for(TaskType.IN_VIEW_CHECK))


def test_bound_question_slots_are_not_swappable():
    tpl = template_for(TaskType.CLASSIFICATION)
    crop = {"record_id": "r", "entity_id": "e1", "pixel_box": [0, 0, 4, 4],
            "via_mirror": False}
    pinned = Task("pinned-classification", TaskType.CLASSIFICATION,
                  tpl.initial.bind({"obj": {"image": crop}}),
                  tpl.final.bind({"obj": {"image": crop}}))
    assert pinned.is_template  # the answer label is still open
    with pytest.raises(NoExchangeableVertices):
        recombine_pair(pinned, template_for(TaskType.NAVIGATION_LABEL))


def test_evolve_instantiates_discovered_type():
    scene, records = make_corpus(32)
    pool = generate_tasks(scene, records, seed=32, types=STATIC_POOL_TYPES)
    assert not any(t.task_type is TaskType.NAVIGATION_PICTURE for t in pool)
    result = evolve(scene, pool, seed=9, budget=512, records=records)

    assert any(t.task_type is TaskType.NAVIGATION_PICTURE
               for t in result.templates)
    fresh = [t for t in result.instances
             if t.task_type is TaskType.NAVIGATION_PICTURE]
    assert fresh
    for t in fresh:
        assert not t.is_template
        assert t.meta["source"] == "recombination"
        assert "navigation_picture" in t.meta["evolved_from"]

    pool_keys = {dedupe_key(t) for t in pool}
    for t in result.instances:
        assert dedupe_key(t) not in pool_keys
    keys = [dedupe_key(t) for t in result.instances]
    assert len(keys) == len(set(keys))


def test_evolve_deterministic():
    scene, records = make_corpus(33)
    pool = generate_tasks(scene, records, seed=33, types=STATIC_POOL_TYPES)
    a = evolve(scene, pool, seed=4, budget=256, records=records)
    b = evolve(scene, pool, seed=4, budget=256, records=records)
    assert [t.task_id for t in a.instances] == [t.task_id for t in b.instances]
    assert len(a.templates) == len(b.templates)


def test_evolve_budget_truncates_and_strict_raises():
    scene, records = make_corpus(32)
    pool = generate_tasks(scene, records, seed=32, types=STATIC_POOL_TYPES)
    unbounded = evolve(scene, pool, seed=9, budget=10_000, records=records)
    assert len(unbounded.instances) > 3

    capped = evolve(scene, pool, seed=9, budget=3, records=records)
    assert len(capped.instances) == 3
    assert capped.budget_hit
    assert capped.instances == unbounded.instances[:3]

    with pytest.raises(BudgetExceeded) as exc:
        evolve(scene, pool, seed=9, budget=3, strict_budget=True,
               records=records)
    partial = exc.value.partial
    assert isinstance(partial, EvolveResult)
    assert len(partial.instances) == 3
