"""File formats: headered JSONL round-trips, byte-level determinism, raster
store with re-render fallback, and the flat metrics CSV."""

import json

import numpy as np
import pytest

from conftest import make_corpus
from insitugen.errors import MissingArtifact, SchemaVersionError
from insitugen.generators import generate_tasks
from insitugen.persist import (load_raster, load_records, load_tasks,
                               read_jsonl, read_metrics_csv, save_raster,
                               save_records, save_tasks, write_metrics_csv)
from insitugen.sim import observe


def test_tasks_round_trip_and_stable_bytes(tmp_path):
    scene, records = make_corpus(46, steps=8)
    tasks = generate_tasks(scene, records, seed=46)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_tasks(p1, tasks)
    back = load_tasks(p1)
    assert [t.to_json() for t in back] == [t.to_json() for t in tasks]
    assert all(b.answer_payload() == t.answer_payload()
               for b, t in zip(back, tasks) if not t.is_interactive)
    save_tasks(p2, back)
    assert p1.read_bytes() == p2.read_bytes()
    header = json.loads(p1.read_text().splitlines()[0])
    assert header == {"schema": "insitugen/tasks", "schema_version": 1}


def test_identical_seeds_give_identical_files(tmp_path):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for p in (p1, p2):
        scene, records = make_corpus(47, steps=6)
        save_tasks(p, generate_tasks(scene, records, seed=47))
    assert p1.read_bytes() == p2.read_bytes()


def test_reader_rejects_foreign_headers(tmp_path):
    scene, records = make_corpus(48, steps=3)
    p = tmp_path / "tasks.jsonl"
    save_tasks(p, generate_tasks(scene, records, seed=48))
    with pytest.raises(SchemaVersionError):
        read_jsonl(p, "records")
    lines = p.read_text().splitlines()
    lines[0] = lines[0].replace('"schema_version": 1', '"schema_version": 99')
    p.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaVersionError):
        load_tasks(p)
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    with pytest.raises(SchemaVersionError):
        read_jsonl(empty, "tasks")


def test_records_round_trip(tmp_path):
    scene, records = make_corpus(49, steps=5)
    p = tmp_path / "records.jsonl"
    save_records(p, records)
    back = load_records(p)
    assert back == records
    assert [r.to_json() for r in back] == [r.to_json() for r in records]


def test_raster_store_and_fallback(tmp_path):
    scene, _ = make_corpus(50, steps=1)
    with_raster = observe(scene, scene.agent_spawn, 0, keep_raster=True)
    bare = observe(scene, scene.agent_spawn, 0)
    assert bare.raster is None
    with pytest.raises(MissingArtifact):
        save_raster(tmp_path, bare)

    save_raster(tmp_path, with_raster)
    loaded = load_raster(tmp_path, bare)
    assert np.array_equal(loaded.instance, with_raster.raster.instance)
    assert np.array_equal(loaded.depth, with_raster.raster.depth)
    assert np.array_equal(loaded.via_mirror, with_raster.raster.via_mirror)

    (tmp_path / f"{bare.record_id}.depth.npy").unlink()
    rerendered = load_raster(tmp_path, bare, scene=scene)
    assert np.array_equal(rerendered.instance, with_raster.raster.instance)
    assert np.array_equal(rerendered.depth, with_raster.raster.depth)
    with pytest.raises(MissingArtifact):
        load_raster(tmp_path, bare)


def test_metrics_csv_layout_and_determinism(tmp_path):
    rows = [{"scene": "s1", "mir": 0.6163, "exact": True},
            {"scene": "s2", "mir": 1 / 3, "n": 12, "exact": False},
            {"scene": "s3", "mir": None}]
    p1, p2 = tmp_path / "m1.csv", tmp_path / "m2.csv"
    write_metrics_csv(p1, rows)
    write_metrics_csv(p2, rows)
    assert p1.read_bytes() == p2.read_bytes()

    text = p1.read_text().splitlines()
    assert text[0] == "exact,mir,n,scene"  # union of keys, sorted
    back = read_metrics_csv(p1)
    assert back[0]["exact"] == "true" and back[1]["exact"] == "false"
    assert float(back[1]["mir"]) == 1 / 3  # repr floats survive exactly
    assert back[2]["mir"] == "" and back[2]["n"] == ""
