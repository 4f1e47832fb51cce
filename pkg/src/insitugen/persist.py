"""On-disk formats.

Every JSONL file starts with a header record naming its schema and version;
readers reject anything else. Serialization is sorted-key JSON with plain
ASCII, so identical inputs give byte-identical files. Rasters go to .npy
(no archive timestamps) and are always recomputable from scene plus pose,
so a missing raster with a scene at hand is not an error.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import MissingArtifact, SchemaVersionError
from .scene import Scene
from .sim import ObservationRecord, RenderResult, render
from .taskmodel import Task

FORMAT_VERSIONS = {
    "tasks": 1,
    "records": 1,
    "episodes": 1,
}


def _header(kind: str) -> dict:
    return {"schema": f"insitugen/{kind}", "schema_version": FORMAT_VERSIONS[kind]}


def write_jsonl(path: str | Path, kind: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(_header(kind), sort_keys=True) + "\n")
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: str | Path, kind: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
        if not first:
            raise SchemaVersionError(f"{path}: empty file, no header")
        header = json.loads(first)
        expected = _header(kind)
        if header != expected:
            raise SchemaVersionError(
                f"{path}: expected header {expected}, got {header}")
        return [json.loads(line) for line in f if line.strip()]


def save_tasks(path: str | Path, tasks: list[Task]) -> None:
    write_jsonl(path, "tasks", [t.to_json() for t in tasks])


def load_tasks(path: str | Path) -> list[Task]:
    return [Task.from_json(d) for d in read_jsonl(path, "tasks")]


def save_records(path: str | Path, records: list[ObservationRecord]) -> None:
    write_jsonl(path, "records", [r.to_json() for r in records])


def load_records(path: str | Path) -> list[ObservationRecord]:
    return [ObservationRecord.from_json(d) for d in read_jsonl(path, "records")]


def save_raster(directory: str | Path, record: ObservationRecord) -> None:
    if record.raster is None:
        raise MissingArtifact(f"{record.record_id} carries no raster")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / f"{record.record_id}.instance.npy",
            record.raster.instance)
    np.save(directory / f"{record.record_id}.depth.npy", record.raster.depth)
    np.save(directory / f"{record.record_id}.mirror.npy",
            record.raster.via_mirror)


def load_raster(directory: str | Path, record: ObservationRecord,
                scene: Scene | None = None) -> RenderResult:
    """Stored raster if present; recomputed from the scene otherwise."""
    directory = Path(directory)
    paths = [directory / f"{record.record_id}.{part}.npy"
             for part in ("instance", "depth", "mirror")]
    if all(p.exists() for p in paths):
        return RenderResult(np.load(paths[0]), np.load(paths[1]),
                            np.load(paths[2]))
    if scene is None:
        raise MissingArtifact(
            f"no stored raster for {record.record_id} and no scene to re-render")
    return render(scene, record.pose)


def write_metrics_csv(path: str | Path, rows: list[dict]) -> None:
    """Deterministic CSV: union of keys, sorted, repr floats, \\n endings."""
    keys = sorted({k for row in rows for k in row})
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(keys)
        for row in rows:
            writer.writerow([_cell(row.get(k)) for k in keys])


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def read_metrics_csv(path: str | Path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
