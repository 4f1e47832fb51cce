"""Similarity-based task filtering.

Tasks are embedded per modality (text of bound labels, prompt wording, crop
statistics) with fixed hash encoders, so the whole filter is deterministic
and needs no learned model. Pairwise similarity averages cosine over the
modalities either task carries; a modality present on one side only counts
as zero agreement, absent on both sides it drops out of the average.

Clustering is spectral: symmetric normalized Laplacian, smallest-k
eigenvectors, then seeded k-means on the row-normalized spectral embedding.
Each cluster is reduced to its medoid.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateAffinity, EmptyTaskSet
from .rng import substream
from .taskmodel import Task, UNBOUND

SIM_SCHEMA = "insitugen/simmatrix"
SIM_SCHEMA_VERSION = 1

LABEL_DIM = 256
PROMPT_DIM = 512
IMAGE_DIM = 64
MODALITIES = ("image", "label", "prompt")


def _bucket(data: str, dim: int) -> int:
    h = hashlib.blake2b(data.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") % dim


def encode_label_text(text: str) -> np.ndarray:
    """Character trigram counts hashed into a fixed-width vector."""
    v = np.zeros(LABEL_DIM)
    padded = f"^{text}$"
    for i in range(len(padded) - 2):
        v[_bucket(padded[i:i + 3], LABEL_DIM)] += 1.0
    return v


def encode_prompt(text: str) -> np.ndarray:
    v = np.zeros(PROMPT_DIM)
    for token in text.lower().split():
        v[_bucket(token.strip(".,?!'\""), PROMPT_DIM)] += 1.0
    return v


def encode_crop(ref: dict, camera: dict) -> np.ndarray:
    """Geometry of the crop plus a hashed identity of what it shows."""
    w, h = float(camera["width"]), float(camera["height"])
    x0, y0, x1, y1 = ref["pixel_box"]
    v = np.zeros(IMAGE_DIM)
    v[0] = (x0 + x1) / (2.0 * w)
    v[1] = (y0 + y1) / (2.0 * h)
    v[2] = (x1 - x0) / w
    v[3] = (y1 - y0) / h
    v[4] = min(float(ref.get("mean_depth_m", 0.0)) / 10.0, 1.0)
    v[5] = np.log1p(float(ref.get("pixel_count", 0))) / 10.0
    v[6] = 1.0 if ref.get("via_mirror") else 0.0
    v[8 + _bucket(str(ref.get("entity_id")), IMAGE_DIM - 8)] = 1.0
    return v


def _bound_text(task: Task) -> str:
    words = []
    for g in (task.initial, task.final):
        for vx in g.vertices:
            for name in ("label", "color"):
                val = vx.slots.get(name)
                if val is not None and val is not UNBOUND:
                    words.append(str(val))
        for e in g.edges:
            val = e.slots.get("relation")
            if val is not None and val is not UNBOUND:
                words.append(str(val))
    return " ".join(sorted(set(words)))


def _crops(task: Task) -> list[dict]:
    out = []
    for vx in task.initial.vertices:
        val = vx.slots.get("image")
        if isinstance(val, dict) and "pixel_box" in val:
            out.append(val)
    return out


def modality_vectors(task: Task) -> dict[str, np.ndarray]:
    vecs: dict[str, np.ndarray] = {}
    text = _bound_text(task)
    if text:
        vecs["label"] = encode_label_text(text)
    if task.prompt:
        vecs["prompt"] = encode_prompt(task.prompt)
    crops = _crops(task)
    if crops:
        camera = task.meta.get("pose", {}).get("camera",
                                               {"width": 128, "height": 96})
        stack = np.stack([encode_crop(c, camera) for c in crops])
        vecs["image"] = stack.mean(axis=0)
    return vecs


@dataclass(frozen=True)
class SimilarityMatrix:
    task_ids: tuple[str, ...]
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.task_ids)

    def save(self, path: str | Path) -> None:
        """One JSON header line, then row-major float64 little-endian."""
        header = json.dumps({"schema": SIM_SCHEMA,
                             "schema_version": SIM_SCHEMA_VERSION,
                             "n": self.n, "dtype": "<f8", "order": "C",
                             "task_ids": list(self.task_ids)},
                            sort_keys=True)
        with open(path, "wb") as f:
            f.write(header.encode("utf-8") + b"\n")
            f.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "SimilarityMatrix":
        from .errors import SchemaVersionError
        with open(path, "rb") as f:
            header = json.loads(f.readline().decode("utf-8"))
            if header.get("schema") != SIM_SCHEMA \
                    or header.get("schema_version") != SIM_SCHEMA_VERSION:
                raise SchemaVersionError(f"bad similarity header: {header}")
            n = header["n"]
            data = np.frombuffer(f.read(), dtype="<f8").reshape(n, n)
        return cls(tuple(header["task_ids"]), data.copy())


def similarity(tasks: list[Task]) -> SimilarityMatrix:
    """Pairwise mean-over-modalities cosine, clamped to [0, 1]."""
    if not tasks:
        raise EmptyTaskSet("similarity of an empty task list")
    n = len(tasks)
    per_task = [modality_vectors(t) for t in tasks]
    total = np.zeros((n, n))
    union = np.zeros((n, n))
    dims = {"label": LABEL_DIM, "prompt": PROMPT_DIM, "image": IMAGE_DIM}
    for mod in MODALITIES:
        present = np.array([mod in v for v in per_task])
        if not present.any():
            continue
        mat = np.zeros((n, dims[mod]))
        for i, v in enumerate(per_task):
            if mod in v:
                mat[i] = v[mod]
        norms = np.linalg.norm(mat, axis=1)
        safe = np.where(norms > 0, norms, 1.0)
        unit = mat / safe[:, None]
        total += unit @ unit.T
        union += (present[:, None] | present[None, :]).astype(float)
    values = np.divide(total, union, out=np.zeros_like(total),
                       where=union > 0)
    values = np.clip(values, 0.0, 1.0)
    if not np.isfinite(values).all():
        raise DegenerateAffinity("similarity produced non-finite entries")
    return SimilarityMatrix(tuple(t.task_id for t in tasks), values)


# --- spectral clustering ---------------------------------------------------------


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
            n_iter: int = 100) -> tuple[np.ndarray, float]:
    n = len(points)
    # k-means++ seeding
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(0, n))
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        s = d2.sum()
        if s <= 1e-18:
            idx = int(rng.integers(0, n))
        else:
            idx = int(rng.choice(n, p=d2 / s))
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))

    labels = np.zeros(n, dtype=int)
    for _ in range(n_iter):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        for c in range(k):
            members = new_labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
            else:  # reseed an empty cluster at the worst-served point
                far = int(dist[np.arange(n), new_labels].argmax())
                centers[c] = points[far]
                new_labels[far] = c
        if (new_labels == labels).all():
            labels = new_labels
            break
        labels = new_labels
    dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    inertia = float(dist[np.arange(n), labels].sum())
    return labels, inertia


def kmeans(points: np.ndarray, k: int, seed: int,
           restarts: int = 8) -> np.ndarray:
    rng = substream(seed, "kmeans")
    best, best_inertia = None, np.inf
    for _ in range(restarts):
        labels, inertia = _kmeans(points, k, rng)
        if inertia < best_inertia - 1e-12:
            best, best_inertia = labels, inertia
    return best


def spectral_cluster(sim: SimilarityMatrix, n_clusters: int,
                     seed: int) -> np.ndarray:
    """Cluster labels per task. Rows with no affinity to anything become
    singleton clusters beyond the requested k."""
    n = sim.n
    if n == 0:
        raise EmptyTaskSet("clustering an empty similarity matrix")
    a = np.clip(np.asarray(sim.values, dtype=float), 0.0, 1.0).copy()
    a = (a + a.T) / 2.0
    np.fill_diagonal(a, 0.0)

    degree = a.sum(axis=1)
    isolated = np.flatnonzero(degree <= 1e-12)
    active = np.flatnonzero(degree > 1e-12)
    labels = np.full(n, -1, dtype=int)

    k = min(n_clusters, len(active))
    if k > 0:
        sub = a[np.ix_(active, active)]
        d = sub.sum(axis=1)
        d_inv = 1.0 / np.sqrt(np.maximum(d, 1e-300))
        lap = np.eye(len(active)) - d_inv[:, None] * sub * d_inv[None, :]
        eigvals, eigvecs = np.linalg.eigh(lap)
        emb = eigvecs[:, :k]
        norms = np.linalg.norm(emb, axis=1)
        emb = emb / np.where(norms > 0, norms, 1.0)[:, None]
        if k == 1:
            labels[active] = 0
        else:
            labels[active] = kmeans(emb, k, seed)

    next_label = k
    for i in isolated:
        labels[i] = next_label
        next_label += 1
    return labels


def cluster_medoids(sim: SimilarityMatrix, labels: np.ndarray) -> list[int]:
    """Index of the most central member of each cluster; ties go to the
    lowest index. Sorted ascending for a stable downstream order."""
    meds = []
    for c in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == c)
        block = sim.values[np.ix_(members, members)]
        mean_sim = block.mean(axis=1)
        meds.append(int(members[int(mean_sim.argmax())]))
    return sorted(meds)


def select_representatives(sim: SimilarityMatrix, tasks: list[Task],
                           n_clusters: int, seed: int) -> list[Task]:
    if len(tasks) != sim.n:
        raise ValueError("similarity matrix and task list disagree")
    labels = spectral_cluster(sim, n_clusters, seed)
    return [tasks[i] for i in cluster_medoids(sim, labels)]
