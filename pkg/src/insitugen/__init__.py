"""Interaction-driven task generation in a deterministic box-world simulator.

The pipeline: procedural scenes, an embodied agent that renders and moves,
graph-structured tasks generated from its observations, a spectral diversity
filter, task evolution by reuse and recombination, and a benchmark harness
with independent-set diversity metrics.
"""

from .errors import InsituError
from .filtering import SimilarityMatrix, select_representatives, similarity
from .generators import GenCaps, LoopConfig, generate_tasks, ground, run_loop
from .harness import (NavEpisode, NavMetrics, OracleSolver, RemoteSolver,
                      nav_metrics, run_navigation, run_static)
from .metrics import (evolution_gain, independence_ratio, max_independent_set,
                      paired_ttest, spatial_stats)
from .scene import AgentPose, CameraModel, Scene, SceneProfile, generate_scene
from .sim import ObservationRecord, observe, random_walk, render, step
from .taskmodel import (Diff, Task, TaskGraph, TaskType, UNBOUND, Vertex,
                        Edge, find_embeddings, is_substructure, reconstruct,
                        state_diff, template_for)

__version__ = "0.1.0"

__all__ = [
    "AgentPose", "CameraModel", "Diff", "Edge", "GenCaps", "InsituError",
    "LoopConfig", "NavEpisode", "NavMetrics", "ObservationRecord",
    "OracleSolver", "RemoteSolver", "Scene", "SceneProfile",
    "SimilarityMatrix", "Task", "TaskGraph", "TaskType", "UNBOUND", "Vertex",
    "evolution_gain", "find_embeddings", "generate_scene", "generate_tasks",
    "ground", "independence_ratio", "is_substructure", "max_independent_set",
    "nav_metrics", "observe", "paired_ttest", "random_walk", "reconstruct",
    "render", "run_loop", "run_navigation", "run_static",
    "select_representatives", "similarity", "spatial_stats", "state_diff",
    "step", "template_for",
]
