"""Command line entry points.

Exit codes: 0 on success, 1 on a domain error (bad scene, empty task set,
unreachable target, ...), 2 on usage errors. Every command logs its resolved
configuration, seed included, to stderr before doing work.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import filtering, harness, metrics, persist
from .errors import InsituError
from .evolution import evolve
from .generators import (GenCaps, LoopConfig, generate_tasks,
                         interactive_subset, run_loop, static_subset)
from .harness import OracleSolver, RemoteSolver, nav_metrics, run_navigation
from .rng import substream
from .scene import Scene, SceneProfile, generate_scene
from .taskmodel import TaskType

log = logging.getLogger("insitugen")


def _log_config(args: argparse.Namespace) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    log.info("command=%s config=%s", args.command,
             json.dumps(resolved, default=str, sort_keys=True))


def cmd_scene(args) -> int:
    profile = SceneProfile(
        entity_count=(args.min_entities, args.max_entities),
        mirror_probability=args.mirror_prob)
    scene = generate_scene(args.seed, profile)
    scene.save(args.out)
    log.info("scene %s: %d entities, bounds %.2f x %.2f x %.2f m", scene.id,
             len(scene.entities), *np.subtract(scene.bounds.hi, scene.bounds.lo))
    print(args.out)
    return 0


def cmd_run(args) -> int:
    scene = Scene.load(args.scene)
    config = LoopConfig(
        seed=args.seed,
        epsilon=tuple(float(e) for e in args.epsilon.split(",")),
        walk_steps=args.walk_steps,
        exec_cap=args.exec_cap,
        filter_enabled=not args.no_filter,
        filter_clusters=args.clusters,
        keep_per_loop=args.keep_per_loop if args.keep_per_loop > 0 else None)
    solver = OracleSolver(scene, [])
    result = run_loop(scene, solver, config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    persist.save_tasks(out / "tasks.jsonl", result.final_tasks)
    persist.save_records(out / "records.jsonl", result.records)
    sim_matrix = filtering.similarity(result.final_tasks)
    sim_matrix.save(out / "similarity.bin")
    mir = metrics.independence_ratio(sim_matrix.values, args.alpha)
    rows = [{"metric": "mir", "alpha": args.alpha, "value": mir.ratio,
             "mis_size": mir.mis_size, "n": mir.n, "exact": mir.exact,
             "seed": args.seed}]
    persist.write_metrics_csv(out / "metrics.csv", rows)
    log.info("loop done: %d records, %d tasks, MIR %.4f",
             len(result.records), len(result.final_tasks), mir.ratio)
    print(f"tasks={len(result.final_tasks)} MIR={mir.ratio:.2f}")
    return 0


def cmd_filter(args) -> int:
    tasks = persist.load_tasks(args.tasks)
    sim_matrix = filtering.similarity(tasks)
    if args.matrix:
        sim_matrix.save(args.matrix)
    reps = filtering.select_representatives(sim_matrix, tasks,
                                            n_clusters=args.clusters,
                                            seed=args.seed)
    persist.save_tasks(args.out, reps)
    print(f"kept {len(reps)} of {len(tasks)}")
    return 0


def cmd_evolve(args) -> int:
    scene = Scene.load(args.scene)
    tasks = persist.load_tasks(args.tasks)
    records = persist.load_records(args.records) if args.records else None
    result = evolve(scene, tasks, seed=args.seed, budget=args.budget,
                    records=records)
    persist.save_tasks(args.out, result.instances)
    print(f"evolved {len(result.instances)} instances, "
          f"{len(result.templates)} new blueprints"
          + (" (budget hit)" if result.budget_hit else ""))
    return 0


def cmd_metrics_mir(args) -> int:
    if args.matrix:
        sim_matrix = filtering.SimilarityMatrix.load(args.matrix)
    else:
        sim_matrix = filtering.similarity(persist.load_tasks(args.tasks))
    result = metrics.independence_ratio(sim_matrix.values, args.alpha,
                                        exact_force=args.exact_force)
    print(f"MIR = {result.ratio:.2f} ({result.mis_size}/{result.n}, "
          f"alpha={args.alpha}, {'exact' if result.exact else 'greedy'})")
    return 0


def cmd_metrics_spatial(args) -> int:
    scene = Scene.load(args.scene)
    tasks = persist.load_tasks(args.tasks)
    stats = metrics.spatial_stats(scene, tasks)
    print(json.dumps(stats.to_json(), sort_keys=True, indent=1))
    return 0


def cmd_metrics_ttest(args) -> int:
    a = [float(x) for x in Path(args.a).read_text().split()]
    b = [float(x) for x in Path(args.b).read_text().split()]
    result = metrics.paired_ttest(a, b)
    print(json.dumps(result.to_json(), sort_keys=True))
    return 0


def cmd_bench(args) -> int:
    scene = Scene.load(args.scene)
    tasks = persist.load_tasks(args.tasks)
    solver = RemoteSolver(args.remote) if args.remote \
        else OracleSolver(scene, tasks)
    static = harness.run_static(static_subset(tasks), solver)
    nav_tasks = interactive_subset(tasks)[:args.episodes]
    episodes = [run_navigation(scene, t, solver) for t in nav_tasks]
    nav = nav_metrics(episodes, scene)
    report = {"static": static.to_json(), "navigation": nav.to_json()}
    if args.out:
        Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=1)
                                  + "\n", encoding="utf-8")
    print(f"accuracy={static.accuracy:.3f} "
          f"mIoU={static.mean_iou if static.mean_iou is None else round(static.mean_iou, 3)} "
          f"nav_success={nav.success_rate:.3f}")
    return 0


def cmd_export(args) -> int:
    run_dir = Path(args.run_dir)
    report: dict = {"run_dir": str(run_dir)}
    tasks_path = run_dir / "tasks.jsonl"
    if tasks_path.exists():
        tasks = persist.load_tasks(tasks_path)
        report["n_tasks"] = len(tasks)
        report["by_type"] = {}
        for t in tasks:
            report["by_type"][t.task_type.value] = \
                report["by_type"].get(t.task_type.value, 0) + 1
    csv_path = run_dir / "metrics.csv"
    if csv_path.exists():
        report["metrics"] = persist.read_metrics_csv(csv_path)
    if len(report) == 1:
        raise InsituError(f"{run_dir} holds no exportable artifacts")
    Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=1)
                              + "\n", encoding="utf-8")
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="insitugen",
        description="Task generation and benchmarking in a deterministic "
                    "box-world simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene", help="generate a procedural scene")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-entities", type=int, default=8)
    p.add_argument("--max-entities", type=int, default=16)
    p.add_argument("--mirror-prob", type=float, default=0.35)
    p.set_defaults(func=cmd_scene)

    p = sub.add_parser("run", help="run the generation loop on a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--epsilon", default="1,0",
                   help="comma list, one value per loop")
    p.add_argument("--walk-steps", type=int, default=12)
    p.add_argument("--exec-cap", type=int, default=5)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--alpha", type=float, default=0.8)
    p.add_argument("--keep-per-loop", type=int, default=48,
                   help="task budget per loop; 0 disables the cap")
    p.add_argument("--no-filter", action="store_true",
                   help="ablation: replace the diversity filter with "
                        "first-come truncation")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("filter", help="reduce a task set to cluster medoids")
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clusters", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--matrix", help="also write the similarity matrix here")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("evolve", help="derive new tasks from existing ones")
    p.add_argument("--scene", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--budget", type=int, default=64)
    p.add_argument("--records", help="records.jsonl for instantiating "
                                     "recombined blueprints")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("metrics", help="diversity and distribution metrics")
    msub = p.add_subparsers(dest="metric", required=True)

    m = msub.add_parser("mir", help="independent-set diversity ratio")
    m.add_argument("--tasks")
    m.add_argument("--matrix")
    m.add_argument("--alpha", type=float, default=0.8)
    m.add_argument("--exact-force", action="store_true",
                   help="exact search even past the size cutoff")
    m.set_defaults(func=cmd_metrics_mir)

    m = msub.add_parser("spatial", help="spatial coverage of bound objects")
    m.add_argument("--scene", required=True)
    m.add_argument("--tasks", required=True)
    m.set_defaults(func=cmd_metrics_spatial)

    m = msub.add_parser("ttest", help="paired t-test on two value files")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.set_defaults(func=cmd_metrics_ttest)

    p = sub.add_parser("bench", help="score a solver on a task file")
    p.add_argument("--scene", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--remote", help="base URL of a remote solver")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="bundle run artifacts into one report")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "metric", None):
        if args.metric == "mir" and not (args.tasks or args.matrix):
            parser.error("metrics mir needs --tasks or --matrix")
    _log_config(args)
    try:
        return args.func(args)
    except InsituError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 1
    except FileNotFoundError as exc:
        log.error("missing file: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
