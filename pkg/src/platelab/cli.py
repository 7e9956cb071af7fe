"""Command-line entry points: simulate, dataset, search, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .constitutive import ViscoMaterial, material_from_json
from .design_search import (
    FemEvaluator,
    GraphFeatureEvaluator,
    SearchConfig,
    beam_search,
    save_search_log,
)
from .lattice_graph import parse_graph
from .service_api import run_server
from .world_env import (
    Action,
    create_session,
    export_trajectory,
    gen_action_sequence,
    generate_dataset,
    rollout,
)


def _tiling(text: str) -> tuple:
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("tiling takes three integers: X,Y,Z")
    return parts


def _load_actions(path) -> list:
    """Action sequence file: either a list of 4-vectors or a sampler spec
    {"kind": ..., "steps": ..., "seed": ..., "block": ...}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(doc, list):
        return [Action.from_array(a) for a in doc]
    return gen_action_sequence(doc["kind"], int(doc["steps"]),
                               seed=int(doc.get("seed", 0)),
                               block=int(doc.get("block", 1)))


def cmd_simulate(args) -> int:
    graph = parse_graph(Path(args.graph).read_text(encoding="utf-8"))
    material = material_from_json(
        json.loads(Path(args.material).read_text(encoding="utf-8")))
    regime = "dynamic" if isinstance(material, ViscoMaterial) else "quasistatic"
    actions = _load_actions(args.actions)
    session = create_session(graph, material, regime, seed=args.seed,
                             resolution=args.resolution, tiling=args.tiling)
    traj = rollout(session, actions)
    export_trajectory(traj, args.out)
    if traj.failure is not None:
        print(f"diverged at step {traj.failure['step']}; "
              f"wrote partial trajectory to {args.out}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}: {len(traj.frames)} frames over "
          f"{session.mesh.n_nodes} nodes")
    return 0


def cmd_dataset(args) -> int:
    graphs = sorted(Path(args.graphs).glob("*.json"))
    if not graphs:
        print(f"no graph files under {args.graphs}", file=sys.stderr)
        return 1
    written = generate_dataset(graphs, args.out, args.trajectories, args.steps,
                               seed=args.seed, kind=args.kind,
                               block=args.block, resolution=args.resolution,
                               tiling=args.tiling)
    print(f"wrote {len(written)} trajectories to {args.out}")
    return 0


def cmd_search(args) -> int:
    graph = parse_graph(Path(args.seed).read_text(encoding="utf-8"))
    if args.config is not None:
        cfg = SearchConfig.from_json(
            json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        cfg = SearchConfig()
    evaluator = (GraphFeatureEvaluator() if args.evaluator == "features"
                 else FemEvaluator())

    def progress(iteration, candidates, beams):
        by_id = {c.cand_id: c for c in candidates}
        best = max(by_id[i].score for i in beams[-1])
        print(f"iteration {iteration}: {len(candidates)} candidates, "
              f"best score {best:.6g}", file=sys.stderr)

    log = beam_search(graph, evaluator, cfg, progress=progress)
    save_search_log(log, args.out)
    winner = next(c for c in log.candidates if c.cand_id == log.winner)
    print(f"wrote {args.out}: winner candidate {winner.cand_id} "
          f"score {winner.score:.6g}")
    return 0


def cmd_serve(args) -> int:
    run_server(bind=args.bind, data_dir=args.data)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="platelab",
        description="Lattice plates: simulate loading, build datasets, "
                    "search designs, serve the interactive API.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate",
                         help="roll a graph through an action sequence")
    sim.add_argument("--graph", required=True, help="lattice graph JSON file")
    sim.add_argument("--material", required=True, help="material JSON file")
    sim.add_argument("--actions", required=True,
                     help="JSON action list or sampler spec")
    sim.add_argument("--out", required=True, help="output trajectory file")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--resolution", type=int, default=10)
    sim.add_argument("--tiling", type=_tiling, default=(5, 5, 1))
    sim.set_defaults(func=cmd_simulate)

    ds = sub.add_parser("dataset",
                        help="export trajectories for a directory of graphs")
    ds.add_argument("--graphs", required=True, help="directory of graph JSON")
    ds.add_argument("--trajectories", type=int, required=True,
                    help="trajectories per graph")
    ds.add_argument("--steps", type=int, default=30)
    ds.add_argument("--seed", type=int, default=0)
    ds.add_argument("--out", required=True, help="output directory")
    ds.add_argument("--kind", default="random",
                    choices=("random", "load_reverse"))
    ds.add_argument("--block", type=int, default=1)
    ds.add_argument("--resolution", type=int, default=10)
    ds.add_argument("--tiling", type=_tiling, default=(5, 5, 1))
    ds.set_defaults(func=cmd_dataset)

    se = sub.add_parser("search", help="run a beam search from a seed graph")
    se.add_argument("--seed", required=True, help="seed graph JSON file")
    se.add_argument("--config", default=None, help="search config JSON file")
    se.add_argument("--out", required=True, help="output JSON-lines log")
    se.add_argument("--evaluator", default="fem",
                    choices=("fem", "features"))
    se.set_defaults(func=cmd_search)

    sv = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    sv.add_argument("--bind", default=None, help="host:port to listen on")
    sv.add_argument("--data", default=None,
                    help="directory for trajectories persisted on close")
    sv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
