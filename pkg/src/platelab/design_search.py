"""Mutation-based beam search over lattice graphs.

Six operators mutate a unit-cell graph: perturb node positions, scale a
few beam radii by a shared factor, add a beam between unconnected
nodes, remove a beam, split a beam at its midpoint, or rescale every
radius independently. A mutation composes 1-3 operators; composed
graphs must pass validation and a fast capsule-volume bound before
they are evaluated.

Candidates are scored s = W_stretch / (W_shear * v_f + 1e-8): stiff
along the pull axis, compliant in transverse shear, light. The search
keeps the top-B scored candidates (parents compete with children, so
the best score never regresses), expanding each by M mutations per
iteration. Evaluation is pluggable; the built-in evaluator meshes the
graph and integrates two quasi-static rollouts, one per loading axis.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constitutive import NeoHookeanMaterial
from .errors import DegenerateGeometryError, DivergedSolve, MeshRejectedError
from .fem_solver import SolverConfig
from .lattice_graph import LatticeGraph, validate_graph
from .mesh_forge import auto_scale, build_plate_mesh
from .world_env import Action, Session, rollout

OPERATOR_TAGS = ("perturb_nodes", "scale_radii", "add_beam", "remove_beam",
                 "split_beam", "randomize_radii")
OPERATOR_PROBS = (0.25, 0.20, 0.15, 0.15, 0.15, 0.10)
COMPOSE_PROBS = (0.6, 0.3, 0.1)

NODE_PERTURB_SIGMA = 0.08
RADIUS_LOG_SIGMA = 0.15
NEW_BEAM_RADIUS_RANGE = (0.005, 0.04)
VF_BOUNDS = (0.001, 0.5)
SCORE_EPS = 1e-8


class OperatorInapplicable(Exception):
    """The sampled operator cannot apply to this graph; resample."""


@dataclass
class Candidate:
    cand_id: int
    graph: LatticeGraph
    parent: int | None
    operators: list
    valid: bool = True
    diverged: bool = False
    w_stretch: float | None = None
    w_shear: float | None = None
    v_f: float | None = None
    score: float | None = None


@dataclass
class SearchConfig:
    beam_width: int = 5
    mutations_per_parent: int = 8
    iterations: int = 10
    resample_cap: int = 20
    compose_probs: tuple = COMPOSE_PROBS
    operator_probs: tuple = OPERATOR_PROBS
    eval_steps: int = 20
    seed: int = 0
    resolution: int = 10
    tiling: tuple = (5, 5, 1)

    def __post_init__(self):
        if min(self.beam_width, self.mutations_per_parent, self.iterations) < 1:
            raise ValueError("beam width, mutations per parent, and iteration "
                             "count must all be >= 1")
        for probs in (self.compose_probs, self.operator_probs):
            if abs(sum(probs) - 1.0) > 1e-9:
                raise ValueError("probabilities must sum to 1")

    @property
    def attempts_per_parent(self) -> int:
        return int(self.mutations_per_parent * 1.5)

    def to_json(self) -> dict:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__}
        doc["compose_probs"] = list(self.compose_probs)
        doc["operator_probs"] = list(self.operator_probs)
        doc["tiling"] = list(self.tiling)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "SearchConfig":
        known = {k: doc[k] for k in doc if k in cls.__dataclass_fields__}
        for key in ("compose_probs", "operator_probs", "tiling"):
            if key in known:
                known[key] = tuple(known[key])
        return cls(**known)


@dataclass
class SearchLog:
    config: SearchConfig
    candidates: list
    beams: list            # per-iteration lists of candidate ids
    winner: int

    def best_scores(self) -> list:
        by_id = {c.cand_id: c for c in self.candidates}
        return [max(by_id[i].score for i in beam) for beam in self.beams]


# -- operators --------------------------------------------------------------


def apply_operator(g: LatticeGraph, tag: str, rng) -> LatticeGraph:
    """Apply one named mutation, returning a new graph.

    Raises OperatorInapplicable when the graph cannot support the
    operator (no beams to remove, no unconnected pair to join); the
    caller treats that as a rejected sample.
    """
    out = g.copy()
    n, m = out.nodes.shape[0], out.beams.shape[0]
    if tag == "perturb_nodes":
        k = min(int(rng.integers(1, 4)), n)
        idx = rng.choice(n, size=k, replace=False)
        out.nodes[idx] += rng.normal(0.0, NODE_PERTURB_SIGMA, size=(k, 3))
    elif tag == "scale_radii":
        if m == 0:
            raise OperatorInapplicable(tag)
        k = min(int(rng.integers(1, 5)), m)
        idx = rng.choice(m, size=k, replace=False)
        out.radii[idx] *= np.exp(rng.normal(0.0, RADIUS_LOG_SIGMA))
    elif tag == "add_beam":
        have = {tuple(sorted(b)) for b in out.beams.tolist()}
        free = [(i, j) for i in range(n) for j in range(i + 1, n)
                if (i, j) not in have]
        if not free:
            raise OperatorInapplicable(tag)
        i, j = free[int(rng.integers(0, len(free)))]
        r = rng.uniform(*NEW_BEAM_RADIUS_RANGE)
        out.beams = np.vstack([out.beams, [i, j]])
        out.radii = np.append(out.radii, r)
    elif tag == "remove_beam":
        if m == 0:
            raise OperatorInapplicable(tag)
        k = int(rng.integers(0, m))
        keep = np.arange(m) != k
        out.beams = out.beams[keep]
        out.radii = out.radii[keep]
    elif tag == "split_beam":
        if m == 0:
            raise OperatorInapplicable(tag)
        k = int(rng.integers(0, m))
        i, j = out.beams[k]
        mid = 0.5 * (out.nodes[i] + out.nodes[j])
        r = out.radii[k]            # midpoint interpolation of equal ends
        new = n
        out.nodes = np.vstack([out.nodes, mid])
        out.beams[k] = (i, new)
        out.beams = np.vstack([out.beams, [new, j]])
        out.radii = np.append(out.radii, r)
    elif tag == "randomize_radii":
        if m == 0:
            raise OperatorInapplicable(tag)
        out.radii *= np.exp(rng.normal(0.0, RADIUS_LOG_SIGMA, size=m))
    else:
        raise ValueError(f"unknown operator {tag!r}")
    return out


def estimate_volume_fraction(g: LatticeGraph) -> float:
    """Capsule-sum volume bound on the auto-scaled expanded cell.

    Junction overlaps are ignored, so this is cheap and slightly
    overcounts; the evaluated v_f comes from the mesh.
    """
    from .lattice_graph import expand_symmetry
    ex = expand_symmetry(g, dedup=True)
    scaled, _ = auto_scale(ex)
    seg = scaled.endpoints[:, 1] - scaled.endpoints[:, 0]
    length = np.linalg.norm(seg, axis=1)
    r = scaled.radii
    vol = np.pi * r ** 2 * length + (4.0 / 3.0) * np.pi * r ** 3
    return float(vol.sum())


def sample_operator_count(rng, cfg: SearchConfig) -> int:
    return int(rng.choice((1, 2, 3), p=cfg.compose_probs))


def sample_operator_tag(rng, cfg: SearchConfig) -> str:
    return str(rng.choice(OPERATOR_TAGS, p=cfg.operator_probs))


def compose_mutation(g: LatticeGraph, rng, cfg: SearchConfig):
    """Sample 1-3 operators, apply them, and validate the result.

    Returns (graph, operator tags) or None after the resample budget is
    spent; rejection is a value, not an error.
    """
    for _ in range(cfg.resample_cap):
        tags = [sample_operator_tag(rng, cfg)
                for _ in range(sample_operator_count(rng, cfg))]
        candidate = g
        try:
            for tag in tags:
                candidate = apply_operator(candidate, tag, rng)
        except OperatorInapplicable:
            continue
        if not validate_graph(candidate).passed:
            continue
        try:
            vf = estimate_volume_fraction(candidate)
        except DegenerateGeometryError:
            continue
        if not VF_BOUNDS[0] <= vf <= VF_BOUNDS[1]:
            continue
        return candidate, tags
    return None


def design_score(w_stretch: float, w_shear: float, v_f: float) -> float:
    return w_stretch / (w_shear * v_f + SCORE_EPS)


# -- evaluators -------------------------------------------------------------


STRETCH_ACTION = Action(stretch=1.0)
SHEAR_ACTION = Action(shear_y=1.0)


@dataclass
class FemEvaluator:
    """Mesh the graph and integrate two quasi-static loading rollouts."""

    material: NeoHookeanMaterial = field(
        default_factory=lambda: NeoHookeanMaterial(mu=1.0, lam=10.0))
    solver: SolverConfig = field(default_factory=SolverConfig.lattice_defaults)

    def evaluate(self, graph: LatticeGraph, cfg: SearchConfig):
        mesh, report = build_plate_mesh(graph, resolution=cfg.resolution,
                                        tiling=cfg.tiling)
        session = Session(mesh, self.material, "quasistatic", cfg=self.solver)
        w = []
        for action, axis in ((STRETCH_ACTION, 0), (SHEAR_ACTION, 2)):
            traj = rollout(session, [action] * cfg.eval_steps)
            if traj.failure is not None:
                raise DivergedSolve(
                    f"evaluation rollout diverged at step {traj.failure['step']}")
            w.append(float(traj.frames[-1].work_cum[axis]))
            session.reset()
        return w[0], w[1], float(report.volume_fraction)


@dataclass
class GraphFeatureEvaluator:
    """Cheap analytic stand-in for tests and dry runs (no meshing)."""

    def evaluate(self, graph: LatticeGraph, cfg: SearchConfig):
        from .lattice_graph import graph_statistics
        stats = graph_statistics(graph)
        v_f = float(np.clip(estimate_volume_fraction(graph), 1e-3, 1.0))
        w_stretch = 1.0 + stats[1] * stats[6]     # beam count * mean radius
        w_shear = 0.5 + stats[2]                  # mean beam length
        return float(w_stretch), float(w_shear), v_f


def evaluate_candidate(cand: Candidate, evaluator, cfg: SearchConfig) -> Candidate:
    """Fill in metrics and score, or mark the candidate failed."""
    try:
        w_s, w_h, v_f = evaluator.evaluate(cand.graph, cfg)
    except (DivergedSolve, MeshRejectedError, DegenerateGeometryError):
        cand.diverged = True
        return cand
    cand.w_stretch, cand.w_shear, cand.v_f = w_s, w_h, v_f
    cand.score = design_score(w_s, w_h, v_f)
    return cand


# -- search loop ------------------------------------------------------------


def beam_search(seed_graph: LatticeGraph, evaluator, cfg: SearchConfig,
                progress=None, should_stop=None) -> SearchLog:
    """Elitist beam search from a seed graph.

    Iteration 0 evaluates the seed; each later iteration grows up to M
    mutated children per beam member (capped at floor(1.5 M) attempts),
    evaluates them, and keeps the top-B of parents plus children. If an
    iteration produces no scored children the beam carries over with a
    warning.

    ``progress(iteration, candidates, beams)`` fires after the seed and
    after every completed iteration. ``should_stop()`` is polled between
    evaluations; when it turns true the search returns the log built so
    far (the current beam stands, mid-iteration children keep whatever
    metrics they already have).
    """
    rng = np.random.default_rng(cfg.seed)
    stop = should_stop if should_stop is not None else (lambda: False)
    if not validate_graph(seed_graph).passed:
        raise ValueError("seed graph fails validation")
    seed_cand = evaluate_candidate(
        Candidate(0, seed_graph.copy(), None, []), evaluator, cfg)
    if seed_cand.score is None:
        raise ValueError("seed graph is not evaluable")
    candidates = [seed_cand]
    beam = [0]
    beams = [[0]]
    if progress is not None:
        progress(0, candidates, beams)

    for it in range(cfg.iterations):
        if stop():
            break
        by_id = {c.cand_id: c for c in candidates}
        children = []
        for parent_id in beam:
            parent = by_id[parent_id]
            made = 0
            for _attempt in range(cfg.attempts_per_parent):
                if made >= cfg.mutations_per_parent:
                    break
                res = compose_mutation(parent.graph, rng, cfg)
                if res is None:
                    continue
                child_graph, tags = res
                child = Candidate(len(candidates) + len(children),
                                  child_graph, parent_id, list(tags))
                children.append(child)
                made += 1
        stopped = False
        evaluated = []
        for child in children:
            if stop():
                stopped = True
                break
            evaluate_candidate(child, evaluator, cfg)
            evaluated.append(child)
        candidates.extend(evaluated)
        if stopped:
            break
        scored_children = [c for c in evaluated if c.score is not None]
        if not scored_children:
            warnings.warn("search iteration produced no scored children; "
                          "beam carried over")
            beams.append(list(beam))
        else:
            pool = [by_id[i] for i in beam] + scored_children
            pool.sort(key=lambda c: (-c.score, c.cand_id))
            beam = [c.cand_id for c in pool[:cfg.beam_width]]
            beams.append(list(beam))
        if progress is not None:
            progress(it + 1, candidates, beams)

    by_id = {c.cand_id: c for c in candidates}
    winner = max(beam, key=lambda i: (by_id[i].score, -i))
    return SearchLog(config=cfg, candidates=candidates, beams=beams,
                     winner=winner)


# -- log serialization ------------------------------------------------------


def candidates_to_jsonl(candidates) -> str:
    """One candidate per line; key order fixed for byte determinism."""
    lines = []
    for c in candidates:
        doc = {"id": c.cand_id, "parent": c.parent, "operators": c.operators,
               "valid": c.valid, "diverged": c.diverged,
               "W_stretch": c.w_stretch, "W_shear": c.w_shear,
               "v_f": c.v_f, "s": c.score}
        lines.append(json.dumps(doc, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines) + "\n"


def search_log_to_jsonl(log: SearchLog) -> str:
    return candidates_to_jsonl(log.candidates)


def save_search_log(log: SearchLog, path) -> None:
    Path(path).write_text(search_log_to_jsonl(log), encoding="utf-8")
