"""Lattice unit-cell graphs: parsing, validation, symmetry expansion, statistics.

A unit cell is described by a small undirected graph. Nodes are 3D points in
cell coordinates (cell centre at the origin), beams are node-index pairs with
a circular cross-section radius. The full cell geometry is the orbit of the
beam list under the 48-element octahedral symmetry group (all axis
permutations combined with per-axis sign flips).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphFormatError

# Validity bounds for designs produced or accepted by the search loop.
COORD_BOUND = 1.5
RADIUS_MAX = 0.5

# Endpoints closer than this (after a symmetry op, per component) are the
# same point for deduplication purposes.
DEDUP_TOL = 1e-12

N_GRAPH_FEATURES = 15


@dataclass
class LatticeGraph:
    """Unit-cell graph: node positions plus beams (index pair and radius)."""

    nodes: np.ndarray        # (n, 3) float64
    beams: np.ndarray        # (m, 2) int64, each row i < j not enforced
    radii: np.ndarray        # (m,) float64

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=np.float64).reshape(-1, 3)
        self.beams = np.asarray(self.beams, dtype=np.int64).reshape(-1, 2)
        self.radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_beams(self) -> int:
        return self.beams.shape[0]

    def copy(self) -> "LatticeGraph":
        return LatticeGraph(self.nodes.copy(), self.beams.copy(), self.radii.copy())

    def beam_lengths(self) -> np.ndarray:
        a = self.nodes[self.beams[:, 0]]
        b = self.nodes[self.beams[:, 1]]
        return np.linalg.norm(b - a, axis=1)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for col in (0, 1):
            np.add.at(deg, self.beams[:, col], 1)
        return deg


@dataclass
class ValidationReport:
    """Outcome of the design validity rules, one message per violation."""

    passed: bool
    violations: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.passed


@dataclass
class ExpandedBeamSet:
    """Beam segments after symmetry expansion.

    endpoints[k] holds the two 3D endpoints of segment k, radii[k] its
    radius and source[k] the index of the generating beam in the graph.
    """

    endpoints: np.ndarray    # (m, 2, 3) float64
    radii: np.ndarray        # (m,) float64
    source: np.ndarray       # (m,) int64

    @property
    def n_beams(self) -> int:
        return self.endpoints.shape[0]


def octahedral_group() -> np.ndarray:
    """Return the 48 signed-permutation matrices of the full octahedral group.

    Deterministic order: permutations in lexicographic order, sign patterns
    in (+,+,+), (+,+,-), ... order for each permutation.
    """
    mats = []
    eye = np.eye(3)
    for perm in itertools.permutations(range(3)):
        p = eye[list(perm)]
        for signs in itertools.product((1.0, -1.0), repeat=3):
            mats.append(np.diag(signs) @ p)
    return np.array(mats)


def parse_graph(doc) -> LatticeGraph:
    """Parse a graph document (JSON text or an already-decoded dict).

    The document must look like::

        {"nodes": [[x, y, z], ...],
         "beams": [{"idx": [i, j], "r": r}, ...]}

    Values are taken verbatim; range checks live in :func:`validate_graph`.
    Structural problems (bad JSON, missing keys, non-finite numbers,
    out-of-range or self-referential beam indices) raise GraphFormatError.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    for key in ("nodes", "beams"):
        if key not in doc:
            raise GraphFormatError(f"missing key {key!r}")

    try:
        nodes = np.array(doc["nodes"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise GraphFormatError(f"bad node list: {exc}") from exc
    if nodes.size == 0:
        nodes = nodes.reshape(0, 3)
    if nodes.ndim != 2 or nodes.shape[1] != 3:
        raise GraphFormatError("nodes must be a list of [x, y, z] triples")
    if not np.all(np.isfinite(nodes)):
        raise GraphFormatError("node coordinates must be finite")

    beams = []
    radii = []
    for k, entry in enumerate(doc["beams"]):
        if not isinstance(entry, dict) or "idx" not in entry or "r" not in entry:
            raise GraphFormatError(f"beam {k}: expected {{'idx': [i, j], 'r': r}}")
        idx = entry["idx"]
        if len(idx) != 2:
            raise GraphFormatError(f"beam {k}: idx must have two entries")
        i, j = int(idx[0]), int(idx[1])
        if not (0 <= i < len(nodes) and 0 <= j < len(nodes)):
            raise GraphFormatError(f"beam {k}: node index out of range")
        if i == j:
            raise GraphFormatError(f"beam {k}: endpoints must differ")
        r = float(entry["r"])
        if not np.isfinite(r):
            raise GraphFormatError(f"beam {k}: radius must be finite")
        beams.append((i, j))
        radii.append(r)

    return LatticeGraph(nodes,
                        np.array(beams, dtype=np.int64).reshape(-1, 2),
                        np.array(radii, dtype=np.float64))


def serialize_graph(g: LatticeGraph) -> str:
    """Serialize a graph back to its JSON document form."""
    doc = {
        "nodes": [[float(c) for c in row] for row in g.nodes],
        "beams": [{"idx": [int(i), int(j)], "r": float(r)}
                  for (i, j), r in zip(g.beams, g.radii)],
    }
    return json.dumps(doc)


def validate_graph(g: LatticeGraph) -> ValidationReport:
    """Check the design validity rules.

    Rules: node coordinates within [-1.5, 1.5] per axis, radii in
    (0, 0.5], and the beam graph forms a single connected component over
    the nodes it touches (isolated nodes also count as violations).
    """
    violations = []
    if g.n_nodes == 0:
        violations.append("graph has no nodes")
    if np.any(np.abs(g.nodes) > COORD_BOUND):
        bad = np.unique(np.nonzero(np.abs(g.nodes) > COORD_BOUND)[0])
        violations.append(f"node coordinates outside [-{COORD_BOUND}, {COORD_BOUND}]: "
                          f"nodes {bad.tolist()}")
    if np.any(g.radii <= 0.0) or np.any(g.radii > RADIUS_MAX):
        bad = np.nonzero((g.radii <= 0.0) | (g.radii > RADIUS_MAX))[0]
        violations.append(f"beam radii outside (0, {RADIUS_MAX}]: beams {bad.tolist()}")
    if g.n_nodes > 0 and not _is_connected(g):
        violations.append("disconnected: graph is not a single connected component")
    return ValidationReport(passed=not violations, violations=violations)


def _is_connected(g: LatticeGraph) -> bool:
    """BFS over the beam adjacency; every node must be reachable from node 0."""
    if g.n_nodes == 1:
        return True
    if g.n_beams == 0:
        return False
    adj = [[] for _ in range(g.n_nodes)]
    for i, j in g.beams:
        adj[i].append(j)
        adj[j].append(i)
    seen = np.zeros(g.n_nodes, dtype=bool)
    queue = [0]
    seen[0] = True
    while queue:
        u = queue.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return bool(seen.all())


def expand_symmetry(g: LatticeGraph, dedup: bool = True) -> ExpandedBeamSet:
    """Apply all 48 octahedral symmetry operations to every beam.

    Without deduplication the result has exactly 48 * n_beams segments.
    With dedup (the default, and what the mesher uses), segments whose
    unordered endpoint pairs coincide within 1e-12 and whose radii are
    equal are collapsed, keeping the first occurrence.
    """
    ops = octahedral_group()
    a = g.nodes[g.beams[:, 0]]                     # (m, 3)
    b = g.nodes[g.beams[:, 1]]
    # (48, m, 3) endpoint images under each operation
    ia = np.einsum("oxy,my->omx", ops, a)
    ib = np.einsum("oxy,my->omx", ops, b)
    m = g.n_beams
    endpoints = np.stack([ia, ib], axis=2).reshape(48 * m, 2, 3)
    radii = np.tile(g.radii, 48)
    source = np.tile(np.arange(m, dtype=np.int64), 48)

    if not dedup:
        return ExpandedBeamSet(endpoints, radii, source)

    keep = []
    seen = set()
    decimals = int(-np.log10(DEDUP_TOL))
    for k in range(endpoints.shape[0]):
        p = np.round(endpoints[k, 0], decimals)
        q = np.round(endpoints[k, 1], decimals)
        # +0.0 normalizes -0.0 so sign flips of zero coordinates collide
        pk = tuple((p + 0.0).tolist())
        qk = tuple((q + 0.0).tolist())
        key = (min(pk, qk), max(pk, qk), radii[k])
        if key not in seen:
            seen.add(key)
            keep.append(k)
    keep = np.array(keep, dtype=np.int64)
    return ExpandedBeamSet(endpoints[keep], radii[keep], source[keep])


def graph_statistics(g: LatticeGraph) -> np.ndarray:
    """15-dimensional feature vector summarizing a graph.

    Fixed slot order:
      0 node count, 1 beam count,
      2-5 beam length mean/std/min/max,
      6-9 radius mean/std/min/max,
      10-12 per-axis std of node coordinates,
      13 mean degree, 14 max degree.

    Standard deviations are population (ddof=0). A graph without beams has
    no length or radius statistics, so it is rejected.
    """
    if g.n_beams == 0:
        raise ValueError("graph statistics undefined for a graph with zero beams")
    lengths = g.beam_lengths()
    deg = g.degrees()
    feats = np.empty(N_GRAPH_FEATURES, dtype=np.float64)
    feats[0] = g.n_nodes
    feats[1] = g.n_beams
    feats[2:6] = [lengths.mean(), lengths.std(), lengths.min(), lengths.max()]
    feats[6:10] = [g.radii.mean(), g.radii.std(), g.radii.min(), g.radii.max()]
    feats[10:13] = g.nodes.std(axis=0)
    feats[13] = deg.mean()
    feats[14] = deg.max()
    return feats
