"""Signed-distance meshing of tiled lattice plates.

Pipeline: a validated unit-cell graph is symmetry-expanded, uniformly
rescaled so the beam surfaces touch the unit-cell faces, converted to a
smooth-min capsule SDF that repeats periodically, sampled on a voxel
corner grid over the plate box, and stuffed with six tetrahedra per
voxel. Tets whose centroid samples negative are kept; kept vertices on
the positive side are pulled along grid edges onto the zero isosurface.
Disconnected fragments are dropped and the mesh must percolate from the
clamp face (x = 0) to the grip face (x = L_x).

The plate box is [0, c*nx] x [0, c*ny] x [0, c*nz] for cell size c and
tiling (nx, ny, nz); the default plate is 5 x 5 x 1 cells of size 2.
"""

from __future__ import annotations

import hashlib
import itertools
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateGeometryError, GraphValidationError, MeshRejectedError
from .lattice_graph import ExpandedBeamSet, LatticeGraph, expand_symmetry, validate_graph

DEFAULT_CELL_SIZE = 2.0
DEFAULT_TILING = (5, 5, 1)
DEFAULT_RESOLUTION = 10
DEFAULT_BLEND = 0.05
MIN_RESOLUTION = 4

FACE_TOL = 1e-6
FACE_FREE = 0
FACE_CLAMP = 1
FACE_GRIP = 2

MESH_MAGIC = b"LEIM"
MESH_VERSION = 1

# snapped vertices stop short of swallowing their target neighbor
SNAP_CAP = 0.9


# ---------------------------------------------------------------------------
# signed distance field
# ---------------------------------------------------------------------------


def _smooth_min(a, b, k):
    """Polynomial smooth minimum with blend radius k (k = 0 is a hard min)."""
    if k <= 0.0:
        return np.minimum(a, b)
    h = np.maximum(k - np.abs(a - b), 0.0) / k
    return np.minimum(a, b) - h * h * k * 0.25


@dataclass
class SdfField:
    """Blended capsule field for one unit cell, periodic under the cell tiling.

    ``endpoints``/``radii`` are in cell coordinates (the cell is the unit
    cube centred at the origin). ``evaluate`` takes plate coordinates and
    returns plate-unit signed distance, negative inside the solid.

    Periodic images of beams from the 26 neighbouring cells are included
    so tiles join seamlessly; images that cannot influence values within
    ``margin`` of the cell are culled. Far-field values beyond the margin
    may overestimate the true distance; the sign is correct everywhere.
    """

    endpoints: np.ndarray            # (m, 2, 3), cell coords
    radii: np.ndarray                # (m,)
    blend: float = DEFAULT_BLEND
    cell_size: float = DEFAULT_CELL_SIZE
    tiling: tuple = DEFAULT_TILING
    margin: float = 0.75

    def __post_init__(self):
        self.endpoints = np.asarray(self.endpoints, dtype=np.float64).reshape(-1, 2, 3)
        self.radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        if self.endpoints.shape[0] != self.radii.shape[0]:
            raise ValueError("endpoint/radius count mismatch")
        self._build_images()

    @classmethod
    def from_graph(cls, g: LatticeGraph, blend=DEFAULT_BLEND,
                   cell_size=DEFAULT_CELL_SIZE, tiling=DEFAULT_TILING) -> "SdfField":
        """Expand, rescale and wrap a unit-cell graph into a plate field."""
        report = validate_graph(g)
        if not report.passed:
            raise GraphValidationError("; ".join(report.violations),
                                       violations=report.violations)
        scaled, _ = auto_scale(expand_symmetry(g, dedup=True))
        return cls(endpoints=scaled.endpoints, radii=scaled.radii,
                   blend=blend, cell_size=cell_size, tiling=tiling)

    def _build_images(self):
        """Collect beam images from the 3x3x3 neighbourhood, culled by AABB."""
        lo, hi = -0.5 - self.margin, 0.5 + self.margin
        segs, radii = [], []
        for off in itertools.product((-1.0, 0.0, 1.0), repeat=3):
            shifted = self.endpoints + np.array(off)
            bb_lo = shifted.min(axis=1) - self.radii[:, None]
            bb_hi = shifted.max(axis=1) + self.radii[:, None]
            keep = np.all(bb_hi >= lo, axis=1) & np.all(bb_lo <= hi, axis=1)
            if np.any(keep):
                segs.append(shifted[keep])
                radii.append(self.radii[keep])
        if not segs:
            raise DegenerateGeometryError("field has no beams near the cell")
        seg = np.concatenate(segs, axis=0)
        self._img_a = seg[:, 0, :]
        ab = seg[:, 1, :] - seg[:, 0, :]
        self._img_ab = ab
        len2 = np.sum(ab * ab, axis=1)
        self._img_invlen2 = np.where(len2 > 1e-30, 1.0 / np.maximum(len2, 1e-30), 0.0)
        self._img_r = np.concatenate(radii)

    def _eval_local(self, q):
        """Blended capsule distance in cell units at cell-coordinate points q."""
        out = np.full(q.shape[0], np.inf)
        for a, ab, il2, r in zip(self._img_a, self._img_ab,
                                 self._img_invlen2, self._img_r):
            pa = q - a
            h = np.clip((pa @ ab) * il2, 0.0, 1.0)
            d = np.linalg.norm(pa - h[:, None] * ab, axis=1) - r
            out = _smooth_min(out, d, self.blend)
        return out

    def evaluate(self, points):
        """Signed distance in plate units at plate-coordinate points (n, 3)."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        u = p / self.cell_size
        local = u - np.floor(u) - 0.5
        out = np.empty(p.shape[0])
        chunk = 65536
        for s in range(0, p.shape[0], chunk):
            out[s:s + chunk] = self._eval_local(local[s:s + chunk])
        return out * self.cell_size

    def cell_corner_values(self, resolution: int) -> np.ndarray:
        """Field sampled once per cell on a resolution^3 corner grid.

        Corner (i, j, k) sits at cell coordinate -0.5 + i/resolution; the
        +0.5 face is the wrapped image of the -0.5 face, so it is not
        duplicated. Values are in plate units.
        """
        xs = np.arange(resolution) / resolution - 0.5
        X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
        q = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
        vals = np.empty(q.shape[0])
        chunk = 65536
        for s in range(0, q.shape[0], chunk):
            vals[s:s + chunk] = self._eval_local(q[s:s + chunk])
        return (vals * self.cell_size).reshape(resolution, resolution, resolution)


def eval_sdf(fld: SdfField, points):
    """Module-level alias for SdfField.evaluate."""
    return fld.evaluate(points)


def auto_scale(ex: ExpandedBeamSet):
    """Uniformly scale endpoints about the cell centre so the beam-surface
    bounding box touches the unit-cube faces. Radii are not scaled.

    Returns (scaled set, scale factor). Degenerate inputs (all endpoints
    coincident, or a radius filling the half-cell) are rejected.
    """
    pts = ex.endpoints.reshape(-1, 3)
    if np.allclose(pts, pts[0], atol=1e-15):
        raise DegenerateGeometryError("all beam endpoints coincide")
    absc = np.abs(ex.endpoints)                     # (m, 2, 3)
    rad = ex.radii[:, None, None]
    active = absc > 1e-12
    if not np.any(active):
        raise DegenerateGeometryError("all beam endpoints sit at the cell centre")
    slack = 0.5 - np.broadcast_to(rad, absc.shape)[active]
    if np.any(slack <= 0.0):
        raise DegenerateGeometryError("beam radius reaches the half-cell extent")
    s = float(np.min(slack / absc[active]))
    scaled = ExpandedBeamSet(endpoints=ex.endpoints * s,
                             radii=ex.radii.copy(),
                             source=ex.source.copy())
    return scaled, s


# ---------------------------------------------------------------------------
# tetrahedral meshing
# ---------------------------------------------------------------------------


def _kuhn_patterns():
    """Six path tetrahedra triangulating the unit cube, positively oriented.

    Corner slots use bit order (x << 2 | y << 1 | z). The subdivision is
    translation-invariant, so neighbouring voxels share face diagonals.
    """
    corners = np.array([[(s >> 2) & 1, (s >> 1) & 1, s & 1] for s in range(8)],
                       dtype=np.float64)
    pats = []
    for perm in itertools.permutations(range(3)):
        slot = 0
        path = [0]
        for axis in perm:
            slot |= 1 << (2 - axis)
            path.append(slot)
        p = corners[path]
        det = np.linalg.det(np.stack([p[1] - p[0], p[2] - p[0], p[3] - p[0]], axis=1))
        if det < 0:
            path[2], path[3] = path[3], path[2]
        pats.append(path)
    return np.array(pats, dtype=np.int64)


_KUHN = _kuhn_patterns()

# local faces of a positively oriented tet (t0..t3) with outward normals
_TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]], dtype=np.int64)


@dataclass
class TetMesh:
    """Linear tetrahedral mesh of a plate-shaped solid."""

    nodes: np.ndarray            # (n, 3) float64
    tets: np.ndarray             # (m, 4) int64, positive orientation
    boundary_faces: np.ndarray   # (f, 3) int64, outward oriented
    face_tags: np.ndarray        # (f,) uint8: FACE_FREE / FACE_CLAMP / FACE_GRIP
    clamp_nodes: np.ndarray      # node ids on the x = box_min face
    grip_nodes: np.ndarray       # node ids on the x = box_max face
    box: np.ndarray              # (3, 2) plate bounds
    _volumes: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def tet_volumes(self) -> np.ndarray:
        if self._volumes is None:
            p = self.nodes[self.tets]
            e = p[:, 1:] - p[:, :1]
            self._volumes = np.linalg.det(np.swapaxes(e, 1, 2)) / 6.0
        return self._volumes

    def box_volume(self) -> float:
        ext = self.box[:, 1] - self.box[:, 0]
        return float(np.prod(ext))

    def volume_fraction(self) -> float:
        return float(self.tet_volumes().sum() / self.box_volume())


@dataclass
class MeshQualityReport:
    node_count: int
    tet_count: int
    volume_fraction: float
    min_quality: float
    median_quality: float
    dropped_fragments: int = 0
    scale: float = 1.0


@dataclass
class PercolationResult:
    connected: bool          # a single connected component
    spans: bool              # largest component touches clamp and grip faces
    n_components: int
    labels: np.ndarray       # per-tet component label


def _tet_quality(nodes, tets):
    """Inradius/circumradius per tet (a regular tet scores 1/3)."""
    p = nodes[tets]
    e = np.swapaxes(p[:, 1:] - p[:, :1], 1, 2)
    vol = np.linalg.det(e) / 6.0
    # face areas
    areas = np.zeros(tets.shape[0])
    for f in _TET_FACES:
        a, b, c = p[:, f[0]], p[:, f[1]], p[:, f[2]]
        areas += 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    r_in = 3.0 * vol / areas
    # circumcentre from 2 (p_i - p_0) . c = |p_i|^2 - |p_0|^2
    rhs = np.sum(p[:, 1:] ** 2, axis=2) - np.sum(p[:, :1] ** 2, axis=2)
    M = 2.0 * (p[:, 1:] - p[:, :1])
    c = np.linalg.solve(M, rhs[:, :, None])[:, :, 0]
    R = np.linalg.norm(c - p[:, 0], axis=1)
    return r_in / np.maximum(R, 1e-300)


def mesh_from_corner_grid(values, spacing, origin=(0.0, 0.0, 0.0)) -> TetMesh:
    """Stuff tetrahedra into the negative region of a sampled scalar field.

    ``values`` holds corner samples on a (Nx+1, Ny+1, Nz+1) grid with
    uniform ``spacing``. Each voxel is split into 6 path tets; a tet is
    kept when the interpolated value at its centroid (the mean of its
    corner samples) is negative. Kept vertices with positive samples are
    snapped along a grid edge toward their most negative axis neighbour,
    except that vertices on the x-extreme planes stay in plane. Snap
    amplitudes are halved locally until every tet has positive volume.
    """
    V = np.asarray(values, dtype=np.float64)
    if V.ndim != 3:
        raise ValueError("corner grid must be 3-dimensional")
    nxc, nyc, nzc = V.shape
    nx, ny, nz = nxc - 1, nyc - 1, nzc - 1
    if min(nx, ny, nz) < 1:
        raise ValueError("grid must contain at least one voxel per axis")
    origin = np.asarray(origin, dtype=np.float64)
    h = float(spacing)

    ids = np.arange(V.size, dtype=np.int64).reshape(V.shape)
    # voxel corner ids in slot order (x << 2 | y << 1 | z)
    slots = []
    for sx, sy, sz in itertools.product((0, 1), repeat=3):
        slots.append(ids[sx:sx + nx, sy:sy + ny, sz:sz + nz].ravel())
    cube = np.stack(slots, axis=1)                       # (nvox, 8)

    flat = V.ravel()
    # only voxels with at least one negative corner can host kept tets
    cand = cube[np.any(flat[cube] < 0.0, axis=1)]
    if cand.shape[0] == 0:
        raise MeshRejectedError("field has no interior: empty mesh")
    tets = cand[:, _KUHN].reshape(-1, 4)                 # (6 * ncand, 4)
    keep = flat[tets].mean(axis=1) < 0.0
    tets = tets[keep]
    if tets.shape[0] == 0:
        raise MeshRejectedError("no tet centroid fell inside the solid")

    used = np.unique(tets)
    remap = np.full(V.size, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    tets = remap[tets]

    gi, gj, gk = np.unravel_index(used, V.shape)
    pos = origin + h * np.stack([gi, gj, gk], axis=1).astype(np.float64)
    sval = flat[used]

    # snap positive vertices toward their most negative axis neighbour
    snap_target = np.full(used.size, -1, dtype=np.int64)
    snap_t = np.zeros(used.size)
    pos_mask = sval > 0.0
    if np.any(pos_mask):
        cand_idx = np.nonzero(pos_mask)[0]
        ci, cj, ck = gi[cand_idx], gj[cand_idx], gk[cand_idx]
        best_val = np.full(cand_idx.size, np.inf)
        best_nb = np.full(cand_idx.size, -1, dtype=np.int64)
        on_x_plane = (ci == 0) | (ci == nx)
        for axis, (di, dj, dk) in enumerate([(1, 0, 0), (-1, 0, 0), (0, 1, 0),
                                             (0, -1, 0), (0, 0, 1), (0, 0, -1)]):
            ni, nj, nk = ci + di, cj + dj, ck + dk
            ok = (ni >= 0) & (ni <= nx) & (nj >= 0) & (nj <= ny) \
                & (nk >= 0) & (nk <= nz)
            if axis < 2:
                ok &= ~on_x_plane
            nid = np.where(ok, ids[np.clip(ni, 0, nx), np.clip(nj, 0, ny),
                                   np.clip(nk, 0, nz)], 0)
            nval = np.where(ok, flat[nid], np.inf)
            better = nval < best_val
            best_val = np.where(better, nval, best_val)
            best_nb = np.where(better, nid, best_nb)
        has = best_val < 0.0
        tgt = cand_idx[has]
        snap_target[tgt] = best_nb[has]
        sv = sval[tgt]
        su = best_val[has]
        snap_t[tgt] = np.minimum(sv / (sv - su), SNAP_CAP)

    def snapped_positions(tscale):
        out = pos.copy()
        m = snap_target >= 0
        if np.any(m):
            ti, tj, tk = np.unravel_index(snap_target[m], V.shape)
            tgt_pos = origin + h * np.stack([ti, tj, tk], axis=1).astype(np.float64)
            t = (snap_t[m] * tscale[m])[:, None]
            out[m] = pos[m] + t * (tgt_pos - pos[m])
        return out

    tscale = np.ones(used.size)
    vol_floor = 1e-7 * h ** 3 / 6.0
    nodes = snapped_positions(tscale)
    for _ in range(60):
        e = nodes[tets]
        vols = np.linalg.det(np.swapaxes(e[:, 1:] - e[:, :1], 1, 2)) / 6.0
        bad = vols <= vol_floor
        if not np.any(bad):
            break
        bad_nodes = np.unique(tets[bad])
        tscale[bad_nodes] *= 0.5
        small = tscale < 1e-6
        tscale[small] = 0.0
        nodes = snapped_positions(tscale)
    else:
        raise MeshRejectedError("snap relaxation failed to restore positivity")

    return _assemble_mesh(nodes, tets,
                          box=np.stack([origin, origin + h * np.array([nx, ny, nz])],
                                       axis=1))


def _assemble_mesh(nodes, tets, box) -> TetMesh:
    faces, tags, clamp, grip = _boundary_faces(nodes, tets, box)
    return TetMesh(nodes=nodes, tets=tets, boundary_faces=faces, face_tags=tags,
                   clamp_nodes=clamp, grip_nodes=grip, box=box)


def _boundary_faces(nodes, tets, box):
    all_faces = tets[:, _TET_FACES].reshape(-1, 3)
    key = np.sort(all_faces, axis=1)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    bidx = first[counts == 1]
    bidx.sort()
    faces = all_faces[bidx]

    x = nodes[:, 0]
    clamp = np.nonzero(np.abs(x - box[0, 0]) <= FACE_TOL)[0]
    grip = np.nonzero(np.abs(x - box[0, 1]) <= FACE_TOL)[0]
    is_clamp = np.zeros(nodes.shape[0], dtype=bool)
    is_clamp[clamp] = True
    is_grip = np.zeros(nodes.shape[0], dtype=bool)
    is_grip[grip] = True

    tags = np.full(faces.shape[0], FACE_FREE, dtype=np.uint8)
    tags[np.all(is_clamp[faces], axis=1)] = FACE_CLAMP
    tags[np.all(is_grip[faces], axis=1)] = FACE_GRIP
    return faces, tags, clamp, grip


def percolation_check(mesh: TetMesh) -> PercolationResult:
    """Component analysis of the tet mesh (tets touching a common node are
    connected). ``spans`` reports whether the largest component contains
    both clamp-face and grip-face nodes."""
    n = mesh.n_nodes
    t = mesh.tets
    rows = np.concatenate([t[:, 0], t[:, 0], t[:, 0]])
    cols = np.concatenate([t[:, 1], t[:, 2], t[:, 3]])
    adj = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    tet_labels = labels[t[:, 0]]
    sizes = np.bincount(tet_labels, minlength=ncomp)
    largest = int(np.argmax(sizes))
    in_largest = labels == largest
    spans = bool(np.any(in_largest[mesh.clamp_nodes]) and
                 np.any(in_largest[mesh.grip_nodes]))
    return PercolationResult(connected=(ncomp == 1), spans=spans,
                             n_components=int(ncomp), labels=tet_labels)


def drop_disconnected_fragments(mesh: TetMesh):
    """Keep only the largest node-connected component.

    Returns (new mesh, number of dropped fragments). The input mesh is
    returned unchanged when it is already a single component.
    """
    perc = percolation_check(mesh)
    if perc.connected:
        return mesh, 0
    sizes = np.bincount(perc.labels)
    largest = int(np.argmax(sizes))
    keep = perc.labels == largest
    tets = mesh.tets[keep]
    used = np.unique(tets)
    remap = np.full(mesh.n_nodes, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    new = _assemble_mesh(mesh.nodes[used], remap[tets], box=mesh.box.copy())
    return new, perc.n_components - 1


def build_plate_mesh(g: LatticeGraph, resolution: int = DEFAULT_RESOLUTION,
                     tiling=DEFAULT_TILING, blend: float = DEFAULT_BLEND,
                     cell_size: float = DEFAULT_CELL_SIZE):
    """Mesh a lattice graph into the tiled plate. Returns (mesh, report).

    The graph must pass validation. Fragments disconnected from the main
    body are dropped with a warning; if the remaining solid does not
    connect the clamp face to the grip face the mesh is rejected.
    """
    if resolution < MIN_RESOLUTION:
        raise ValueError(f"resolution must be at least {MIN_RESOLUTION}")
    report = validate_graph(g)
    if not report.passed:
        raise GraphValidationError("; ".join(report.violations),
                                   violations=report.violations)

    scaled, scale = auto_scale(expand_symmetry(g, dedup=True))
    fld = SdfField(endpoints=scaled.endpoints, radii=scaled.radii,
                   blend=blend, cell_size=cell_size, tiling=tuple(tiling))
    cell_vals = fld.cell_corner_values(resolution)

    nx, ny, nz = (resolution * t for t in tiling)
    V = cell_vals[np.ix_(np.arange(nx + 1) % resolution,
                         np.arange(ny + 1) % resolution,
                         np.arange(nz + 1) % resolution)]
    mesh = mesh_from_corner_grid(V, spacing=cell_size / resolution)

    mesh, dropped = drop_disconnected_fragments(mesh)
    if dropped:
        warnings.warn(f"dropped {dropped} disconnected fragment(s) from the mesh",
                      stacklevel=2)
    if mesh.clamp_nodes.size == 0 or mesh.grip_nodes.size == 0 \
            or not percolation_check(mesh).spans:
        raise MeshRejectedError("solid does not percolate from clamp to grip face")

    q = _tet_quality(mesh.nodes, mesh.tets)
    rep = MeshQualityReport(node_count=mesh.n_nodes, tet_count=mesh.n_tets,
                            volume_fraction=mesh.volume_fraction(),
                            min_quality=float(q.min()),
                            median_quality=float(np.median(q)),
                            dropped_fragments=dropped, scale=scale)
    return mesh, rep


def build_solid_plate_mesh(resolution: int = 2, tiling=DEFAULT_TILING,
                           cell_size: float = DEFAULT_CELL_SIZE) -> TetMesh:
    """Structured mesh of the fully solid plate (no lattice), used for the
    homogeneous-plate loading regime."""
    nx, ny, nz = (resolution * t for t in tiling)
    V = np.full((nx + 1, ny + 1, nz + 1), -1.0)
    return mesh_from_corner_grid(V, spacing=cell_size / resolution)


# ---------------------------------------------------------------------------
# point sampling
# ---------------------------------------------------------------------------


def fps_sample(points, count: int, seed: int = 0, random_tail: int = 0):
    """Deterministic farthest-point sampling, optionally padded with a
    seeded uniform random tail.

    The first pick is the point nearest the centroid; each next pick
    maximizes the distance to the already-selected set (ties resolve to
    the lowest index). ``random_tail`` extra indices are then drawn
    uniformly without replacement from the remainder.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = pts.shape[0]
    if count < 1:
        raise ValueError("count must be at least 1")
    if count + random_tail > n:
        raise ValueError("requested more samples than points")
    centroid = pts.mean(axis=0)
    first = int(np.argmin(np.linalg.norm(pts - centroid, axis=1)))
    chosen = [first]
    dist = np.linalg.norm(pts - pts[first], axis=1)
    for _ in range(count - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    if random_tail:
        rng = np.random.default_rng(seed)
        remaining = np.setdiff1d(np.arange(n), np.array(chosen))
        tail = rng.choice(remaining, size=random_tail, replace=False)
        chosen.extend(int(i) for i in tail)
    return np.array(chosen, dtype=np.int64)


# ---------------------------------------------------------------------------
# binary mesh format
# ---------------------------------------------------------------------------


def mesh_to_bytes(mesh: TetMesh) -> bytes:
    """Serialize to the versioned little-endian mesh blob (magic LEIM)."""
    head = struct.pack("<4sIIIIII", MESH_MAGIC, MESH_VERSION,
                       mesh.n_nodes, mesh.n_tets, mesh.boundary_faces.shape[0],
                       mesh.clamp_nodes.size, mesh.grip_nodes.size)
    parts = [head, mesh.box.astype("<f8").tobytes(),
             mesh.nodes.astype("<f8").tobytes(),
             mesh.tets.astype("<u4").tobytes(),
             mesh.boundary_faces.astype("<u4").tobytes(),
             mesh.face_tags.astype("u1").tobytes(),
             mesh.clamp_nodes.astype("<u4").tobytes(),
             mesh.grip_nodes.astype("<u4").tobytes()]
    return b"".join(parts)


def mesh_from_bytes(buf: bytes) -> TetMesh:
    magic, version, n, m, f, nc, ng = struct.unpack_from("<4sIIIIII", buf, 0)
    if magic != MESH_MAGIC:
        raise ValueError("not a mesh blob (bad magic)")
    if version != MESH_VERSION:
        raise ValueError(f"unsupported mesh version {version}")
    off = struct.calcsize("<4sIIIIII")

    def take(dtype, shape):
        nonlocal off
        arr = np.frombuffer(buf, dtype=dtype, count=int(np.prod(shape)), offset=off)
        off += arr.nbytes
        return arr.reshape(shape)

    box = take("<f8", (3, 2)).copy()
    nodes = take("<f8", (n, 3)).copy()
    tets = take("<u4", (m, 4)).astype(np.int64)
    faces = take("<u4", (f, 3)).astype(np.int64)
    tags = take("u1", (f,)).copy()
    clamp = take("<u4", (nc,)).astype(np.int64)
    grip = take("<u4", (ng,)).astype(np.int64)
    return TetMesh(nodes=nodes, tets=tets, boundary_faces=faces, face_tags=tags,
                   clamp_nodes=clamp, grip_nodes=grip, box=box)


def save_mesh(mesh: TetMesh, path):
    with open(path, "wb") as fh:
        fh.write(mesh_to_bytes(mesh))


def load_mesh(path) -> TetMesh:
    with open(path, "rb") as fh:
        return mesh_from_bytes(fh.read())


def mesh_digest(mesh: TetMesh) -> str:
    """Stable content hash of the serialized mesh."""
    return hashlib.sha256(mesh_to_bytes(mesh)).hexdigest()


def mesh_summary(mesh: TetMesh, report: MeshQualityReport = None) -> dict:
    """JSON-ready mesh overview."""
    out = {
        "nodes": mesh.n_nodes,
        "tets": mesh.n_tets,
        "boundary_faces": int(mesh.boundary_faces.shape[0]),
        "clamp_nodes": int(mesh.clamp_nodes.size),
        "grip_nodes": int(mesh.grip_nodes.size),
        "box": [[float(v) for v in row] for row in mesh.box],
        "volume_fraction": mesh.volume_fraction(),
        "digest": mesh_digest(mesh),
    }
    if report is not None:
        out["quality"] = {"min": report.min_quality, "median": report.median_quality,
                          "dropped_fragments": report.dropped_fragments,
                          "scale": report.scale}
    return out
