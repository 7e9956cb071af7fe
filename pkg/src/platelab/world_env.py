"""Interactive loading sessions over the finite element models.

A session owns a meshed plate, a material, and the solver state. Each
step takes a 4-component action (stretch, twist, shear_y, shear_z) that
increments the cumulative boundary condition: the grip face translates
by 0.15 per unit of cumulative stretch/shear and twists by 0.08 rad per
unit of cumulative twist, rotating about the x-axis through the
translated grip centroid. The solver advances one quasi-static solve or
a fixed number of dynamic substeps, and the session reports a frame
with nodal fields, the grip reaction, and per-axis work accumulators
(trapezoidal integral of |generalized force| over |pose scalar|).

Trajectories serialize to a little-endian binary format: "LEIT" header,
a JSON metadata segment, then per-frame f32 field arrays and f64
reaction/work scalars.
"""

from __future__ import annotations

import json
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constitutive import (
    NeoHookeanMaterial,
    ViscoMaterial,
    material_to_json,
    project_stress_to_nodes,
    von_mises,
)
from .errors import DivergedSolve, SessionBusy
from .fem_solver import (
    FemModel,
    SolverConfig,
    reaction_force,
    solve_dynamic_step,
    solve_quasistatic_step,
)
from .lattice_graph import LatticeGraph, parse_graph, serialize_graph
from .mesh_forge import build_plate_mesh, mesh_digest

TRANSLATION_PER_STEP = 0.15      # grip translation per unit cumulative action
TWIST_PER_STEP = 0.08            # grip rotation (rad) per unit cumulative twist
ACTION_AXES = ("stretch", "twist", "shear_y", "shear_z")

TRAJ_MAGIC = b"LEIT"
TRAJ_VERSION = 1
FIELD_U = 1
FIELD_STRESS = 2
FIELD_VM = 4
_HEADER = struct.Struct("<4sIIII")
_U32 = struct.Struct("<I")


@dataclass(frozen=True)
class Action:
    """One step of boundary-condition increments on the four loading axes."""

    stretch: float = 0.0
    twist: float = 0.0
    shear_y: float = 0.0
    shear_z: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.stretch, self.twist, self.shear_y, self.shear_z],
                        dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "Action":
        arr = np.asarray(arr, dtype=np.float64).reshape(-1)
        if arr.size != 4:
            raise ValueError("an action has exactly 4 components")
        return cls(*(float(x) for x in arr))

    def validate(self, dataset_mode: bool = False) -> None:
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError("action components must be finite")
        if dataset_mode and not np.all(np.isin(arr, (-1.0, 0.0, 1.0))):
            raise ValueError("dataset actions take values in {-1, 0, +1}")


@dataclass
class Frame:
    """Reported state after one step: fields in f32, scalars in f64."""

    t: int
    cum_action: np.ndarray       # (4,) f64
    u: np.ndarray                # (n, 3) f32 nodal displacement
    stress: np.ndarray           # (n, 6) f32 nodal Cauchy stress (Voigt)
    von_mises: np.ndarray        # (n,) f32
    force: np.ndarray            # (3,) f64 grip reaction
    torque: float                # about x through the deformed grip centroid
    work_inc: np.ndarray         # (4,) f64 per-axis work increment
    work_cum: np.ndarray         # (4,) f64 per-axis cumulative work


@dataclass
class Trajectory:
    meta: dict
    frames: list
    failure: dict | None = None


def displacement_scalars(cum) -> np.ndarray:
    """Grip pose scalars for the four axes: x shift, twist angle, y, z."""
    cum = np.asarray(cum, dtype=np.float64)
    return np.array([TRANSLATION_PER_STEP * cum[0], TWIST_PER_STEP * cum[1],
                     TRANSLATION_PER_STEP * cum[2], TRANSLATION_PER_STEP * cum[3]])


def grip_displacement(grip_nodes_ref, centroid, cum) -> np.ndarray:
    """Prescribed displacement of the grip nodes for a cumulative action.

    The face first translates, then rotates about the x-axis through its
    translated centroid: pos = c + T + R (X - c).
    """
    d = displacement_scalars(cum)
    T = np.array([d[0], d[2], d[3]])
    theta = d[1]
    rel = grip_nodes_ref - centroid
    rot = rel.copy()
    c, s = np.cos(theta), np.sin(theta)
    rot[:, 1] = c * rel[:, 1] - s * rel[:, 2]
    rot[:, 2] = s * rel[:, 1] + c * rel[:, 2]
    return T + centroid + rot - grip_nodes_ref


class WorkIntegrator:
    """Per-axis trapezoidal work: |generalized force| against |pose scalar|.

    Increments are signed by the direction |d| moves, so an elastic
    retrace of the same path cancels to zero while dissipative paths
    leave a positive residue.
    """

    def __init__(self):
        self._d = np.zeros(4)
        self._f = np.zeros(4)
        self.cumulative = np.zeros(4)

    def update(self, d, f):
        d = np.asarray(d, dtype=np.float64)
        f = np.asarray(f, dtype=np.float64)
        inc = 0.5 * (np.abs(f) + np.abs(self._f)) * (np.abs(d) - np.abs(self._d))
        self.cumulative = self.cumulative + inc
        self._d = d.copy()
        self._f = f.copy()
        return inc, self.cumulative.copy()


class Session:
    """Single-writer stateful loading environment over one mesh.

    One step may be in flight at a time; concurrent callers get
    SessionBusy. Completed frames are append-only and safe to read
    while a step runs.
    """

    def __init__(self, mesh, material, regime, cfg=None, seed=0, graph_id=None):
        if regime not in ("quasistatic", "dynamic"):
            raise ValueError(f"unknown regime {regime!r}")
        if regime == "quasistatic" and not isinstance(material, NeoHookeanMaterial):
            raise ValueError("quasistatic sessions use the neo-Hookean material; "
                             "rate effects and inertia need the dynamic regime")
        if regime == "dynamic" and not isinstance(material, ViscoMaterial):
            raise ValueError("dynamic sessions require the visco material")
        if mesh.clamp_nodes.size == 0 or mesh.grip_nodes.size == 0:
            raise ValueError("mesh has no clamp or grip nodes")
        self.mesh = mesh
        self.material = material
        self.regime = regime
        self.cfg = cfg if cfg is not None else _default_cfg(regime)
        self.seed = int(seed)
        self.model = FemModel(mesh, material)
        self._bc_nodes = np.concatenate([mesh.clamp_nodes, mesh.grip_nodes])
        self._grip_ref = mesh.nodes[mesh.grip_nodes]
        self._grip_centroid = self._grip_ref.mean(axis=0)
        self._lock = threading.Lock()
        self.meta = {
            "graph_id": graph_id if graph_id is not None else "direct-mesh",
            "mesh_digest": mesh_digest(mesh),
            "material": material_to_json(material),
            "regime": regime,
            "seed": self.seed,
            "solver": self.cfg.to_json(),
            "n_nodes": int(mesh.n_nodes),
        }
        self.reset()

    @property
    def t(self) -> int:
        return self.frames[-1].t

    def reset(self) -> None:
        self.state = self.model.rest_state()
        self.cum = np.zeros(4)
        self._work = WorkIntegrator()
        self.frames = [_capture_frame(self, 0)]

    def step(self, action) -> Frame:
        return step(self, action)


def _default_cfg(regime) -> SolverConfig:
    if regime == "quasistatic":
        return SolverConfig.lattice_defaults()
    return SolverConfig.plate_defaults()


def create_session(source, material, regime, cfg=None, seed=0,
                   resolution=10, tiling=(5, 5, 1)) -> Session:
    """Open a session on a mesh, or on a lattice graph meshed in place."""
    if isinstance(source, LatticeGraph):
        mesh, _ = build_plate_mesh(source, resolution=resolution, tiling=tiling)
        graph_id = graph_digest(source)
    else:
        mesh = source
        graph_id = None
    return Session(mesh, material, regime, cfg=cfg, seed=seed, graph_id=graph_id)


def graph_digest(g: LatticeGraph) -> str:
    import hashlib
    return hashlib.sha256(serialize_graph(g).encode()).hexdigest()[:16]


def _bc_values(session: Session, cum) -> np.ndarray:
    vals = np.zeros((session._bc_nodes.size, 3))
    n_clamp = session.mesh.clamp_nodes.size
    vals[n_clamp:] = grip_displacement(session._grip_ref,
                                       session._grip_centroid, cum)
    return vals


def _capture_frame(session: Session, t: int) -> Frame:
    model, st = session.model, session.state
    F = model.deformation_gradients(st.u)
    if isinstance(session.material, ViscoMaterial):
        sig6 = session.material.cauchy(F, st.internal)
    else:
        sig6 = session.material.cauchy(F)
    node_sig = project_stress_to_nodes(session.mesh, sig6)
    vm = von_mises(node_sig)
    dynamic = session.regime == "dynamic"
    force, torque = reaction_force(model, st, session.mesh.grip_nodes,
                                   dynamic=dynamic)
    d = displacement_scalars(session.cum)
    gen_f = np.array([force[0], torque, force[1], force[2]])
    inc, cum_work = session._work.update(d, gen_f)
    return Frame(t=t, cum_action=session.cum.copy(),
                 u=np.ascontiguousarray(st.u, dtype="<f4"),
                 stress=np.ascontiguousarray(node_sig, dtype="<f4"),
                 von_mises=np.ascontiguousarray(vm, dtype="<f4"),
                 force=np.asarray(force, dtype=np.float64),
                 torque=float(torque), work_inc=inc, work_cum=cum_work)


def step(session: Session, action) -> Frame:
    """Apply one action: move the grip, advance the solver, report a frame.

    On DivergedSolve the session keeps its last converged state and
    cumulative action; the error propagates to the caller.
    """
    if not isinstance(action, Action):
        action = Action.from_array(action)
    action.validate()
    if not session._lock.acquire(blocking=False):
        raise SessionBusy("a step is already in flight")
    try:
        arr = action.as_array()
        cum_new = session.cum + arr
        if session.regime == "quasistatic":
            new_state = solve_quasistatic_step(
                session.model, session.state, session._bc_nodes,
                _bc_values(session, cum_new), session.cfg)
        else:
            n_sub = session.cfg.substeps
            bc = np.stack([_bc_values(session, session.cum + ((k + 1) / n_sub) * arr)
                           for k in range(n_sub)])
            new_state = solve_dynamic_step(session.model, session.state,
                                           session._bc_nodes, bc, session.cfg)
        session.state = new_state
        session.cum = cum_new
        frame = _capture_frame(session, session.frames[-1].t + 1)
        session.frames.append(frame)
        return frame
    finally:
        session._lock.release()


def gen_action_sequence(kind, steps, seed=0, block=1):
    """Sample an action sequence with components i.i.d. on {-1, 0, +1}.

    ``block`` holds each component constant over runs of that many
    steps. ``load_reverse`` samples the first half and appends its
    time-reversed negation, so the cumulative action returns exactly
    to zero.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    rng = np.random.default_rng(seed)
    if kind == "random":
        vals = _block_samples(rng, steps, block)
    elif kind == "load_reverse":
        if steps % 2 != 0:
            raise ValueError("load_reverse needs an even number of steps")
        half = _block_samples(rng, steps // 2, block)
        vals = np.concatenate([half, -half[::-1]]) if steps else half
    else:
        raise ValueError(f"unknown action sequence kind {kind!r}")
    return [Action(*(float(x) for x in v)) for v in vals]


def _block_samples(rng, steps, block):
    if block < 1:
        raise ValueError("block length must be >= 1")
    n_blocks = -(-steps // block) if steps else 0
    vals = rng.integers(-1, 2, size=(n_blocks, 4)).astype(np.float64)
    return np.repeat(vals, block, axis=0)[:steps]


def rollout(session: Session, actions) -> Trajectory:
    """Apply actions in order; truncate on divergence, recording it."""
    if session.t != 0:
        raise ValueError("rollout needs a fresh session; call reset() first")
    failure = None
    for i, a in enumerate(actions):
        try:
            step(session, a)
        except DivergedSolve as exc:
            failure = {"step": i + 1, "error": str(exc)}
            break
    return Trajectory(meta=dict(session.meta), frames=list(session.frames),
                      failure=failure)


def work_error(ref: Trajectory, test: Trajectory) -> np.ndarray:
    """Per-frame |W_ref - W_test| / max_t W_ref on total cumulative work."""
    if len(ref.frames) != len(test.frames):
        raise ValueError("trajectories have different lengths")
    for fr, ft in zip(ref.frames, test.frames):
        if not np.array_equal(fr.cum_action, ft.cum_action):
            raise ValueError("trajectories follow different action sequences")
    w_ref = np.array([f.work_cum.sum() for f in ref.frames])
    w_test = np.array([f.work_cum.sum() for f in test.frames])
    w_max = w_ref.max() if w_ref.size else 0.0
    if w_max <= 0.0:
        raise ValueError("reference trajectory has no positive work")
    return np.abs(w_ref - w_test) / w_max


# -- binary trajectory format ----------------------------------------------


def trajectory_to_bytes(traj: Trajectory) -> bytes:
    if not traj.frames:
        raise ValueError("cannot serialize a trajectory with no frames")
    n_nodes = int(traj.frames[0].u.shape[0])
    mask = FIELD_U | FIELD_STRESS | FIELD_VM
    meta_doc = json.dumps({"meta": traj.meta, "failure": traj.failure},
                          sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [_HEADER.pack(TRAJ_MAGIC, TRAJ_VERSION, len(traj.frames), n_nodes, mask),
           _U32.pack(len(meta_doc)), meta_doc]
    for f in traj.frames:
        out.append(_U32.pack(f.t))
        out.append(np.ascontiguousarray(f.cum_action, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(f.u, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(f.stress, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(f.von_mises, dtype="<f4").tobytes())
        out.append(np.ascontiguousarray(f.force, dtype="<f8").tobytes())
        out.append(struct.pack("<d", f.torque))
        out.append(np.ascontiguousarray(f.work_inc, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(f.work_cum, dtype="<f8").tobytes())
    return b"".join(out)


def trajectory_from_bytes(blob: bytes) -> Trajectory:
    if len(blob) < _HEADER.size + _U32.size:
        raise ValueError("truncated trajectory file")
    magic, version, n_frames, n_nodes, mask = _HEADER.unpack_from(blob, 0)
    if magic != TRAJ_MAGIC:
        raise ValueError("not a trajectory file (bad magic)")
    if version != TRAJ_VERSION:
        raise ValueError(f"unsupported trajectory version {version}")
    off = _HEADER.size
    (meta_len,) = _U32.unpack_from(blob, off)
    off += _U32.size
    if len(blob) < off + meta_len:
        raise ValueError("truncated trajectory file")
    meta_doc = json.loads(blob[off:off + meta_len].decode("utf-8"))
    off += meta_len

    def take(count, dtype, shape):
        nonlocal off
        nbytes = count * np.dtype(dtype).itemsize
        if len(blob) < off + nbytes:
            raise ValueError("truncated trajectory file")
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        off += nbytes
        return arr.reshape(shape).copy()

    frames = []
    for _ in range(n_frames):
        if len(blob) < off + _U32.size:
            raise ValueError("truncated trajectory file")
        (t,) = _U32.unpack_from(blob, off)
        off += _U32.size
        cum = take(4, "<f8", (4,))
        u = take(3 * n_nodes, "<f4", (n_nodes, 3)) if mask & FIELD_U else None
        sig = take(6 * n_nodes, "<f4", (n_nodes, 6)) if mask & FIELD_STRESS else None
        vm = take(n_nodes, "<f4", (n_nodes,)) if mask & FIELD_VM else None
        force = take(3, "<f8", (3,))
        torque = float(take(1, "<f8", (1,))[0])
        inc = take(4, "<f8", (4,))
        cum_work = take(4, "<f8", (4,))
        frames.append(Frame(t=int(t), cum_action=cum, u=u, stress=sig,
                            von_mises=vm, force=force, torque=torque,
                            work_inc=inc, work_cum=cum_work))
    return Trajectory(meta=meta_doc["meta"], frames=frames,
                      failure=meta_doc["failure"])


def export_trajectory(traj: Trajectory, path) -> None:
    Path(path).write_bytes(trajectory_to_bytes(traj))


def import_trajectory(path) -> Trajectory:
    return trajectory_from_bytes(Path(path).read_bytes())


def generate_dataset(graph_paths, out_dir, trajectories_per_graph, steps,
                     seed=0, kind="random", block=1, resolution=10,
                     tiling=(5, 5, 1), material=None, cfg=None):
    """Roll out and export trajectories for each graph file.

    Seeds derive deterministically from (seed, graph index, repeat), so
    the same invocation always writes byte-identical files.
    """
    if material is None:
        material = NeoHookeanMaterial(mu=1.0, lam=10.0)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for gi, gpath in enumerate(sorted(Path(p) for p in graph_paths)):
        g = parse_graph(gpath.read_text())
        for k in range(trajectories_per_graph):
            traj_seed = seed + 1009 * gi + k
            sess = create_session(g, material, "quasistatic", cfg=cfg,
                                  seed=traj_seed, resolution=resolution,
                                  tiling=tiling)
            actions = gen_action_sequence(kind, steps, seed=traj_seed,
                                          block=block)
            traj = rollout(sess, actions)
            dest = out / f"{gpath.stem}_{k:03d}.leit"
            export_trajectory(traj, dest)
            written.append(dest)
    return written
