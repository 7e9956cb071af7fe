"""HTTP + WebSocket service over sessions and design searches.

Control flows over JSON HTTP routes; completed frames stream over a
WebSocket per session, optionally decimated to a furthest-point node
subset whose index map is fixed per (session, count) and sent on
subscribe. Bulk float arrays travel base64-encoded as little-endian
f32. Sessions live in memory and honor the environment's single-writer
rule: a second step while one is in flight gets 409.

The bind address comes from the LEIA_BIND environment variable
("host:port", default loopback 127.0.0.1:8612).
"""

from __future__ import annotations

import asyncio
import base64
import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel, Field

from .constitutive import material_from_json
from .design_search import (
    FemEvaluator,
    GraphFeatureEvaluator,
    SearchConfig,
    beam_search,
    candidates_to_jsonl,
    search_log_to_jsonl,
)
from .errors import (
    DegenerateGeometryError,
    DivergedSolve,
    GraphFormatError,
    GraphValidationError,
    MeshRejectedError,
    SessionBusy,
)
from .fem_solver import SolverConfig
from .lattice_graph import parse_graph
from .mesh_forge import build_plate_mesh, build_solid_plate_mesh, fps_sample
from .world_env import Session, Trajectory, export_trajectory, step

DEFAULT_BIND = "127.0.0.1:8612"


def _b64_f32(arr) -> str:
    return base64.b64encode(
        np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


class CreateSessionRequest(BaseModel):
    material: dict
    regime: str
    graph: dict | None = None
    solid_plate: dict | None = None
    config: dict | None = None
    seed: int = 0
    resolution: int = 10
    tiling: list[int] = Field(default_factory=lambda: [5, 5, 1])


class StepRequest(BaseModel):
    action: list[float]


class SearchRequest(BaseModel):
    graph: dict
    config: dict | None = None
    evaluator: str = "fem"
    job_key: str | None = None


class SearchJob:
    def __init__(self, job_id, key):
        self.job_id = job_id
        self.key = key
        self.state = "running"
        self.error = None
        self.cancel = threading.Event()
        self.iteration = -1
        self.best_score = None
        self.n_candidates = 0
        self.n_diverged = 0
        self.jsonl = ""
        self.thread = None
        self._lock = threading.Lock()

    def record(self, iteration, candidates, beams):
        by_id = {c.cand_id: c for c in candidates}
        best = max((by_id[i].score for i in beams[-1]), default=None)
        lines = candidates_to_jsonl(candidates)
        with self._lock:
            self.iteration = iteration
            self.best_score = best
            self.n_candidates = len(candidates)
            self.n_diverged = sum(c.diverged for c in candidates)
            self.jsonl = lines

    def status(self):
        with self._lock:
            return {"id": self.job_id, "state": self.state,
                    "iteration": self.iteration, "best_score": self.best_score,
                    "candidates": self.n_candidates,
                    "diverged": self.n_diverged}


class ServiceState:
    def __init__(self, data_dir=None):
        self.sessions = {}
        self.jobs = {}
        self.fps_cache = {}
        self.lock = threading.Lock()
        self.data_dir = data_dir


def _session_source(req: CreateSessionRequest):
    if (req.graph is None) == (req.solid_plate is None):
        raise ValueError("provide exactly one of 'graph' or 'solid_plate'")
    if req.graph is not None:
        g = parse_graph(req.graph)
        mesh, _ = build_plate_mesh(g, resolution=req.resolution,
                                   tiling=tuple(req.tiling))
        from .world_env import graph_digest
        return mesh, graph_digest(g)
    plate = dict(req.solid_plate)
    mesh = build_solid_plate_mesh(resolution=int(plate.get("resolution", 2)),
                                  tiling=tuple(plate.get("tiling", (5, 5, 1))))
    return mesh, None


def wire_frame_doc(session, frame, indices=None, bulk=True) -> dict:
    doc = {
        "step": frame.t,
        "cum_action": frame.cum_action.tolist(),
        "force": frame.force.tolist(),
        "torque": frame.torque,
        "work_inc": frame.work_inc.tolist(),
        "work_cum": frame.work_cum.tolist(),
        "max_von_mises": float(frame.von_mises.max()) if frame.von_mises.size else 0.0,
    }
    if bulk:
        pos = session.mesh.nodes.astype(np.float64) + frame.u
        vm = frame.von_mises
        if indices is not None:
            pos = pos[indices]
            vm = vm[indices]
        doc["count"] = int(pos.shape[0])
        doc["positions"] = _b64_f32(pos)
        doc["von_mises"] = _b64_f32(vm)
    return doc


def _decimation_indices(state: ServiceState, sid: str, count: int):
    key = (sid, count)
    if key not in state.fps_cache:
        session = state.sessions[sid]
        n = session.mesh.n_nodes
        count = min(count, n)
        idx = fps_sample(session.mesh.nodes, count, seed=session.seed)
        state.fps_cache[key] = np.asarray(idx, dtype=np.int64)
    return state.fps_cache[key]


def create_app(state: ServiceState | None = None) -> FastAPI:
    state = state if state is not None else ServiceState()
    app = FastAPI(title="platelab service")
    app.state.service = state

    @app.exception_handler(ValueError)
    async def _value_error(_req, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _request_error(_req, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(GraphFormatError)
    async def _format_error(_req, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(GraphValidationError)
    async def _validation_error(_req, exc):
        detail = {"error": str(exc),
                  "violations": list(getattr(exc, "violations", []))}
        return JSONResponse(status_code=422, content={"detail": detail})

    @app.exception_handler(MeshRejectedError)
    async def _mesh_error(_req, exc):
        return JSONResponse(status_code=422,
                            content={"detail": {"error": str(exc)}})

    @app.exception_handler(DegenerateGeometryError)
    async def _degenerate_error(_req, exc):
        return JSONResponse(status_code=422,
                            content={"detail": {"error": str(exc)}})

    # -- sessions ---------------------------------------------------------

    @app.post("/sessions", status_code=201)
    def create_session_endpoint(req: CreateSessionRequest):
        material = material_from_json(req.material)
        cfg = SolverConfig.from_json(req.config) if req.config else None
        mesh, graph_id = _session_source(req)
        session = Session(mesh, material, req.regime, cfg=cfg, seed=req.seed,
                          graph_id=graph_id)
        sid = uuid.uuid4().hex[:12]
        with state.lock:
            state.sessions[sid] = session
        return {"id": sid, "n_nodes": session.mesh.n_nodes,
                "regime": session.regime, "meta": session.meta}

    def _get_session(sid: str) -> Session:
        session = state.sessions.get(sid)
        if session is None:
            raise _http_404(f"unknown session {sid}")
        return session

    @app.post("/sessions/{sid}/step")
    def step_endpoint(sid: str, req: StepRequest):
        session = _get_session(sid)
        try:
            frame = step(session, req.action)
        except SessionBusy:
            return JSONResponse(status_code=409,
                                content={"detail": "a step is in flight"})
        except DivergedSolve as exc:
            return JSONResponse(
                status_code=500,
                content={"detail": {"error": str(exc),
                                    "last_good_step": session.t}})
        return wire_frame_doc(session, frame, bulk=False)

    @app.get("/sessions/{sid}/frames/{t}")
    def frame_endpoint(sid: str, t: int):
        session = _get_session(sid)
        if not 0 <= t < len(session.frames):
            raise _http_404(f"no frame {t}")
        return wire_frame_doc(session, session.frames[t], bulk=True)

    @app.delete("/sessions/{sid}", status_code=204)
    def delete_session_endpoint(sid: str):
        with state.lock:
            session = state.sessions.pop(sid, None)
            if session is None:
                raise _http_404(f"unknown session {sid}")
            state.fps_cache = {k: v for k, v in state.fps_cache.items()
                               if k[0] != sid}
        if state.data_dir is not None:
            traj = Trajectory(meta=dict(session.meta),
                              frames=list(session.frames))
            export_trajectory(traj, os.path.join(state.data_dir,
                                                 f"{sid}.leit"))
        return Response(status_code=204)

    # -- frame stream -----------------------------------------------------

    @app.websocket("/sessions/{sid}/stream")
    async def stream_endpoint(ws: WebSocket, sid: str):
        await ws.accept()
        session = state.sessions.get(sid)
        if session is None:
            await ws.close(code=4404)
            return
        decimation = ws.query_params.get("decimation", "full")
        indices = None
        try:
            start = int(ws.query_params.get("from", 0))
            if decimation != "full":
                indices = _decimation_indices(state, sid, int(decimation))
        except ValueError:
            await ws.close(code=4400)
            return
        hello = {"type": "hello", "n_nodes": session.mesh.n_nodes,
                 "decimation": decimation, "from": start,
                 "indices": indices.tolist() if indices is not None else None}
        await ws.send_json(hello)
        next_idx = start
        try:
            while True:
                if sid not in state.sessions:
                    await ws.close(code=1001)
                    return
                frames = session.frames
                while next_idx < len(frames):
                    doc = wire_frame_doc(session, frames[next_idx],
                                         indices=indices, bulk=True)
                    doc["type"] = "frame"
                    await ws.send_json(doc)
                    next_idx += 1
                await asyncio.sleep(0.02)
        except WebSocketDisconnect:
            return

    # -- search jobs ------------------------------------------------------

    @app.post("/search", status_code=201)
    def start_search_endpoint(req: SearchRequest):
        graph = parse_graph(req.graph)
        cfg = SearchConfig.from_json(req.config) if req.config else SearchConfig()
        if req.evaluator == "fem":
            evaluator = FemEvaluator()
        elif req.evaluator == "features":
            evaluator = GraphFeatureEvaluator()
        else:
            raise ValueError(f"unknown evaluator {req.evaluator!r}")
        key = req.job_key
        with state.lock:
            if key is not None:
                for job in state.jobs.values():
                    if job.key == key and job.state == "running":
                        return JSONResponse(
                            status_code=409,
                            content={"detail": f"job with key {key!r} "
                                               "already running"})
            job_id = uuid.uuid4().hex[:12]
            job = SearchJob(job_id, key)
            state.jobs[job_id] = job

        def run():
            try:
                log = beam_search(graph, evaluator, cfg,
                                  progress=job.record,
                                  should_stop=job.cancel.is_set)
                job.jsonl = search_log_to_jsonl(log)
                job.state = "cancelled" if job.cancel.is_set() else "finished"
            except Exception as exc:           # logged, reported via status
                job.error = str(exc)
                job.state = "failed"

        job.thread = threading.Thread(target=run, daemon=True)
        job.thread.start()
        return {"id": job_id}

    def _get_job(job_id: str) -> SearchJob:
        job = state.jobs.get(job_id)
        if job is None:
            raise _http_404(f"unknown search job {job_id}")
        return job

    @app.get("/search/{job_id}/status")
    def search_status_endpoint(job_id: str):
        job = _get_job(job_id)
        doc = job.status()
        if job.error is not None:
            doc["error"] = job.error
        return doc

    @app.get("/search/{job_id}/log")
    def search_log_endpoint(job_id: str):
        job = _get_job(job_id)
        return PlainTextResponse(job.jsonl, media_type="application/x-ndjson")

    @app.post("/search/{job_id}/cancel")
    def search_cancel_endpoint(job_id: str):
        job = _get_job(job_id)
        job.cancel.set()
        if job.state == "running":
            job.state = "cancelled"
        return job.status()

    return app


def _http_404(message: str):
    from fastapi import HTTPException
    return HTTPException(status_code=404, detail=message)


def bind_address() -> tuple[str, int]:
    raw = os.environ.get("LEIA_BIND", DEFAULT_BIND)
    host, _, port = raw.rpartition(":")
    return host or "127.0.0.1", int(port)


def run_server(bind: str | None = None, data_dir: str | None = None) -> None:
    import uvicorn
    if bind is not None:
        os.environ["LEIA_BIND"] = bind
    host, port = bind_address()
    app = create_app(ServiceState(data_dir=data_dir))
    uvicorn.run(app, host=host, port=port)
