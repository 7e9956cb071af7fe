// In-memory double of the service protocol for tests. It plays the
// server side of the contract: sessions with frames, the step route with
// 409/500 semantics, the stream replay, and scripted search jobs. Its
// payload shapes are anchored to the golden wire fixtures exercised in
// wire.test.ts, so drift from the real server shows up there.

import type { FetchLike, SocketLike } from '../src/client';
import {
  encodeF32,
  POSE_SCALE,
  type Action4,
  type SearchStatus,
  type WireFrame,
} from '../src/wire';

const SPRING = [40, 12, 25, 25];        // per-axis generalized stiffness

export class FakeSocket implements SocketLike {
  onmessage: ((ev: { data: string }) => void) | null = null;
  onclose: ((ev: { code: number }) => void) | null = null;
  closed = false;

  constructor(
    private session: FakeSession,
    private from: number,
    private indices: number[] | null,
  ) {}

  open(): void {
    queueMicrotask(() => {
      if (this.closed) return;
      this.deliver({
        type: 'hello',
        n_nodes: this.session.nNodes,
        decimation: this.indices === null ? 'full' : String(this.indices.length),
        from: this.from,
        indices: this.indices,
      });
      for (let t = this.from; t < this.session.frames.length; t++) {
        this.push(this.session.frames[t]);
      }
    });
  }

  push(frame: WireFrame): void {
    if (this.closed) return;
    this.deliver({ ...this.session.subset(frame, this.indices), type: 'frame' });
  }

  private deliver(msg: unknown): void {
    this.onmessage?.({ data: JSON.stringify(msg) });
  }

  close(): void {
    this.closed = true;
  }
}

export class FakeSession {
  nNodes: number;
  rest: number[][] = [];
  cum: Action4 = [0, 0, 0, 0];
  frames: WireFrame[] = [];
  sockets: FakeSocket[] = [];
  busy = false;

  private dPrev = [0, 0, 0, 0];
  private fPrev = [0, 0, 0, 0];
  private workCum = [0, 0, 0, 0];

  constructor(public id: string, grid = 3) {
    for (let i = 0; i < grid; i++) {
      for (let j = 0; j < grid; j++) {
        for (let k = 0; k < grid; k++) {
          this.rest.push([i, j, k]);
        }
      }
    }
    this.nNodes = this.rest.length;
    this.frames.push(this.capture([0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]));
  }

  step(action: Action4): WireFrame {
    this.cum = this.cum.map((c, k) => c + action[k]) as Action4;
    const d = this.cum.map((c, k) => POSE_SCALE[k] * c);
    const f = d.map((x, k) => SPRING[k] * x);
    const inc = d.map((x, k) =>
      0.5 * (Math.abs(f[k]) + Math.abs(this.fPrev[k]))
      * (Math.abs(x) - Math.abs(this.dPrev[k])));
    this.workCum = this.workCum.map((w, k) => w + inc[k]);
    this.dPrev = d;
    this.fPrev = f;
    const frame = this.capture(d, f, inc);
    this.frames.push(frame);
    for (const sock of this.sockets) sock.push(frame);
    return frame;
  }

  private capture(d: number[], genF: number[], inc: number[]): WireFrame {
    const load = genF.reduce((a, b) => a + Math.abs(b), 0);
    const pos: number[] = [];
    const vm: number[] = [];
    this.rest.forEach(([x, y, z], i) => {
      const turn = d[1] * x * 0.5;
      const yr = y * Math.cos(turn) - z * Math.sin(turn);
      const zr = y * Math.sin(turn) + z * Math.cos(turn);
      pos.push(x * (1 + d[0] * 0.5), yr + d[2] * x * 0.5, zr + d[3] * x * 0.5);
      vm.push(this.nNodes > 1 ? load * (i / (this.nNodes - 1)) : 0);
    });
    return {
      step: this.frames ? this.frames.length : 0,
      cum_action: [...this.cum],
      force: [genF[0], genF[2], genF[3]],
      torque: genF[1],
      work_inc: inc,
      work_cum: [...this.workCum],
      max_von_mises: vm.length ? Math.max(...vm) : 0,
      count: this.nNodes,
      positions: encodeF32(pos),
      von_mises: encodeF32(vm),
    };
  }

  subset(frame: WireFrame, indices: number[] | null): WireFrame {
    if (indices === null) return frame;
    const fullPos = frame.positions;
    const posAll: number[] = [];
    const vmAll: number[] = [];
    const decodedPos = decode(fullPos);
    const decodedVm = decode(frame.von_mises);
    for (const i of indices) {
      posAll.push(decodedPos[3 * i], decodedPos[3 * i + 1], decodedPos[3 * i + 2]);
      vmAll.push(decodedVm[i]);
    }
    return { ...frame, count: indices.length,
             positions: encodeF32(posAll), von_mises: encodeF32(vmAll) };
  }

  summary(frame: WireFrame): Record<string, unknown> {
    const { count, positions, von_mises, ...rest } = frame;
    void count;
    void positions;
    void von_mises;
    return rest;
  }
}

function decode(b64: string): Float32Array {
  const bytes = new Uint8Array(Buffer.from(b64, 'base64'));
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(bytes.byteLength / 4);
  for (let i = 0; i < out.length; i++) out[i] = view.getFloat32(4 * i, true);
  return out;
}

function json(status: number, doc: unknown): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { 'content-type': 'application/json' },
  });
}

export class FakeService {
  sessions = new Map<string, FakeSession>();
  stepRequests: Array<{ sid: string; action: Action4 }> = [];
  sessionRequests: Array<Record<string, unknown>> = [];
  searchRequests: Array<Record<string, unknown>> = [];
  failNextFetches = 0;
  divergeAbove = 5;               // any |action component| beyond this diverges
  statusScript: SearchStatus[] = [];
  logText = '';
  private statusIdx = 0;
  private counter = 0;

  fetch: FetchLike = async (url, init) => {
    if (this.failNextFetches > 0) {
      this.failNextFetches--;
      throw new TypeError('fetch failed');
    }
    const method = init?.method ?? 'GET';
    const path = new URL(url).pathname;
    const body = init?.body ? JSON.parse(String(init.body)) : null;

    if (method === 'POST' && path === '/sessions') {
      this.sessionRequests.push(body);
      const sid = `s${++this.counter}`;
      const session = new FakeSession(sid);
      this.sessions.set(sid, session);
      return json(201, { id: sid, n_nodes: session.nNodes, regime: body.regime,
                         meta: { n_nodes: session.nNodes, regime: body.regime } });
    }

    let m = path.match(/^\/sessions\/([^/]+)\/step$/);
    if (method === 'POST' && m) {
      const session = this.sessions.get(m[1]);
      if (!session) return json(404, { detail: `unknown session ${m[1]}` });
      if (session.busy) return json(409, { detail: 'a step is in flight' });
      const action = body.action as Action4;
      if (action.some((a) => Math.abs(a) > this.divergeAbove)) {
        return json(500, { detail: { error: 'newton diverged',
                                     last_good_step: session.frames.length - 1 } });
      }
      this.stepRequests.push({ sid: m[1], action });
      const frame = session.step(action);
      return json(200, session.summary(frame));
    }

    m = path.match(/^\/sessions\/([^/]+)\/frames\/(\d+)$/);
    if (method === 'GET' && m) {
      const session = this.sessions.get(m[1]);
      const t = Number(m[2]);
      if (!session || t >= session.frames.length) {
        return json(404, { detail: 'no such frame' });
      }
      return json(200, session.frames[t]);
    }

    m = path.match(/^\/sessions\/([^/]+)$/);
    if (method === 'DELETE' && m) {
      if (!this.sessions.delete(m[1])) return json(404, { detail: 'unknown session' });
      return new Response(null, { status: 204 });
    }

    if (method === 'POST' && path === '/search') {
      this.searchRequests.push(body);
      return json(201, { id: 'job1' });
    }

    m = path.match(/^\/search\/([^/]+)\/status$/);
    if (method === 'GET' && m) {
      if (this.statusScript.length === 0 || m[1] !== 'job1') {
        return json(404, { detail: `unknown search job ${m[1]}` });
      }
      const idx = Math.min(this.statusIdx, this.statusScript.length - 1);
      this.statusIdx++;
      return json(200, this.statusScript[idx]);
    }

    m = path.match(/^\/search\/([^/]+)\/log$/);
    if (method === 'GET' && m) {
      return new Response(this.logText, {
        status: 200,
        headers: { 'content-type': 'application/x-ndjson' },
      });
    }

    throw new Error(`fake service has no route for ${method} ${path}`);
  };

  openSocket(sid: string, opts?: { from?: number; indices?: number[] | null }): FakeSocket {
    const session = this.sessions.get(sid);
    if (!session) throw new Error(`unknown session ${sid}`);
    const sock = new FakeSocket(session, opts?.from ?? 0, opts?.indices ?? null);
    session.sockets.push(sock);
    sock.open();
    return sock;
  }
}

export async function settle(): Promise<void> {
  await new Promise((resolve) => setTimeout(resolve, 0));
}
