// Thin HTTP client over the service routes. The fetch implementation is
// injectable so tests can run against an in-memory protocol double.

import type {
  Action4,
  CreateSessionRequest,
  HelloMsg,
  SearchRequest,
  SearchStatus,
  SessionDoc,
  StreamMsg,
  WireFrame,
  WireFrameSummary,
} from './wire';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export class StepConflict extends Error {}

export class StepDiverged extends Error {
  constructor(detail: string, public lastGoodStep: number) {
    super(detail);
  }
}

async function detailOf(res: Response): Promise<string> {
  try {
    const doc = await res.json();
    return typeof doc.detail === 'string' ? doc.detail : JSON.stringify(doc.detail);
  } catch {
    return res.statusText;
  }
}

export class StudioClient {
  private fetchFn: FetchLike;

  constructor(public baseUrl: string, fetchFn?: FetchLike) {
    this.fetchFn = fetchFn ?? globalThis.fetch.bind(globalThis);
  }

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { 'content-type': 'application/json' };
    }
    return this.fetchFn(this.baseUrl + path, init);
  }

  async createSession(req: CreateSessionRequest): Promise<SessionDoc> {
    const res = await this.request('POST', '/sessions', req);
    if (res.status !== 201) throw new ApiError(res.status, await detailOf(res));
    return res.json();
  }

  async step(sid: string, action: Action4): Promise<WireFrameSummary> {
    const res = await this.request('POST', `/sessions/${sid}/step`, { action });
    if (res.status === 409) throw new StepConflict(await detailOf(res));
    if (res.status === 500) {
      const doc = await res.json();
      throw new StepDiverged(String(doc.detail.error), Number(doc.detail.last_good_step));
    }
    if (!res.ok) throw new ApiError(res.status, await detailOf(res));
    return res.json();
  }

  async getFrame(sid: string, t: number): Promise<WireFrame> {
    const res = await this.request('GET', `/sessions/${sid}/frames/${t}`);
    if (!res.ok) throw new ApiError(res.status, await detailOf(res));
    return res.json();
  }

  async deleteSession(sid: string): Promise<void> {
    const res = await this.request('DELETE', `/sessions/${sid}`);
    if (res.status !== 204) throw new ApiError(res.status, await detailOf(res));
  }

  async startSearch(req: SearchRequest): Promise<{ id: string }> {
    const res = await this.request('POST', '/search', req);
    if (res.status !== 201) throw new ApiError(res.status, await detailOf(res));
    return res.json();
  }

  async searchStatus(jobId: string): Promise<SearchStatus> {
    const res = await this.request('GET', `/search/${jobId}/status`);
    if (!res.ok) throw new ApiError(res.status, await detailOf(res));
    return res.json();
  }

  async searchLog(jobId: string): Promise<string> {
    const res = await this.request('GET', `/search/${jobId}/log`);
    if (!res.ok) throw new ApiError(res.status, await detailOf(res));
    return res.text();
  }

  async cancelSearch(jobId: string): Promise<SearchStatus> {
    const res = await this.request('POST', `/search/${jobId}/cancel`);
    if (!res.ok) throw new ApiError(res.status, await detailOf(res));
    return res.json();
  }

  streamUrl(sid: string, opts?: { from?: number; decimation?: number | 'full' }): string {
    const base = this.baseUrl.replace(/^http/, 'ws');
    const params = new URLSearchParams();
    if (opts?.from !== undefined) params.set('from', String(opts.from));
    if (opts?.decimation !== undefined) params.set('decimation', String(opts.decimation));
    const query = params.toString();
    return `${base}/sessions/${sid}/stream${query ? '?' + query : ''}`;
  }
}

// Minimal socket surface shared by browser WebSocket and test doubles.
export interface SocketLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: ((ev: { code: number }) => void) | null;
  close(): void;
}

export interface StreamHandlers {
  onHello?(msg: HelloMsg): void;
  onFrame?(msg: WireFrame & { type: 'frame' }): void;
  onClose?(code: number): void;
}

export function attachStream(sock: SocketLike, handlers: StreamHandlers): void {
  sock.onmessage = (ev) => {
    const msg = JSON.parse(String(ev.data)) as StreamMsg;
    if (msg.type === 'hello') handlers.onHello?.(msg);
    else if (msg.type === 'frame') handlers.onFrame?.(msg);
  };
  sock.onclose = (ev) => handlers.onClose?.(ev.code);
}
