// Wire protocol types and codecs for the platelab service.
//
// Everything here mirrors the server's JSON schemas field for field; the
// UI never invents physics, it only decodes and displays these payloads.

export interface WireFrameSummary {
  step: number;
  cum_action: number[];        // 4 cumulative action components
  force: number[];             // 3 grip reaction components
  torque: number;              // about x through the deformed grip centroid
  work_inc: number[];          // 4 per-axis work increments
  work_cum: number[];          // 4 per-axis cumulative work
  max_von_mises: number;
}

export interface WireFrame extends WireFrameSummary {
  count: number;
  positions: string;           // base64 little-endian f32, count x 3
  von_mises: string;           // base64 little-endian f32, count
}

export interface HelloMsg {
  type: 'hello';
  n_nodes: number;
  decimation: string;
  from: number;
  indices: number[] | null;
}

export type StreamMsg = HelloMsg | (WireFrame & { type: 'frame' });

export interface SessionDoc {
  id: string;
  n_nodes: number;
  regime: string;
  meta: Record<string, unknown>;
}

export interface CreateSessionRequest {
  material: Record<string, unknown>;
  regime: string;
  graph?: Record<string, unknown> | null;
  solid_plate?: Record<string, unknown> | null;
  config?: Record<string, unknown> | null;
  seed?: number;
  resolution?: number;
  tiling?: number[];
}

export interface SearchRequest {
  graph: Record<string, unknown>;
  config?: Record<string, unknown> | null;
  evaluator?: string;
  job_key?: string | null;
}

export interface SearchStatus {
  id: string;
  state: 'running' | 'finished' | 'failed' | 'cancelled';
  iteration: number;
  best_score: number | null;
  candidates: number;
  diverged: number;
  error?: string;
}

export interface SearchLogLine {
  id: number;
  parent: number | null;
  operators: string[];
  valid: boolean;
  diverged: boolean;
  W_stretch: number | null;
  W_shear: number | null;
  v_f: number | null;
  s: number | null;
}

// Action ordering on the wire is (stretch, twist, shear_y, shear_z).
export const AXIS_NAMES = ['stretch', 'twist', 'shear_y', 'shear_z'] as const;
export type Action4 = [number, number, number, number];

// Grip pose scalar per unit cumulative action, per axis. Part of the
// protocol contract: the server integrates work against these pose
// scalars, so the displacement axis of the F-D plot uses the same map.
export const POSE_SCALE: readonly number[] = [0.15, 0.08, 0.15, 0.15];

// Generalized force conjugate to the four axes, assembled from payload
// fields exactly as the server's work accumulator does.
export function generalizedForce(doc: WireFrameSummary): Action4 {
  return [doc.force[0], doc.torque, doc.force[1], doc.force[2]];
}

function fromBase64(b64: string): Uint8Array {
  if (typeof Buffer !== 'undefined') {
    return new Uint8Array(Buffer.from(b64, 'base64'));
  }
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function decodeF32(b64: string): Float32Array {
  const bytes = fromBase64(b64);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const out = new Float32Array(bytes.byteLength / 4);
  for (let i = 0; i < out.length; i++) out[i] = view.getFloat32(4 * i, true);
  return out;
}

export function encodeF32(values: ArrayLike<number>): string {
  const bytes = new Uint8Array(values.length * 4);
  const view = new DataView(bytes.buffer);
  for (let i = 0; i < values.length; i++) view.setFloat32(4 * i, values[i], true);
  if (typeof Buffer !== 'undefined') return Buffer.from(bytes).toString('base64');
  let bin = '';
  for (const b of bytes) bin += String.fromCharCode(b);
  return btoa(bin);
}

export interface DecodedFrame {
  step: number;
  cumAction: number[];
  force: number[];
  torque: number;
  workInc: number[];
  workCum: number[];
  maxVonMises: number;
  count: number;
  positions: Float32Array;     // count x 3, flattened
  vonMises: Float32Array;      // count
}

export function decodeFrame(doc: WireFrame): DecodedFrame {
  const positions = decodeF32(doc.positions);
  const vonMises = decodeF32(doc.von_mises);
  if (positions.length !== 3 * doc.count || vonMises.length !== doc.count) {
    throw new Error(
      `frame arrays inconsistent with count ${doc.count}: ` +
      `${positions.length / 3} positions, ${vonMises.length} stress values`);
  }
  return {
    step: doc.step,
    cumAction: doc.cum_action,
    force: doc.force,
    torque: doc.torque,
    workInc: doc.work_inc,
    workCum: doc.work_cum,
    maxVonMises: doc.max_von_mises,
    count: doc.count,
    positions,
    vonMises,
  };
}

// Binary mesh blob (magic LEIM): the server's mesh export, used to pull
// boundary triangles for full-resolution surface rendering. Layout:
// header <4sIIIIII> (magic, version, nodes, tets, faces, clamp, grip),
// then box (3x2 f8), nodes (n x 3 f8), tets (m x 4 u4), faces (f x 3 u4),
// face tags (f u1), clamp ids (u4), grip ids (u4), all little-endian.
export interface MeshBlob {
  nNodes: number;
  nTets: number;
  box: Float64Array;           // 3 x 2, flattened
  nodes: Float64Array;         // n x 3, flattened
  boundaryFaces: Uint32Array;  // f x 3, flattened
  faceTags: Uint8Array;
  clampNodes: Uint32Array;
  gripNodes: Uint32Array;
}

export function parseMeshBlob(buf: ArrayBuffer): MeshBlob {
  const view = new DataView(buf);
  const magic = String.fromCharCode(view.getUint8(0), view.getUint8(1),
                                    view.getUint8(2), view.getUint8(3));
  if (magic !== 'LEIM') throw new Error('not a mesh blob (bad magic)');
  const version = view.getUint32(4, true);
  if (version !== 1) throw new Error(`unsupported mesh version ${version}`);
  const n = view.getUint32(8, true);
  const m = view.getUint32(12, true);
  const f = view.getUint32(16, true);
  const nc = view.getUint32(20, true);
  const ng = view.getUint32(24, true);
  let off = 28;

  const f64 = (count: number) => {
    const out = new Float64Array(count);
    for (let i = 0; i < count; i++) out[i] = view.getFloat64(off + 8 * i, true);
    off += 8 * count;
    return out;
  };
  const u32 = (count: number) => {
    const out = new Uint32Array(count);
    for (let i = 0; i < count; i++) out[i] = view.getUint32(off + 4 * i, true);
    off += 4 * count;
    return out;
  };

  const box = f64(6);
  const nodes = f64(3 * n);
  const tets = u32(4 * m);
  void tets;                    // connectivity is not rendered directly
  const faces = u32(3 * f);
  const tags = new Uint8Array(buf, off, f).slice();
  off += f;
  const clamp = u32(nc);
  const grip = u32(ng);
  if (off !== buf.byteLength) throw new Error('trailing bytes in mesh blob');
  return { nNodes: n, nTets: m, box, nodes, boundaryFaces: faces,
           faceTags: tags, clampNodes: clamp, gripNodes: grip };
}

export function parseSearchLog(text: string): SearchLogLine[] {
  const lines: SearchLogLine[] = [];
  for (const raw of text.split('\n')) {
    if (raw.trim() === '') continue;
    lines.push(JSON.parse(raw) as SearchLogLine);
  }
  return lines;
}
