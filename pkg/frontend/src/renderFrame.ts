// Frame ingestion: decode a streamed frame, build the scene primitive,
// and append the plot points. Stale frames (step at or below the last
// rendered one) are dropped so reconnect replays cannot rewind plots.

import {
  decodeFrame,
  generalizedForce,
  POSE_SCALE,
  type WireFrame,
} from './wire';
import type { ViewState } from './viewState';

export interface RenderedScene {
  kind: 'points' | 'triangles';
  step: number;
  positions: Float32Array;       // 3 per vertex, payload order
  colors: Float32Array;          // 3 per vertex, 0..1
  indices: Uint32Array | null;   // triangle list when kind is 'triangles'
  colorLo: number;
  colorHi: number;
}

// Two-stop map, cool to hot; lo == hi renders a single uniform color.
export function colorFor(value: number, lo: number, hi: number): [number, number, number] {
  const t = hi > lo ? Math.min(1, Math.max(0, (value - lo) / (hi - lo))) : 0;
  return [0.2 + t * 0.72, 0.32 - t * 0.13, 0.85 - t * 0.68];
}

export function renderFrame(doc: WireFrame, view: ViewState): RenderedScene | null {
  if (doc.step <= view.lastRenderedStep) return null;
  const frame = decodeFrame(doc);
  const expected = view.expectedCount();
  if (expected > 0 && frame.count !== expected) {
    throw new Error(`frame carries ${frame.count} nodes, subscription expects ${expected}`);
  }

  let lo: number;
  let hi: number;
  if (view.colorRange.mode === 'pinned') {
    ({ lo, hi } = view.colorRange);
  } else {
    lo = Infinity;
    hi = -Infinity;
    for (const v of frame.vonMises) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
    if (frame.vonMises.length === 0) lo = hi = 0;
    view.colorRange.lo = lo;
    view.colorRange.hi = hi;
  }

  const colors = new Float32Array(3 * frame.count);
  for (let i = 0; i < frame.count; i++) {
    const [r, g, b] = colorFor(frame.vonMises[i], lo, hi);
    colors[3 * i] = r;
    colors[3 * i + 1] = g;
    colors[3 * i + 2] = b;
  }

  const fullSurface = view.decimation === 'full' && view.mesh !== null
    && view.mesh.nNodes === frame.count;
  const scene: RenderedScene = {
    kind: fullSurface ? 'triangles' : 'points',
    step: frame.step,
    positions: frame.positions,
    colors,
    indices: fullSurface ? view.mesh!.boundaryFaces : null,
    colorLo: lo,
    colorHi: hi,
  };

  const genF = generalizedForce(doc);
  for (let axis = 0; axis < 4; axis++) {
    view.plots.workVsStep[axis].push({ step: frame.step, w: frame.workCum[axis] });
    view.plots.forceDisp[axis].push({
      step: frame.step,
      d: POSE_SCALE[axis] * Math.abs(frame.cumAction[axis]),
      f: Math.abs(genF[axis]),
    });
  }
  view.lastRenderedStep = frame.step;
  return scene;
}
