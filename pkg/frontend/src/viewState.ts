// Client-side view state: what is subscribed, how it is colored and
// framed, and the plot buffers. Every number in the plot buffers is a
// payload field (or its absolute value scaled by the protocol's pose
// map); nothing here is simulated.

import type { HelloMsg, MeshBlob } from './wire';

export interface ColorRange {
  mode: 'auto' | 'pinned';
  lo: number;
  hi: number;
}

export interface Camera {
  azimuth: number;
  elevation: number;
  distance: number;
  target: [number, number, number];
}

export interface WorkPoint {
  step: number;
  w: number;                   // work_cum[axis], verbatim
}

export interface FdPoint {
  step: number;
  d: number;                   // |pose scalar| for the axis
  f: number;                   // |generalized force| for the axis
}

export interface PlotBuffers {
  workVsStep: WorkPoint[][];   // one buffer per action axis
  forceDisp: FdPoint[][];      // one buffer per action axis
}

export function emptyPlots(): PlotBuffers {
  return {
    workVsStep: [[], [], [], []],
    forceDisp: [[], [], [], []],
  };
}

export class ViewState {
  sessionId: string | null = null;
  decimation: 'full' | number = 'full';
  colorRange: ColorRange = { mode: 'auto', lo: 0, hi: 0 };
  camera: Camera = { azimuth: 0.6, elevation: 0.35, distance: 4, target: [0, 0, 0] };
  plots: PlotBuffers = emptyPlots();

  // stream subscription, set by the hello message
  nNodes = 0;
  indices: number[] | null = null;
  lastRenderedStep = -1;

  // boundary triangles from the mesh export, enables full surface mode
  mesh: MeshBlob | null = null;

  applyHello(msg: HelloMsg): void {
    this.nNodes = msg.n_nodes;
    this.indices = msg.indices;
    this.decimation = msg.decimation === 'full' ? 'full' : Number(msg.decimation);
    this.lastRenderedStep = msg.from - 1;
  }

  expectedCount(): number {
    return this.indices !== null ? this.indices.length : this.nNodes;
  }

  pinColorRange(lo: number, hi: number): void {
    this.colorRange = { mode: 'pinned', lo, hi };
  }

  autoColorRange(): void {
    this.colorRange = { mode: 'auto', lo: 0, hi: 0 };
  }

  orbit(dAzimuth: number, dElevation: number): void {
    this.camera.azimuth += dAzimuth;
    const lim = Math.PI / 2 - 1e-3;
    this.camera.elevation = Math.min(lim, Math.max(-lim, this.camera.elevation + dElevation));
  }

  zoom(factor: number): void {
    this.camera.distance = Math.max(1e-3, this.camera.distance * factor);
  }

  resetPlots(): void {
    this.plots = emptyPlots();
  }
}

// Trapezoid area under a force-displacement buffer, the quantity the
// dashboard shows next to the server's work accumulator.
export function fdArea(points: FdPoint[]): number {
  let area = 0;
  for (let i = 1; i < points.length; i++) {
    area += 0.5 * (points[i].f + points[i - 1].f) * (points[i].d - points[i - 1].d);
  }
  return area;
}
