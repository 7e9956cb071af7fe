// Browser shell: wires the client, action pad, view state, and canvas
// drawing together. All physics lives on the server; this file only
// projects streamed positions and colors onto a 2D canvas.

import { ActionPad, buttonAction, sliderAction } from './actionPad';
import { attachStream, StudioClient } from './client';
import { renderFrame, type RenderedScene } from './renderFrame';
import { fdArea, ViewState } from './viewState';
import { AXIS_NAMES, parseMeshBlob } from './wire';

function project(view: ViewState, x: number, y: number, z: number): [number, number, number] {
  const { azimuth, elevation, distance, target } = view.camera;
  const dx = x - target[0];
  const dy = y - target[1];
  const dz = z - target[2];
  const ca = Math.cos(azimuth);
  const sa = Math.sin(azimuth);
  const ce = Math.cos(elevation);
  const se = Math.sin(elevation);
  const rx = ca * dx + sa * dy;
  const ry = -sa * ce * dx + ca * ce * dy + se * dz;
  const depth = sa * se * dx - ca * se * dy + ce * dz;
  const scale = 120 / distance;
  return [rx * scale, -ry * scale, depth];
}

function drawScene(canvas: HTMLCanvasElement, view: ViewState, scene: RenderedScene): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.fillStyle = '#10141a';
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const cx = canvas.width / 2;
  const cy = canvas.height / 2;
  const pos = scene.positions;
  const col = scene.colors;
  const css = (i: number) =>
    `rgb(${Math.round(255 * col[3 * i])},${Math.round(255 * col[3 * i + 1])},` +
    `${Math.round(255 * col[3 * i + 2])})`;

  if (scene.kind === 'triangles' && scene.indices) {
    const faces: Array<{ i0: number; i1: number; i2: number; depth: number }> = [];
    for (let k = 0; k < scene.indices.length; k += 3) {
      const i0 = scene.indices[k];
      const i1 = scene.indices[k + 1];
      const i2 = scene.indices[k + 2];
      const d0 = project(view, pos[3 * i0], pos[3 * i0 + 1], pos[3 * i0 + 2])[2];
      const d1 = project(view, pos[3 * i1], pos[3 * i1 + 1], pos[3 * i1 + 2])[2];
      const d2 = project(view, pos[3 * i2], pos[3 * i2 + 1], pos[3 * i2 + 2])[2];
      faces.push({ i0, i1, i2, depth: (d0 + d1 + d2) / 3 });
    }
    faces.sort((a, b) => a.depth - b.depth);
    for (const f of faces) {
      const p0 = project(view, pos[3 * f.i0], pos[3 * f.i0 + 1], pos[3 * f.i0 + 2]);
      const p1 = project(view, pos[3 * f.i1], pos[3 * f.i1 + 1], pos[3 * f.i1 + 2]);
      const p2 = project(view, pos[3 * f.i2], pos[3 * f.i2 + 1], pos[3 * f.i2 + 2]);
      ctx.beginPath();
      ctx.moveTo(cx + p0[0], cy + p0[1]);
      ctx.lineTo(cx + p1[0], cy + p1[1]);
      ctx.lineTo(cx + p2[0], cy + p2[1]);
      ctx.closePath();
      ctx.fillStyle = css(f.i0);
      ctx.fill();
    }
  } else {
    for (let i = 0; i < pos.length / 3; i++) {
      const p = project(view, pos[3 * i], pos[3 * i + 1], pos[3 * i + 2]);
      ctx.fillStyle = css(i);
      ctx.fillRect(cx + p[0] - 2, cy + p[1] - 2, 4, 4);
    }
  }
}

function drawPlots(canvas: HTMLCanvasElement, view: ViewState): void {
  const ctx = canvas.getContext('2d');
  if (!ctx) return;
  ctx.fillStyle = '#10141a';
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const palette = ['#e4572e', '#76b041', '#4ea5d9', '#ffc914'];
  const half = canvas.height / 2;

  const drawSeries = (pts: Array<{ x: number; y: number }>, top: number, color: string) => {
    if (pts.length < 2) return;
    let xMax = 0;
    let yMax = 0;
    for (const p of pts) {
      xMax = Math.max(xMax, p.x);
      yMax = Math.max(yMax, p.y);
    }
    if (xMax === 0) xMax = 1;
    if (yMax === 0) yMax = 1;
    ctx.strokeStyle = color;
    ctx.beginPath();
    pts.forEach((p, i) => {
      const px = 30 + (p.x / xMax) * (canvas.width - 40);
      const py = top + half - 20 - (p.y / yMax) * (half - 30);
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  };

  for (let axis = 0; axis < 4; axis++) {
    drawSeries(view.plots.workVsStep[axis].map((p) => ({ x: p.step, y: p.w })),
               0, palette[axis]);
    drawSeries(view.plots.forceDisp[axis].map((p) => ({ x: p.d, y: p.f })),
               half, palette[axis]);
  }
}

export function mountStudio(root: HTMLElement, baseUrl: string): void {
  const client = new StudioClient(baseUrl);
  const view = new ViewState();

  root.innerHTML = `
    <div style="display:flex;gap:8px;font-family:sans-serif">
      <div>
        <canvas id="scene" width="640" height="480"></canvas>
        <div id="pad"></div>
        <div id="banner" style="color:#e4572e;min-height:1.2em"></div>
      </div>
      <div>
        <canvas id="plots" width="420" height="480"></canvas>
        <div id="readout"></div>
      </div>
    </div>`;
  const sceneCanvas = root.querySelector<HTMLCanvasElement>('#scene')!;
  const plotCanvas = root.querySelector<HTMLCanvasElement>('#plots')!;
  const padDiv = root.querySelector<HTMLDivElement>('#pad')!;
  const bannerDiv = root.querySelector<HTMLDivElement>('#banner')!;
  const readoutDiv = root.querySelector<HTMLDivElement>('#readout')!;

  let pad: ActionPad | null = null;
  let lastScene: RenderedScene | null = null;

  const redraw = () => {
    if (lastScene) drawScene(sceneCanvas, view, lastScene);
    drawPlots(plotCanvas, view);
    const w = view.plots.workVsStep[0];
    const work = w.length ? w[w.length - 1].w : 0;
    const area = fdArea(view.plots.forceDisp[0]);
    readoutDiv.textContent =
      `stretch work ${work.toPrecision(4)} / plot area ${area.toPrecision(4)}`;
  };

  const start = async () => {
    const doc = await client.createSession({
      material: { model: 'neo_hookean', mu: 1.0, lambda: 10.0 },
      regime: 'quasistatic',
      solid_plate: { resolution: 2, tiling: [2, 2, 1] },
    });
    view.sessionId = doc.id;
    pad = new ActionPad(client, doc.id, (e) => {
      bannerDiv.textContent = e.banner ?? '';
      padDiv.querySelectorAll('button').forEach((b) => { b.disabled = e.phase !== 'idle'; });
    });

    AXIS_NAMES.forEach((name, axis) => {
      for (const sign of [1, -1] as const) {
        const btn = document.createElement('button');
        btn.textContent = `${sign > 0 ? '+' : '-'}${name}`;
        btn.onclick = () => { void pad!.dispatch(buttonAction(axis, sign)); };
        padDiv.appendChild(btn);
      }
    });
    const slider = document.createElement('input');
    slider.type = 'range';
    slider.min = '-1';
    slider.max = '1';
    slider.step = '0.1';
    slider.value = '0';
    slider.onchange = () => {
      void pad!.dispatch(sliderAction(1, Number(slider.value)));
      slider.value = '0';
    };
    padDiv.appendChild(slider);

    const sock = new WebSocket(client.streamUrl(doc.id));
    attachStream(sock as never, {
      onHello: (msg) => view.applyHello(msg),
      onFrame: (msg) => {
        const scene = renderFrame(msg, view);
        if (scene) {
          lastScene = scene;
          redraw();
        }
      },
      onClose: () => { bannerDiv.textContent = 'stream closed'; },
    });

    sceneCanvas.onmousemove = (ev) => {
      if (ev.buttons & 1) {
        view.orbit(ev.movementX * 0.01, ev.movementY * 0.01);
        redraw();
      }
    };
    sceneCanvas.onwheel = (ev) => {
      ev.preventDefault();
      view.zoom(ev.deltaY > 0 ? 1.1 : 0.9);
      redraw();
    };
  };

  void start();
}

export { parseMeshBlob };
