// Action pad: per-axis increment buttons and a continuous slider, with a
// dispatch lock so at most one step request is ever in flight. The lock
// mirrors the server's 409 contract instead of racing against it.

import { StepConflict, StepDiverged, StudioClient } from './client';
import type { Action4, WireFrameSummary } from './wire';

export type PadPhase = 'idle' | 'busy' | 'retry';

export type DispatchResult =
  | 'ok'          // frame received, pad re-enabled
  | 'rejected'    // pad locked, no request issued
  | 'diverged'    // server backed off, session still live
  | 'conflict'    // server reported another step in flight
  | 'network';    // request failed to complete, retry prompt shown

export interface PadEvent {
  phase: PadPhase;
  banner: string | null;
}

export function buttonAction(axis: number, sign: 1 | -1): Action4 {
  const a: Action4 = [0, 0, 0, 0];
  a[axis] = sign;
  return a;
}

export function sliderAction(axis: number, value: number): Action4 {
  const a: Action4 = [0, 0, 0, 0];
  a[axis] = value;
  return a;
}

export class ActionPad {
  phase: PadPhase = 'idle';
  banner: string | null = null;
  lastFrame: WireFrameSummary | null = null;
  dispatched: Action4[] = [];          // accepted inputs, in order
  private pending: Action4 | null = null;

  constructor(
    private client: StudioClient,
    private sid: string,
    private onEvent?: (e: PadEvent) => void,
  ) {}

  private emit(): void {
    this.onEvent?.({ phase: this.phase, banner: this.banner });
  }

  get enabled(): boolean {
    return this.phase === 'idle';
  }

  async dispatch(action: Action4): Promise<DispatchResult> {
    if (this.phase !== 'idle') return 'rejected';
    this.phase = 'busy';
    this.banner = null;
    this.emit();
    return this.send(action);
  }

  // Re-send the action that hit a network failure. Never called
  // automatically: the user decides, so there is no duplicate dispatch.
  async retry(): Promise<DispatchResult> {
    if (this.phase !== 'retry' || this.pending === null) return 'rejected';
    const action = this.pending;
    this.pending = null;
    this.phase = 'busy';
    this.banner = null;
    this.emit();
    return this.send(action);
  }

  cancelRetry(): void {
    if (this.phase !== 'retry') return;
    this.pending = null;
    this.phase = 'idle';
    this.banner = null;
    this.emit();
  }

  private async send(action: Action4): Promise<DispatchResult> {
    try {
      const frame = await this.client.step(this.sid, action);
      this.lastFrame = frame;
      this.dispatched.push(action);
      this.phase = 'idle';
      this.emit();
      return 'ok';
    } catch (err) {
      if (err instanceof StepDiverged) {
        this.dispatched.push(action);
        this.phase = 'idle';
        this.banner = 'load too aggressive, backed off';
        this.emit();
        return 'diverged';
      }
      if (err instanceof StepConflict) {
        this.phase = 'idle';
        this.banner = 'another step is in flight';
        this.emit();
        return 'conflict';
      }
      this.pending = action;
      this.phase = 'retry';
      this.banner = 'network failure, retry?';
      this.emit();
      return 'network';
    }
  }
}
