// Search dashboard: polls job status into a best-score curve, shows the
// current beam as a table, and opens a candidate's graph in a fresh
// session for interactive probing.
//
// The wire log lists candidates without their graphs, so opening one
// needs a graph known client-side: the seed this dashboard submitted, or
// graphs the host page registered (e.g. loaded from saved design files).

import { ApiError, StudioClient } from './client';
import { parseSearchLog, type SearchLogLine, type SessionDoc } from './wire';

export type DashboardState =
  | 'running' | 'finished' | 'failed' | 'cancelled' | 'missing';

export interface ScorePoint {
  iteration: number;
  best: number;
}

export interface DashboardOptions {
  beamWidth?: number;
  material?: Record<string, unknown>;
  regime?: string;
  graphs?: Record<number, Record<string, unknown>>;
}

export function beamTable(lines: SearchLogLine[], beamWidth: number): SearchLogLine[] {
  const scored = lines.filter((c) => c.valid && !c.diverged && c.s !== null);
  scored.sort((a, b) => (b.s! - a.s!) || (a.id - b.id));
  return scored.slice(0, beamWidth);
}

export class SearchDashboard {
  state: DashboardState = 'running';
  scoreCurve: ScorePoint[] = [];
  beam: SearchLogLine[] = [];
  error: string | null = null;

  private beamWidth: number;
  private material: Record<string, unknown>;
  private regime: string;
  private graphs: Record<number, Record<string, unknown>>;

  constructor(
    private client: StudioClient,
    public jobId: string,
    opts: DashboardOptions = {},
  ) {
    this.beamWidth = opts.beamWidth ?? 5;
    this.material = opts.material ?? { model: 'neo_hookean', mu: 1.0, lambda: 10.0 };
    this.regime = opts.regime ?? 'quasistatic';
    this.graphs = opts.graphs ?? {};
  }

  registerGraph(candidateId: number, graph: Record<string, unknown>): void {
    this.graphs[candidateId] = graph;
  }

  async poll(): Promise<void> {
    let status;
    try {
      status = await this.client.searchStatus(this.jobId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        this.state = 'missing';
        return;
      }
      throw err;
    }
    this.state = status.state;
    this.error = status.error ?? null;
    const last = this.scoreCurve[this.scoreCurve.length - 1];
    if (status.iteration >= 0 && status.best_score !== null
        && (last === undefined || status.iteration > last.iteration)) {
      this.scoreCurve.push({ iteration: status.iteration, best: status.best_score });
    }
    if (status.state !== 'running') await this.refreshBeam();
  }

  get iteration(): number {
    const last = this.scoreCurve[this.scoreCurve.length - 1];
    return last === undefined ? -1 : last.iteration;
  }

  async refreshBeam(): Promise<void> {
    const text = await this.client.searchLog(this.jobId);
    this.beam = beamTable(parseSearchLog(text), this.beamWidth);
  }

  async openCandidate(candidateId: number): Promise<SessionDoc> {
    const graph = this.graphs[candidateId];
    if (graph === undefined) {
      throw new Error(`no graph registered for candidate ${candidateId}`);
    }
    return this.client.createSession({
      material: this.material,
      regime: this.regime,
      graph,
    });
  }
}
