// Probe orchestration: one hover/click fans out to /api/match per selected
// model; stale responses are dropped (latest wins).

import { ApiClient } from "./api.js";
import { FrameRef, ProbeOutcome, SourceSelection } from "./state.js";

export interface ProbeResult {
  source: SourceSelection;
  target: FrameRef;
  outcomes: ProbeOutcome[]; // one per model, in request order
}

export class ProbeController {
  private ticket = 0;

  constructor(private api: ApiClient) {}

  /** Issue a probe for every model; resolves null when superseded. */
  async probe(
    models: string[],
    source: SourceSelection,
    target: FrameRef,
  ): Promise<ProbeResult | null> {
    const mine = ++this.ticket;
    const outcomes = await Promise.all(
      models.map(async (model): Promise<ProbeOutcome> => {
        const got = await this.api.match(
          model,
          { seq: source.seq, frame: source.frame, u: source.u, v: source.v },
          { seq: target.seq, frame: target.frame },
        );
        return {
          model,
          pixel: got.pixel,
          distance: got.distance,
          heatmapId: got.heatmap_id,
          heatmapMin: got.heatmap_min,
          heatmapMax: got.heatmap_max,
        };
      }),
    );
    if (mine !== this.ticket) return null; // a newer hover superseded this one
    return { source, target, outcomes };
  }
}

/** Heuristic off-object warning: the renderer's background is flat and dark. */
export function looksLikeBackground(r: number, g: number, b: number): boolean {
  const spread = Math.max(r, g, b) - Math.min(r, g, b);
  const brightness = (r + g + b) / 3;
  return spread < 18 && brightness < 110;
}
