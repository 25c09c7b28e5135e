// Recorded service responses used by the mocked-service tests.

import { ApiClient, FrameList, GraphPayload, MatchResponse, ModelInfo, SequenceInfo } from "../src/api.js";

export const RECORDED_MATCHES: Record<string, MatchResponse> = {
  vanilla: {
    pixel: { u: 41, v: 17 },
    distance: 0.0734,
    heatmap_id: "aa01",
    heatmap_min: 0.0734,
    heatmap_max: 1.92,
  },
  soft: {
    pixel: { u: 12, v: 55 },
    distance: 0.0412,
    heatmap_id: "bb02",
    heatmap_min: 0.0412,
    heatmap_max: 2.31,
  },
};

export const RECORDED_GRAPH: GraphPayload = {
  node_ids: ["striped_0", "striped_1", "checker_0"],
  lambda: 0.1,
  w_plus: [
    [0, 0.41666666666666669, 0],
    [0.41666666666666669, 0, 0],
    [0, 0, 0],
  ],
  w_minus: [
    [0, 0.0065191204747518, 0.0094327708757322],
    [0.0065191204747518, 0, 0.0089234210533551],
    [0.0094327708757322, 0.0089234210533551, 0],
  ],
  w: [
    [0, 0.03515754619191487, 0],
    [0.03515754619191487, 0, 0],
    [0, 0, 0],
  ],
  confidence: [
    [0, 0, 1],
    [0, 0, 0.82499871342114],
    [1, 0.82499871342114, 0],
  ],
};

export class MockApiClient implements ApiClient {
  calls: { model: string; source: unknown; target: unknown }[] = [];
  failNext = false;
  delayByModel: Record<string, number> = {};

  async models(): Promise<ModelInfo[]> {
    return [
      { name: "vanilla", variant: "vanilla", d_desc: 5 },
      { name: "soft", variant: "soft", d_desc: 5 },
    ];
  }

  async sequences(): Promise<SequenceInfo[]> {
    return [{ id: "striped_0", n_frames: 4, category: "striped", instance: "striped_0" }];
  }

  async frames(): Promise<FrameList> {
    return { frames: [0, 1, 2, 3], width: 64, height: 64 };
  }

  imageUrl(seq: string, frame: number): string {
    return `/api/image/${seq}/${frame}.png`;
  }

  heatmapUrl(id: string): string {
    return `/api/heatmap/${id}.png`;
  }

  async match(model: string, source: unknown, target: unknown): Promise<MatchResponse> {
    if (this.failNext) {
      this.failNext = false;
      throw new Error("service unavailable");
    }
    const delay = this.delayByModel[model] ?? 0;
    if (delay > 0) await new Promise((r) => setTimeout(r, delay));
    this.calls.push({ model, source, target });
    const rec = RECORDED_MATCHES[model];
    if (!rec) throw new Error(`no recording for ${model}`);
    return rec;
  }

  async graph(): Promise<GraphPayload | null> {
    return RECORDED_GRAPH;
  }
}
