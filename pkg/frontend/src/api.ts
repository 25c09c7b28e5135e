// Typed client for the inference service. Every number shown in the UI comes
// from these responses; the client never computes descriptor math itself.

export interface ModelInfo {
  name: string;
  variant: string | null;
  d_desc: number;
}

export interface SequenceInfo {
  id: string;
  n_frames: number;
  category: string | null;
  instance: string | null;
}

export interface FrameList {
  frames: number[];
  width: number;
  height: number;
}

export interface MatchResponse {
  pixel: { u: number; v: number };
  distance: number;
  heatmap_id: string;
  heatmap_min: number;
  heatmap_max: number;
}

export interface GraphPayload {
  node_ids: string[];
  lambda: number;
  w_plus: number[][];
  w_minus: number[][];
  w: number[][];
  confidence: number[][];
}

export interface ApiClient {
  models(): Promise<ModelInfo[]>;
  sequences(): Promise<SequenceInfo[]>;
  frames(seq: string): Promise<FrameList>;
  imageUrl(seq: string, frame: number): string;
  heatmapUrl(id: string): string;
  match(model: string, source: { seq: string; frame: number; u: number; v: number },
        target: { seq: string; frame: number }): Promise<MatchResponse>;
  graph(): Promise<GraphPayload | null>;
}

async function getJSON<T>(path: string): Promise<T> {
  const res = await fetch(path);
  if (!res.ok) throw new Error(`${path}: ${res.status}`);
  return res.json();
}

async function postJSON<T>(path: string, body: unknown): Promise<T> {
  const res = await fetch(path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!res.ok) throw new Error(`${path}: ${res.status}`);
  return res.json();
}

export class HttpApiClient implements ApiClient {
  constructor(private base = "") {}

  async models(): Promise<ModelInfo[]> {
    const got = await getJSON<{ models: ModelInfo[] }>(`${this.base}/api/models`);
    return got.models;
  }

  async sequences(): Promise<SequenceInfo[]> {
    const got = await getJSON<{ sequences: SequenceInfo[] }>(`${this.base}/api/sequences`);
    return got.sequences;
  }

  frames(seq: string): Promise<FrameList> {
    return getJSON(`${this.base}/api/frames?seq=${encodeURIComponent(seq)}`);
  }

  imageUrl(seq: string, frame: number): string {
    return `${this.base}/api/image/${encodeURIComponent(seq)}/${frame}.png`;
  }

  heatmapUrl(id: string): string {
    return `${this.base}/api/heatmap/${id}.png`;
  }

  match(model: string, source: { seq: string; frame: number; u: number; v: number },
        target: { seq: string; frame: number }): Promise<MatchResponse> {
    return postJSON(`${this.base}/api/match`, { model, source, target });
  }

  async graph(): Promise<GraphPayload | null> {
    const res = await fetch(`${this.base}/api/graph`);
    if (res.status === 404) return null;
    if (!res.ok) throw new Error(`graph: ${res.status}`);
    return res.json();
  }
}
