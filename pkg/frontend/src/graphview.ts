// Similarity-graph panel: sequences on a circle, edge thickness follows the
// combined weight, hovering an edge reveals the underlying measures.

import { GraphPayload } from "./api.js";

export interface GraphNodeVM {
  id: string;
  x: number; // unit-circle layout, scaled by the renderer
  y: number;
}

export interface GraphEdgeVM {
  a: number; // node indices
  b: number;
  w: number;
  wPlus: number;
  wMinus: number;
  confidence: number;
  thickness: number; // 0..1, proportional to w
}

export interface GraphViewModel {
  nodes: GraphNodeVM[];
  edges: GraphEdgeVM[];
}

export function buildGraphViewModel(g: GraphPayload): GraphViewModel {
  const n = g.node_ids.length;
  const nodes = g.node_ids.map((id, i) => ({
    id,
    x: Math.cos((2 * Math.PI * i) / n),
    y: Math.sin((2 * Math.PI * i) / n),
  }));
  let wMax = 0;
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) wMax = Math.max(wMax, g.w[i][j]);
  }
  const edges: GraphEdgeVM[] = [];
  for (let i = 0; i < n; i++) {
    for (let j = i + 1; j < n; j++) {
      edges.push({
        a: i,
        b: j,
        w: g.w[i][j],
        wPlus: g.w_plus[i][j],
        wMinus: g.w_minus[i][j],
        confidence: g.confidence[i][j],
        thickness: wMax > 0 ? g.w[i][j] / wMax : 0,
      });
    }
  }
  return { nodes, edges };
}

/** Hover label: the serialized weights, verbatim. */
export function edgeHoverText(g: GraphPayload, a: number, b: number): string {
  return (
    `${g.node_ids[a]} - ${g.node_ids[b]}  ` +
    `W+=${g.w_plus[a][b]}  W-=${g.w_minus[a][b]}  c=${g.confidence[a][b]}`
  );
}

/** Nearest edge to a point in layout coordinates (for hover hit-testing). */
export function nearestEdge(vm: GraphViewModel, x: number, y: number, maxDist = 0.08): GraphEdgeVM | null {
  let best: GraphEdgeVM | null = null;
  let bestD = maxDist;
  for (const e of vm.edges) {
    if (e.w <= 0) continue;
    const ax = vm.nodes[e.a].x;
    const ay = vm.nodes[e.a].y;
    const bx = vm.nodes[e.b].x;
    const by = vm.nodes[e.b].y;
    const len2 = (bx - ax) ** 2 + (by - ay) ** 2;
    const t = len2 > 0 ? Math.max(0, Math.min(1, ((x - ax) * (bx - ax) + (y - ay) * (by - ay)) / len2)) : 0;
    const px = ax + t * (bx - ax);
    const py = ay + t * (by - ay);
    const d = Math.hypot(x - px, y - py);
    if (d < bestD) {
      bestD = d;
      best = e;
    }
  }
  return best;
}
