import { describe, expect, it } from "vitest";

import { buildGraphViewModel, edgeHoverText, nearestEdge } from "../src/graphview.js";
import { RECORDED_GRAPH } from "./fixtures.js";

describe("graph view", () => {
  it("builds one edge per node pair with thickness proportional to W", () => {
    const vm = buildGraphViewModel(RECORDED_GRAPH);
    expect(vm.nodes.map((n) => n.id)).toEqual(RECORDED_GRAPH.node_ids);
    expect(vm.edges).toHaveLength(3);
    const e01 = vm.edges.find((e) => e.a === 0 && e.b === 1)!;
    expect(e01.thickness).toBe(1); // the maximal edge
    const e02 = vm.edges.find((e) => e.a === 0 && e.b === 2)!;
    expect(e02.thickness).toBe(0);
  });

  it("hover text shows the serialized weights verbatim", () => {
    const text = edgeHoverText(RECORDED_GRAPH, 0, 1);
    expect(text).toContain("striped_0 - striped_1");
    expect(text).toContain(`W+=${RECORDED_GRAPH.w_plus[0][1]}`);
    expect(text).toContain(`W-=${RECORDED_GRAPH.w_minus[0][1]}`);
    expect(text).toContain(`c=${RECORDED_GRAPH.confidence[0][1]}`);
    // verbatim means full float precision, not a rounded display value
    expect(text).toContain(String(RECORDED_GRAPH.w_plus[0][1]));
    expect(String(RECORDED_GRAPH.w_plus[0][1]).length).toBeGreaterThan(10);
  });

  it("edge carries exactly the serialized numbers", () => {
    const vm = buildGraphViewModel(RECORDED_GRAPH);
    const e = vm.edges.find((x) => x.a === 0 && x.b === 1)!;
    expect(e.w).toBe(RECORDED_GRAPH.w[0][1]);
    expect(e.wPlus).toBe(RECORDED_GRAPH.w_plus[0][1]);
    expect(e.wMinus).toBe(RECORDED_GRAPH.w_minus[0][1]);
    expect(e.confidence).toBe(RECORDED_GRAPH.confidence[0][1]);
  });

  it("two-node graph yields a single edge", () => {
    const vm = buildGraphViewModel({
      node_ids: ["a", "b"],
      lambda: 0.1,
      w_plus: [[0, 1], [1, 0]],
      w_minus: [[0, 0], [0, 0]],
      w: [[0, 0.1], [0.1, 0]],
      confidence: [[0, 0], [0, 0]],
    });
    expect(vm.edges).toHaveLength(1);
    expect(vm.edges[0].w).toBeCloseTo(0.1);
  });

  it("hit-tests the nearest positive edge", () => {
    const vm = buildGraphViewModel(RECORDED_GRAPH);
    const a = vm.nodes[0];
    const b = vm.nodes[1];
    const mid = { x: (a.x + b.x) / 2, y: (a.y + b.y) / 2 };
    const edge = nearestEdge(vm, mid.x, mid.y);
    expect(edge).not.toBeNull();
    expect([edge!.a, edge!.b]).toEqual([0, 1]);
    expect(nearestEdge(vm, 5, 5)).toBeNull(); // far outside the layout
  });
});
