// Inspector app: pick a source pixel, watch per-model heatmaps and best-match
// markers on a target frame, pin probes, and browse the similarity graph.

import { ApiClient, FrameList, HttpApiClient, ModelInfo, SequenceInfo } from "./api.js";
import { canvasToImagePixel, fitTransform, imageToCanvas, ViewTransform } from "./coords.js";
import { buildGraphViewModel, edgeHoverText, nearestEdge } from "./graphview.js";
import { colormapGray } from "./heatmap.js";
import { looksLikeBackground, ProbeController } from "./probe.js";
import { initialState, PinnedProbe, SessionState, toggleModel } from "./state.js";

const MARKER_COLORS = ["#ff3b6b", "#38d471", "#4aa3ff"];

function el<T extends HTMLElement>(id: string): T {
  const got = document.getElementById(id);
  if (!got) throw new Error(`missing element #${id}`);
  return got as T;
}

function toast(message: string) {
  const box = el<HTMLDivElement>("toast");
  box.textContent = message;
  box.classList.add("visible");
  setTimeout(() => box.classList.remove("visible"), 2500);
}

class FramePanel {
  canvas: HTMLCanvasElement;
  ctx: CanvasRenderingContext2D;
  image: HTMLImageElement | null = null;
  transform: ViewTransform = { zoom: 1, offsetX: 0, offsetY: 0 };
  width = 0;
  height = 0;
  private pixels: Uint8ClampedArray | null = null;

  constructor(canvasId: string) {
    this.canvas = el<HTMLCanvasElement>(canvasId);
    const ctx = this.canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d context");
    this.ctx = ctx;
  }

  async load(url: string, width: number, height: number): Promise<void> {
    this.width = width;
    this.height = height;
    this.image = await loadImage(url);
    this.transform = fitTransform(width, height, this.canvas.width, this.canvas.height);
    const probe = document.createElement("canvas");
    probe.width = width;
    probe.height = height;
    const pctx = probe.getContext("2d");
    if (pctx) {
      pctx.drawImage(this.image, 0, 0);
      this.pixels = pctx.getImageData(0, 0, width, height).data;
    }
  }

  rgbAt(u: number, v: number): [number, number, number] | null {
    if (!this.pixels) return null;
    const i = 4 * (v * this.width + u);
    return [this.pixels[i], this.pixels[i + 1], this.pixels[i + 2]];
  }

  pixelAt(ev: MouseEvent): { u: number; v: number } | null {
    const rect = this.canvas.getBoundingClientRect();
    return canvasToImagePixel(
      this.transform,
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      this.width,
      this.height,
    );
  }

  drawBase() {
    const { ctx, canvas } = this;
    ctx.imageSmoothingEnabled = false;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (!this.image) return;
    ctx.drawImage(
      this.image,
      this.transform.offsetX,
      this.transform.offsetY,
      this.width * this.transform.zoom,
      this.height * this.transform.zoom,
    );
  }

  drawMarker(u: number, v: number, color: string, label?: string) {
    const { x, y } = imageToCanvas(this.transform, u, v);
    const ctx = this.ctx;
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(x, y, 7, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(x - 10, y);
    ctx.lineTo(x + 10, y);
    ctx.moveTo(x, y - 10);
    ctx.lineTo(x, y + 10);
    ctx.stroke();
    if (label) {
      ctx.fillStyle = color;
      ctx.font = "11px sans-serif";
      ctx.fillText(label, x + 9, y - 9);
    }
  }
}

function loadImage(url: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

class InspectorApp {
  state: SessionState = initialState();
  models: ModelInfo[] = [];
  sequences: SequenceInfo[] = [];
  source = new FramePanel("source-canvas");
  target = new FramePanel("target-canvas");
  probeController: ProbeController;
  lastOverlay: { model: string; image: HTMLImageElement } | null = null;
  lastOutcomes: PinnedProbe | null = null;

  constructor(private api: ApiClient) {
    this.probeController = new ProbeController(api);
  }

  async start() {
    this.models = await this.api.models();
    this.sequences = await this.api.sequences();
    this.renderModelPicker();
    this.fillSequenceSelect("source-seq");
    this.fillSequenceSelect("target-seq");
    await this.loadSourceFrame();
    await this.loadTargetFrame();
    this.wireEvents();
    await this.renderGraphPanel();
  }

  private fillSequenceSelect(id: string) {
    const sel = el<HTMLSelectElement>(id);
    sel.innerHTML = "";
    for (const s of this.sequences) {
      const opt = document.createElement("option");
      opt.value = s.id;
      opt.textContent = s.category ? `${s.id} (${s.category})` : s.id;
      sel.appendChild(opt);
    }
  }

  private renderModelPicker() {
    const box = el<HTMLDivElement>("model-picker");
    box.innerHTML = "";
    for (const m of this.models) {
      const label = document.createElement("label");
      const cb = document.createElement("input");
      cb.type = "checkbox";
      cb.checked = this.state.models.includes(m.name);
      cb.addEventListener("change", () => {
        this.state = toggleModel(this.state, m.name);
        this.renderModelPicker();
      });
      label.appendChild(cb);
      label.append(` ${m.name}${m.variant ? ` [${m.variant}]` : ""}`);
      box.appendChild(label);
    }
    if (this.state.models.length === 0 && this.models.length > 0) {
      this.state = toggleModel(this.state, this.models[0].name);
      this.renderModelPicker();
    }
  }

  private async frameList(seq: string): Promise<FrameList> {
    return this.api.frames(seq);
  }

  private async loadSourceFrame() {
    const seq = el<HTMLSelectElement>("source-seq").value || this.sequences[0].id;
    const frames = await this.frameList(seq);
    const frameSel = el<HTMLSelectElement>("source-frame");
    fillFrameSelect(frameSel, frames.frames);
    const frame = parseInt(frameSel.value, 10);
    await this.source.load(this.api.imageUrl(seq, frame), frames.width, frames.height);
    this.source.drawBase();
    this.state = { ...this.state, source: null };
  }

  private async loadTargetFrame() {
    const seq = el<HTMLSelectElement>("target-seq").value || this.sequences[0].id;
    const frames = await this.frameList(seq);
    const frameSel = el<HTMLSelectElement>("target-frame");
    fillFrameSelect(frameSel, frames.frames);
    const frame = parseInt(frameSel.value, 10);
    await this.target.load(this.api.imageUrl(seq, frame), frames.width, frames.height);
    this.state = { ...this.state, target: { seq, frame } };
    this.target.drawBase();
  }

  private wireEvents() {
    el<HTMLSelectElement>("source-seq").addEventListener("change", () => this.loadSourceFrame());
    el<HTMLSelectElement>("source-frame").addEventListener("change", async () => {
      const seq = el<HTMLSelectElement>("source-seq").value;
      const frames = await this.frameList(seq);
      const frame = parseInt(el<HTMLSelectElement>("source-frame").value, 10);
      await this.source.load(this.api.imageUrl(seq, frame), frames.width, frames.height);
      this.source.drawBase();
    });
    el<HTMLSelectElement>("target-seq").addEventListener("change", () => this.loadTargetFrame());
    el<HTMLSelectElement>("target-frame").addEventListener("change", () => this.loadTargetFrame());

    const opacity = el<HTMLInputElement>("overlay-opacity");
    opacity.addEventListener("input", () => {
      this.state = { ...this.state, overlayOpacity: parseFloat(opacity.value) };
      this.redrawTarget();
    });

    this.source.canvas.addEventListener("mousemove", (ev) => this.onProbe(ev, false));
    this.source.canvas.addEventListener("click", (ev) => this.onProbe(ev, true));
  }

  private async onProbe(ev: MouseEvent, pin: boolean) {
    const pixel = this.source.pixelAt(ev);
    const target = this.state.target;
    if (!pixel || !target || this.state.models.length === 0) return;
    const rgb = this.source.rgbAt(pixel.u, pixel.v);
    el<HTMLDivElement>("probe-warning").textContent =
      rgb && looksLikeBackground(rgb[0], rgb[1], rgb[2]) ? "off-object query" : "";

    const seq = el<HTMLSelectElement>("source-seq").value;
    const frame = parseInt(el<HTMLSelectElement>("source-frame").value, 10);
    const source = { seq, frame, u: pixel.u, v: pixel.v };
    this.state = { ...this.state, source };
    this.source.drawBase();
    this.source.drawMarker(pixel.u, pixel.v, "#ffffff");

    try {
      const result = await this.probeController.probe(this.state.models, source, target);
      if (!result) return; // superseded by a newer hover
      const pinned: PinnedProbe = { source, target, outcomes: result.outcomes };
      this.lastOutcomes = pinned;
      const overlayFor = this.state.overlayModel ?? this.state.models[0];
      const chosen = result.outcomes.find((o) => o.model === overlayFor) ?? result.outcomes[0];
      this.lastOverlay = {
        model: chosen.model,
        image: await loadImage(this.api.heatmapUrl(chosen.heatmapId)),
      };
      this.redrawTarget();
      if (pin) {
        this.state = { ...this.state, pinned: [...this.state.pinned, pinned] };
        this.renderPinned();
      }
    } catch (err) {
      toast(`probe failed: ${err}`); // keep the previous overlay on screen
    }
  }

  private redrawTarget() {
    this.target.drawBase();
    if (this.lastOverlay) {
      const off = document.createElement("canvas");
      off.width = this.target.width;
      off.height = this.target.height;
      const octx = off.getContext("2d");
      if (octx) {
        octx.drawImage(this.lastOverlay.image, 0, 0);
        const gray = octx.getImageData(0, 0, off.width, off.height);
        const grayBytes = new Uint8ClampedArray(gray.data.length / 4);
        for (let i = 0; i < grayBytes.length; i++) grayBytes[i] = gray.data[4 * i];
        const rgba = colormapGray(grayBytes, this.state.overlayOpacity);
        const overlay = octx.createImageData(off.width, off.height);
        overlay.data.set(rgba);
        octx.putImageData(overlay, 0, 0);
        const t = this.target.transform;
        this.target.ctx.imageSmoothingEnabled = false;
        this.target.ctx.drawImage(
          off,
          t.offsetX,
          t.offsetY,
          this.target.width * t.zoom,
          this.target.height * t.zoom,
        );
      }
    }
    if (this.lastOutcomes) {
      this.lastOutcomes.outcomes.forEach((o, i) => {
        this.target.drawMarker(o.pixel.u, o.pixel.v, MARKER_COLORS[i % MARKER_COLORS.length], o.model);
      });
    }
  }

  private renderPinned() {
    const tbody = el<HTMLTableSectionElement>("pinned-body");
    tbody.innerHTML = "";
    for (const probe of this.state.pinned) {
      for (const o of probe.outcomes) {
        const tr = document.createElement("tr");
        tr.innerHTML =
          `<td>${probe.source.seq}/${probe.source.frame} (${probe.source.u}, ${probe.source.v})</td>` +
          `<td>${probe.target.seq}/${probe.target.frame}</td>` +
          `<td>${o.model}</td>` +
          `<td>(${o.pixel.u}, ${o.pixel.v})</td>` +
          `<td>${o.distance.toFixed(4)}</td>`;
        tbody.appendChild(tr);
      }
    }
  }

  private async renderGraphPanel() {
    const panel = el<HTMLDivElement>("graph-panel");
    let payload;
    try {
      payload = await this.api.graph();
    } catch {
      payload = null;
    }
    if (!payload) {
      panel.classList.add("hidden");
      return;
    }
    panel.classList.remove("hidden");
    const vm = buildGraphViewModel(payload);
    const canvas = el<HTMLCanvasElement>("graph-canvas");
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const cx = canvas.width / 2;
    const cy = canvas.height / 2;
    const r = Math.min(cx, cy) - 40;

    const draw = (hover: ReturnType<typeof nearestEdge>) => {
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      for (const e of vm.edges) {
        if (e.w <= 0) continue;
        ctx.strokeStyle = e === hover ? "#ffd54a" : "#7fa8d9";
        ctx.lineWidth = 1 + 7 * e.thickness;
        ctx.beginPath();
        ctx.moveTo(cx + r * vm.nodes[e.a].x, cy + r * vm.nodes[e.a].y);
        ctx.lineTo(cx + r * vm.nodes[e.b].x, cy + r * vm.nodes[e.b].y);
        ctx.stroke();
      }
      vm.nodes.forEach((node, i) => {
        const x = cx + r * node.x;
        const y = cy + r * node.y;
        ctx.fillStyle = "#2b3a55";
        ctx.beginPath();
        ctx.arc(x, y, 16, 0, 2 * Math.PI);
        ctx.fill();
        const thumb = this.graphThumbs[i];
        if (thumb) {
          ctx.save();
          ctx.beginPath();
          ctx.arc(x, y, 15, 0, 2 * Math.PI);
          ctx.clip();
          ctx.drawImage(thumb, x - 15, y - 15, 30, 30);
          ctx.restore();
        }
        ctx.fillStyle = "#dde6f2";
        ctx.font = "10px sans-serif";
        ctx.textAlign = "center";
        ctx.fillText(node.id, x, y + 28);
      });
    };

    canvas.addEventListener("mousemove", (ev) => {
      const rect = canvas.getBoundingClientRect();
      const x = (ev.clientX - rect.left - cx) / r;
      const y = (ev.clientY - rect.top - cy) / r;
      const edge = nearestEdge(vm, x, y);
      el<HTMLDivElement>("graph-hover").textContent = edge
        ? edgeHoverText(payload!, edge.a, edge.b)
        : "";
      draw(edge);
    });

    this.graphThumbs = await Promise.all(
      payload.node_ids.map((id) => loadImage(this.api.imageUrl(id, 0)).catch(() => null)),
    );
    draw(null);
  }

  private graphThumbs: (HTMLImageElement | null)[] = [];
}

function fillFrameSelect(sel: HTMLSelectElement, frames: number[]) {
  const prev = sel.value;
  sel.innerHTML = "";
  for (const f of frames) {
    const opt = document.createElement("option");
    opt.value = String(f);
    opt.textContent = String(f);
    sel.appendChild(opt);
  }
  if (frames.map(String).includes(prev)) sel.value = prev;
}

new InspectorApp(new HttpApiClient()).start().catch((err) => {
  toast(`failed to start: ${err}`);
  console.error(err);
});
