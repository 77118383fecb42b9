/**
 * DOM application: two click panes (camera frame, map image), the pair
 * list with residual badges, and the live BEV preview.
 *
 * All geometry displayed here is a server response; the only math done
 * client-side is the zoom/pan view transform and the preview grid
 * spacing. Canvas drawing is skipped when a 2D context is unavailable
 * (e.g. in DOM test environments), while every interaction and state
 * path still runs.
 */

import { CalibrationApi } from "./api.js";
import { PreviewController } from "./preview.js";
import { isComplete, SessionController } from "./session.js";
import { Viewport } from "./viewport.js";

const MARKER_HIT_RADIUS_PX = 8;

interface PaneElements {
  canvas: HTMLCanvasElement;
  viewport: Viewport;
  image: HTMLImageElement | null;
}

export interface AppOptions {
  debounceMs?: number;
  highlightThresholdPx?: number;
}

export class App {
  readonly session: SessionController;
  readonly preview: PreviewController;
  readonly cameraPane: PaneElements;
  readonly mapPane: PaneElements;

  private statusEl: HTMLElement;
  private rmsEl: HTMLElement;
  private errorEl: HTMLElement;
  private pairListEl: HTMLElement;
  private previewImg: HTMLImageElement;
  private ppmInput: HTMLInputElement;
  private gridToggle: HTMLInputElement;
  private gridOverlay: HTMLCanvasElement;
  private dragging: { pane: "image" | "map"; index: number } | null = null;

  constructor(
    root: HTMLElement,
    private readonly api: CalibrationApi,
    sessionId: string,
    options: AppOptions = {},
  ) {
    root.innerHTML = App.template();
    this.session = new SessionController(api, sessionId, options);
    this.preview = new PreviewController(api, sessionId);

    const get = <T extends HTMLElement>(sel: string): T => {
      const el = root.querySelector<T>(sel);
      if (!el) throw new Error(`missing element ${sel}`);
      return el;
    };
    this.statusEl = get("#calibration-status");
    this.rmsEl = get("#rms-badge");
    this.errorEl = get("#error-line");
    this.pairListEl = get("#pair-list");
    this.previewImg = get<HTMLImageElement>("#preview-img");
    this.ppmInput = get<HTMLInputElement>("#ppm-input");
    this.gridToggle = get<HTMLInputElement>("#grid-toggle");
    this.gridOverlay = get<HTMLCanvasElement>("#grid-overlay");

    this.cameraPane = {
      canvas: get<HTMLCanvasElement>("#camera-pane"),
      viewport: new Viewport(),
      image: null,
    };
    this.mapPane = {
      canvas: get<HTMLCanvasElement>("#map-pane"),
      viewport: new Viewport(),
      image: null,
    };

    this.bindPane(this.cameraPane, "image");
    this.bindPane(this.mapPane, "map");
    get<HTMLButtonElement>("#upload-btn").addEventListener("click", () => {
      void this.uploadImages(root);
    });
    this.ppmInput.addEventListener("change", () => {
      this.preview.ppm = Number(this.ppmInput.value);
      this.updatePreview();
    });
    this.gridToggle.addEventListener("change", () => {
      this.preview.gridEnabled = this.gridToggle.checked;
      this.drawGrid();
    });
    this.session.onChange(() => this.render());
    this.render();
  }

  static template(): string {
    return `
      <header>
        <span id="calibration-status">not calibrated yet</span>
        <span id="rms-badge"></span>
        <span id="error-line" class="error"></span>
      </header>
      <section class="uploads">
        <label>camera image <input id="camera-file" type="file" accept="image/png"></label>
        <label>map image <input id="map-file" type="file" accept="image/png"></label>
        <label>map scale (m/px) <input id="map-scale" type="number" value="1" step="any"></label>
        <label>map origin <input id="map-origin" type="text" value="0,0" size="9"></label>
        <button id="upload-btn">upload</button>
      </section>
      <section class="panes">
        <figure><figcaption>camera</figcaption><canvas id="camera-pane" width="960" height="540"></canvas></figure>
        <figure><figcaption>map</figcaption><canvas id="map-pane" width="960" height="540"></canvas></figure>
      </section>
      <ul id="pair-list"></ul>
      <section class="preview">
        <label>pixels per meter <input id="ppm-input" type="number" value="10" min="0.1" step="0.1"></label>
        <label><input id="grid-toggle" type="checkbox" checked> 1 m grid</label>
        <div class="preview-stack">
          <img id="preview-img" alt="BEV preview">
          <canvas id="grid-overlay" width="800" height="800"></canvas>
        </div>
      </section>`;
  }

  private bindPane(pane: PaneElements, kind: "image" | "map"): void {
    pane.canvas.addEventListener("click", (ev) => {
      if (this.dragging) return;
      const p = pane.viewport.toImage(ev.offsetX, ev.offsetY);
      if (kind === "image") this.session.clickCamera(p.x, p.y);
      else this.session.clickMap(p.x, p.y);
    });
    pane.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      pane.viewport.zoomAt(ev.offsetX, ev.offsetY, ev.deltaY < 0 ? 1.2 : 1 / 1.2);
      this.drawPane(pane, kind);
    });
    pane.canvas.addEventListener("mousedown", (ev) => {
      const index = this.hitTest(pane, kind, ev.offsetX, ev.offsetY);
      if (index !== null) {
        this.dragging = { pane: kind, index };
        this.session.selection = index;
      }
    });
    pane.canvas.addEventListener("mousemove", (ev) => {
      if (!this.dragging || this.dragging.pane !== kind) return;
      const p = pane.viewport.toImage(ev.offsetX, ev.offsetY);
      this.session.movePoint(this.dragging.index, kind, p.x, p.y);
    });
    pane.canvas.addEventListener("mouseup", () => {
      this.dragging = null;
    });
  }

  private hitTest(pane: PaneElements, kind: "image" | "map", sx: number, sy: number): number | null {
    for (let i = this.session.pairs.length - 1; i >= 0; i--) {
      const pair = this.session.pairs[i];
      const pt = kind === "image" ? pair?.imagePx : pair?.mapPx;
      if (!pt) continue;
      const s = pane.viewport.toScreen(pt[0], pt[1]);
      if (Math.hypot(s.x - sx, s.y - sy) <= MARKER_HIT_RADIUS_PX) return i;
    }
    return null;
  }

  deleteSelected(): void {
    if (this.session.selection !== null) {
      this.session.deletePair(this.session.selection);
    }
  }

  private async uploadImages(root: HTMLElement): Promise<void> {
    const cameraFile = root.querySelector<HTMLInputElement>("#camera-file")?.files?.[0];
    const mapFile = root.querySelector<HTMLInputElement>("#map-file")?.files?.[0];
    const scale = Number(root.querySelector<HTMLInputElement>("#map-scale")?.value ?? "1");
    const originText = root.querySelector<HTMLInputElement>("#map-origin")?.value ?? "0,0";
    const [ox, oy] = originText.split(",").map(Number);
    if (!cameraFile || !mapFile || !Number.isFinite(ox) || !Number.isFinite(oy)) {
      this.errorEl.textContent = "pick both images and a valid origin";
      return;
    }
    try {
      await this.api.putImages(this.session.sessionId, cameraFile, mapFile, scale, [
        ox as number,
        oy as number,
      ]);
      await this.loadPaneImage(this.cameraPane, cameraFile);
      await this.loadPaneImage(this.mapPane, mapFile);
      await this.session.refreshCalibration();
    } catch (err) {
      this.errorEl.textContent = String(err);
    }
  }

  private async loadPaneImage(pane: PaneElements, file: Blob): Promise<void> {
    const url = URL.createObjectURL(file);
    const image = new Image();
    await new Promise<void>((resolve) => {
      image.onload = () => resolve();
      image.onerror = () => resolve(); // pane stays empty; clicks still work
      image.src = url;
    });
    pane.image = image;
    this.render();
  }

  render(): void {
    this.statusEl.textContent = this.session.statusText();
    const rms = this.session.rms();
    this.rmsEl.textContent = rms === null ? "" : `rms ${rms.toExponential(3)} px`;
    this.errorEl.textContent = this.session.lastError ?? "";

    this.pairListEl.innerHTML = "";
    const badges = this.session.badges();
    this.session.pairs.forEach((pair, i) => {
      const li = document.createElement("li");
      li.dataset.index = String(i);
      const badge = badges.find((b) => b.pairIndex === i);
      if (badge) {
        li.textContent = `#${i} residual ${badge.residualPx.toExponential(3)} px`;
        li.dataset.flagged = String(badge.flagged);
        li.dataset.max = String(badge.isMax);
      } else {
        li.textContent = isComplete(pair) ? `#${i} (pending)` : `#${i} (incomplete)`;
      }
      if (i === this.session.selection) li.classList.add("selected");
      this.pairListEl.appendChild(li);
    });

    this.drawPane(this.cameraPane, "image");
    this.drawPane(this.mapPane, "map");
    this.updatePreview();
  }

  private updatePreview(): void {
    const cal = this.session.calibration;
    if (cal === null || cal.status !== "ok") {
      this.previewImg.removeAttribute("src");
      return;
    }
    if (!this.preview.shouldDisplay(cal.revision)) return;
    this.previewImg.src = this.preview.urlFor(cal.revision);
    this.drawGrid();
  }

  private drawGrid(): void {
    const ctx = this.gridOverlay.getContext?.("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.gridOverlay.width, this.gridOverlay.height);
    if (!this.preview.gridEnabled) return;
    const { xs, ys } = this.preview.gridLines();
    ctx.strokeStyle = "rgba(0, 200, 120, 0.5)";
    ctx.beginPath();
    for (const x of xs) {
      ctx.moveTo(x, 0);
      ctx.lineTo(x, this.gridOverlay.height);
    }
    for (const y of ys) {
      ctx.moveTo(0, y);
      ctx.lineTo(this.gridOverlay.width, y);
    }
    ctx.stroke();
  }

  private drawPane(pane: PaneElements, kind: "image" | "map"): void {
    const ctx = pane.canvas.getContext?.("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, pane.canvas.width, pane.canvas.height);
    if (pane.image) {
      const origin = pane.viewport.toScreen(0, 0);
      ctx.drawImage(
        pane.image,
        origin.x,
        origin.y,
        pane.image.naturalWidth * pane.viewport.scale,
        pane.image.naturalHeight * pane.viewport.scale,
      );
    }
    const badges = this.session.badges();
    this.session.pairs.forEach((pair, i) => {
      const pt = kind === "image" ? pair.imagePx : pair.mapPx;
      if (!pt) return;
      const s = pane.viewport.toScreen(pt[0], pt[1]);
      const badge = badges.find((b) => b.pairIndex === i);
      ctx.beginPath();
      ctx.arc(s.x, s.y, 5, 0, 2 * Math.PI);
      ctx.fillStyle = badge?.flagged ? "#e04040" : "#40c060";
      ctx.fill();
      if (i === this.session.selection) {
        ctx.strokeStyle = "#ffffff";
        ctx.stroke();
      }
    });
  }
}

async function bootstrap(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) return;
  const api = new CalibrationApi("");
  const params = new URLSearchParams(window.location.search);
  let sessionId = params.get("session");
  if (!sessionId) {
    const created = await api.createSession(`session-${new Date().toISOString()}`);
    sessionId = created.id;
    params.set("session", sessionId);
    window.history.replaceState(null, "", `?${params}`);
  }
  const app = new App(root, api, sessionId);
  window.addEventListener("keydown", (ev) => {
    if (ev.key === "Delete" || ev.key === "Backspace") app.deleteSelected();
  });
  void app.session.refreshCalibration();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  void bootstrap();
}
