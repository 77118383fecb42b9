/**
 * Calibration session state: the ordered pair list, its sync with the
 * server, and the per-pair residual badges.
 *
 * A pair is created by clicking the camera pane and then the map pane;
 * points are draggable afterwards. Every mutation schedules a
 * full-list PUT (debounced so dragging does not cause request storms)
 * followed by a calibration refresh. Mutations are optimistic: on a
 * server error the list rolls back to the last acknowledged state.
 * Displayed residuals always correspond to the displayed list — a
 * calibration response is dropped unless its revision matches the last
 * acknowledged PUT.
 */

import { ApiError, CalibrationApi, CalibrationResponse, PairDto } from "./api.js";

export interface Pair {
  imagePx: [number, number] | null;
  mapPx: [number, number] | null;
  label?: string;
}

export const isComplete = (p: Pair): boolean => p.imagePx !== null && p.mapPx !== null;

export interface Badge {
  pairIndex: number;
  residualPx: number;
  flagged: boolean;
  isMax: boolean;
}

export type SessionListener = () => void;

export interface SessionOptions {
  debounceMs?: number;
  highlightThresholdPx?: number;
}

export class SessionController {
  pairs: Pair[] = [];
  selection: number | null = null;
  calibration: CalibrationResponse | null = null;
  dirty = false;
  lastError: string | null = null;

  /** revision acknowledged by the most recent successful PUT */
  private ackedRevision = 0;
  private ackedPairs: Pair[] = [];
  private pendingImageClick: [number, number] | null = null;
  private debounceHandle: ReturnType<typeof setTimeout> | null = null;
  private listeners: SessionListener[] = [];
  private syncing: Promise<void> | null = null;

  readonly debounceMs: number;
  highlightThresholdPx: number;

  constructor(
    private readonly api: CalibrationApi,
    readonly sessionId: string,
    options: SessionOptions = {},
  ) {
    this.debounceMs = options.debounceMs ?? 250;
    this.highlightThresholdPx = options.highlightThresholdPx ?? 3;
  }

  onChange(listener: SessionListener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  get revision(): number {
    return this.ackedRevision;
  }

  get awaitingMapClick(): boolean {
    return this.pendingImageClick !== null;
  }

  /** First half of a new pair: a click on the camera pane. */
  clickCamera(imageX: number, imageY: number): void {
    this.pendingImageClick = [imageX, imageY];
    this.notify();
  }

  /** Second half: a click on the map pane completes the pair. */
  clickMap(mapX: number, mapY: number): void {
    if (this.pendingImageClick === null) {
      return; // camera click comes first
    }
    this.pairs.push({ imagePx: this.pendingImageClick, mapPx: [mapX, mapY] });
    this.pendingImageClick = null;
    this.selection = this.pairs.length - 1;
    this.markDirty();
  }

  movePoint(index: number, which: "image" | "map", x: number, y: number): void {
    const pair = this.pairs[index];
    if (!pair) return;
    if (which === "image") pair.imagePx = [x, y];
    else pair.mapPx = [x, y];
    this.markDirty();
  }

  deletePair(index: number): void {
    if (index < 0 || index >= this.pairs.length) return;
    this.pairs.splice(index, 1);
    if (this.selection !== null && this.selection >= this.pairs.length) {
      this.selection = this.pairs.length ? this.pairs.length - 1 : null;
    }
    this.markDirty();
  }

  private markDirty(): void {
    this.dirty = true;
    this.notify();
    this.scheduleSync();
  }

  private scheduleSync(): void {
    if (this.debounceHandle !== null) clearTimeout(this.debounceHandle);
    this.debounceHandle = setTimeout(() => {
      this.debounceHandle = null;
      void this.syncNow();
    }, this.debounceMs);
  }

  /** PUT the full (complete) pair list and refresh calibration. */
  async syncNow(): Promise<void> {
    if (this.debounceHandle !== null) {
      clearTimeout(this.debounceHandle);
      this.debounceHandle = null;
    }
    if (this.syncing) await this.syncing;
    const run = this.doSync();
    this.syncing = run;
    try {
      await run;
    } finally {
      this.syncing = null;
    }
  }

  private async doSync(): Promise<void> {
    const snapshot: Pair[] = this.pairs.map((p) => ({ ...p }));
    const dto: PairDto[] = snapshot
      .filter(isComplete)
      .map((p) => ({
        map_px: p.mapPx as [number, number],
        image_px: p.imagePx as [number, number],
        ...(p.label !== undefined ? { label: p.label } : {}),
      }));
    try {
      const { revision } = await this.api.putCorrespondences(this.sessionId, dto);
      this.ackedRevision = revision;
      this.ackedPairs = snapshot;
      this.dirty = false;
      this.lastError = null;
      this.notify();
      await this.refreshCalibration();
    } catch (err) {
      // optimistic update failed: roll back to the acknowledged list
      this.pairs = this.ackedPairs.map((p) => ({ ...p }));
      this.dirty = false;
      this.lastError = err instanceof ApiError ? `server rejected update (${err.status})` : String(err);
      this.notify();
    }
  }

  async refreshCalibration(): Promise<void> {
    const response = await this.api.getCalibration(this.sessionId);
    if (response.revision < this.ackedRevision) {
      return; // stale: a newer mutation was acknowledged since this GET started
    }
    // equal: our own PUT; greater: image upload or another tab (last writer wins)
    this.ackedRevision = response.revision;
    this.calibration = response;
    this.notify();
  }

  /** Human-readable status line for the panel. */
  statusText(): string {
    if (this.calibration === null) return "not calibrated yet";
    switch (this.calibration.status) {
      case "ok":
        return "ok";
      case "insufficient_points":
        return "need ≥ 4 points";
      case "degenerate":
        return `degenerate: ${this.calibration.message ?? "configuration"}`;
    }
  }

  /** Residual badges for complete pairs, in pair order. */
  badges(): Badge[] {
    if (this.calibration === null || this.calibration.status !== "ok") return [];
    const residuals = this.calibration.residuals_px;
    const maxValue = Math.max(...residuals);
    return residuals.map((residualPx, pairIndex) => ({
      pairIndex,
      residualPx,
      flagged: residualPx > this.highlightThresholdPx,
      isMax: residuals.length > 1 && residualPx === maxValue,
    }));
  }

  rms(): number | null {
    return this.calibration?.status === "ok" ? this.calibration.rms : null;
  }
}
