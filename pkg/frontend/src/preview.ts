/**
 * BEV preview panel state: preview URL construction, stale-response
 * discarding, and the metric grid overlay.
 *
 * The preview image itself is rendered server-side (it is a warp of the
 * camera image); the client only chooses the viewing similarity (pixels
 * per meter, origin, extent) and draws a 1-meter grid on top so a human
 * can sanity-check scale against known road features.
 */

import { CalibrationApi } from "./api.js";

export class PreviewController {
  ppm = 10;
  width = 800;
  height = 800;
  origin: [number, number] = [0, 0];
  gridEnabled = true;

  private shownRevision = -1;

  constructor(
    private readonly api: CalibrationApi,
    private readonly sessionId: string,
  ) {}

  urlFor(revision: number): string {
    return this.api.bevPreviewUrl(
      this.sessionId,
      this.ppm,
      this.width,
      this.height,
      this.origin,
      revision,
    );
  }

  /** Accept only responses at least as new as anything already shown. */
  shouldDisplay(responseRevision: number): boolean {
    if (responseRevision < this.shownRevision) return false;
    this.shownRevision = responseRevision;
    return true;
  }

  /** Grid spacing in preview pixels for 1 m world spacing. */
  gridSpacingPx(): number {
    return this.ppm;
  }

  /** Preview-pixel position of a world point under the current similarity. */
  worldToPreview(worldX: number, worldY: number): [number, number] {
    return [(worldX - this.origin[0]) * this.ppm, (worldY - this.origin[1]) * this.ppm];
  }

  /** Vertical/horizontal grid line coordinates across the canvas. */
  gridLines(): { xs: number[]; ys: number[] } {
    const spacing = this.gridSpacingPx();
    const xs: number[] = [];
    const ys: number[] = [];
    const startX = Math.ceil(this.origin[0]) - this.origin[0];
    for (let x = startX * this.ppm; x <= this.width; x += spacing) xs.push(x);
    const startY = Math.ceil(this.origin[1]) - this.origin[1];
    for (let y = startY * this.ppm; y <= this.height; y += spacing) ys.push(y);
    return { xs, ys };
  }
}
