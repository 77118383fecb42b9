/**
 * Zoom/pan transform between screen (canvas) and native image pixels.
 *
 * Image pixel (ix, iy) has its center at continuous coordinate
 * (ix, iy) — the same integer-center convention the warping backend
 * uses. Getting this mapping wrong would silently corrupt every
 * calibration click, which is why it is tested both ways.
 */

export interface Point {
  x: number;
  y: number;
}

export class Viewport {
  scale = 1;
  offsetX = 0; // image coordinate shown at screen (0, 0)
  offsetY = 0;

  toImage(screenX: number, screenY: number): Point {
    return { x: screenX / this.scale + this.offsetX, y: screenY / this.scale + this.offsetY };
  }

  toScreen(imageX: number, imageY: number): Point {
    return { x: (imageX - this.offsetX) * this.scale, y: (imageY - this.offsetY) * this.scale };
  }

  /** Zoom by `factor`, keeping the image point under the cursor fixed. */
  zoomAt(screenX: number, screenY: number, factor: number): void {
    const anchor = this.toImage(screenX, screenY);
    this.scale *= factor;
    this.offsetX = anchor.x - screenX / this.scale;
    this.offsetY = anchor.y - screenY / this.scale;
  }

  panBy(screenDx: number, screenDy: number): void {
    this.offsetX -= screenDx / this.scale;
    this.offsetY -= screenDy / this.scale;
  }

  reset(): void {
    this.scale = 1;
    this.offsetX = 0;
    this.offsetY = 0;
  }
}
