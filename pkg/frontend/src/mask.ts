// Brush-paint mask state: a binary bitmap matching the frame dimensions,
// with stroke interpolation and an undo stack of full snapshots (masks are
// tiny, so snapshots are cheaper than bookkeeping).

import { bytesToBase64, encodeGrayPng } from "./png.js";

const UNDO_LIMIT = 32;

export class MaskCanvasState {
  readonly width: number;
  readonly height: number;
  brushRadius: number;
  bitmap: Uint8Array;
  private undoStack: Uint8Array[] = [];

  constructor(width: number, height: number, brushRadius = 6) {
    if (width < 1 || height < 1) throw new Error("mask dimensions must be positive");
    this.width = width;
    this.height = height;
    this.brushRadius = brushRadius;
    this.bitmap = new Uint8Array(width * height);
  }

  paintedCount(): number {
    let n = 0;
    for (let i = 0; i < this.bitmap.length; i++) n += this.bitmap[i];
    return n;
  }

  anyPainted(): boolean {
    return this.bitmap.some((v) => v > 0);
  }

  /** Push the current bitmap onto the undo stack (call at stroke start). */
  beginStroke(): void {
    this.undoStack.push(this.bitmap.slice());
    if (this.undoStack.length > UNDO_LIMIT) this.undoStack.shift();
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.bitmap = prev;
    return true;
  }

  clear(): void {
    this.beginStroke();
    this.bitmap.fill(0);
  }

  paintDisk(cx: number, cy: number, radius = this.brushRadius): void {
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(cx - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
    const y0 = Math.max(0, Math.floor(cy - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) this.bitmap[y * this.width + x] = 1;
      }
    }
  }

  /** Paint a stroke segment as overlapping disks so fast drags stay solid. */
  paintStroke(fromX: number, fromY: number, toX: number, toY: number): void {
    const dist = Math.hypot(toX - fromX, toY - fromY);
    const steps = Math.max(1, Math.ceil(dist / Math.max(1, this.brushRadius * 0.5)));
    for (let s = 0; s <= steps; s++) {
      const t = s / steps;
      this.paintDisk(fromX + t * (toX - fromX), fromY + t * (toY - fromY));
    }
  }

  fillRect(x0: number, y0: number, x1: number, y1: number): void {
    for (let y = Math.max(0, y0); y <= Math.min(this.height - 1, y1); y++) {
      for (let x = Math.max(0, x0); x <= Math.min(this.width - 1, x1); x++) {
        this.bitmap[y * this.width + x] = 1;
      }
    }
  }

  toPng(): Uint8Array {
    return encodeGrayPng(this.bitmap, this.width, this.height);
  }

  toPngBase64(): string {
    return bytesToBase64(this.toPng());
  }
}
