/**
 * The editable mask layer: class indices per pixel, brush strokes,
 * and an undo/redo stack of full snapshots (at least 20 levels).
 */

export const CLASS_COUNT = 7;
export const UNDO_LEVELS = 30;

export interface BrushState {
  classIndex: number; // 0..6, validated against the palette
  radius: number; // pixels; 1 paints exactly the center pixel
  opacity: number; // overlay rendering only, never stored in the mask
}

export interface Point {
  x: number;
  y: number;
}

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  data: Uint8Array;
  private undoStack: Uint8Array[] = [];
  private redoStack: Uint8Array[] = [];

  constructor(width: number, height: number, initial?: Uint8Array) {
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
    if (initial) {
      if (initial.length !== width * height) {
        throw new Error(`initial mask has ${initial.length} pixels, expected ${width * height}`);
      }
      this.data.set(initial);
    }
  }

  private snapshot(): void {
    this.undoStack.push(new Uint8Array(this.data));
    if (this.undoStack.length > UNDO_LEVELS) {
      this.undoStack.shift();
    }
    this.redoStack = [];
  }

  /**
   * Stamp brush disks along the interpolated path. Points outside the
   * image clamp to its bounds. One stroke = one undo level.
   */
  paintStroke(path: Point[], brush: BrushState): void {
    if (path.length === 0) return;
    if (!Number.isInteger(brush.classIndex) || brush.classIndex < 0 || brush.classIndex >= CLASS_COUNT) {
      throw new Error(`class index ${brush.classIndex} outside palette 0..${CLASS_COUNT - 1}`);
    }
    this.snapshot();
    const clamped = path.map((p) => ({
      x: Math.min(Math.max(p.x, 0), this.width - 1),
      y: Math.min(Math.max(p.y, 0), this.height - 1),
    }));
    let previous = clamped[0];
    this.stampDisk(previous.x, previous.y, brush);
    for (let i = 1; i < clamped.length; i++) {
      const next = clamped[i];
      const steps = Math.max(Math.abs(next.x - previous.x), Math.abs(next.y - previous.y));
      for (let s = 1; s <= steps; s++) {
        const x = previous.x + ((next.x - previous.x) * s) / steps;
        const y = previous.y + ((next.y - previous.y) * s) / steps;
        this.stampDisk(Math.round(x), Math.round(y), brush);
      }
      previous = next;
    }
  }

  private stampDisk(cx: number, cy: number, brush: BrushState): void {
    const r = brush.radius;
    const r2 = r * r;
    for (let dy = -r + 1; dy <= r - 1; dy++) {
      for (let dx = -r + 1; dx <= r - 1; dx++) {
        if (dx * dx + dy * dy >= r2) continue; // strict: radius 1 = one pixel
        const x = cx + dx;
        const y = cy + dy;
        if (x < 0 || y < 0 || x >= this.width || y >= this.height) continue;
        this.data[y * this.width + x] = brush.classIndex;
      }
    }
  }

  fillAll(classIndex: number): void {
    if (classIndex < 0 || classIndex >= CLASS_COUNT) {
      throw new Error(`class index ${classIndex} outside palette`);
    }
    this.snapshot();
    this.data.fill(classIndex);
  }

  /** Replace contents (e.g. remote reload); clears history. */
  reset(data: Uint8Array): void {
    if (data.length !== this.data.length) {
      throw new Error("reset size mismatch");
    }
    this.data.set(data);
    this.undoStack = [];
    this.redoStack = [];
  }

  undo(): boolean {
    const prior = this.undoStack.pop();
    if (!prior) return false;
    this.redoStack.push(new Uint8Array(this.data));
    this.data.set(prior);
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(new Uint8Array(this.data));
    this.data.set(next);
    return true;
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  /** Fraction of pixels carrying a non-background class. */
  progress(): number {
    let labeled = 0;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== 0) labeled++;
    }
    return labeled / this.data.length;
  }
}
