// Bounded ring buffer of recent vehicle positions with intervention values,
// plus the rolling window maximum the heat mapping normalizes against.

export interface TrailPoint {
  x: number;
  y: number;
  intervention: number;
}

export class Trail {
  private buf: TrailPoint[];
  private head = 0;
  private count = 0;

  constructor(readonly capacity = 2000) {
    this.buf = new Array(capacity);
  }

  push(p: TrailPoint): void {
    this.buf[this.head] = p;
    this.head = (this.head + 1) % this.capacity;
    if (this.count < this.capacity) this.count++;
  }

  get length(): number {
    return this.count;
  }

  // oldest-first iteration
  forEach(fn: (p: TrailPoint) => void): void {
    const start = (this.head - this.count + this.capacity) % this.capacity;
    for (let i = 0; i < this.count; i++) {
      fn(this.buf[(start + i) % this.capacity]);
    }
  }

  windowMax(): number {
    let m = 0;
    this.forEach((p) => {
      if (p.intervention > m) m = p.intervention;
    });
    return m;
  }

  clear(): void {
    this.head = 0;
    this.count = 0;
  }
}
