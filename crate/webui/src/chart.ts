// Fixed-capacity, time-ordered sample buffer for the live data chart.

export const CHART_CAPACITY = 600;

export interface Sample {
  t: number;
  values: number[];
}

export class ChartBuffer {
  private readonly data: Sample[] = [];
  readonly capacity: number;

  constructor(capacity: number = CHART_CAPACITY) {
    this.capacity = capacity;
  }

  /** Append a sample; older-than-newest samples are ignored. */
  push(t: number, values: number[]): boolean {
    const last = this.data[this.data.length - 1];
    if (last !== undefined && t < last.t) return false;
    this.data.push({ t, values });
    if (this.data.length > this.capacity) this.data.splice(0, this.data.length - this.capacity);
    return true;
  }

  get length(): number {
    return this.data.length;
  }

  samples(): readonly Sample[] {
    return this.data;
  }

  clear(): void {
    this.data.length = 0;
  }
}
