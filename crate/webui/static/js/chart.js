// Fixed-capacity, time-ordered sample buffer for the live data chart.
export const CHART_CAPACITY = 600;
export class ChartBuffer {
    constructor(capacity = CHART_CAPACITY) {
        this.data = [];
        this.capacity = capacity;
    }
    /** Append a sample; older-than-newest samples are ignored. */
    push(t, values) {
        const last = this.data[this.data.length - 1];
        if (last !== undefined && t < last.t)
            return false;
        this.data.push({ t, values });
        if (this.data.length > this.capacity)
            this.data.splice(0, this.data.length - this.capacity);
        return true;
    }
    get length() {
        return this.data.length;
    }
    samples() {
        return this.data;
    }
    clear() {
        this.data.length = 0;
    }
}
