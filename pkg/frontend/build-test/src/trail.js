// Bounded ring buffer of recent vehicle positions with intervention values,
// plus the rolling window maximum the heat mapping normalizes against.
export class Trail {
    constructor(capacity = 2000) {
        this.capacity = capacity;
        this.head = 0;
        this.count = 0;
        this.buf = new Array(capacity);
    }
    push(p) {
        this.buf[this.head] = p;
        this.head = (this.head + 1) % this.capacity;
        if (this.count < this.capacity)
            this.count++;
    }
    get length() {
        return this.count;
    }
    // oldest-first iteration
    forEach(fn) {
        const start = (this.head - this.count + this.capacity) % this.capacity;
        for (let i = 0; i < this.count; i++) {
            fn(this.buf[(start + i) % this.capacity]);
        }
    }
    windowMax() {
        let m = 0;
        this.forEach((p) => {
            if (p.intervention > m)
                m = p.intervention;
        });
        return m;
    }
    clear() {
        this.head = 0;
        this.count = 0;
    }
}
