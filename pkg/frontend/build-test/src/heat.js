// Intervention heat mapping: a pure function of the value and the rolling
// window maximum, so it is unit-testable without a canvas. Zero maps to a
// cool steel blue, the window maximum to hot yellow-white, through red.
const STOPS = [
    { at: 0.0, color: [70, 110, 160] }, // cool
    { at: 0.25, color: [90, 170, 120] },
    { at: 0.5, color: [235, 180, 60] },
    { at: 0.75, color: [235, 90, 40] },
    { at: 1.0, color: [255, 240, 200] }, // hot
];
export function heatFraction(value, windowMax) {
    if (!isFinite(value) || value <= 0)
        return 0;
    if (!isFinite(windowMax) || windowMax <= 0)
        return 0;
    return Math.min(value / windowMax, 1);
}
export function heatColor(value, windowMax) {
    const f = heatFraction(value, windowMax);
    for (let i = 1; i < STOPS.length; i++) {
        if (f <= STOPS[i].at) {
            const lo = STOPS[i - 1];
            const hi = STOPS[i];
            const w = (f - lo.at) / (hi.at - lo.at);
            return [
                Math.round(lo.color[0] + w * (hi.color[0] - lo.color[0])),
                Math.round(lo.color[1] + w * (hi.color[1] - lo.color[1])),
                Math.round(lo.color[2] + w * (hi.color[2] - lo.color[2])),
            ];
        }
    }
    return STOPS[STOPS.length - 1].color;
}
export function heatCss(value, windowMax) {
    const [r, g, b] = heatColor(value, windowMax);
    return `rgb(${r},${g},${b})`;
}
// Discrete buckets used by the tests and the legend: 0 = cool .. n-1 = hot.
export function heatBucket(value, windowMax, buckets = 5) {
    const f = heatFraction(value, windowMax);
    return Math.min(Math.floor(f * buckets), buckets - 1);
}
