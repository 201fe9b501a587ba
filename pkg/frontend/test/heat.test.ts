import { test } from "node:test";
import assert from "node:assert/strict";
import { readFileSync } from "node:fs";

import { heatBucket, heatColor, heatFraction } from "../src/heat.js";

test("zero intervention maps to the cool end", () => {
  assert.equal(heatFraction(0, 1.0), 0);
  assert.deepEqual(heatColor(0, 1.0), [70, 110, 160]);
  assert.equal(heatBucket(0, 1.0), 0);
});

test("window max maps to the hot end", () => {
  assert.equal(heatFraction(2.0, 2.0), 1.0);
  assert.equal(heatBucket(2.0, 2.0, 5), 4);
  assert.deepEqual(heatColor(2.0, 2.0), [255, 240, 200]);
});

test("mapping is monotone in the value", () => {
  let prev = -1;
  for (let v = 0; v <= 1.0; v += 0.05) {
    const f = heatFraction(v, 1.0);
    assert.ok(f >= prev);
    prev = f;
  }
});

test("degenerate windows stay cool instead of dividing by zero", () => {
  assert.equal(heatFraction(0.5, 0), 0);
  assert.equal(heatBucket(0.3, NaN), 0);
  assert.equal(heatFraction(NaN, 1), 0);
});

test("recorded unsafe lap: hotspots sit inside the fault windows", () => {
  const doc = JSON.parse(
    readFileSync(new URL("../../test/fixtures/telemetry.json", import.meta.url), "utf8"),
  ) as {
    fault_windows: [number, number, number, number][];
    points: { t: number; px: number; py: number; intervention: number }[];
  };
  const windowMax = Math.max(...doc.points.map((p) => p.intervention));
  assert.ok(windowMax > 0.5, "fixture must contain real interventions");

  const hot = doc.points.filter((p) => heatBucket(p.intervention, windowMax) >= 3);
  assert.ok(hot.length >= 5, `expected a visible hot cluster, got ${hot.length}`);

  // every hot point lies inside (or in the short recovery tail of) a window
  const inWindow = (t: number) =>
    doc.fault_windows.some(([t0, t1]) => t >= t0 && t <= t1 + 0.8);
  for (const p of hot) {
    assert.ok(inWindow(p.t), `hot point at t=${p.t} outside every fault window`);
  }

  // and the quiet majority of the lap renders cool
  const calm = doc.points.filter((p) => !inWindow(p.t));
  const coolShare =
    calm.filter((p) => heatBucket(p.intervention, windowMax) === 0).length /
    calm.length;
  assert.ok(coolShare > 0.95, `cool share ${coolShare}`);
});
