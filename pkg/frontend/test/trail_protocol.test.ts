import { test } from "node:test";
import assert from "node:assert/strict";

import { Trail } from "../src/trail.js";
import { parseServerFrame } from "../src/protocol.js";

test("trail ring buffer stays bounded and ordered", () => {
  const trail = new Trail(5);
  for (let i = 0; i < 12; i++) {
    trail.push({ x: i, y: 0, intervention: i });
  }
  assert.equal(trail.length, 5);
  const seen: number[] = [];
  trail.forEach((p) => seen.push(p.x));
  assert.deepEqual(seen, [7, 8, 9, 10, 11]);   // oldest first
  assert.equal(trail.windowMax(), 11);
  trail.clear();
  assert.equal(trail.length, 0);
  assert.equal(trail.windowMax(), 0);
});

test("window max tracks only retained points", () => {
  const trail = new Trail(3);
  trail.push({ x: 0, y: 0, intervention: 9 });
  trail.push({ x: 0, y: 0, intervention: 1 });
  trail.push({ x: 0, y: 0, intervention: 2 });
  trail.push({ x: 0, y: 0, intervention: 3 });  // evicts the 9
  assert.equal(trail.windowMax(), 3);
});

test("server frames parse by type", () => {
  const tel = parseServerFrame(JSON.stringify({
    type: "telemetry", t: 0.1,
    state: { px: 0, py: 0, psi: 0, vx: 1, vy: 0, r: 0, s: 0, e_lat: 0, mu: 0 },
    ud: [0, 0.2], u: [0, 0.2], intervention: 0, corners: [0.04, -0.04],
    slack: 0, status: "optimal",
  }));
  assert.ok(tel && tel.type === "telemetry");
  const track = parseServerFrame(JSON.stringify({
    type: "track", half_width: 0.3, centerline: [[0, 0], [1, 0]],
  }));
  assert.ok(track && track.type === "track");
});

test("malformed frames return null instead of throwing", () => {
  assert.equal(parseServerFrame("{nope"), null);
  assert.equal(parseServerFrame(JSON.stringify({ type: "warp" })), null);
  assert.equal(parseServerFrame(JSON.stringify(42)), null);
});
