import { test } from "node:test";
import assert from "node:assert/strict";
import { DEFAULT_RAMP, InputSender, mapGamepad, stepKeyboard, } from "../src/input.js";
const LIMITS = { deltaMax: 0.4, tauMin: -1.0, tauMax: 1.0 };
const IDLE = { left: false, right: false, up: false, down: false };
function run(state, keys, seconds) {
    const dt = 1 / 60;
    for (let i = 0; i < seconds * 60; i++) {
        state = stepKeyboard(state, keys, dt, LIMITS, DEFAULT_RAMP);
    }
    return state;
}
test("no keys pressed decays to neutral", () => {
    const settled = run({ delta: 0.3, tau: 0.8 }, IDLE, 1.0);
    assert.equal(settled.delta, 0);
    assert.equal(settled.tau, 0);
});
test("full left plus full throttle saturates at the limits", () => {
    const held = run({ delta: 0, tau: 0 }, { ...IDLE, left: true, up: true }, 1.0);
    assert.equal(held.delta, LIMITS.deltaMax); // left-positive convention
    assert.equal(held.tau, LIMITS.tauMax);
});
test("brake key ramps toward tauMin", () => {
    const held = run({ delta: 0, tau: 0.5 }, { ...IDLE, down: true }, 1.0);
    assert.equal(held.tau, LIMITS.tauMin);
});
test("attack ramp is gradual, not a step", () => {
    const one = stepKeyboard({ delta: 0, tau: 0 }, { ...IDLE, left: true }, 1 / 60, LIMITS, DEFAULT_RAMP);
    assert.ok(one.delta > 0 && one.delta < LIMITS.deltaMax);
});
test("opposed keys cancel", () => {
    const held = run({ delta: 0.2, tau: 0 }, { ...IDLE, left: true, right: true }, 0.5);
    assert.equal(held.delta, 0);
});
test("gamepad axis maps linearly with deadzone", () => {
    const half = mapGamepad(0.5, 0, 0, LIMITS);
    assert.ok(Math.abs(Math.abs(half.delta) - 0.5 * LIMITS.deltaMax) < 1e-12);
    const dead = mapGamepad(0.05, 0, 0, LIMITS);
    assert.equal(dead.delta, 0);
    const full = mapGamepad(0, 1.0, 0, LIMITS);
    assert.equal(full.tau, LIMITS.tauMax);
    const braking = mapGamepad(0, 0, 1.0, LIMITS);
    assert.equal(braking.tau, LIMITS.tauMin);
});
test("input sender holds 60 Hz within 10 percent", async () => {
    let count = 0;
    const sender = new InputSender(60, () => ({ delta: 0, tau: 0 }), () => {
        count++;
    });
    sender.start();
    await new Promise((resolve) => setTimeout(resolve, 1000));
    sender.stop();
    assert.ok(count >= 54 && count <= 66, `sent ${count} frames in 1 s`);
});
