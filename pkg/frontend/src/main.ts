// Wiring: socket, input capture at a fixed 60 Hz, render loop on rAF.

import { Connection } from "./net.js";
import { InputSender, InputState, KeyboardSource, mapGamepad } from "./input.js";
import { Renderer, Scene } from "./render.js";
import { Trail } from "./trail.js";

const LIMITS = { deltaMax: 0.4, tauMin: -1.0, tauMax: 1.0 };
const TRAIL_CAPACITY = 2000;
const INPUT_HZ = 60;

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const renderer = new Renderer(ctx, canvas.width, canvas.height);

const scene: Scene = {
  track: null,
  telemetry: null,
  trajectory: null,
  trail: new Trail(TRAIL_CAPACITY),
  connected: false,
};

const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const conn = new Connection(
  wsUrl,
  (frame) => {
    switch (frame.type) {
      case "track":
        scene.track = frame;
        break;
      case "telemetry":
        scene.telemetry = frame;
        scene.trail.push({
          x: frame.state.px,
          y: frame.state.py,
          intervention: frame.intervention,
        });
        break;
      case "trajectory":
        scene.trajectory = frame.pts;
        break;
      case "error":
        console.warn("server:", frame.msg);
        break;
      case "ack":
        break;
    }
  },
  (status) => {
    scene.connected = status === "open";
  },
);
conn.connect();

const keyboard = new KeyboardSource(LIMITS);
keyboard.attach(window);

function sampleInput(): InputState {
  const pads = navigator.getGamepads?.() ?? [];
  const gp = pads.find((p) => p !== null);
  if (gp) {
    const throttle = gp.buttons?.[7]?.value ?? 0;
    const brake = gp.buttons?.[6]?.value ?? 0;
    return mapGamepad(gp.axes?.[0] ?? 0, throttle, brake, LIMITS);
  }
  return keyboard.sample(performance.now());
}

const sender = new InputSender(INPUT_HZ, sampleInput, (s) =>
  conn.sendInput(s.delta, s.tau),
);
sender.start();

document.getElementById("reset")?.addEventListener("click", () =>
  conn.sendControl("reset"),
);

function frame(): void {
  renderer.render(scene);
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
