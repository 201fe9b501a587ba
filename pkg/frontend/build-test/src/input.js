// Keyboard and gamepad capture mapped to (delta, tau).
//
// Keyboard keys are on/off, so an attack/decay ramp gives them an analog
// feel: while held, the command slews toward full deflection at the attack
// rate; released, it decays to zero. The ramp is a pure function of
// (state, keys, dt) and is tested headlessly. Steering is left-positive by
// default; flip `steerSign` to match taste.
export const DEFAULT_RAMP = { attack: 3.0, decay: 5.0 };
function slew(value, target, rate, dt) {
    const step = rate * dt;
    if (value < target)
        return Math.min(value + step, target);
    if (value > target)
        return Math.max(value - step, target);
    return value;
}
export function stepKeyboard(state, keys, dt, limits, ramp = DEFAULT_RAMP, steerSign = 1) {
    let deltaTarget = 0;
    if (keys.left !== keys.right) {
        deltaTarget = (keys.left ? 1 : -1) * steerSign * limits.deltaMax;
    }
    let tauTarget = 0;
    if (keys.up !== keys.down) {
        tauTarget = keys.up ? limits.tauMax : limits.tauMin;
    }
    const steerRate = deltaTarget !== 0 ? ramp.attack * limits.deltaMax : ramp.decay * limits.deltaMax;
    const tauRate = tauTarget !== 0 ? ramp.attack * limits.tauMax : ramp.decay * limits.tauMax;
    return {
        delta: clamp(slew(state.delta, deltaTarget, steerRate, dt), -limits.deltaMax, limits.deltaMax),
        tau: clamp(slew(state.tau, tauTarget, tauRate, dt), limits.tauMin, limits.tauMax),
    };
}
export function mapGamepad(axisSteer, throttle, brake, limits, steerSign = 1, deadzone = 0.08) {
    const steer = Math.abs(axisSteer) < deadzone ? 0 : axisSteer;
    const tau = throttle > brake ? throttle * limits.tauMax : brake * limits.tauMin;
    return {
        delta: steer === 0 ? 0
            : clamp(-steer * steerSign * limits.deltaMax, -limits.deltaMax, limits.deltaMax),
        tau: clamp(tau, limits.tauMin, limits.tauMax),
    };
}
function clamp(v, lo, hi) {
    return Math.min(Math.max(v, lo), hi);
}
export class KeyboardSource {
    constructor(limits, ramp = DEFAULT_RAMP) {
        this.limits = limits;
        this.ramp = ramp;
        this.keys = { left: false, right: false, up: false, down: false };
        this.state = { delta: 0, tau: 0 };
        this.last = 0;
    }
    attach(target) {
        target.addEventListener("keydown", (e) => this.onKey(e, true));
        target.addEventListener("keyup", (e) => this.onKey(e, false));
    }
    onKey(e, down) {
        switch (e.key) {
            case "ArrowLeft":
            case "a":
            case "A":
                this.keys.left = down;
                break;
            case "ArrowRight":
            case "d":
            case "D":
                this.keys.right = down;
                break;
            case "ArrowUp":
            case "w":
            case "W":
                this.keys.up = down;
                break;
            case "ArrowDown":
            case "s":
            case "S":
                this.keys.down = down;
                break;
            default: return;
        }
        e.preventDefault?.();
    }
    sample(nowMs) {
        const dt = this.last ? Math.min((nowMs - this.last) / 1000, 0.1) : 0;
        this.last = nowMs;
        this.state = stepKeyboard(this.state, this.keys, dt, this.limits, this.ramp);
        return this.state;
    }
}
// Fixed-rate sender decoupled from the render loop: the input timer fires at
// 60 Hz regardless of how long frames take to draw.
export class InputSender {
    constructor(hz, sample, send) {
        this.hz = hz;
        this.sample = sample;
        this.send = send;
        this.timer = null;
        this.sent = 0;
    }
    start() {
        if (this.timer !== null)
            return;
        this.timer = setInterval(() => {
            this.send(this.sample());
            this.sent++;
        }, 1000 / this.hz);
    }
    stop() {
        if (this.timer !== null)
            clearInterval(this.timer);
        this.timer = null;
    }
}
