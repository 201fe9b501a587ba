// Canvas scene: track boundaries, intervention heat trail, vehicle box,
// predicted backup trajectory, and desired-vs-applied gauges.
import { heatCss } from "./heat.js";
function fitViewport(track, w, h) {
    let minX = Infinity, maxX = -Infinity, minY = Infinity, maxY = -Infinity;
    for (const [x, y] of track.centerline) {
        minX = Math.min(minX, x);
        maxX = Math.max(maxX, x);
        minY = Math.min(minY, y);
        maxY = Math.max(maxY, y);
    }
    const pad = track.half_width * 2 + 0.3;
    minX -= pad;
    maxX += pad;
    minY -= pad;
    maxY += pad;
    const scale = Math.min(w / (maxX - minX), h / (maxY - minY));
    return {
        scale,
        ox: w / 2 - scale * (minX + maxX) / 2,
        oy: h / 2 + scale * (minY + maxY) / 2,
    };
}
function boundaries(track) {
    const pts = track.centerline;
    const left = [];
    const right = [];
    const n = pts.length;
    for (let i = 0; i < n; i++) {
        const [x0, y0] = pts[i];
        const [x1, y1] = pts[(i + 1) % n];
        const len = Math.hypot(x1 - x0, y1 - y0) || 1;
        const nx = -(y1 - y0) / len;
        const ny = (x1 - x0) / len;
        left.push([x0 + nx * track.half_width, y0 + ny * track.half_width]);
        right.push([x0 - nx * track.half_width, y0 - ny * track.half_width]);
    }
    return [left, right];
}
export class Renderer {
    constructor(ctx, width, height, vehicleLength = 0.1, vehicleWidth = 0.08) {
        this.ctx = ctx;
        this.width = width;
        this.height = height;
        this.vehicleLength = vehicleLength;
        this.vehicleWidth = vehicleWidth;
        this.vp = null;
        this.bounds = null;
        this.frames = 0;
    }
    toPx(x, y) {
        const vp = this.vp;
        return [vp.ox + vp.scale * x, vp.oy - vp.scale * y];
    }
    render(scene) {
        const ctx = this.ctx;
        ctx.fillStyle = "#101418";
        ctx.fillRect(0, 0, this.width, this.height);
        if (!scene.track) {
            ctx.fillStyle = "#8899aa";
            ctx.font = "16px system-ui";
            ctx.fillText("waiting for track…", 20, 30);
            this.frames++;
            return;
        }
        if (!this.vp) {
            this.vp = fitViewport(scene.track, this.width, this.height);
            this.bounds = boundaries(scene.track);
        }
        this.drawPolyline(scene.track.centerline, "#2c3640", 1, [4, 6], true);
        const [left, right] = this.bounds;
        this.drawPolyline(left, "#cfd8e3", 2, [], true);
        this.drawPolyline(right, "#cfd8e3", 2, [], true);
        // heat trail, oldest first so fresh points draw on top
        const windowMax = scene.trail.windowMax();
        scene.trail.forEach((p) => {
            const [px, py] = this.toPx(p.x, p.y);
            ctx.fillStyle = heatCss(p.intervention, windowMax);
            ctx.fillRect(px - 1.5, py - 1.5, 3, 3);
        });
        if (scene.trajectory && scene.trajectory.length > 1) {
            this.drawPolyline(scene.trajectory, "#5ad0f0", 1.5, [6, 4], false);
        }
        if (scene.telemetry) {
            this.drawVehicle(scene.telemetry);
            this.drawGauges(scene.telemetry);
        }
        else {
            ctx.fillStyle = "#8899aa";
            ctx.font = "14px system-ui";
            ctx.fillText("no telemetry yet", 20, 30);
        }
        if (!scene.connected) {
            ctx.fillStyle = "rgba(16,20,24,0.6)";
            ctx.fillRect(0, 0, this.width, 48);
            ctx.fillStyle = "#ff7a66";
            ctx.font = "bold 18px system-ui";
            ctx.fillText("disconnected — reconnecting…", 20, 30);
        }
        this.frames++;
    }
    drawPolyline(pts, style, lw, dash, close) {
        const ctx = this.ctx;
        ctx.strokeStyle = style;
        ctx.lineWidth = lw;
        ctx.setLineDash(dash);
        ctx.beginPath();
        pts.forEach(([x, y], i) => {
            const [px, py] = this.toPx(x, y);
            if (i === 0)
                ctx.moveTo(px, py);
            else
                ctx.lineTo(px, py);
        });
        if (close)
            ctx.closePath();
        ctx.stroke();
        ctx.setLineDash([]);
    }
    drawVehicle(t) {
        const ctx = this.ctx;
        const vp = this.vp;
        const [cx, cy] = this.toPx(t.state.px, t.state.py);
        ctx.save();
        ctx.translate(cx, cy);
        ctx.rotate(-t.state.psi);
        const L = this.vehicleLength * vp.scale;
        const W = this.vehicleWidth * vp.scale;
        ctx.fillStyle = "#f0f4f8";
        ctx.fillRect(-L / 2, -W / 2, L, W);
        ctx.fillStyle = "#ff9f43";
        ctx.fillRect(L / 2 - 3, -W / 2, 3, W); // nose marker
        ctx.restore();
    }
    drawGauges(t) {
        const ctx = this.ctx;
        const x0 = 20;
        const y0 = this.height - 70;
        ctx.font = "12px system-ui";
        this.gauge(x0, y0, "steer", t.ud[0], t.u[0], 0.4);
        this.gauge(x0, y0 + 34, "drive", t.ud[1], t.u[1], 1.0);
        ctx.fillStyle = "#cfd8e3";
        ctx.fillText(`intervention ${t.intervention.toFixed(3)}   status ${t.status}`, x0, y0 - 12);
    }
    gauge(x, y, label, desired, applied, span) {
        const ctx = this.ctx;
        const w = 180, h = 10;
        ctx.fillStyle = "#2c3640";
        ctx.fillRect(x, y, w, h);
        ctx.fillRect(x, y + h + 3, w, h);
        const mark = (v, row, color) => {
            const px = x + ((v + span) / (2 * span)) * w;
            ctx.fillStyle = color;
            ctx.fillRect(px - 2, y + row * (h + 3), 4, h);
        };
        mark(desired, 0, "#8899aa"); // desired on top
        mark(applied, 1, "#5af0a0"); // applied below
        ctx.fillStyle = "#cfd8e3";
        ctx.fillText(label, x + w + 8, y + h + 2);
    }
}
