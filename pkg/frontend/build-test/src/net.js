// Websocket client with automatic reconnect and typed frame dispatch.
import { parseServerFrame } from "./protocol.js";
export class Connection {
    constructor(url, onFrame, onStatus) {
        this.url = url;
        this.onFrame = onFrame;
        this.onStatus = onStatus;
        this.status = "connecting";
        this.ws = null;
        this.retry = 0;
    }
    connect() {
        this.status = "connecting";
        this.onStatus(this.status);
        const ws = new WebSocket(this.url);
        this.ws = ws;
        ws.onopen = () => {
            this.retry = 0;
            this.status = "open";
            this.onStatus(this.status);
        };
        ws.onmessage = (ev) => {
            const frame = parseServerFrame(String(ev.data));
            if (frame)
                this.onFrame(frame);
        };
        ws.onclose = () => {
            this.status = "closed";
            this.onStatus(this.status);
            const backoff = Math.min(500 * 2 ** this.retry++, 5000);
            setTimeout(() => this.connect(), backoff);
        };
        ws.onerror = () => ws.close();
    }
    sendInput(delta, tau) {
        if (this.ws && this.ws.readyState === WebSocket.OPEN) {
            const frame = { type: "input", delta, tau };
            this.ws.send(JSON.stringify(frame));
        }
    }
    sendControl(type) {
        if (this.ws && this.ws.readyState === WebSocket.OPEN) {
            this.ws.send(JSON.stringify({ type }));
        }
    }
}
