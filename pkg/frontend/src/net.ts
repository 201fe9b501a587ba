// Websocket client with automatic reconnect and typed frame dispatch.

import { InputFrame, parseServerFrame, ServerFrame } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "closed";

export class Connection {
  status: ConnectionStatus = "connecting";
  private ws: WebSocket | null = null;
  private retry = 0;

  constructor(
    private readonly url: string,
    private readonly onFrame: (f: ServerFrame) => void,
    private readonly onStatus: (s: ConnectionStatus) => void,
  ) {}

  connect(): void {
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
      if (frame) this.onFrame(frame);
    };
    ws.onclose = () => {
      this.status = "closed";
      this.onStatus(this.status);
      const backoff = Math.min(500 * 2 ** this.retry++, 5000);
      setTimeout(() => this.connect(), backoff);
    };
    ws.onerror = () => ws.close();
  }

  sendInput(delta: number, tau: number): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      const frame: InputFrame = { type: "input", delta, tau };
      this.ws.send(JSON.stringify(frame));
    }
  }

  sendControl(type: "reset" | "pause" | "resume"): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify({ type }));
    }
  }
}
