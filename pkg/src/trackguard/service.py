"""Live driving session over websockets.

A single asyncio process hosts the HTTP endpoints, the websocket fan-out,
and the control loop. The loop owns the plant and the filter through the
same ClosedLoop used by the batch simulator, sampling the most recent
human input each period (zero-order hold, decaying to neutral after a
staleness timeout). Telemetry is decimated to every 2nd step; the predicted
backup trajectory rides along on every 4th telemetry frame.

In lockstep mode the loop advances exactly one step per received input
frame instead of free-running on the wall clock; replaying a recorded
input stream then reproduces the batch simulator's traces bit-for-bit,
which is how live/batch equivalence is tested.
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from aiohttp import WSMsgType, web

from .filter import FilterConfig
from .sim import ClosedLoop, SimConfig, SimRecord
from .terminal import TerminalSet
from .track import Track
from .vehicle import ControlInput, VehicleParams

STALE_INPUT_S = 0.25
TELEMETRY_DECIMATION = 2
TRAJECTORY_EVERY = 4          # telemetry frames per trajectory frame
SUBSCRIBER_QUEUE = 32


@dataclass
class HeldInput:
    delta: float = 0.0
    tau: float = 0.0
    received_at: float = -1e9

    def sample(self, now: float) -> ControlInput:
        if now - self.received_at > STALE_INPUT_S:
            return ControlInput(0.0, 0.0)
        return ControlInput(self.delta, self.tau)


@dataclass
class SessionState:
    phase: str = "running"            # idle | running | paused
    held: HeldInput = field(default_factory=HeldInput)
    driver_id: int | None = None
    log: list = field(default_factory=list)
    overruns: int = 0
    steps: int = 0
    telemetry_frames: int = 0


class LiveService:
    def __init__(self, track: Track, params: VehicleParams, terminal_set: TerminalSet,
                 filter_cfg: FilterConfig | None = None,
                 sim_cfg: SimConfig | None = None, lockstep: bool = False):
        self.track = track
        self.params = params
        self.filter_cfg = filter_cfg or FilterConfig()
        self.sim_cfg = sim_cfg or SimConfig(duration=1e9)
        self.loop_model = ClosedLoop(track, params, terminal_set,
                                     self.sim_cfg, self.filter_cfg)
        self.session = SessionState()
        self.lockstep = lockstep
        self._subscribers: dict[int, asyncio.Queue] = {}
        self._next_conn_id = 0
        self._lockstep_queue: asyncio.Queue = asyncio.Queue()
        self._stop = asyncio.Event()

    # -- frame production ------------------------------------------------------

    def _telemetry_frame(self, rec: SimRecord) -> dict:
        return {
            "type": "telemetry",
            "t": rec.t,
            "state": {"px": rec.px, "py": rec.py, "psi": rec.psi,
                      "vx": rec.vx, "vy": rec.vy, "r": rec.r,
                      "s": rec.s, "e_lat": rec.e_lat, "mu": rec.mu},
            "ud": [rec.ud_delta, rec.ud_tau],
            "u": [rec.u_delta, rec.u_tau],
            "intervention": rec.intervention,
            "corners": [rec.e_lf, rec.e_rf],
            "slack": rec.slack_max,
            "status": rec.status,
        }

    def _trajectory_frame(self) -> dict | None:
        filt = self.loop_model.filter
        if filt is None or filt.prev_solution is None:
            return None
        pts = []
        from .track import TrackRelativeState
        for row in filt.prev_solution.xs[::3]:
            st = self.track.relative_to_global(
                TrackRelativeState.from_array(row[1:], s=self.track.wrap_s(row[0])))
            pts.append([round(st.px, 4), round(st.py, 4)])
        return {"type": "trajectory", "pts": pts}

    def track_frame(self) -> dict:
        pts = self.track.sample_centerline(ds=0.05)
        return {"type": "track",
                "half_width": self.track.half_width,
                "centerline": [[round(float(x), 4), round(float(y), 4)] for x, y in pts]}

    def _broadcast(self, frame: dict):
        text = json.dumps(frame)
        for q in self._subscribers.values():
            if q.full():
                try:
                    q.get_nowait()           # drop-oldest backpressure
                except asyncio.QueueEmpty:
                    pass
            q.put_nowait(text)

    # -- stepping ----------------------------------------------------------------

    def step_once(self, u_d: ControlInput):
        rec = self.loop_model.step(u_d)
        self.session.log.append(rec)
        self.session.steps += 1
        if self.session.steps % TELEMETRY_DECIMATION == 0:
            self._broadcast(self._telemetry_frame(rec))
            self.session.telemetry_frames += 1
            if self.session.telemetry_frames % TRAJECTORY_EVERY == 0:
                traj = self._trajectory_frame()
                if traj is not None:
                    self._broadcast(traj)
        return rec

    async def run_loop(self):
        """Fixed-rate wall-clock loop, or input-paced when lockstep."""
        Ts = self.sim_cfg.Ts
        next_tick = time.perf_counter()
        while not self._stop.is_set():
            if self.lockstep:
                try:
                    u_d = await asyncio.wait_for(self._lockstep_queue.get(), timeout=0.5)
                except asyncio.TimeoutError:
                    continue
                if self.session.phase == "running":
                    self.step_once(u_d)
                continue
            now = time.perf_counter()
            if now < next_tick:
                await asyncio.sleep(next_tick - now)
            elif now - next_tick > Ts:
                self.session.overruns += 1
                next_tick = now              # catch-up capped at one step
            next_tick += Ts
            if self.session.phase != "running":
                continue
            u_d = self.session.held.sample(time.perf_counter())
            self.step_once(u_d)

    def shutdown(self):
        self._stop.set()

    # -- message handling ----------------------------------------------------------

    def handle_message(self, conn_id: int, raw: str) -> dict | None:
        """Apply one client frame; returns a reply frame or None."""
        try:
            msg = json.loads(raw)
            mtype = msg["type"]
        except (json.JSONDecodeError, TypeError, KeyError):
            return {"type": "error", "msg": "malformed frame"}

        if mtype == "input":
            if self.session.driver_id is None:
                self.session.driver_id = conn_id
            if conn_id != self.session.driver_id:
                return {"type": "error", "msg": "driver role is held by another client"}
            try:
                delta = float(msg["delta"])
                tau = float(msg["tau"])
            except (KeyError, TypeError, ValueError):
                return {"type": "error", "msg": "input frame needs numeric delta and tau"}
            cfg = self.filter_cfg
            clipped = np.clip([delta, tau], cfg.u_lb, cfg.u_ub)
            clamped = bool(clipped[0] != delta or clipped[1] != tau)
            self.session.held = HeldInput(float(clipped[0]), float(clipped[1]),
                                          time.perf_counter())
            if self.lockstep:
                self._lockstep_queue.put_nowait(ControlInput(*clipped))
            if clamped:
                return {"type": "ack", "clamped": True,
                        "delta": float(clipped[0]), "tau": float(clipped[1])}
            return None
        if mtype == "reset":
            self.loop_model.reset()
            self.session.log.clear()
            self.session.steps = 0
            self.session.telemetry_frames = 0
            return None
        if mtype == "pause":
            self.session.phase = "paused"
            return None
        if mtype == "resume":
            self.session.phase = "running"
            return None
        return {"type": "error", "msg": f"unknown frame type '{mtype}'"}

    def release_connection(self, conn_id: int):
        self._subscribers.pop(conn_id, None)
        if self.session.driver_id == conn_id:
            self.session.driver_id = None

    # -- aiohttp wiring ---------------------------------------------------------------

    async def ws_handler(self, request):
        ws = web.WebSocketResponse(heartbeat=30)
        await ws.prepare(request)
        conn_id = self._next_conn_id
        self._next_conn_id += 1
        queue: asyncio.Queue = asyncio.Queue(maxsize=SUBSCRIBER_QUEUE)
        self._subscribers[conn_id] = queue
        await ws.send_str(json.dumps(self.track_frame()))

        async def sender():
            while True:
                await ws.send_str(await queue.get())

        send_task = asyncio.create_task(sender())
        try:
            async for msg in ws:
                if msg.type == WSMsgType.TEXT:
                    reply = self.handle_message(conn_id, msg.data)
                    if reply is not None:
                        await ws.send_str(json.dumps(reply))
                elif msg.type == WSMsgType.ERROR:
                    break
        finally:
            send_task.cancel()
            self.release_connection(conn_id)
        return ws

    async def healthz(self, request):
        return web.json_response({"status": "ok", "steps": self.session.steps,
                                  "overruns": self.session.overruns})

    async def track_doc(self, request):
        return web.json_response(self.track.to_dict())

    def build_app(self, static_dir: str | None = None) -> web.Application:
        app = web.Application()
        app.router.add_get("/ws", self.ws_handler)
        app.router.add_get("/healthz", self.healthz)
        app.router.add_get("/track", self.track_doc)
        root = Path(static_dir) if static_dir else None
        if root is not None and root.is_dir():
            async def index(request):
                return web.FileResponse(root / "index.html")
            app.router.add_get("/", index)
            app.router.add_static("/", root)
        return app


async def serve_async(service: LiveService, host: str, port: int,
                      static_dir: str | None = None,
                      ready: asyncio.Event | None = None):
    app = service.build_app(static_dir)
    runner = web.AppRunner(app)
    await runner.setup()
    site = web.TCPSite(runner, host, port)
    await site.start()
    if ready is not None:
        ready.set()
    try:
        await service.run_loop()
    finally:
        await runner.cleanup()


def serve(track: Track, params: VehicleParams, terminal_set: TerminalSet,
          bind: str = "127.0.0.1:8080", filter_cfg: FilterConfig | None = None,
          lockstep: bool = False, static_dir: str | None = None):
    """Run the live service until interrupted."""
    host, _, port = bind.partition(":")
    service = LiveService(track, params, terminal_set, filter_cfg,
                          lockstep=lockstep)
    asyncio.run(serve_async(service, host or "127.0.0.1", int(port or 8080),
                            static_dir))
