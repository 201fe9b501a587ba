"""Start the live driving session (blocking).

Serves the websocket telemetry endpoint, the track document, and -- when
the frontend bundle has been built (see frontend/README.md) -- the browser
driving client at http://127.0.0.1:8080/.

Equivalent CLI:
    trackguard serve --bind 127.0.0.1:8080 \
        --track configs/track.json --params configs/vehicle.json \
        --terminal-set artifacts/terminal_set.json --static-dir frontend/dist

Run from the repository root:  python3 demos/05_live_driving.py
"""

from pathlib import Path

from trackguard import TerminalSet, VehicleParams, load_track
from trackguard.service import serve

track = load_track("configs/track.json")
params = VehicleParams.from_file("configs/vehicle.json")
ts = TerminalSet.load("artifacts/terminal_set.json")

static = Path("frontend/dist")
print("telemetry:  ws://127.0.0.1:8080/ws")
print("health:     http://127.0.0.1:8080/healthz")
if static.is_dir():
    print("driving UI: http://127.0.0.1:8080/")
else:
    print("driving UI: (build frontend/ first: cd frontend && npm run build)")
serve(track, params, ts, bind="127.0.0.1:8080",
      static_dir=str(static) if static.is_dir() else None)
