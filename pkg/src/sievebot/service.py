"""Control API: run lifecycle, live event stream, config, run history.

Single-instrument semantics: one sample at a time, so a second start while a
run is active is refused (no queue), mirroring the physical machine. All
engine mutations happen on one executor thread; API handlers only read
immutable snapshots or enqueue control signals (start, abort).

Persistence is an append-only JSON-lines log of terminal run records plus an
in-memory index rebuilt by replay on startup: desk-scale, dependency-free,
diffable.
"""

from __future__ import annotations

import csv
import io
import json
import os
import queue
import threading
from dataclasses import dataclass
from pathlib import Path

import jsonschema
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from .engine import EngineError, Executor, TelemetryEvent, new_world, prepare_sample
from .mechanism import initial_machine
from .profiles import ProfileError, load_profile
from .protocol import build_protocol, config_schema, load_config
from .sim.process import ProcessParams, load_process_params

__all__ = [
    "ServiceError",
    "EngineBusy",
    "NotRunning",
    "NotFound",
    "ConfigLocked",
    "SchemaViolation",
    "RunRequest",
    "RunStore",
    "InstrumentService",
    "create_app",
]


class ServiceError(RuntimeError):
    pass


class EngineBusy(ServiceError):
    pass


class NotRunning(ServiceError):
    pass


class NotFound(ServiceError):
    pass


class ConfigLocked(ServiceError):
    pass


class SchemaViolation(ServiceError):
    pass


_INPUT_SCRIPTS = {"soil": "cyst_extraction", "cyst": "egg_extraction"}


@dataclass(frozen=True)
class RunRequest:
    """Operator request: the input type selects the protocol."""

    input_type: str  # soil -> cyst extraction, cyst -> egg extraction
    profile: str = "muscatine"
    seed: int = 0
    speed: float = 0.0  # realtime multiplier; 0 = as fast as possible
    params_key: str | None = None

    def __post_init__(self) -> None:
        if self.input_type not in _INPUT_SCRIPTS:
            raise ServiceError(f"input_type must be one of {sorted(_INPUT_SCRIPTS)}")
        if self.speed < 0:
            raise ServiceError("speed must be >= 0")


class RunStore:
    """Append-only JSONL log of terminal run records with an in-memory index."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._records: dict[str, dict] = {}
        self._order: list[str] = []
        if self.path.exists():
            with self.path.open() as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._insert(record)

    def _insert(self, record: dict) -> None:
        run_id = record["run_id"]
        if run_id not in self._records:
            self._order.append(run_id)
        self._records[run_id] = record

    def append(self, record: dict) -> None:
        """Persist a terminal record; flushed and fsynced before indexing."""
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        self._insert(record)

    def next_run_id(self) -> str:
        highest = 0
        for run_id in self._order:
            try:
                highest = max(highest, int(run_id.rsplit("-", 1)[-1]))
            except ValueError:
                continue
        return f"run-{highest + 1:06d}"

    def get(self, run_id: str) -> dict:
        if run_id not in self._records:
            raise NotFound(f"no run {run_id!r}")
        return self._records[run_id]

    def list(self, script: str | None = None, status: str | None = None) -> list[dict]:
        out = []
        for run_id in self._order:
            record = self._records[run_id]
            if script and record.get("script") != script:
                continue
            if status and record.get("status") != status:
                continue
            out.append(record)
        return out

    def __contains__(self, run_id: str) -> bool:
        return run_id in self._records


class _ActiveRun:
    def __init__(self, run_id: str, script_name: str, request: RunRequest):
        self.run_id = run_id
        self.script_name = script_name
        self.request = request
        self.events: list[dict] = []
        self.executor: Executor | None = None

    def summary(self) -> dict:
        return {
            "run_id": self.run_id,
            "script": self.script_name,
            "seed": self.request.seed,
            "status": "running",
            "events_seen": len(self.events),
        }


class InstrumentService:
    """Engine ownership, event fan-out, config versioning, run history."""

    def __init__(self, data_dir: str | Path, config: dict | None = None):
        self.data_dir = Path(data_dir)
        self.store = RunStore(self.data_dir / "runs.jsonl")
        self._config = config or load_config()
        self._config_version = 1
        self._lock = threading.Lock()
        self._active: _ActiveRun | None = None
        self._thread: threading.Thread | None = None
        self._subscribers: list[queue.SimpleQueue] = []
        self._latest_snapshot: dict = initial_machine("soil").snapshot()
        self._latest_snapshot["flow_lpm"] = 0.0

    # -- run lifecycle ------------------------------------------------------

    def start_run(self, request: RunRequest) -> str:
        with self._lock:
            if self._active is not None:
                raise EngineBusy("a run is active; the instrument processes one sample at a time")
            script_name = _INPUT_SCRIPTS[request.input_type]
            script = build_protocol(script_name, self._config)
            try:
                profile = load_profile(request.profile)
            except ProfileError as err:
                raise ServiceError(f"invalid profile: {err}") from err
            params_key = request.params_key or f"{request.profile}_robotic"
            try:
                params = load_process_params(params_key)
            except Exception:
                params = ProcessParams()
            world = new_world(self._config, profile, request.seed, request.input_type, params)
            if request.input_type == "soil":
                prepare_sample(world, charge_time=True)
            run_id = self.store.next_run_id()
            active = _ActiveRun(run_id, script_name, request)
            executor = Executor(world, on_event=self._on_event(active), speed=request.speed)
            active.executor = executor
            if request.input_type == "cyst":
                world.phase = 2
            self._active = active
            self._thread = threading.Thread(
                target=self._run_to_completion, args=(executor, script, active), daemon=True
            )
            self._thread.start()
            return run_id

    def _on_event(self, active: _ActiveRun):
        def callback(event: TelemetryEvent) -> None:
            doc = event.to_dict()
            active.events.append(doc)
            self._latest_snapshot = doc["machine"]
            self._broadcast({"type": "telemetry", **doc})

        return callback

    def _run_to_completion(self, executor: Executor, script, active: _ActiveRun) -> None:
        try:
            record = executor.execute(script, run_id=active.run_id)
            doc = record.to_dict()
        except EngineError as err:  # validation refused the script
            doc = {
                "run_id": active.run_id,
                "script": active.script_name,
                "seed": active.request.seed,
                "status": "faulted",
                "fault_reason": str(err),
                "events": [],
            }
        self.store.append(doc)
        with self._lock:
            self._active = None
        self._broadcast({"type": "run_terminal", "run_id": doc["run_id"], "status": doc["status"]})

    def abort(self, run_id: str) -> None:
        with self._lock:
            active = self._active
            if active is None or active.run_id != run_id or active.executor is None:
                raise NotRunning(f"run {run_id!r} is not active")
            active.executor.request_abort()

    def wait_idle(self, timeout: float = 30.0) -> None:
        thread = self._thread
        if thread is not None:
            thread.join(timeout)

    # -- reads ----------------------------------------------------------------

    def get_run(self, run_id: str) -> dict:
        with self._lock:
            active = self._active
        if active is not None and active.run_id == run_id:
            summary = active.summary()
            summary["events"] = list(active.events)
            return summary
        return self.store.get(run_id)

    def list_runs(self, script: str | None = None, status: str | None = None) -> list[dict]:
        records = [
            {k: r.get(k) for k in ("run_id", "script", "seed", "status", "output_counts", "duration_ms")}
            for r in self.store.list(script, status)
        ]
        with self._lock:
            if self._active is not None and (status in (None, "running")):
                if script in (None, self._active.script_name):
                    records.append(self._active.summary())
        return records

    def state(self) -> dict:
        with self._lock:
            active = self._active
        return {
            "engine": "running" if active else "idle",
            "active_run": active.summary() if active else None,
            "machine": self._latest_snapshot,
        }

    # -- config -----------------------------------------------------------------

    def get_config(self) -> dict:
        return {"version": self._config_version, "config": self._config}

    def put_config(self, document: dict) -> dict:
        with self._lock:
            if self._active is not None:
                raise ConfigLocked("config is locked while a run is active")
            try:
                jsonschema.validate(document, config_schema())
            except jsonschema.ValidationError as err:
                raise SchemaViolation(err.message) from err
            self._config = document
            self._config_version += 1
            return self.get_config()

    # -- events --------------------------------------------------------------

    def subscribe(self) -> queue.SimpleQueue:
        q: queue.SimpleQueue = queue.SimpleQueue()
        self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.SimpleQueue) -> None:
        if q in self._subscribers:
            self._subscribers.remove(q)

    def _broadcast(self, message: dict) -> None:
        for q in list(self._subscribers):
            q.put(message)

    def replay_events(self, run_id: str) -> list[dict]:
        record = self.get_run(run_id)
        return record.get("events", [])


def run_report_csv(record: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run_id", "seq", "t_ms", "step", "action", "phase"])
    for event in record.get("events", []):
        writer.writerow(
            [record["run_id"], event["seq"], event["t_ms"], event["step"], event["action"], event["phase"]]
        )
    return buf.getvalue()


def create_app(data_dir: str | Path, config: dict | None = None, ui_dir: str | Path | None = None):
    """FastAPI application wired to one InstrumentService."""
    service = InstrumentService(data_dir, config)
    app = FastAPI(title="sievebot control API", version="0.1.0")
    app.state.service = service

    def error(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse({"error": code, "message": message}, status_code=status)

    @app.post("/runs", status_code=202)
    async def start_run(request: Request):
        body = await request.json()
        try:
            req = RunRequest(
                input_type=body.get("input_type", ""),
                profile=body.get("profile", "muscatine"),
                seed=int(body.get("seed", 0)),
                speed=float(body.get("speed", 0.0)),
                params_key=body.get("params_key"),
            )
            run_id = service.start_run(req)
        except EngineBusy as err:
            return error(409, "engine_busy", str(err))
        except (ServiceError, EngineError) as err:
            return error(400, "invalid_request", str(err))
        return {"run_id": run_id, "script": _INPUT_SCRIPTS[req.input_type]}

    @app.get("/runs")
    def list_runs(script: str | None = None, status: str | None = None):
        return {"runs": service.list_runs(script, status)}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str):
        try:
            return service.get_run(run_id)
        except NotFound as err:
            return error(404, "not_found", str(err))

    @app.post("/runs/{run_id}/abort")
    def abort_run(run_id: str):
        try:
            service.abort(run_id)
        except NotRunning as err:
            return error(409, "not_running", str(err))
        return {"run_id": run_id, "status": "aborting"}

    @app.get("/runs/{run_id}/report.csv")
    def run_report(run_id: str):
        try:
            record = service.get_run(run_id)
        except NotFound as err:
            return error(404, "not_found", str(err))
        return PlainTextResponse(run_report_csv(record), media_type="text/csv")

    @app.get("/state")
    def get_state():
        return service.state()

    @app.get("/config")
    def get_config():
        return service.get_config()

    @app.put("/config")
    async def put_config(request: Request):
        body = await request.json()
        try:
            return service.put_config(body)
        except ConfigLocked as err:
            return error(409, "config_locked", str(err))
        except SchemaViolation as err:
            return error(422, "schema_violation", str(err))

    @app.get("/events")
    def events(run_id: str | None = None, replay: int = 0):
        def sse(payload: dict) -> str:
            return f"data: {json.dumps(payload, sort_keys=True)}\n\n"

        if replay and run_id:
            try:
                stored = service.replay_events(run_id)
            except NotFound as err:
                return error(404, "not_found", str(err))

            def replay_gen():
                yield sse({"type": "snapshot", **service.state()})
                for event in stored:
                    yield sse({"type": "telemetry", **event})
                yield sse({"type": "replay_end", "run_id": run_id})

            return StreamingResponse(replay_gen(), media_type="text/event-stream")

        def live_gen():
            q = service.subscribe()
            try:
                yield sse({"type": "snapshot", **service.state()})
                idle_polls = 0
                while True:
                    try:
                        message = q.get(timeout=0.5)
                        idle_polls = 0
                    except queue.Empty:
                        idle_polls += 1
                        if idle_polls >= 120:  # give up after a minute of silence
                            break
                        yield ": keepalive\n\n"
                        continue
                    if run_id and message.get("run_id") not in (None, run_id):
                        continue
                    yield sse(message)
                    if message.get("type") == "run_terminal" and run_id:
                        break
            finally:
                service.unsubscribe(q)

        return StreamingResponse(live_gen(), media_type="text/event-stream")

    if ui_dir and Path(ui_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    @app.get("/")
    def root():
        return Response(status_code=307, headers={"Location": "/ui/"})

    return app
