"""HTTP service: sessions, state snapshots, a live event stream, and
benchmark runs.

Turns on one session are serialized by a non-blocking mutex: a second
concurrent POST gets 409 instead of waiting. The event stream replays the
session's full trace and then follows it live; messages carry the same
JSON as trace files (no durations), so one schema serves both transports.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .agent_loop import Session, TurnRecord
from .backend import ModelBackend, ScriptedBackend, ScriptedRule
from .config import AgentConfig
from .errors import AgentError, BackendFailure, ConfigError, ScenarioFormatError
from .harness import (
    Scenario,
    SuiteResult,
    canonical_json,
    load_suite,
    run_suite,
    score_run,
    write_bench_artifacts,
)
from .oracle import GroundTruthBackend
from .perception import NoiseProfile
from .world import SceneWorld, WorldEvent

_STREAM_IDLE_S = 15.0


@dataclass
class ServiceConfig:
    scenario_dir: Path | None = None
    trace_dir: Path | None = None
    cors_origins: tuple[str, ...] = ("*",)


@dataclass
class SessionHandle:
    session: Session
    scenario: Scenario | None = None
    turn_lock: threading.Lock = field(default_factory=threading.Lock)
    cond: threading.Condition = field(default_factory=threading.Condition)
    scenes_after: list[SceneWorld] = field(default_factory=list)

    def notify(self, _event: Any = None) -> None:
        with self.cond:
            self.cond.notify_all()


class SessionCreate(BaseModel):
    scene: dict[str, Any] | None = None
    scenario_id: str | None = None
    config: dict[str, Any] = {}
    backend: str | None = None  # "oracle" (default) or "scripted"
    script: list[dict[str, Any]] = []


class TurnRequest(BaseModel):
    instruction: str
    events: list[dict[str, Any]] = []


class RunCreate(BaseModel):
    configs: list[str] = ["full"]
    scenario_ids: list[str] | None = None
    seed: int | None = None
    noise: dict[str, float] | None = None  # applies to the noisy_tools config


def _plan_dict(session: Session) -> dict[str, Any] | None:
    plan = session.last_plan
    if plan is None:
        return None
    return {
        "goal": plan.goal,
        "subtasks": [
            {
                "id": task.id,
                "objective": task.objective_text,
                "status": task.status.value,
                "depends_on": list(task.depends_on),
            }
            for task in plan.subtasks
        ],
    }


def create_app(service_config: ServiceConfig | None = None) -> FastAPI:
    cfg = service_config or ServiceConfig()
    app = FastAPI(title="sceneagent service")
    if cfg.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cfg.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    handles: dict[str, SessionHandle] = {}
    runs: dict[str, dict[str, Any]] = {}
    state_lock = threading.Lock()
    counters = {"session": 0, "run": 0}

    def _scenarios() -> list[Scenario]:
        if cfg.scenario_dir is None:
            return []
        try:
            return load_suite(cfg.scenario_dir)
        except ScenarioFormatError:
            return []

    def _handle(session_id: str) -> SessionHandle:
        handle = handles.get(session_id)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return handle

    @app.post("/sessions")
    def create_session(body: SessionCreate) -> dict[str, Any]:
        scenario: Scenario | None = None
        script = [dict(r) for r in body.script]
        if body.scenario_id is not None:
            matches = [s for s in _scenarios() if s.id == body.scenario_id]
            if not matches:
                raise HTTPException(
                    status_code=404, detail=f"unknown scenario {body.scenario_id}"
                )
            scenario = matches[0]
            scene = scenario.scene
            if not script:
                script = [r.to_dict() for r in scenario.script]
        elif body.scene is not None:
            try:
                scene = SceneWorld.from_dict(body.scene)
            except AgentError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
        else:
            raise HTTPException(
                status_code=422, detail="provide either scene or scenario_id"
            )
        try:
            config = AgentConfig.from_dict(body.config) if body.config else AgentConfig()
        except (ConfigError, AgentError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

        kind = body.backend or ("scripted" if script else "oracle")
        backend: ModelBackend
        if kind == "scripted":
            try:
                backend = ScriptedBackend([ScriptedRule.from_dict(r) for r in script])
            except (KeyError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=f"bad script: {exc}") from exc
        elif kind == "oracle":
            backend = GroundTruthBackend()
        else:
            raise HTTPException(status_code=422, detail=f"unknown backend kind {kind!r}")

        with state_lock:
            counters["session"] += 1
            session_id = f"sess-{counters['session']:04d}"
        session = Session(scene, config, backend, session_id=session_id)
        if isinstance(backend, GroundTruthBackend):
            backend.bind(lambda: session)
        handles[session_id] = SessionHandle(session=session, scenario=scenario)
        return {
            "session_id": session_id,
            "scene": session.scene.to_dict(),
            "config": config.to_dict(),
            "backend": kind,
        }

    @app.post("/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnRequest) -> dict[str, Any]:
        handle = _handle(session_id)
        if not handle.turn_lock.acquire(blocking=False):
            raise HTTPException(
                status_code=409, detail=f"session {session_id} is mid-turn"
            )
        try:
            try:
                events = [WorldEvent.from_dict(e) for e in body.events]
            except (AgentError, KeyError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=f"bad event: {exc}") from exc
            try:
                record: TurnRecord = handle.session.step(
                    body.instruction, events, on_trace=handle.notify
                )
            except BackendFailure as exc:
                raise HTTPException(status_code=502, detail=str(exc)) from exc
            except AgentError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc
            handle.scenes_after.append(handle.session.scene)
            out = record.to_dict()
            out["scene"] = handle.session.scene.to_dict()
            return out
        finally:
            handle.turn_lock.release()
            handle.notify()

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str) -> dict[str, Any]:
        handle = _handle(session_id)
        session = handle.session
        scores: dict[str, Any] | None = None
        if handle.scenario is not None and session.transcript:
            done = min(len(session.transcript), len(handle.scenario.turns))
            report = score_run(
                handle.scenario,
                session.transcript[:done],
                handle.scenes_after[:done],
                "live",
                margin=session.config.margin,
            )
            scores = report.to_dict()
        return {
            "session_id": session_id,
            "turn_count": len(session.transcript),
            "scene": session.scene.to_dict(),
            "memory": session.memory.snapshot(),
            "plan": _plan_dict(session),
            "trace_length": len(session.trace),
            "scores": scores,
        }

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str) -> StreamingResponse:
        handle = _handle(session_id)

        def stream() -> Iterator[str]:
            cursor = 0
            while True:
                trace = handle.session.trace
                if cursor < len(trace):
                    for event in trace[cursor:]:
                        payload = canonical_json(event.to_dict(include_duration=False))
                        yield f"id: {event.seq}\nevent: trace\ndata: {payload}\n\n"
                    cursor = len(trace)
                    continue
                with handle.cond:
                    handle.cond.wait(timeout=_STREAM_IDLE_S)
                if cursor == len(handle.session.trace):
                    yield ": keep-alive\n\n"

        return StreamingResponse(
            stream(),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache", "X-Accel-Buffering": "no"},
        )

    @app.get("/scenarios")
    def list_scenarios() -> list[dict[str, Any]]:
        return [
            {
                "id": s.id,
                "title": s.title,
                "tags": s.tags,
                "turns": len(s.turns),
                "checks": s.checks_count(),
            }
            for s in _scenarios()
        ]

    @app.post("/runs")
    def start_run(body: RunCreate) -> dict[str, Any]:
        scenarios = _scenarios()
        if body.scenario_ids is not None:
            wanted = set(body.scenario_ids)
            scenarios = [s for s in scenarios if s.id in wanted]
            missing = wanted - {s.id for s in scenarios}
            if missing:
                raise HTTPException(
                    status_code=404, detail=f"unknown scenarios: {sorted(missing)}"
                )
        if not scenarios:
            raise HTTPException(status_code=422, detail="no scenarios to run")
        base = AgentConfig() if body.seed is None else AgentConfig(seed=body.seed)
        noise_map = {}
        if body.noise:
            noise_map["noisy_tools"] = NoiseProfile(
                drop_prob=float(body.noise.get("drop_prob", 0.0)),
                jitter=float(body.noise.get("jitter", 0.0)),
            )
        with state_lock:
            counters["run"] += 1
            run_id = f"run-{counters['run']:04d}"
        runs[run_id] = {"run_id": run_id, "status": "running"}

        def work() -> None:
            try:
                result: SuiteResult = run_suite(
                    scenarios, body.configs, base, noise_map or None
                )
                if cfg.trace_dir is not None:
                    write_bench_artifacts(result, cfg.trace_dir)
                runs[run_id] = {
                    "run_id": run_id,
                    "status": "done",
                    "report": result.report_dict(),
                    "latency": result.latency,
                }
            except Exception as exc:  # surfaced via polling, not a crash
                runs[run_id] = {"run_id": run_id, "status": "error", "error": str(exc)}

        threading.Thread(target=work, name=run_id, daemon=True).start()
        return {"run_id": run_id, "status": "running", "scenarios": len(scenarios)}

    @app.get("/runs/{run_id}")
    def get_run(run_id: str) -> dict[str, Any]:
        run = runs.get(run_id)
        if run is None:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id}")
        return run

    return app


def serve(
    port: int = 8700,
    scenario_dir: str | Path | None = None,
    trace_dir: str | Path | None = None,
) -> None:
    import uvicorn

    cfg = ServiceConfig(
        scenario_dir=Path(scenario_dir) if scenario_dir else None,
        trace_dir=Path(trace_dir) if trace_dir else None,
    )
    uvicorn.run(create_app(cfg), host="127.0.0.1", port=port, log_level="warning")
