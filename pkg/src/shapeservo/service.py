"""Live session service: runs one episode per WebSocket connection,
streams per-cycle state, and applies operator commands between ticks.

Message schema (JSON, version 1) is documented in the README. The
control math lives entirely server-side; clients only render streamed
values and send commands.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles

from .camera import Camera, FeatureVector, features_from_tips, project
from .control import ControlGains, Scenario, compute_error
from .episode import ADVANCE_MANUAL, Episode, EpisodeAbort
from .errors import ShapeServoError, UnreachableTargetError
from .kinematics import ArcParams, RobotConfig, cables_to_arc
from .plant import SimConfig
from .reference import chain_frames, make_reference

PROTOCOL_VERSION = 1
_POLYLINE_POINTS = 12


@dataclass
class ServiceSettings:
    config: RobotConfig
    camera: Camera
    gains: ControlGains
    sim: SimConfig
    seed: int | None = None
    sigma_px: float = 0.0
    sigma_depth_m: float = 0.0
    # Real-time factor: 1.0 ticks at dt, 0 runs as fast as possible.
    speed: float = 1.0


def _arc_polylines_px(
    arcs: list[ArcParams], settings: ServiceSettings
) -> list[list[list[float]]]:
    """Per-section pixel polylines of the arc chain, for rendering."""
    out = []
    base = settings.config.base
    for k, arc in enumerate(arcs):
        pts = []
        for i in range(_POLYLINE_POINTS + 1):
            frac = max(i / _POLYLINE_POINTS, 1e-9)
            sub = arcs[:k] + [ArcParams(s=arc.s * frac, kappa=arc.kappa, phi=arc.phi)]
            tip = chain_frames(sub, base)[-1].translation
            try:
                pixel, _ = project(tip, settings.camera)
            except ShapeServoError:
                continue
            pts.append([float(pixel[0]), float(pixel[1])])
        out.append(pts)
    return out


def _initial_scenario(settings: ServiceSettings) -> Scenario:
    from .plant import initial_state, plant_tips

    state = initial_state(settings.config)
    feats = features_from_tips(plant_tips(state, settings.config), settings.camera)
    return Scenario(
        references=(feats,),
        thresholds=(settings.gains.err_threshold,),
        name="hold-initial",
    )


class Session:
    """One connection: an episode, a command queue, and a tick loop."""

    def __init__(self, settings: ServiceSettings):
        self.settings = settings
        self.episode = Episode(
            settings.config,
            settings.camera,
            settings.gains,
            _initial_scenario(settings),
            sim=settings.sim,
            sigma_px=settings.sigma_px,
            sigma_depth_m=settings.sigma_depth_m,
            seed=settings.seed,
        )
        self.running = False
        self._complete_sent = False
        self._ref_arcs: list[list[ArcParams] | None] = [None]

    # -- outgoing messages -------------------------------------------------

    def hello(self) -> dict:
        intr = self.settings.camera.intrinsics
        return {
            "type": "hello",
            "version": PROTOCOL_VERSION,
            "n_sections": self.settings.config.n_sections,
            "resolution": list(intr.resolution),
            "dt": self.settings.sim.dt,
        }

    def snapshot(self) -> dict:
        """Current state without stepping (exact display after reset/pause)."""
        from .plant import plant_tips

        ep = self.episode
        tips = plant_tips(ep.state, self.settings.config)
        feats = features_from_tips(tips, self.settings.camera)
        arcs = [
            cables_to_arc(c, spec.d)
            for c, spec in zip(ep.state.cable_lengths(), self.settings.config.sections)
        ]
        ref = ep.scenario.references[ep.ref_index]
        e = compute_error(feats, ref)
        return self._state_payload(
            cycle=ep.cycle,
            t=ep.state.time,
            features=feats.values,
            reference=ref.values,
            err_task=float(np.linalg.norm(e[-3:])),
            err_config=float(np.linalg.norm(e)),
            arcs=np.array([[a.s, a.kappa, a.phi] for a in arcs]),
            ref_index=ep.ref_index,
            advanced=0,
            converged=False,
            peek=True,
        )

    def _state_payload(
        self,
        cycle,
        t,
        features,
        reference,
        err_task,
        err_config,
        arcs,
        ref_index,
        advanced,
        converged,
        peek=False,
    ) -> dict:
        arc_objs = [ArcParams(s=a[0], kappa=a[1], phi=a[2]) for a in arcs]
        ref_arcs = (
            self._ref_arcs[ref_index] if ref_index < len(self._ref_arcs) else None
        )
        return {
            "type": "state",
            "version": PROTOCOL_VERSION,
            "cycle": int(cycle),
            "t": float(t),
            "features": np.asarray(features).tolist(),
            "reference": np.asarray(reference).tolist(),
            "err_task": err_task,
            "err_config": err_config,
            "arcs": np.asarray(arcs).tolist(),
            "polylines": _arc_polylines_px(arc_objs, self.settings),
            "ref_polylines": _arc_polylines_px(ref_arcs, self.settings)
            if ref_arcs
            else None,
            "ref_index": int(ref_index),
            "queue_len": len(self.episode.scenario),
            "advanced": int(advanced),
            "converged": bool(converged),
            "complete": bool(self.episode.completed),
            "running": self.running,
            "peek": peek,
        }

    # -- command handling ----------------------------------------------------

    def handle(self, msg: dict) -> list[dict]:
        """Apply one client command; returns messages to send back."""
        kind = msg.get("type")
        if kind == "start":
            if self.episode.completed and self.episode.scenario.is_last(
                self.episode.ref_index
            ):
                return [self.snapshot()]
            self.running = True
            return []
        if kind == "pause":
            self.running = False
            return [self.snapshot()]
        if kind == "reset":
            self.episode.reset()
            self.episode.set_scenario(_initial_scenario(self.settings))
            self._ref_arcs = [None]
            self.running = False
            self._complete_sent = False
            return [self.snapshot()]
        if kind == "advance":
            self.episode.request_manual_advance()
            return []
        if kind == "set_reference":
            return self._set_reference(msg)
        if kind == "load_scenario":
            return self._load_scenario(msg)
        if kind == "ping":
            return [{"type": "pong"}]
        return [
            {
                "type": "error",
                "code": "bad_message",
                "message": f"unknown message type {kind!r}",
            }
        ]

    def _set_reference(self, msg: dict) -> list[dict]:
        try:
            pixel = tuple(float(v) for v in msg["pixel"])
            depth = float(msg["depth"])
        except (KeyError, TypeError, ValueError):
            return [
                {
                    "type": "error",
                    "code": "bad_message",
                    "message": "set_reference needs pixel [u, v] and depth (m)",
                }
            ]
        threshold = float(msg.get("threshold", self.settings.gains.err_threshold))
        try:
            arcs, feats = make_reference(
                self.settings.config,
                self.settings.camera,
                pixel=pixel,
                depth_m=depth,
                tangent=msg.get("tangent"),
            )
        except (UnreachableTargetError, ShapeServoError) as exc:
            return [
                {
                    "type": "error",
                    "code": "unreachable",
                    "message": str(exc),
                    "detail": {"pixel": list(pixel), "depth": depth},
                }
            ]
        if msg.get("append", True):
            self.episode.append_reference(feats, threshold)
            self._ref_arcs.append(arcs)
        else:
            self.episode.set_scenario(
                Scenario(references=(feats,), thresholds=(threshold,), name="live")
            )
            self._ref_arcs = [arcs]
        self.running = True
        self._complete_sent = False
        return [
            {
                "type": "reference_set",
                "features": feats.values.tolist(),
                "arcs": [[a.s, a.kappa, a.phi] for a in arcs],
                "queue_len": len(self.episode.scenario),
            }
        ]

    def _load_scenario(self, msg: dict) -> list[dict]:
        try:
            refs = tuple(
                FeatureVector(np.asarray(r["features"], dtype=float))
                for r in msg["references"]
            )
            thresholds = tuple(
                float(r.get("threshold", self.settings.gains.err_threshold))
                for r in msg["references"]
            )
            scenario = Scenario(references=refs, thresholds=thresholds, name="loaded")
        except (KeyError, TypeError, ValueError) as exc:
            return [
                {"type": "error", "code": "bad_scenario", "message": str(exc)}
            ]
        self.episode.reset()
        self.episode.set_scenario(scenario)
        self._ref_arcs = [None] * len(refs)
        self.running = True
        self._complete_sent = False
        return [self.snapshot()]

    # -- tick ------------------------------------------------------------------

    def tick(self) -> list[dict]:
        if not self.running:
            return []
        try:
            record = self.episode.step()
        except EpisodeAbort as exc:
            self.running = False
            return [
                {
                    "type": "error",
                    "code": "episode_abort",
                    "message": str(exc),
                    "detail": {"cycle": exc.cycle},
                }
            ]
        out = [
            self._state_payload(
                cycle=self.episode.cycle - 1,
                t=record.time,
                features=record.features,
                reference=record.reference,
                err_task=record.err_task,
                err_config=record.err_config,
                arcs=record.arcs,
                ref_index=record.ref_index,
                advanced=record.advanced,
                converged=record.converged,
            )
        ]
        if self.episode.completed:
            self.running = False
            if not self._complete_sent:
                self._complete_sent = True
                out.append({"type": "complete", "cycle": self.episode.cycle - 1})
        return out


def create_app(settings: ServiceSettings, frontend_dir: str | Path | None = None):
    app = FastAPI(title="shapeservo session service")

    @app.get("/health")
    def health():
        return {"status": "ok", "version": PROTOCOL_VERSION}

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session = Session(settings)
        queue: asyncio.Queue = asyncio.Queue()

        async def reader():
            try:
                while True:
                    raw = await ws.receive_text()
                    try:
                        msg = json.loads(raw)
                    except json.JSONDecodeError:
                        msg = {"type": "__malformed__"}
                    await queue.put(msg)
            except WebSocketDisconnect:
                await queue.put(None)

        reader_task = asyncio.create_task(reader())
        tick = settings.sim.dt / settings.speed if settings.speed > 0 else 0.0
        try:
            await ws.send_json(session.hello())
            await ws.send_json(session.snapshot())
            alive = True
            while alive:
                # Serialize commands between ticks.
                while not queue.empty():
                    msg = queue.get_nowait()
                    if msg is None:
                        alive = False
                        break
                    if msg.get("type") == "__malformed__":
                        await ws.send_json(
                            {
                                "type": "error",
                                "code": "bad_message",
                                "message": "payload is not valid JSON",
                            }
                        )
                        continue
                    for reply in session.handle(msg):
                        await ws.send_json(reply)
                if not alive:
                    break
                for out in session.tick():
                    await ws.send_json(out)
                await asyncio.sleep(tick if session.running else max(tick, 0.02))
        except WebSocketDisconnect:
            pass
        finally:
            reader_task.cancel()

    if frontend_dir is not None:
        frontend = Path(frontend_dir)
        index = frontend / "index.html"
        if index.exists():

            @app.get("/")
            def root():
                return FileResponse(index)

            app.mount("/", StaticFiles(directory=frontend), name="console")

    return app


def serve(
    settings: ServiceSettings,
    port: int = 8750,
    host: str = "127.0.0.1",
    frontend_dir: str | Path | None = None,
) -> None:
    import uvicorn

    app = create_app(settings, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
