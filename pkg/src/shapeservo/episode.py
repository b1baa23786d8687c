"""Closed-loop episode engine and the per-cycle trajectory log.

One cycle: read ground-truth tips, project to features, optionally add
sensor noise, estimate the robot state from the observed features alone,
form the feature error against the active reference, advance the
reference queue if converged, compute the cable command, and integrate
the plant. The same stepping core drives offline runs and the live
service, so both produce identical logs for identical inputs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import (
    Camera,
    FeatureVector,
    add_feature_noise,
    features_from_tips,
    tips_from_features,
)
from .control import (
    ControlGains,
    Scenario,
    advance_scenario,
    check_converged,
    compute_error,
    control_step,
    task_error,
)
from .errors import ShapeServoError
from .estimation import estimate_robot_state, estimated_cables
from .kinematics import RobotConfig
from .plant import PlantState, SimConfig, initial_state, plant_tips, step_plant

ADVANCE_NONE, ADVANCE_AUTO, ADVANCE_MANUAL = 0, 1, 2


class EpisodeAbort(ShapeServoError, RuntimeError):
    """A module error stopped the loop; carries the failing cycle index."""

    def __init__(self, cycle: int, cause: Exception):
        self.cycle = cycle
        self.cause = cause
        super().__init__(f"cycle {cycle}: {cause}")


@dataclass
class CycleRecord:
    time: float
    cables: np.ndarray  # (N, 3) plant ground truth, mm
    arcs: np.ndarray  # (N, 3) estimated (s, kappa, phi)
    features: np.ndarray  # (N, 3) observed (x, y, logz)
    reference: np.ndarray  # (N, 3) active reference
    err_task: float
    err_config: float
    command: np.ndarray  # (3N,) mm/s
    clamped: np.ndarray  # (3N,) bool
    ref_index: int
    advanced: int  # ADVANCE_* code
    converged: bool


@dataclass
class TrajectoryLog:
    """Columnar per-cycle record of one episode."""

    t: np.ndarray
    cables: np.ndarray
    arcs: np.ndarray
    features: np.ndarray
    reference: np.ndarray
    err_task: np.ndarray
    err_config: np.ndarray
    commands: np.ndarray
    clamped: np.ndarray
    ref_index: np.ndarray
    advanced: np.ndarray
    converged: np.ndarray
    completed: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_cycles(self) -> int:
        return self.t.shape[0]

    @property
    def n_sections(self) -> int:
        return self.cables.shape[1]

    @classmethod
    def from_records(
        cls, records: list[CycleRecord], completed: bool, meta: dict | None = None
    ) -> "TrajectoryLog":
        if not records:
            raise ValueError("empty episode")
        return cls(
            t=np.array([r.time for r in records]),
            cables=np.stack([r.cables for r in records]),
            arcs=np.stack([r.arcs for r in records]),
            features=np.stack([r.features for r in records]),
            reference=np.stack([r.reference for r in records]),
            err_task=np.array([r.err_task for r in records]),
            err_config=np.array([r.err_config for r in records]),
            commands=np.stack([r.command for r in records]),
            clamped=np.stack([r.clamped for r in records]),
            ref_index=np.array([r.ref_index for r in records], dtype=int),
            advanced=np.array([r.advanced for r in records], dtype=int),
            converged=np.array([r.converged for r in records], dtype=bool),
            completed=completed,
            meta=dict(meta or {}),
        )

    def header(self) -> list[str]:
        n = self.n_sections
        cols = ["time"]
        for j in range(1, n + 1):
            cols += [f"cable_{j}_{k}" for k in (1, 2, 3)]
        for j in range(1, n + 1):
            cols += [f"arc_{j}_s", f"arc_{j}_kappa", f"arc_{j}_phi"]
        for j in range(1, n + 1):
            cols += [f"f_{j}_x", f"f_{j}_y", f"f_{j}_logz"]
        for j in range(1, n + 1):
            cols += [f"ref_{j}_x", f"ref_{j}_y", f"ref_{j}_logz"]
        cols += ["err_task", "err_config"]
        cols += [f"cmd_{k}" for k in range(1, 3 * n + 1)]
        cols += [f"clamp_{k}" for k in range(1, 3 * n + 1)]
        cols += ["ref_index", "advanced", "converged", "completed"]
        return cols

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        n = self.n_sections
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            for i in range(self.n_cycles):
                row = [repr(float(self.t[i]))]
                for block in (self.cables, self.arcs, self.features, self.reference):
                    row += [repr(float(v)) for v in block[i].reshape(-1)]
                row += [
                    repr(float(self.err_task[i])),
                    repr(float(self.err_config[i])),
                ]
                row += [repr(float(v)) for v in self.commands[i]]
                row += [str(int(v)) for v in self.clamped[i]]
                row += [
                    str(int(self.ref_index[i])),
                    str(int(self.advanced[i])),
                    str(int(self.converged[i])),
                    str(int(self.completed)),
                ]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrajectoryLog":
        path = Path(path)
        with path.open() as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [r for r in reader if r]
        n = sum(1 for c in header if c.startswith("cable_")) // 3
        data = np.array([[float(v) for v in r] for r in rows])
        i = 0

        def take(count):
            nonlocal i
            block = data[:, i : i + count]
            i += count
            return block

        t = take(1)[:, 0]
        cables = take(3 * n).reshape(-1, n, 3)
        arcs = take(3 * n).reshape(-1, n, 3)
        features = take(3 * n).reshape(-1, n, 3)
        reference = take(3 * n).reshape(-1, n, 3)
        err_task = take(1)[:, 0]
        err_config = take(1)[:, 0]
        commands = take(3 * n)
        clamped = take(3 * n).astype(bool)
        ref_index = take(1)[:, 0].astype(int)
        advanced = take(1)[:, 0].astype(int)
        converged = take(1)[:, 0].astype(bool)
        completed = bool(take(1)[-1, 0]) if "completed" in header else False
        return cls(
            t=t,
            cables=cables,
            arcs=arcs,
            features=features,
            reference=reference,
            err_task=err_task,
            err_config=err_config,
            commands=commands,
            clamped=clamped,
            ref_index=ref_index,
            advanced=advanced,
            converged=converged,
            completed=completed,
        )

    def to_json(self, path: str | Path) -> None:
        payload = {
            "completed": bool(self.completed),
            "meta": self.meta,
            "cycles": [
                {
                    "time": float(self.t[i]),
                    "cables": self.cables[i].tolist(),
                    "arcs": self.arcs[i].tolist(),
                    "features": self.features[i].tolist(),
                    "reference": self.reference[i].tolist(),
                    "err_task": float(self.err_task[i]),
                    "err_config": float(self.err_config[i]),
                    "command": self.commands[i].tolist(),
                    "clamped": self.clamped[i].astype(int).tolist(),
                    "ref_index": int(self.ref_index[i]),
                    "advanced": int(self.advanced[i]),
                    "converged": bool(self.converged[i]),
                }
                for i in range(self.n_cycles)
            ],
        }
        Path(path).write_text(json.dumps(payload))


class Episode:
    """Stepping core shared by run_episode and the live service."""

    def __init__(
        self,
        config: RobotConfig,
        camera: Camera,
        gains: ControlGains,
        scenario: Scenario,
        sim: SimConfig | None = None,
        sigma_px: float = 0.0,
        sigma_depth_m: float = 0.0,
        seed: int | None = None,
    ):
        self.config = config
        self.camera = camera
        self.gains = gains
        self.scenario = scenario
        self.sim = sim or SimConfig()
        self.sigma_px = sigma_px
        self.sigma_depth_m = sigma_depth_m
        self.seed = seed
        self.reset()

    def reset(self) -> None:
        self.state: PlantState = initial_state(self.config)
        self.cycle = 0
        self.ref_index = 0
        self.records: list[CycleRecord] = []
        self.completed = False
        self._dwell = 0
        self._manual_pending = False
        self._rng = np.random.default_rng(self.seed)

    def request_manual_advance(self) -> None:
        self._manual_pending = True

    def set_scenario(self, scenario: Scenario) -> None:
        """Replace the reference queue; the active index restarts at 0."""
        self.scenario = scenario
        self.ref_index = 0
        self.completed = False
        self._dwell = 0

    def append_reference(self, ref: FeatureVector, threshold: float) -> None:
        sc = self.scenario
        self.scenario = Scenario(
            references=sc.references + (ref,),
            thresholds=sc.thresholds + (float(threshold),),
            arcs=None,
            name=sc.name,
        )
        self.completed = False
        self._dwell = 0

    def _safeguard_step(
        self, v: np.ndarray, cables_est, e: np.ndarray
    ) -> np.ndarray:
        """Backtracking scale on the cable command: predict the post-step
        error from the estimated state (through the known actuator limits)
        and halve the command until the predicted error norm decreases.

        Exact in the noiseless case, so saturated transients cannot make
        the error norm grow; the commanded direction is never altered,
        only its magnitude.
        """
        if not v.any():
            return v
        norm0 = float(np.linalg.norm(e))
        est_state = PlantState(
            cables=np.stack([c.as_array() for c in cables_est])
        )
        ref = self.scenario.references[self.ref_index]
        scale = 1.0
        for _ in range(4):
            predicted, _ = step_plant(est_state, scale * v, self.sim, self.config)
            try:
                feats = features_from_tips(
                    plant_tips(predicted, self.config), self.camera
                )
                if np.linalg.norm(compute_error(feats, ref)) < norm0:
                    return scale * v
            except ShapeServoError:
                pass  # predicted pose not visible: back off further
            scale *= 0.5
        return scale * v

    def step(self) -> CycleRecord:
        """Advance one control cycle; returns the logged record."""
        try:
            record = self._step_inner()
        except ShapeServoError as exc:
            raise EpisodeAbort(self.cycle, exc) from exc
        self.records.append(record)
        self.cycle += 1
        return record

    def _step_inner(self) -> CycleRecord:
        tips_true = plant_tips(self.state, self.config)
        f_clean = features_from_tips(tips_true, self.camera)
        if self.sigma_px > 0 or self.sigma_depth_m > 0:
            f_obs = add_feature_noise(
                f_clean, self.sigma_px, self.sigma_depth_m, rng=self._rng
            )
        else:
            f_obs = f_clean
        tips_obs = tips_from_features(f_obs, self.camera)
        arcs_est = estimate_robot_state(
            tips_obs, self.config.base, self.config, limit_policy="clamp"
        )
        cables_est = estimated_cables(arcs_est, self.config)

        e = compute_error(f_obs, self.scenario.references[self.ref_index])
        advanced = ADVANCE_NONE
        if self._manual_pending:
            self._manual_pending = False
            if not self.scenario.is_last(self.ref_index):
                self.ref_index += 1
                advanced = ADVANCE_MANUAL
        else:
            new_index = advance_scenario(self.scenario, self.ref_index, e)
            if new_index != self.ref_index:
                self.ref_index = new_index
                advanced = ADVANCE_AUTO
        if advanced != ADVANCE_NONE:
            e = compute_error(f_obs, self.scenario.references[self.ref_index])

        converged = check_converged(e, self.scenario.thresholds[self.ref_index])
        if self.scenario.is_last(self.ref_index) and converged:
            self._dwell += 1
            if self._dwell > self.sim.settle_steps:
                self.completed = True
        else:
            self._dwell = 0

        v = control_step(cables_est, e, self.camera, self.config, self.gains)
        v = self._safeguard_step(v, cables_est, e)
        new_state, clamp_flags = step_plant(self.state, v, self.sim, self.config)
        record = CycleRecord(
            time=self.state.time,
            cables=self.state.cables.copy(),
            arcs=np.array([[a.s, a.kappa, a.phi] for a in arcs_est]),
            features=f_obs.values.copy(),
            reference=self.scenario.references[self.ref_index].values.copy(),
            err_task=float(np.linalg.norm(task_error(e))),
            err_config=float(np.linalg.norm(e)),
            command=v,
            clamped=clamp_flags.reshape(-1),
            ref_index=self.ref_index,
            advanced=advanced,
            converged=converged,
        )
        self.state = new_state
        return record

    def log(self, meta: dict | None = None) -> TrajectoryLog:
        return TrajectoryLog.from_records(self.records, self.completed, meta)


def run_episode(
    config: RobotConfig,
    camera: Camera,
    gains: ControlGains,
    scenario: Scenario,
    sim: SimConfig | None = None,
    sigma_px: float = 0.0,
    sigma_depth_m: float = 0.0,
    seed: int | None = None,
    meta: dict | None = None,
) -> TrajectoryLog:
    """Run one closed-loop episode from the retracted straight pose until
    the scenario completes (plus the settle dwell) or max_steps elapse."""
    ep = Episode(
        config,
        camera,
        gains,
        scenario,
        sim=sim,
        sigma_px=sigma_px,
        sigma_depth_m=sigma_depth_m,
        seed=seed,
    )
    for _ in range(ep.sim.max_steps):
        ep.step()
        if ep.completed:
            break
    return ep.log(meta)
