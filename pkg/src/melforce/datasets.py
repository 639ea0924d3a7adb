"""Closed-loop dataset generation for the four grinding scenarios.

Each dataset presses the tool to five commanded depths (the nominal depth
offset by -2..+2 mm), lets the loop settle, then slices the steady phase
into non-overlapping 512-sample windows labeled with the window-mean
worktable force:

- Data1: clean run.
- Data2: Data1 with the EEF channel shifted by a programmatic +2 N offset
  (applied to the recording, so Data1 and Data2 differ by exactly 2 N).
- Data3: Data1 with an offset produced by pushing a static preload through
  the hysteresis operator (a simulated calibration weight).
- Data4: the tool additionally translates 2 cm / -3 cm in X/Y during
  collection, which adds broadband noise and a friction bias to the EEF
  channel.

75 train / 25 test records per scenario: 15 + 5 per command level.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .control import ControllerGains
from .plant import (
    GRIND_SURFACE,
    HysteresisOperator,
    PlantConfig,
    PlantState,
    make_params_vec,
    make_state_vec,
    preload_for_offset,
)

SCENARIOS = ("Data1", "Data2", "Data3", "Data4")
COMMAND_OFFSETS_MM = (-2, -1, 0, 1, 2)
WINDOW_SAMPLES = 512
WINDOWS_PER_LEVEL = 20
TRAIN_PER_LEVEL = 15

NOMINAL_DEPTH_M = 2.667e-3
COLLECTION_FORCE_CMD_N = 2.0
HOVER_M = -2e-3
HOVER_S = 0.2
APPROACH_S = 0.5
SETTLE_S = 2.3
PROGRAMMATIC_OFFSET_N = 2.0
WEIGHT_OFFSET_TARGET_N = 2.0
LATERAL_XY_M = (0.02, -0.03)


class DatasetGenerationError(RuntimeError):
    """Raised when the collection loop diverges or produces bad records."""


@dataclass(frozen=True)
class GrindRecord:
    scenario: str
    split: str
    command_offset_mm: int
    label_n: float
    eef: np.ndarray
    t_end: float


@dataclass
class GrindDataset:
    scenario: str
    seed: int
    records: list[GrindRecord] = field(default_factory=list)

    def split(self, which: str) -> list[GrindRecord]:
        if which not in ("train", "test"):
            raise ValueError("split must be train or test")
        return [r for r in self.records if r.split == which]

    def windows(self, which: str) -> np.ndarray:
        return np.stack([r.eef for r in self.split(which)])

    def labels(self, which: str) -> np.ndarray:
        return np.array([r.label_n for r in self.split(which)])


def _level_command(cmd_depth_m: float, dt: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Commanded depth/velocity samples for one level; returns settle length."""
    n_hover = round(HOVER_S / dt)
    n_appr = round(APPROACH_S / dt)
    n_settle = round(SETTLE_S / dt)
    n_collect = WINDOWS_PER_LEVEL * WINDOW_SAMPLES
    n = n_hover + n_appr + n_settle + n_collect
    pz = np.empty(n)
    vz = np.zeros(n)
    pz[:n_hover] = HOVER_M
    ramp = (np.arange(n_appr) + 1.0) / n_appr
    pz[n_hover : n_hover + n_appr] = HOVER_M + ramp * (cmd_depth_m - HOVER_M)
    vz[n_hover : n_hover + n_appr] = (cmd_depth_m - HOVER_M) / APPROACH_S
    pz[n_hover + n_appr :] = cmd_depth_m
    return pz, vz, n - n_collect


def _collect_level(
    level_idx: int,
    offset_mm: int,
    seed: int,
    cfg: PlantConfig,
    gains: ControllerGains,
    lateral: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one command level and return (eef, worktable) over the collect span."""
    dt = cfg.dt
    cmd_depth = NOMINAL_DEPTH_M + offset_mm * 1e-3
    pz, vz, n_settle = _level_command(cmd_depth, dt)
    n = pz.shape[0]

    rng = np.random.default_rng([seed, level_idx])
    noise_eef = rng.standard_normal(n) * cfg.noise_rms
    noise_wt = rng.standard_normal(n) * cfg.worktable_noise_rms
    noise_wob = rng.standard_normal(n)
    noise_jit = rng.standard_normal(n)
    wobble0 = rng.standard_normal() * cfg.surface_wobble_rms
    jitter0 = rng.standard_normal() * cfg.vib_jitter_rms_hz
    if lateral:
        extra = np.random.default_rng([seed, level_idx, 4])
        noise_eef[n_settle:] += (
            extra.standard_normal(n - n_settle) * cfg.lateral_noise_rms
        )

    state = make_state_vec(PlantState(z_tool=HOVER_M))
    state[kernels.S_WOBBLE] = wobble0
    state[kernels.S_JITTER] = jitter0
    out = [np.empty(n) for _ in range(4)]

    def run(sl: slice, sensor_offset: float):
        params = make_params_vec(
            cfg,
            sensor_offset_n=sensor_offset,
            kp=gains.kp,
            kd=gains.kd,
            kf=gains.kf,
            inertia=gains.inertia,
            deriv_filter_hz=gains.deriv_filter_hz,
            dob_cutoff_hz=gains.dob_cutoff_hz,
        )
        kernels.plant_chunk(
            state,
            params,
            kernels.MODE_RAW,
            0.0,
            COLLECTION_FORCE_CMD_N,
            pz[sl],
            vz[sl],
            noise_eef[sl],
            noise_wt[sl],
            noise_wob[sl],
            noise_jit[sl],
            out[0][sl],
            out[1][sl],
            out[2][sl],
            out[3][sl],
        )
        if abs(state[kernels.S_Z]) > 1.0:
            raise DatasetGenerationError(
                f"collection diverged at level {offset_mm:+d} mm, "
                f"t={state[kernels.S_TIME]:.3f} s, z={state[kernels.S_Z]:.3f} m"
            )

    run(slice(0, n_settle), 0.0)
    run(slice(n_settle, n), cfg.lateral_friction_bias if lateral else 0.0)
    return out[1][n_settle:], out[2][n_settle:]


def weight_offset_n(cfg: PlantConfig = GRIND_SURFACE) -> float:
    """EEF deviation produced by the calibration-weight preload (Data3)."""
    preload = preload_for_offset(WEIGHT_OFFSET_TARGET_N)
    op = HysteresisOperator()
    op.apply(np.linspace(0.0, preload, 200))
    return op.output


def generate_dataset(
    scenario: str,
    seed: int,
    cfg: PlantConfig = GRIND_SURFACE,
    gains: ControllerGains = ControllerGains(),
) -> GrindDataset:
    """Generate one scenario's 75 train / 25 test records, deterministically."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}, expected one of {SCENARIOS}")
    lateral = scenario == "Data4"
    eef_shift = 0.0
    if scenario == "Data2":
        eef_shift = PROGRAMMATIC_OFFSET_N
    elif scenario == "Data3":
        eef_shift = weight_offset_n(cfg)

    level_duration_s = (
        HOVER_S + APPROACH_S + SETTLE_S + WINDOWS_PER_LEVEL * WINDOW_SAMPLES * cfg.dt
    )
    records = []
    for level_idx, offset_mm in enumerate(COMMAND_OFFSETS_MM):
        eef, wt = _collect_level(level_idx, offset_mm, seed, cfg, gains, lateral)
        t_level = level_idx * level_duration_s + (HOVER_S + APPROACH_S + SETTLE_S)
        for w in range(WINDOWS_PER_LEVEL):
            sl = slice(w * WINDOW_SAMPLES, (w + 1) * WINDOW_SAMPLES)
            window = eef[sl] + eef_shift
            label = float(np.mean(wt[sl]))
            records.append(
                GrindRecord(
                    scenario=scenario,
                    split="train" if w < TRAIN_PER_LEVEL else "test",
                    command_offset_mm=offset_mm,
                    label_n=label,
                    eef=window,
                    t_end=t_level + (w + 1) * WINDOW_SAMPLES * cfg.dt,
                )
            )
    if not all(math.isfinite(r.label_n) for r in records):
        raise DatasetGenerationError("non-finite label in generated dataset")
    return GrindDataset(scenario=scenario, seed=seed, records=records)


def save_jsonl(dataset: GrindDataset, path: str):
    """Write one record per line; floats keep full round-trip precision."""
    tmp_fd, tmp_path = tempfile.mkstemp(
        dir=os.path.dirname(os.path.abspath(path)) or ".", suffix=".tmp"
    )
    try:
        with os.fdopen(tmp_fd, "w") as fh:
            for r in dataset.records:
                fh.write(
                    json.dumps(
                        {
                            "scenario": r.scenario,
                            "split": r.split,
                            "command_offset_mm": r.command_offset_mm,
                            "label_n": r.label_n,
                            "eef": r.eef.tolist(),
                            "t_end": r.t_end,
                        }
                    )
                    + "\n"
                )
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def load_jsonl(path: str, seed: int = -1) -> GrindDataset:
    records = []
    scenario = None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            eef = np.asarray(obj["eef"], dtype=float)
            if eef.shape != (WINDOW_SAMPLES,):
                raise DatasetGenerationError(
                    f"record with {eef.shape[0]} samples in {path}"
                )
            records.append(
                GrindRecord(
                    scenario=obj["scenario"],
                    split=obj["split"],
                    command_offset_mm=int(obj["command_offset_mm"]),
                    label_n=float(obj["label_n"]),
                    eef=eef,
                    t_end=float(obj["t_end"]),
                )
            )
            scenario = obj["scenario"]
    if not records:
        raise DatasetGenerationError(f"no records in {path}")
    return GrindDataset(scenario=scenario, seed=seed, records=records)
