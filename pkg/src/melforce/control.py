"""Impedance control with disturbance-observer compensation, trajectories,
and the 1 kHz closed-loop runner.

The controller produces an acceleration reference from position, velocity
and force errors; the disturbance observer turns it into a force command
that cancels lumped disturbances (contact load, inertia mismatch).  Only the
surface-normal axis is dynamic; X/Y are kinematic and exist for path logging
and the lateral-motion scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .plant import DEMO_SURFACE, PlantConfig, make_params_vec, make_state_vec, PlantState

# Full controller diagonals of the 6-DOF arm this loop is modelled after
# (x, y, z, roll, pitch, yaw).  Only the z entries drive the simulation.
GAIN_DIAGONALS = {
    "kp": (700.0, 700.0, 150.0, 1500.0, 1500.0, 1500.0),
    "kd": (70.0, 70.0, 120.0, 80.0, 80.0, 80.0),
    "kf": (0.0, 0.0, 0.1, 0.0, 0.0, 0.0),
    "inertia": (1.58, 1.40, 0.80, 0.18, 0.16, 0.04),
}


@dataclass(frozen=True)
class ControllerGains:
    kp: float = GAIN_DIAGONALS["kp"][2]            # 1/s^2
    kd: float = GAIN_DIAGONALS["kd"][2]            # 1/s
    kf: float = GAIN_DIAGONALS["kf"][2]            # m/(s^2 N)
    inertia: float = GAIN_DIAGONALS["inertia"][2]  # kg
    deriv_filter_hz: float = 10.0
    dob_cutoff_hz: float = 50.0
    dt: float = 0.001

    def __post_init__(self):
        if min(self.kp, self.kd, self.inertia, self.dt) <= 0.0 or self.kf < 0.0:
            raise ValueError("gains, inertia and dt must be positive (kf >= 0)")


class ImpedanceController:
    """Acceleration-reference impedance law with a filtered derivative term."""

    def __init__(self, gains: ControllerGains = ControllerGains()):
        self.gains = gains
        self._a_deriv = math.exp(-2.0 * math.pi * gains.deriv_filter_hz * gains.dt)
        self.v_filtered = 0.0

    def accel_ref(
        self,
        p_cmd: float,
        p_res: float,
        v_cmd: float,
        v_res: float,
        f_cmd: float,
        f_res_feedback: float,
    ) -> float:
        g = self.gains
        self.v_filtered = self._a_deriv * self.v_filtered + (1.0 - self._a_deriv) * v_res
        return (
            g.kp * (p_cmd - p_res)
            + g.kd * (v_cmd - self.v_filtered)
            + g.kf * (f_cmd - f_res_feedback)
        )


@dataclass
class DobState:
    estimate_n: float = 0.0
    cutoff_hz: float = 50.0


class DisturbanceObserver:
    """Classical DOB: low-passed (applied force - inertia * measured accel)."""

    def __init__(self, gains: ControllerGains = ControllerGains()):
        self.gains = gains
        self.state = DobState(cutoff_hz=gains.dob_cutoff_hz)
        self._alpha = math.exp(-2.0 * math.pi * gains.dob_cutoff_hz * gains.dt)
        self._last_u = 0.0

    def compensate(self, accel_cmd: float) -> float:
        """Force command realizing accel_cmd in spite of disturbances."""
        u = self.gains.inertia * accel_cmd + self.state.estimate_n
        self._last_u = u
        return u

    def update(self, measured_accel: float):
        innovation = self._last_u - self.gains.inertia * measured_accel
        self.state.estimate_n = (
            self._alpha * self.state.estimate_n + (1.0 - self._alpha) * innovation
        )


@dataclass(frozen=True)
class Segment:
    start: tuple[float, float, float]  # x, y, z [m]; z > 0 is into the surface
    end: tuple[float, float, float]
    duration: float
    label: str = ""

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("segment duration must be positive")


@dataclass(frozen=True)
class Trajectory:
    segments: tuple[Segment, ...]
    force_cmd_n: float

    def __post_init__(self):
        for a, b in zip(self.segments, self.segments[1:]):
            if not np.allclose(a.end, b.start, atol=1e-12):
                raise ValueError("segments must be contiguous")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.segments)


def press_depth_for_force(
    f_target_n: float,
    f_cmd_n: float,
    cfg: PlantConfig,
    gains: ControllerGains = ControllerGains(),
) -> float:
    """Commanded depth whose loop equilibrium carries f_target_n of contact.

    From the DC balance kp*(p_cmd - p) + kf*(f_cmd - F) = 0 with
    F = k_env * p.
    """
    return (f_target_n * (gains.kf + gains.kp / cfg.env_stiffness)
            - gains.kf * f_cmd_n) / gains.kp


def make_press_trajectory(
    depth_m: float,
    force_cmd_n: float,
    press_duration: float = 4.0,
    hover_m: float = -0.002,
    approach_duration: float = 0.5,
) -> Trajectory:
    """Hover, descend to a constant commanded depth and hold."""
    return Trajectory(
        segments=(
            Segment((0, 0, hover_m), (0, 0, hover_m), 0.2, "hover"),
            Segment((0, 0, hover_m), (0, 0, depth_m), approach_duration, "approach"),
            Segment((0, 0, depth_m), (0, 0, depth_m), press_duration, "press"),
        ),
        force_cmd_n=force_cmd_n,
    )


def letter_a_path(
    scale: float,
    depth_cmd: float,
    feed_rate: float = 0.02,
    grind_depth_m: float = 2.5e-4,
    lift_m: float = -0.005,
) -> Trajectory:
    """Three-stroke letter-A path (two legs and a crossbar) in the XY plane.

    The two legs rise from y=0 to an apex at height `scale`; the crossbar
    sits at 45 % height and joins the legs.  Strokes grind at a shallow
    constant depth while the force command depth_cmd does the regulation;
    pen lifts hop between strokes above the surface.
    """
    if scale <= 0.0 or feed_rate <= 0.0:
        raise ValueError("scale and feed rate must be positive")
    half = 0.35 * scale
    bar_y = 0.45 * scale
    bar_x = half * (1.0 - 0.45)
    left_foot = (-half, 0.0)
    apex = (0.0, scale)
    right_foot = (half, 0.0)
    bar_l = (-bar_x, bar_y)
    bar_r = (bar_x, bar_y)

    def seg_time(p, q):
        return max(1e-3, math.hypot(q[0] - p[0], q[1] - p[1]) / feed_rate)

    lift_time = 0.4
    plunge_time = 0.3
    z = grind_depth_m
    segments = [
        Segment((*left_foot, lift_m), (*left_foot, lift_m), 0.2, "hover"),
        Segment((*left_foot, lift_m), (*left_foot, z), plunge_time, "plunge"),
        Segment((*left_foot, z), (*apex, z), seg_time(left_foot, apex), "stroke"),
        Segment((*apex, z), (*apex, lift_m), lift_time, "lift"),
        Segment((*apex, lift_m), (*apex, z), plunge_time, "plunge"),
        Segment((*apex, z), (*right_foot, z), seg_time(apex, right_foot), "stroke"),
        Segment((*right_foot, z), (*right_foot, lift_m), lift_time, "lift"),
        Segment((*right_foot, lift_m), (*bar_l, lift_m), seg_time(right_foot, bar_l), "travel"),
        Segment((*bar_l, lift_m), (*bar_l, z), plunge_time, "plunge"),
        Segment((*bar_l, z), (*bar_r, z), seg_time(bar_l, bar_r), "stroke"),
        Segment((*bar_r, z), (*bar_r, lift_m), lift_time, "retract"),
    ]
    return Trajectory(segments=tuple(segments), force_cmd_n=depth_cmd)


def sample_trajectory(traj: Trajectory, dt: float) -> dict[str, np.ndarray]:
    """Sample commanded positions and velocities on the controller grid."""
    chunks_p = []
    chunks_v = []
    for seg in traj.segments:
        n = max(1, round(seg.duration / dt))
        frac = (np.arange(n) + 1.0) / n
        start = np.asarray(seg.start)
        end = np.asarray(seg.end)
        pos = start[None, :] + frac[:, None] * (end - start)[None, :]
        vel = np.broadcast_to((end - start) / seg.duration, pos.shape)
        chunks_p.append(pos)
        chunks_v.append(vel)
    pos = np.concatenate(chunks_p)
    vel = np.concatenate(chunks_v)
    return {
        "px": pos[:, 0].copy(),
        "py": pos[:, 1].copy(),
        "pz": np.ascontiguousarray(pos[:, 2]),
        "vz": np.ascontiguousarray(vel[:, 2]),
    }


class RunDivergence(RuntimeError):
    """Raised when the closed loop leaves the sane operating envelope."""


@dataclass
class RunLog:
    time_s: np.ndarray
    px: np.ndarray
    py: np.ndarray
    pz: np.ndarray
    true_force_n: np.ndarray
    eef_force_n: np.ndarray
    feedback_force_n: np.ndarray
    cmd_force_n: np.ndarray
    estimate_latency_s: np.ndarray = field(default=None, repr=False)

    CSV_HEADER = "time_s,px,py,pz,true_force_n,eef_force_n,feedback_force_n,cmd_force_n"

    def to_csv(self, path):
        cols = np.column_stack(
            [
                self.time_s,
                self.px,
                self.py,
                self.pz,
                self.true_force_n,
                self.eef_force_n,
                self.feedback_force_n,
                self.cmd_force_n,
            ]
        )
        with open(path, "w") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for row in cols:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "RunLog":
        data = np.genfromtxt(path, delimiter=",", names=True)
        return cls(*(np.atleast_1d(data[name]) for name in data.dtype.names))


def force_tracking_error(log: RunLog) -> float:
    """Integral of |true force - commanded force| over the run, in N s."""
    dt = float(np.median(np.diff(log.time_s))) if log.time_s.size > 1 else 0.001
    return float(np.sum(np.abs(log.true_force_n - log.cmd_force_n)) * dt)


FEEDBACK_MODES = ("raw", "lpf", "estimator")
ESTIMATE_HOP_SAMPLES = 16
WINDOW_SAMPLES = 512


def run_closed_loop(
    traj: Trajectory,
    feedback_mode: str,
    seed: int = 0,
    cfg: PlantConfig = DEMO_SURFACE,
    gains: ControllerGains = ControllerGains(),
    sensor_offset_n: float = 0.0,
    estimator=None,
    lpf_feedback_hz: float = 5.0,
) -> RunLog:
    """Run plant + controller at 1 kHz and log the trajectory.

    In estimator mode the force feedback is the estimator's output on the
    most recent 512-sample EEF window, refreshed every 16 ms and held in
    between; raw feedback fills in while the first window accumulates.  The
    estimator is any callable mapping a 512-sample array to newtons.
    """
    if feedback_mode not in FEEDBACK_MODES:
        raise ValueError(f"feedback_mode must be one of {FEEDBACK_MODES}")
    if feedback_mode == "estimator" and estimator is None:
        raise ValueError("estimator feedback requires an estimator")
    if gains.dt != cfg.dt:
        raise ValueError("controller and plant sample times must agree")

    cmds = sample_trajectory(traj, cfg.dt)
    n = cmds["pz"].shape[0]
    rng = np.random.default_rng(seed)
    noise_eef = rng.standard_normal(n) * cfg.noise_rms
    noise_wt = rng.standard_normal(n) * cfg.worktable_noise_rms
    noise_wob = rng.standard_normal(n)
    noise_jit = rng.standard_normal(n)

    params = make_params_vec(
        cfg,
        sensor_offset_n=sensor_offset_n,
        kp=gains.kp,
        kd=gains.kd,
        kf=gains.kf,
        inertia=gains.inertia,
        deriv_filter_hz=gains.deriv_filter_hz,
        dob_cutoff_hz=gains.dob_cutoff_hz,
        lpf_feedback_hz=lpf_feedback_hz,
    )
    state = make_state_vec(PlantState(z_tool=traj.segments[0].start[2]))
    state[kernels.S_WOBBLE] = rng.standard_normal() * cfg.surface_wobble_rms
    state[kernels.S_JITTER] = rng.standard_normal() * cfg.vib_jitter_rms_hz

    out_true = np.empty(n)
    out_eef = np.empty(n)
    out_wt = np.empty(n)
    out_z = np.empty(n)
    latency = np.full(n, np.nan)
    fb_trace = np.empty(n)

    mode_const = {"raw": kernels.MODE_RAW, "lpf": kernels.MODE_LPF}.get(feedback_mode)
    held = 0.0
    import time as _time

    i = 0
    while i < n:
        j = min(i + ESTIMATE_HOP_SAMPLES, n)
        if feedback_mode == "estimator":
            mode = kernels.MODE_RAW if i < WINDOW_SAMPLES else kernels.MODE_HELD
        else:
            mode = mode_const
        kernels.plant_chunk(
            state,
            params,
            mode,
            held,
            traj.force_cmd_n,
            cmds["pz"][i:j],
            cmds["vz"][i:j],
            noise_eef[i:j],
            noise_wt[i:j],
            noise_wob[i:j],
            noise_jit[i:j],
            out_true[i:j],
            out_eef[i:j],
            out_wt[i:j],
            out_z[i:j],
        )
        if mode == kernels.MODE_HELD:
            fb_trace[i:j] = held
        elif mode == kernels.MODE_RAW:
            fb_trace[i:j] = out_eef[i:j]
        else:
            fb_trace[i:j] = np.nan  # filled from the LPF state below
        if abs(state[kernels.S_Z]) > 1.0:
            raise RunDivergence(
                f"tool position {state[kernels.S_Z]:.3f} m at t={state[kernels.S_TIME]:.3f} s"
            )
        if feedback_mode == "estimator" and j >= WINDOW_SAMPLES:
            t0 = _time.perf_counter()
            held = float(estimator(out_eef[j - WINDOW_SAMPLES : j]))
            latency[j - 1] = _time.perf_counter() - t0
        i = j

    if feedback_mode == "lpf":
        # reconstruct the in-loop filter trace for the log
        from .dsp import lpf_first_order

        fb_trace = lpf_first_order(out_eef, lpf_feedback_hz, cfg.dt)

    time_s = np.arange(n) * cfg.dt
    return RunLog(
        time_s=time_s,
        px=cmds["px"],
        py=cmds["py"],
        pz=out_z,
        true_force_n=out_true,
        eef_force_n=out_eef,
        feedback_force_n=fb_trace,
        cmd_force_n=np.full(n, traj.force_cmd_n),
        estimate_latency_s=latency,
    )
