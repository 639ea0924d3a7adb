"""Synthetic grinding plant: contact, tool vibration, sensor corruption.

The tool is a unit point mass on the surface normal pressed against a
spring-damper surface.  Contact is unilateral; the end-effector (EEF) force
channel carries the true contact force plus a vibration signature whose
frequency falls with load, plus sensor corruption (constant offsets, the
hysteresis operator's residual, white noise).  The worktable channel is the
clean ground truth used for labels.

The per-sample stepping loop lives in :mod:`melforce.kernels`; this module
owns configuration, the hysteresis model and a single-step plant wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels

# Play-operator widths span the force decades seen by the sensor; weights are
# the output of fit_play_weights() (unit tracking gain, 4.31 N mean residual
# after ~100 N excursions) and ship as constants.
PLAY_WIDTHS_N = (0.5, 2.0, 8.0, 40.0)
PLAY_WEIGHTS = (0.68, 0.165, 0.08, 0.075)
HYSTERESIS_RESIDUAL_TARGET_N = 4.31


class HysteresisOperator:
    """Weighted sum of play (backlash) operators, rate independent.

    Each element holds a state s_i clipped to [u - r_i, u + r_i] at every
    input sample; the output is sum(w_i * s_i).  With weights summing to 1
    a monotone input beyond all widths is tracked with a constant lag of
    sum(w_i * r_i), which is also the residual left after a large excursion
    returns to zero.
    """

    def __init__(self, widths=PLAY_WIDTHS_N, weights=PLAY_WEIGHTS):
        self.widths = np.asarray(widths, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if self.widths.shape != self.weights.shape:
            raise ValueError("widths and weights must have matching length")
        if np.any(self.widths < 0.0) or np.any(self.weights < 0.0):
            raise ValueError("widths and weights must be nonnegative")
        self.states = np.zeros_like(self.widths)

    def reset(self):
        self.states[...] = 0.0

    def apply(self, u) -> np.ndarray:
        """Run an input sequence through the operator, advancing its state."""
        u = np.ascontiguousarray(np.atleast_1d(u), dtype=float)
        return kernels.play_apply(u, self.widths, self.weights, self.states)

    @property
    def output(self) -> float:
        return float(self.weights @ self.states)


def excursion_residual(
    op: HysteresisOperator, amplitude: float, samples_per_ramp: int = 400
) -> float:
    """Drive 0 -> amplitude -> 0 linearly and return the remaining output."""
    ramp = np.linspace(0.0, amplitude, samples_per_ramp)
    op.apply(ramp)
    op.apply(ramp[::-1])
    return op.output


def mean_excursion_residual(
    widths,
    weights,
    n_excursions: int = 9,
    seed: int = 1234,
    samples_per_ramp: int = 400,
) -> float:
    """Mean |residual| over alternating-sign excursions of ~100 N.

    Mirrors the hand-push characterization protocol: amplitudes are drawn
    uniformly from [90, 110] N and the push direction alternates.
    """
    rng = np.random.default_rng(seed)
    op = HysteresisOperator(widths, weights)
    residuals = []
    for i in range(n_excursions):
        sign = 1.0 if i % 2 == 0 else -1.0
        amplitude = sign * rng.uniform(90.0, 110.0)
        residuals.append(abs(excursion_residual(op, amplitude, samples_per_ramp)))
    return float(np.mean(residuals))


def fit_play_weights(
    widths=PLAY_WIDTHS_N,
    target: float = HYSTERESIS_RESIDUAL_TARGET_N,
    steps: int = 13,
    refinements: int = 3,
) -> np.ndarray:
    """Grid-search play weights (sum 1) hitting the target mean residual.

    Sweeps the three heavier-width weights on a shrinking grid, assigns the
    remainder to the smallest width, and scores every candidate by running
    the excursion protocol on the operator itself.  Monotone ramps make the
    play operator insensitive to the ramp sample count, so the search uses
    coarse ramps.
    """
    widths = np.asarray(widths, dtype=float)
    lo = np.zeros(3)
    hi = np.array([0.4, 0.3, 0.2])
    best = None
    best_err = np.inf
    for _ in range(refinements):
        grids = [np.linspace(lo[j], hi[j], steps) for j in range(3)]
        for w2 in grids[0]:
            for w3 in grids[1]:
                for w4 in grids[2]:
                    w1 = 1.0 - w2 - w3 - w4
                    if w1 < 0.0:
                        continue
                    weights = np.array([w1, w2, w3, w4])
                    err = abs(
                        mean_excursion_residual(widths, weights, samples_per_ramp=8)
                        - target
                    )
                    if err < best_err:
                        best_err = err
                        best = weights
        span = (hi - lo) / (steps - 1)
        lo = np.maximum(0.0, best[1:] - span)
        hi = best[1:] + span
    return best


def preload_for_offset(
    target_offset_n: float,
    widths=PLAY_WIDTHS_N,
    weights=PLAY_WEIGHTS,
    tol: float = 1e-6,
) -> float:
    """Preload level whose ramp-up leaves the operator at target_offset_n.

    Used by the weight-induced-offset scenario: a static preload pushed
    through the hysteresis operator produces the sensor deviation.
    """
    if target_offset_n <= 0.0:
        return 0.0

    def ramp_output(p):
        op = HysteresisOperator(widths, weights)
        op.apply(np.linspace(0.0, p, 200))
        return op.output

    lo, hi = 0.0, 1.0
    while ramp_output(hi) < target_offset_n:
        hi *= 2.0
        if hi > 1e4:
            raise ValueError("offset target unreachable")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ramp_output(mid) < target_offset_n:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class PlantConfig:
    """Plant and sensor parameters; defaults model the soft grinding blank."""

    dt: float = 0.001
    mass: float = 1.0
    env_stiffness: float = 750.0        # N/m
    env_damping: float = 40.0           # N s/m
    z_surface: float = 0.0              # m, + is into the surface
    f_high_hz: float = 300.0            # unloaded tool frequency
    f_low_hz: float = 100.0             # frequency floor
    force_at_f_low: float = 4.0         # N load that reaches the floor
    vib_amp_per_n: float = 0.3          # vibration amplitude slope
    vib_amp_floor: float = 0.05         # N
    harmonic2: float = 0.3
    harmonic3: float = 0.1
    noise_rms: float = 0.05             # EEF white noise, N
    worktable_noise_rms: float = 0.01   # N
    lateral_noise_rms: float = 0.15     # extra broadband noise while moving in XY
    lateral_friction_bias: float = 0.1  # N, steady bias while moving in XY
    surface_wobble_rms: float = 1e-3    # m, slow surface-height variation
    surface_wobble_cutoff_hz: float = 0.03
    vib_jitter_rms_hz: float = 3.0      # spindle-speed jitter on the tone
    vib_jitter_cutoff_hz: float = 3.0
    hysteresis_residual_target: float = HYSTERESIS_RESIDUAL_TARGET_N

    def __post_init__(self):
        if not 0.0 < self.f_low_hz < self.f_high_hz <= 500.0:
            raise ValueError("need 0 < f_low < f_high <= Nyquist (500 Hz)")
        if self.env_stiffness <= 0.0 or self.dt <= 0.0:
            raise ValueError("stiffness and dt must be positive")

    @property
    def vib_slope_hz_per_n(self) -> float:
        return (self.f_high_hz - self.f_low_hz) / self.force_at_f_low

    @property
    def wobble_alpha(self) -> float:
        return math.exp(-2.0 * math.pi * self.surface_wobble_cutoff_hz * self.dt)

    @property
    def wobble_gain(self) -> float:
        if self.surface_wobble_rms == 0.0:
            return 0.0
        return self.surface_wobble_rms * math.sqrt(1.0 - self.wobble_alpha**2)

    @property
    def jitter_alpha(self) -> float:
        return math.exp(-2.0 * math.pi * self.vib_jitter_cutoff_hz * self.dt)

    @property
    def jitter_gain(self) -> float:
        if self.vib_jitter_rms_hz == 0.0:
            return 0.0
        return self.vib_jitter_rms_hz * math.sqrt(1.0 - self.jitter_alpha**2)


GRIND_SURFACE = PlantConfig()
# The demo workpiece is hard and flat: force feedback dominates the loop's
# DC behaviour, so sensor offsets translate almost one-for-one into force
# error, which is the failure mode the estimator is meant to remove.  Heavy
# contact damping keeps the loop convergent when the force feedback arrives
# through the windowed estimator (an extra ~0.25 s of group delay).
DEMO_SURFACE = replace(
    GRIND_SURFACE, env_stiffness=8000.0, env_damping=400.0, surface_wobble_rms=0.0
)


def vib_frequency(true_force_n, cfg: PlantConfig = GRIND_SURFACE):
    """Tool vibration frequency for a contact force, affine with clamping."""
    f = np.asarray(true_force_n, dtype=float)
    if np.any(f < 0.0):
        raise ValueError("contact force must be nonnegative")
    out = np.clip(
        cfg.f_high_hz - cfg.vib_slope_hz_per_n * f, cfg.f_low_hz, cfg.f_high_hz
    )
    return float(out) if out.ndim == 0 else out


@dataclass
class PlantState:
    """Mutable plant state; the kernel-facing vector mirrors these fields."""

    z_tool: float = -0.002
    z_vel: float = 0.0
    z_surface: float = 0.0
    true_force: float = 0.0
    time: float = 0.0
    vib_phase: float = 0.0
    offset_drift: float = 0.0
    hysteresis_states: np.ndarray = field(
        default_factory=lambda: np.zeros(len(PLAY_WIDTHS_N))
    )


def make_params_vec(
    cfg: PlantConfig,
    sensor_offset_n: float = 0.0,
    kp: float = 0.0,
    kd: float = 0.0,
    kf: float = 0.0,
    inertia: float = 1.0,
    deriv_filter_hz: float = 10.0,
    dob_cutoff_hz: float = 50.0,
    lpf_feedback_hz: float = 5.0,
) -> np.ndarray:
    """Pack plant and controller parameters into the kernel layout."""
    p = np.zeros(kernels.NPARAMS)
    p[kernels.P_DT] = cfg.dt
    p[kernels.P_KENV] = cfg.env_stiffness
    p[kernels.P_DENV] = cfg.env_damping
    p[kernels.P_ZSURF] = cfg.z_surface
    p[kernels.P_FHIGH] = cfg.f_high_hz
    p[kernels.P_FLOW] = cfg.f_low_hz
    p[kernels.P_VIB_SLOPE] = cfg.vib_slope_hz_per_n
    p[kernels.P_VAMP_PER_N] = cfg.vib_amp_per_n
    p[kernels.P_VAMP0] = cfg.vib_amp_floor
    p[kernels.P_H2] = cfg.harmonic2
    p[kernels.P_H3] = cfg.harmonic3
    p[kernels.P_WOB_ALPHA] = cfg.wobble_alpha
    p[kernels.P_WOB_GAIN] = cfg.wobble_gain
    p[kernels.P_SENS_OFFSET] = sensor_offset_n
    p[kernels.P_KP] = kp
    p[kernels.P_KD] = kd
    p[kernels.P_KF] = kf
    p[kernels.P_INERTIA] = inertia
    p[kernels.P_A_DERIV] = math.exp(-2.0 * math.pi * deriv_filter_hz * cfg.dt)
    p[kernels.P_A_DOB] = math.exp(-2.0 * math.pi * dob_cutoff_hz * cfg.dt)
    p[kernels.P_A_LPF_FB] = math.exp(-2.0 * math.pi * lpf_feedback_hz * cfg.dt)
    p[kernels.P_MTRUE] = cfg.mass
    p[kernels.P_JIT_ALPHA] = cfg.jitter_alpha
    p[kernels.P_JIT_GAIN] = cfg.jitter_gain
    return p


def make_state_vec(state: PlantState) -> np.ndarray:
    s = np.zeros(kernels.NSTATE)
    s[kernels.S_Z] = state.z_tool
    s[kernels.S_VZ] = state.z_vel
    s[kernels.S_TIME] = state.time
    s[kernels.S_PHASE] = state.vib_phase
    s[kernels.S_LPF_FB] = math.nan
    return s


class Plant:
    """Single-step plant interface around the chunked kernel.

    step() takes the commanded tool acceleration (with unit task-space mass
    this is numerically the applied motor force), advances one sample and
    returns the two sensor channels.
    """

    def __init__(
        self,
        cfg: PlantConfig = GRIND_SURFACE,
        state: PlantState | None = None,
        sensor_offset_n: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        self.cfg = cfg
        self.state = state if state is not None else PlantState()
        self._vec = make_state_vec(self.state)
        self._params = make_params_vec(cfg, sensor_offset_n=sensor_offset_n)
        self._rng = rng
        self._cmd = np.zeros(1)
        self._vcmd = np.zeros(1)
        self._noise = [np.zeros(1) for _ in range(4)]
        self._out = [np.zeros(1) for _ in range(4)]

    @property
    def true_force(self) -> float:
        """Contact force at the current state (velocity term included)."""
        pen = self._vec[kernels.S_Z] - (
            self.cfg.z_surface + self._vec[kernels.S_WOBBLE]
        )
        if pen <= 0.0:
            return 0.0
        return max(
            0.0,
            self.cfg.env_stiffness * pen
            + self.cfg.env_damping * self._vec[kernels.S_VZ],
        )

    def step(self, tool_accel_cmd: float) -> tuple[float, float]:
        """Advance one sample; returns (eef_sample, worktable_sample) in N."""
        self._cmd[0] = tool_accel_cmd
        ne, nw, nb, nj = self._noise
        if self._rng is not None:
            ne[0] = self._rng.standard_normal() * self.cfg.noise_rms
            nw[0] = self._rng.standard_normal() * self.cfg.worktable_noise_rms
            nb[0] = self._rng.standard_normal()
            nj[0] = self._rng.standard_normal()
        else:
            ne[0] = nw[0] = nb[0] = nj[0] = 0.0
        out_true, out_eef, out_wt, _out_z = self._out
        kernels.plant_chunk(
            self._vec,
            self._params,
            kernels.MODE_DIRECT,
            0.0,
            0.0,
            self._cmd,
            self._vcmd,
            ne,
            nw,
            nb,
            nj,
            out_true,
            out_eef,
            out_wt,
            _out_z,
        )
        self._sync_state(float(out_true[0]))
        return float(out_eef[0]), float(out_wt[0])

    def _sync_state(self, true_force: float):
        self.state.z_tool = float(self._vec[kernels.S_Z])
        self.state.z_vel = float(self._vec[kernels.S_VZ])
        self.state.time = float(self._vec[kernels.S_TIME])
        self.state.vib_phase = float(self._vec[kernels.S_PHASE])
        self.state.true_force = true_force
