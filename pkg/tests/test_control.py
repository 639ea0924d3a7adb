import math

import numpy as np
import numpy.testing as npt
import pytest

from dataclasses import replace

from melforce import control, kernels, plant


class TestImpedanceLaw:
    def test_all_errors_zero(self):
        ctl = control.ImpedanceController()
        assert ctl.accel_ref(0, 0, 0, 0, 0, 0) == 0.0

    def test_position_error_gain(self):
        ctl = control.ImpedanceController()
        npt.assert_allclose(ctl.accel_ref(0.001, 0.0, 0, 0, 0, 0), 0.15, rtol=1e-12)

    def test_force_error_gain(self):
        ctl = control.ImpedanceController()
        npt.assert_allclose(ctl.accel_ref(0, 0, 0, 0, 1.0, 0.0), 0.1, rtol=1e-12)

    def test_zero_force_gain_reduces_to_pd(self):
        gains = replace(control.ControllerGains(), kf=0.0)
        ctl_pd = control.ImpedanceController(gains)
        ctl_full = control.ImpedanceController(gains)
        rng = np.random.default_rng(0)
        for _ in range(50):
            p_cmd, p, v_cmd, v = rng.standard_normal(4) * 0.01
            f_cmd, f = rng.standard_normal(2) * 5.0
            a1 = ctl_pd.accel_ref(p_cmd, p, v_cmd, v, 0.0, 0.0)
            a2 = ctl_full.accel_ref(p_cmd, p, v_cmd, v, f_cmd, f)
            assert a1 == a2

    def test_velocity_term_uses_filtered_derivative(self):
        ctl = control.ImpedanceController()
        a1 = ctl.accel_ref(0, 0, 0, 1.0, 0, 0)
        g = ctl.gains
        alpha = math.exp(-2 * math.pi * g.deriv_filter_hz * g.dt)
        npt.assert_allclose(a1, -g.kd * (1 - alpha), rtol=1e-12)

    def test_table_diagonals_stored(self):
        assert control.GAIN_DIAGONALS["kp"][2] == 150.0
        assert control.GAIN_DIAGONALS["kd"][2] == 120.0
        assert control.GAIN_DIAGONALS["kf"][2] == 0.1
        assert control.GAIN_DIAGONALS["inertia"][2] == 0.80
        assert all(len(v) == 6 for v in control.GAIN_DIAGONALS.values())


class TestDisturbanceObserver:
    def _run(self, disturbance, n_steps, gains=None):
        """Double-integrator plant (true mass 1.0) with a constant external
        disturbance; DOB-compensated acceleration command of zero."""
        gains = gains or control.ControllerGains()
        dob = control.DisturbanceObserver(gains)
        v = 0.0
        history = []
        for _ in range(n_steps):
            u = dob.compensate(0.0)
            acc = u + disturbance  # unit mass
            v += acc * gains.dt
            dob.update(acc)
            history.append(dob.state.estimate_n)
        return np.asarray(history)

    def test_zero_disturbance_estimate_stays_zero(self):
        est = self._run(0.0, 200)
        npt.assert_allclose(est, 0.0, atol=1e-12)

    def test_constant_disturbance_converges(self):
        # DOB sees d = u - I*acc; with unit plant mass and nominal inertia
        # 0.8 the lumped estimate converges to -(1) * ... the injected 1 N
        # scaled by the inertia mismatch path; use matched inertia for the
        # clean textbook check
        gains = replace(control.ControllerGains(), inertia=1.0)
        tau_steps = int(1.0 / (2 * math.pi * gains.dob_cutoff_hz) / gains.dt)
        est = self._run(1.0, 10 * tau_steps + 50, gains)
        npt.assert_allclose(est[-1], -1.0, atol=1e-3)

    def test_convergence_monotone_after_first_time_constant(self):
        gains = replace(control.ControllerGains(), inertia=1.0)
        tau_steps = int(1.0 / (2 * math.pi * gains.dob_cutoff_hz) / gains.dt)
        est = np.abs(self._run(1.0, 12 * tau_steps, gains))
        tail = est[tau_steps:]
        assert np.all(np.diff(tail) >= -1e-12)
        assert np.all(est <= 1.0 + 1e-9)


class TestChunkMatchesStandaloneOps:
    def test_fused_kernel_matches_standalone_ops(self):
        """Replicate a held-feedback chunk run with the public pieces: the
        impedance law, the disturbance observer and the single-step plant."""
        cfg = replace(plant.GRIND_SURFACE, surface_wobble_rms=0.0)
        gains = control.ControllerGains()
        n = 400
        rng = np.random.default_rng(8)
        p_cmd = np.full(n, 0.0015)
        v_cmd = np.zeros(n)
        noise_eef = rng.standard_normal(n) * cfg.noise_rms
        noise_wt = rng.standard_normal(n) * cfg.worktable_noise_rms
        noise_wob = rng.standard_normal(n)
        noise_jit = rng.standard_normal(n)
        fb_held = 1.7
        f_cmd = 2.0

        params = plant.make_params_vec(
            cfg,
            kp=gains.kp,
            kd=gains.kd,
            kf=gains.kf,
            inertia=gains.inertia,
            deriv_filter_hz=gains.deriv_filter_hz,
            dob_cutoff_hz=gains.dob_cutoff_hz,
        )
        state = plant.make_state_vec(plant.PlantState(z_tool=0.0))
        outs = [np.empty(n) for _ in range(4)]
        kernels.plant_chunk(
            state, params, kernels.MODE_HELD, fb_held, f_cmd,
            p_cmd, v_cmd, noise_eef, noise_wt, noise_wob, noise_jit, *outs,
        )

        class QueuedRng:
            """standard_normal() replays a prearranged sequence."""

            def __init__(self, values):
                self.values = list(values)

            def standard_normal(self):
                return self.values.pop(0)

        draws = []
        for i in range(n):
            draws += [
                noise_eef[i] / cfg.noise_rms,
                noise_wt[i] / cfg.worktable_noise_rms,
                noise_wob[i],
                noise_jit[i],
            ]
        ctl = control.ImpedanceController(gains)
        dob = control.DisturbanceObserver(gains)
        p = plant.Plant(
            cfg=cfg, state=plant.PlantState(z_tool=0.0), rng=QueuedRng(draws)
        )
        for i in range(n):
            z_before = p.state.z_tool
            v_before = p.state.z_vel
            a_ref = ctl.accel_ref(p_cmd[i], z_before, v_cmd[i], v_before, f_cmd, fb_held)
            u = dob.compensate(a_ref)
            eef, wt = p.step(u)
            acc = (p.state.z_vel - v_before) / gains.dt
            dob.update(acc)
            npt.assert_allclose(eef, outs[1][i], atol=1e-9)
            npt.assert_allclose(wt, outs[2][i], atol=1e-9)
            npt.assert_allclose(z_before, outs[3][i], atol=1e-12)


class TestTrajectories:
    def test_press_trajectory_contiguous(self):
        traj = control.make_press_trajectory(1e-3, 2.0)
        assert traj.duration > 0
        cmds = control.sample_trajectory(traj, 0.001)
        assert cmds["pz"].shape == cmds["vz"].shape

    def test_press_depth_for_force(self):
        cfg = plant.DEMO_SURFACE
        d = control.press_depth_for_force(2.0, 2.0, cfg)
        npt.assert_allclose(d, 2.5e-4, rtol=1e-9)

    def test_letter_a_stroke_topology(self):
        traj = control.letter_a_path(0.05, 2.0)
        strokes = [s for s in traj.segments if s.label == "stroke"]
        lifts = [s for s in traj.segments if s.label == "lift"]
        assert len(strokes) == 3
        assert len(lifts) == 2

    def test_letter_a_symmetry(self):
        traj = control.letter_a_path(0.05, 2.0)
        xs = []
        for s in traj.segments:
            if s.label == "stroke":
                xs.extend([s.start[0], s.end[0]])
        xs = np.asarray(xs)
        # every stroke endpoint is mirrored by another about x=0
        mirrored = np.sort(np.round(-xs, 15))
        npt.assert_allclose(np.sort(xs), mirrored, atol=1e-12)

    def test_letter_a_ink_length(self):
        scale = 0.05
        traj = control.letter_a_path(scale, 2.0)
        length = 0.0
        for s in traj.segments:
            if s.label == "stroke":
                length += math.hypot(s.end[0] - s.start[0], s.end[1] - s.start[1])
        # geometry oracle from the vertex list: two legs of
        # hypot(0.35 s, s) plus a crossbar of 2 * 0.35 * 0.55 * s
        expected = 2.0 * math.hypot(0.35 * scale, scale) + 2.0 * 0.35 * 0.55 * scale
        npt.assert_allclose(length, expected, rtol=1e-12)
        npt.assert_allclose(expected, 0.1251980, atol=1e-6)

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            control.letter_a_path(-1.0, 2.0)


class TestClosedLoop:
    def test_free_space_tracking(self):
        # no surface anywhere near: pure PD+DOB position tracking
        cfg = replace(plant.DEMO_SURFACE, z_surface=10.0)
        traj = control.Trajectory(
            segments=(
                control.Segment((0, 0, -0.01), (0, 0, -0.01), 0.5, "hold"),
                control.Segment((0, 0, -0.01), (0, 0, 0.02), 1.0, "move"),
                control.Segment((0, 0, 0.02), (0, 0, 0.02), 6.0, "hold"),
            ),
            force_cmd_n=0.0,
        )
        log = control.run_closed_loop(traj, "raw", seed=2, cfg=cfg)
        tail = log.time_s > 6.5
        err = np.abs(log.pz[tail] - 0.02)
        assert err.max() < 1e-4

    def test_raw_feedback_steady_force(self):
        depth = control.press_depth_for_force(2.0, 2.0, plant.DEMO_SURFACE)
        traj = control.make_press_trajectory(depth, 2.0, press_duration=4.0)
        log = control.run_closed_loop(traj, "raw", seed=4)
        steady = log.true_force_n[log.time_s > 2.7]
        assert abs(steady.mean() - 2.0) <= 0.1

    def test_determinism(self):
        traj = control.make_press_trajectory(2.5e-4, 2.0, press_duration=1.0)
        a = control.run_closed_loop(traj, "raw", seed=9)
        b = control.run_closed_loop(traj, "raw", seed=9)
        assert np.array_equal(a.true_force_n, b.true_force_n)
        assert np.array_equal(a.eef_force_n, b.eef_force_n)

    def test_lpf_mode_filters_feedback(self):
        traj = control.make_press_trajectory(2.5e-4, 2.0, press_duration=2.0)
        log = control.run_closed_loop(traj, "lpf", seed=3)
        tail = log.time_s > 1.5
        assert np.std(log.feedback_force_n[tail]) < np.std(log.eef_force_n[tail])

    def test_estimator_mode_requires_estimator(self):
        traj = control.make_press_trajectory(2.5e-4, 2.0)
        with pytest.raises(ValueError):
            control.run_closed_loop(traj, "estimator", seed=0)

    def test_estimator_updates_every_hop_and_holds(self):
        calls = []

        def fake_estimator(window):
            calls.append(window.copy())
            return 2.0

        traj = control.make_press_trajectory(2.5e-4, 2.0, press_duration=1.0)
        log = control.run_closed_loop(traj, "estimator", seed=0, estimator=fake_estimator)
        n = log.time_s.shape[0]
        expected_calls = (n - 512) // 16 + 1
        assert abs(len(calls) - expected_calls) <= 1
        assert all(w.shape == (512,) for w in calls)
        # feedback switches from raw to held exactly after the fill
        assert np.all(log.feedback_force_n[:512] == log.eef_force_n[:512])
        assert np.all(log.feedback_force_n[512 + 16 :] == 2.0)

    def test_divergence_detected(self):
        # a runaway force command drives the tool out of the sane envelope
        traj = control.make_press_trajectory(2.5e-4, 1e6, press_duration=5.0)
        with pytest.raises(control.RunDivergence):
            control.run_closed_loop(traj, "raw", seed=0)

    def test_csv_round_trip(self, tmp_path):
        traj = control.make_press_trajectory(2.5e-4, 2.0, press_duration=0.5)
        log = control.run_closed_loop(traj, "raw", seed=1)
        path = tmp_path / "log.csv"
        log.to_csv(str(path))
        header = path.read_text().splitlines()[0]
        assert header == control.RunLog.CSV_HEADER
        back = control.RunLog.from_csv(str(path))
        npt.assert_allclose(back.true_force_n, log.true_force_n, atol=0.0)
        npt.assert_allclose(back.pz, log.pz, atol=0.0)


def test_trajectory_requires_contiguous_segments():
    with pytest.raises(ValueError):
        control.Trajectory(
            segments=(
                control.Segment((0, 0, 0.0), (0, 0, 1e-3), 1.0),
                control.Segment((0, 0, 5e-3), (0, 0, 5e-3), 1.0),
            ),
            force_cmd_n=2.0,
        )
