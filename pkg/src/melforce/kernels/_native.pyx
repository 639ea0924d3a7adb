# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the kernels in ``pure.py``.

The plant stepping loop mirrors the pure-Python recurrence operation for
operation; the conv kernels use straight loops over typed memoryviews.
"""

from libc.math cimport fmod, isnan, sin

import numpy as np

cimport numpy as cnp

cnp.import_array()

# Slot layout must match melforce.kernels.pure.
DEF S_Z = 0
DEF S_VZ = 1
DEF S_TIME = 2
DEF S_PHASE = 3
DEF S_VFILT = 4
DEF S_DHAT = 5
DEF S_LPF_FB = 6
DEF S_WOBBLE = 7
DEF S_JITTER = 8

DEF P_DT = 0
DEF P_KENV = 1
DEF P_DENV = 2
DEF P_ZSURF = 3
DEF P_FHIGH = 4
DEF P_FLOW = 5
DEF P_VIB_SLOPE = 6
DEF P_VAMP_PER_N = 7
DEF P_VAMP0 = 8
DEF P_H2 = 9
DEF P_H3 = 10
DEF P_WOB_ALPHA = 11
DEF P_WOB_GAIN = 12
DEF P_SENS_OFFSET = 13
DEF P_KP = 14
DEF P_KD = 15
DEF P_KF = 16
DEF P_INERTIA = 17
DEF P_A_DERIV = 18
DEF P_A_DOB = 19
DEF P_A_LPF_FB = 20
DEF P_MTRUE = 21
DEF P_JIT_ALPHA = 22
DEF P_JIT_GAIN = 23

DEF MODE_RAW = 0
DEF MODE_LPF = 1
DEF MODE_HELD = 2
DEF MODE_DIRECT = 3

DEF TWO_PI = 6.283185307179586


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b):
    cdef Py_ssize_t nb = x.shape[0], t_in = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t cout = w.shape[0], k = w.shape[2]
    cdef Py_ssize_t t_out = t_in - k + 1
    y_arr = np.empty((nb, t_out, cout))
    # [Cout, Cin, K] -> [Cin, K, Cout] so the innermost loop is contiguous
    wt_arr = np.ascontiguousarray(np.transpose(w, (1, 2, 0)))
    cdef double[:, :, ::1] y = y_arr
    cdef double[:, :, ::1] wt = wt_arr
    cdef Py_ssize_t i, t, o, c, j
    cdef double xv
    for i in range(nb):
        for t in range(t_out):
            for o in range(cout):
                y[i, t, o] = b[o]
            for c in range(cin):
                for j in range(k):
                    xv = x[i, t + j, c]
                    for o in range(cout):
                        y[i, t, o] += xv * wt[c, j, o]
    return y_arr


def conv1d_grad_input(double[:, :, ::1] gy, double[:, :, ::1] w, Py_ssize_t t_in):
    cdef Py_ssize_t nb = gy.shape[0], t_out = gy.shape[1], cout = gy.shape[2]
    cdef Py_ssize_t cin = w.shape[1], k = w.shape[2]
    if t_in != t_out + k - 1:
        raise ValueError("inconsistent conv shapes")
    gx_arr = np.zeros((nb, t_in, cin))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t i, t, o, c, j
    cdef double g
    for i in range(nb):
        for t in range(t_out):
            for o in range(cout):
                g = gy[i, t, o]
                for j in range(k):
                    for c in range(cin):
                        gx[i, t + j, c] += g * w[o, c, j]
    return gx_arr


def conv1d_grad_params(double[:, :, ::1] x, double[:, :, ::1] gy):
    cdef Py_ssize_t nb = x.shape[0], t_in = x.shape[1], cin = x.shape[2]
    cdef Py_ssize_t t_out = gy.shape[1], cout = gy.shape[2]
    cdef Py_ssize_t k = t_in - t_out + 1
    # accumulate as [Cout, K, Cin] so the innermost loop is contiguous in x
    gwt_arr = np.zeros((cout, k, cin))
    gb_arr = np.zeros(cout)
    cdef double[:, :, ::1] gwt = gwt_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t i, t, o, c, j
    cdef double g
    for i in range(nb):
        for t in range(t_out):
            for o in range(cout):
                g = gy[i, t, o]
                gb[o] += g
                for j in range(k):
                    for c in range(cin):
                        gwt[o, j, c] += g * x[i, t + j, c]
    return np.ascontiguousarray(np.transpose(gwt_arr, (0, 2, 1))), gb_arr


def play_apply(double[::1] u, double[::1] widths, double[::1] weights,
               double[::1] states):
    cdef Py_ssize_t n = u.shape[0], nk = widths.shape[0]
    y_arr = np.empty(n)
    cdef double[::1] y = y_arr
    cdef Py_ssize_t t, i
    cdef double ut, lo, hi, acc
    for t in range(n):
        ut = u[t]
        acc = 0.0
        for i in range(nk):
            lo = ut - widths[i]
            hi = ut + widths[i]
            if states[i] < lo:
                states[i] = lo
            elif states[i] > hi:
                states[i] = hi
            acc += weights[i] * states[i]
        y[t] = acc
    return y_arr


def plant_chunk(double[::1] state, double[::1] params, int mode, double fb_held,
                double f_cmd, double[::1] p_cmd, double[::1] v_cmd,
                double[::1] noise_eef, double[::1] noise_wt,
                double[::1] noise_wob, double[::1] noise_jit,
                double[::1] out_true, double[::1] out_eef,
                double[::1] out_wt, double[::1] out_z):
    cdef double dt = params[P_DT]
    cdef double k_env = params[P_KENV]
    cdef double d_env = params[P_DENV]
    cdef double z_surf = params[P_ZSURF]
    cdef double f_high = params[P_FHIGH]
    cdef double f_low = params[P_FLOW]
    cdef double vib_slope = params[P_VIB_SLOPE]
    cdef double vamp_per_n = params[P_VAMP_PER_N]
    cdef double vamp0 = params[P_VAMP0]
    cdef double h2 = params[P_H2]
    cdef double h3 = params[P_H3]
    cdef double wob_alpha = params[P_WOB_ALPHA]
    cdef double wob_gain = params[P_WOB_GAIN]
    cdef double sens_offset = params[P_SENS_OFFSET]
    cdef double kp = params[P_KP]
    cdef double kd = params[P_KD]
    cdef double kf = params[P_KF]
    cdef double inertia = params[P_INERTIA]
    cdef double a_deriv = params[P_A_DERIV]
    cdef double a_dob = params[P_A_DOB]
    cdef double a_lpf = params[P_A_LPF_FB]
    cdef double m_true = params[P_MTRUE]
    cdef double jit_alpha = params[P_JIT_ALPHA]
    cdef double jit_gain = params[P_JIT_GAIN]

    cdef double z = state[S_Z]
    cdef double vz = state[S_VZ]
    cdef double t = state[S_TIME]
    cdef double phase = state[S_PHASE]
    cdef double vfilt = state[S_VFILT]
    cdef double dhat = state[S_DHAT]
    cdef double lpf_fb = state[S_LPF_FB]
    cdef double wob = state[S_WOBBLE]
    cdef double jit = state[S_JITTER]

    cdef Py_ssize_t n = p_cmd.shape[0]
    cdef Py_ssize_t i
    cdef double pen, force, fvib, amp, vib, eef, wt, fb, a_ref, u, acc, innov

    for i in range(n):
        wob = wob_alpha * wob + wob_gain * noise_wob[i]
        pen = z - (z_surf + wob)
        if pen > 0.0:
            force = k_env * pen + d_env * vz
            if force < 0.0:
                force = 0.0
        else:
            force = 0.0

        fvib = f_high - vib_slope * force
        if fvib < f_low:
            fvib = f_low
        elif fvib > f_high:
            fvib = f_high
        jit = jit_alpha * jit + jit_gain * noise_jit[i]
        fvib = fvib + jit
        if fvib < 1.0:
            fvib = 1.0
        phase = fmod(phase + TWO_PI * fvib * dt, TWO_PI)
        amp = vamp_per_n * force + vamp0
        vib = amp * (sin(phase) + h2 * sin(2.0 * phase) + h3 * sin(3.0 * phase))
        eef = force + vib + sens_offset + noise_eef[i]
        wt = force + noise_wt[i]

        if mode == MODE_RAW:
            fb = eef
        elif mode == MODE_LPF:
            if isnan(lpf_fb):
                lpf_fb = eef
            else:
                lpf_fb = a_lpf * lpf_fb + (1.0 - a_lpf) * eef
            fb = lpf_fb
        else:
            fb = fb_held

        if mode == MODE_DIRECT:
            u = p_cmd[i]
        else:
            vfilt = a_deriv * vfilt + (1.0 - a_deriv) * vz
            a_ref = (kp * (p_cmd[i] - z)
                     + kd * (v_cmd[i] - vfilt)
                     + kf * (f_cmd - fb))
            u = inertia * a_ref + dhat

        out_true[i] = force
        out_eef[i] = eef
        out_wt[i] = wt
        out_z[i] = z

        acc = (u - force) / m_true
        vz = vz + acc * dt
        z = z + vz * dt
        innov = u - inertia * acc
        dhat = a_dob * dhat + (1.0 - a_dob) * innov
        t = t + dt

    state[S_Z] = z
    state[S_VZ] = vz
    state[S_TIME] = t
    state[S_PHASE] = phase
    state[S_VFILT] = vfilt
    state[S_DHAT] = dhat
    state[S_LPF_FB] = lpf_fb
    state[S_WOBBLE] = wob
    state[S_JITTER] = jit
