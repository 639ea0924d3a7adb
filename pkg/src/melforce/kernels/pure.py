"""Pure numpy/Python implementations of the hot-loop kernels.

Signature-compatible with the Cython module ``_native``; see the package
docstring for how the backend is selected.  The plant stepping loop is a
scalar recurrence written to match the native code operation for operation.
"""

import math

import numpy as np

# --- plant/controller state-vector slots -------------------------------------
S_Z = 0        # tool position along the surface normal, + is into the surface [m]
S_VZ = 1       # tool velocity [m/s]
S_TIME = 2     # simulation time [s]
S_PHASE = 3    # tool vibration phase [rad]
S_VFILT = 4    # low-pass filtered velocity used by the derivative term
S_DHAT = 5     # disturbance-observer estimate [N]
S_LPF_FB = 6   # low-pass feedback state (NaN until first sample)
S_WOBBLE = 7   # filtered surface-height wobble [m]
S_JITTER = 8   # spindle-speed jitter on the vibration frequency [Hz]
NSTATE = 9

# --- plant/controller parameter-vector slots ----------------------------------
P_DT = 0
P_KENV = 1          # contact stiffness [N/m]
P_DENV = 2          # contact damping [N s/m]
P_ZSURF = 3         # nominal surface height [m]
P_FHIGH = 4         # unloaded tool vibration frequency [Hz]
P_FLOW = 5          # vibration frequency floor [Hz]
P_VIB_SLOPE = 6     # frequency drop per newton [Hz/N]
P_VAMP_PER_N = 7    # vibration amplitude slope [N/N]
P_VAMP0 = 8         # vibration amplitude floor [N]
P_H2 = 9            # 2nd harmonic weight
P_H3 = 10           # 3rd harmonic weight
P_WOB_ALPHA = 11    # AR(1) pole of the surface wobble
P_WOB_GAIN = 12     # wobble input gain [m]
P_SENS_OFFSET = 13  # constant additive corruption of the EEF channel [N]
P_KP = 14
P_KD = 15
P_KF = 16
P_INERTIA = 17      # controller's nominal inertia [kg]
P_A_DERIV = 18      # pole of the derivative filter
P_A_DOB = 19        # pole of the disturbance-observer low-pass
P_A_LPF_FB = 20     # pole of the 5 Hz feedback low-pass
P_MTRUE = 21        # true task-space mass [kg]
P_JIT_ALPHA = 22    # AR(1) pole of the spindle-speed jitter
P_JIT_GAIN = 23     # jitter input gain [Hz]
NPARAMS = 24

# --- feedback modes ------------------------------------------------------------
MODE_RAW = 0     # feedback = EEF channel, sample by sample
MODE_LPF = 1     # feedback = low-passed EEF channel
MODE_HELD = 2    # feedback = externally supplied value, held for the chunk
MODE_DIRECT = 3  # bypass the controller: p_cmd carries the force command [N]

_TWO_PI = 2.0 * math.pi


def _im2col(x, k):
    """[B, T, C] -> contiguous [B*(T-K+1), C*K] window matrix."""
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=1)  # [B,To,C,K]
    b, t_out = win.shape[0], win.shape[1]
    return np.ascontiguousarray(win).reshape(b * t_out, -1), b, t_out


def conv1d_forward(x, w, b):
    """Valid cross-correlation along time.

    x: [B, T, Cin], w: [Cout, Cin, K], b: [Cout] -> y: [B, T-K+1, Cout].
    Implemented as im2col plus one GEMM.
    """
    cout, cin, k = w.shape
    cols, nb, t_out = _im2col(x, k)
    y = cols @ w.reshape(cout, cin * k).T
    y += b
    return y.reshape(nb, t_out, cout)


def conv1d_grad_input(gy, w, t_in):
    """Gradient of conv1d_forward w.r.t. its input (full correlation)."""
    nb, t_out, _ = gy.shape
    cout, cin, k = w.shape
    if t_in != t_out + k - 1:
        raise ValueError(f"inconsistent conv shapes: T={t_in}, To={t_out}, K={k}")
    gy_pad = np.zeros((nb, t_out + 2 * (k - 1), cout))
    gy_pad[:, k - 1 : k - 1 + t_out, :] = gy
    cols, _, _ = _im2col(gy_pad, k)  # [B*T, Cout*K]
    # w flipped along K, laid out [Cout*K, Cin]
    wf = np.ascontiguousarray(w[:, :, ::-1].transpose(0, 2, 1)).reshape(cout * k, cin)
    return (cols @ wf).reshape(nb, t_in, cin)


def conv1d_grad_params(x, gy):
    """Gradients of conv1d_forward w.r.t. kernels and bias."""
    nb, t_out, cout = gy.shape
    k = x.shape[1] - t_out + 1
    cols, _, _ = _im2col(x, k)  # [B*To, Cin*K]
    gw = gy.reshape(nb * t_out, cout).T @ cols
    gb = gy.sum(axis=(0, 1))
    return gw.reshape(cout, x.shape[2], k), gb


def play_apply(u, widths, weights, states):
    """Weighted sum of play (backlash) operators; updates states in place.

    u: [T] input sequence, widths/weights/states: [K].  Returns y: [T].
    Accumulates serially over the elements so the result is bit-identical
    to the compiled kernel.
    """
    y = np.empty_like(u)
    n_k = states.shape[0]
    for t in range(u.shape[0]):
        ut = u[t]
        acc = 0.0
        for i in range(n_k):
            lo = ut - widths[i]
            hi = ut + widths[i]
            if states[i] < lo:
                states[i] = lo
            elif states[i] > hi:
                states[i] = hi
            acc += weights[i] * states[i]
        y[t] = acc
    return y


def plant_chunk(
    state,
    params,
    mode,
    fb_held,
    f_cmd,
    p_cmd,
    v_cmd,
    noise_eef,
    noise_wt,
    noise_wob,
    noise_jit,
    out_true,
    out_eef,
    out_wt,
    out_z,
):
    """Step the contact plant plus impedance/DOB controller for one chunk.

    All arrays are float64 and 1-D; p_cmd/v_cmd/noise_*/out_* share length n.
    Noise inputs for the EEF and worktable channels are pre-scaled additive
    newtons; the wobble and spindle-jitter inputs are standard normal and
    filtered here.  The state vector is updated in place.
    """
    dt = params[P_DT]
    k_env = params[P_KENV]
    d_env = params[P_DENV]
    z_surf = params[P_ZSURF]
    f_high = params[P_FHIGH]
    f_low = params[P_FLOW]
    vib_slope = params[P_VIB_SLOPE]
    vamp_per_n = params[P_VAMP_PER_N]
    vamp0 = params[P_VAMP0]
    h2 = params[P_H2]
    h3 = params[P_H3]
    wob_alpha = params[P_WOB_ALPHA]
    wob_gain = params[P_WOB_GAIN]
    sens_offset = params[P_SENS_OFFSET]
    kp = params[P_KP]
    kd = params[P_KD]
    kf = params[P_KF]
    inertia = params[P_INERTIA]
    a_deriv = params[P_A_DERIV]
    a_dob = params[P_A_DOB]
    a_lpf = params[P_A_LPF_FB]
    m_true = params[P_MTRUE]
    jit_alpha = params[P_JIT_ALPHA]
    jit_gain = params[P_JIT_GAIN]

    z = state[S_Z]
    vz = state[S_VZ]
    t = state[S_TIME]
    phase = state[S_PHASE]
    vfilt = state[S_VFILT]
    dhat = state[S_DHAT]
    lpf_fb = state[S_LPF_FB]
    wob = state[S_WOBBLE]
    jit = state[S_JITTER]

    sin = math.sin
    n = p_cmd.shape[0]
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
        phase = math.fmod(phase + _TWO_PI * fvib * dt, _TWO_PI)
        amp = vamp_per_n * force + vamp0
        vib = amp * (sin(phase) + h2 * sin(2.0 * phase) + h3 * sin(3.0 * phase))
        eef = force + vib + sens_offset + noise_eef[i]
        wt = force + noise_wt[i]

        if mode == MODE_RAW:
            fb = eef
        elif mode == MODE_LPF:
            if math.isnan(lpf_fb):
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
            a_ref = (
                kp * (p_cmd[i] - z)
                + kd * (v_cmd[i] - vfilt)
                + kf * (f_cmd - fb)
            )
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
