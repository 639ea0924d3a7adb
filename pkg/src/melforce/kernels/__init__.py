"""Hot-loop kernels: a compiled core with a numpy fallback.

Two implementations of the same kernel signatures ship in this package:

- ``pure``: numpy / plain Python, always available.
- ``_native``: a Cython extension built at install time (optional).

The sequential recurrences (the 1 kHz plant/controller stepping loop and the
play-operator hysteresis sweep) cannot be vectorized and run ~30x faster
compiled.  The batched conv kernels, by contrast, lower to BLAS through
numpy's einsum and are fastest that way at this project's tensor shapes (see
benchmarks/bench_backends.py).  The default binding therefore mixes the two:
compiled sequential kernels, numpy tensor kernels.

``MELFORCE_BACKEND`` overrides the binding: ``python`` forces the fallback
everywhere, ``native`` forces the extension everywhere (a missing extension
is then a hard error), ``auto`` (default) is the mixed binding.

Numerical note: every binding is deterministic, but the two conv
implementations accumulate in different orders, so trained parameters are
reproducible per binding rather than across bindings.  plant_chunk and
play_apply are written to be bit-identical across backends.
"""

import importlib
import os

from . import pure

_requested = os.environ.get("MELFORCE_BACKEND", "auto")
if _requested not in ("auto", "native", "python"):
    raise RuntimeError(
        f"MELFORCE_BACKEND must be auto, native or python, got {_requested!r}"
    )

_native = None
if _requested in ("auto", "native"):
    try:
        _native = importlib.import_module("._native", __package__)
    except ImportError:
        if _requested == "native":
            raise

if _native is None:
    BACKEND = "python"
    _tensor_impl = pure
    _sequential_impl = pure
elif _requested == "native":
    BACKEND = "native"
    _tensor_impl = _native
    _sequential_impl = _native
else:
    BACKEND = "mixed"
    _tensor_impl = pure
    _sequential_impl = _native

conv1d_forward = _tensor_impl.conv1d_forward
conv1d_grad_input = _tensor_impl.conv1d_grad_input
conv1d_grad_params = _tensor_impl.conv1d_grad_params
play_apply = _sequential_impl.play_apply
plant_chunk = _sequential_impl.plant_chunk

# Plant/controller state-vector slots shared by both backends.
from .pure import (  # noqa: E402  (re-export after backend selection)
    MODE_DIRECT,
    MODE_HELD,
    MODE_LPF,
    MODE_RAW,
    NPARAMS,
    NSTATE,
    P_A_DERIV,
    P_A_DOB,
    P_A_LPF_FB,
    P_DENV,
    P_DT,
    P_FHIGH,
    P_FLOW,
    P_H2,
    P_H3,
    P_INERTIA,
    P_JIT_ALPHA,
    P_JIT_GAIN,
    P_KD,
    P_KENV,
    P_KF,
    P_KP,
    P_MTRUE,
    P_SENS_OFFSET,
    P_VAMP0,
    P_VAMP_PER_N,
    P_VIB_SLOPE,
    P_WOB_ALPHA,
    P_WOB_GAIN,
    P_ZSURF,
    S_DHAT,
    S_JITTER,
    S_LPF_FB,
    S_PHASE,
    S_TIME,
    S_VFILT,
    S_VZ,
    S_WOBBLE,
    S_Z,
)


def backend_name() -> str:
    """Active kernel binding: "mixed", "native" or "python"."""
    return BACKEND


def has_native() -> bool:
    return _native is not None
