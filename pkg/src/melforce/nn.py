"""Minimal feed-forward/1D-conv network engine with explicit backprop.

Layers keep float64 parameters and gradients as plain numpy arrays; there is
no autodiff.  Batches are time-major: conv inputs are [B, T, C], dense
inputs [B, D].  The two model factories build the estimation network (two
conv blocks with average pooling, then three fully connected layers) and the
plain feed-forward baseline.
"""

from __future__ import annotations

import numpy as np

from . import kernels

# Weight init is quarter-scale He-uniform.  Full-scale He memorizes the tiny
# (75-sample) training sets almost immediately and interpolates badly between
# force levels; the smaller scale starts the network in a smoother regime and
# roughly halves test RMSE without touching the architecture.
INIT_SCALE = 0.25


class Param:
    """A named parameter array with its accumulated gradient."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


class Layer:
    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv1d(Layer):
    """Valid (no padding) cross-correlation along time, stride 1."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.w = Param("w", np.zeros((out_channels, in_channels, kernel_size)))
        self.b = Param("b", np.zeros(out_channels))
        self._x = None

    def init_params(self, rng: np.random.Generator):
        bound = INIT_SCALE * np.sqrt(6.0 / (self.in_channels * self.kernel_size))
        self.w.value = rng.uniform(-bound, bound, self.w.value.shape)
        self.b.value = np.zeros_like(self.b.value)

    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 3 or x.shape[2] != self.in_channels:
            raise ValueError(
                f"conv expects [B, T, {self.in_channels}], got {x.shape}"
            )
        if x.shape[1] < self.kernel_size:
            raise ValueError("input shorter than the kernel")
        self._x = np.ascontiguousarray(x)
        return kernels.conv1d_forward(self._x, self.w.value, self.b.value)

    def backward(self, gy, need_input_grad: bool = True):
        gy = np.ascontiguousarray(gy)
        gw, gb = kernels.conv1d_grad_params(self._x, gy)
        self.w.grad += gw
        self.b.grad += gb
        if not need_input_grad:
            return None
        return kernels.conv1d_grad_input(gy, self.w.value, self._x.shape[1])


class AvgPool1d(Layer):
    """Non-overlapping mean pooling along time; a trailing remainder frame
    that does not fill a full pool window is dropped (15 -> 7, 6 -> 3)."""

    def __init__(self, width: int = 2, stride: int = 2):
        if width != stride:
            raise ValueError("only non-overlapping pooling is supported")
        self.width = width
        self._t_in = None

    def forward(self, x):
        b, t, c = x.shape
        t_out = t // self.width
        self._t_in = t
        x = x[:, : t_out * self.width, :]
        return x.reshape(b, t_out, self.width, c).mean(axis=2)

    def backward(self, gy):
        b, t_out, c = gy.shape
        gx = np.zeros((b, self._t_in, c))
        spread = np.repeat(gy / self.width, self.width, axis=1)
        gx[:, : t_out * self.width, :] = spread
        return gx


class ReLU(Layer):
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0.0
        return np.where(self._mask, x, 0.0)

    def backward(self, gy):
        return np.where(self._mask, gy, 0.0)


class Flatten(Layer):
    def __init__(self):
        self._shape = None

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gy):
        return gy.reshape(self._shape)


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int):
        self.in_features = in_features
        self.out_features = out_features
        self.w = Param("w", np.zeros((out_features, in_features)))
        self.b = Param("b", np.zeros(out_features))
        self._x = None

    def init_params(self, rng: np.random.Generator):
        bound = INIT_SCALE * np.sqrt(6.0 / self.in_features)
        self.w.value = rng.uniform(-bound, bound, self.w.value.shape)
        self.b.value = np.zeros_like(self.b.value)

    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ValueError(
                f"dense expects [B, {self.in_features}], got {x.shape}"
            )
        self._x = x
        return x @ self.w.value.T + self.b.value

    def backward(self, gy):
        self.w.grad += gy.T @ self._x
        self.b.grad += gy.sum(axis=0)
        return gy @ self.w.value


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def params(self) -> list[Param]:
        return [p for layer in self.layers for p in layer.params()]

    def init_params(self, rng: np.random.Generator):
        for layer in self.layers:
            if hasattr(layer, "init_params"):
                layer.init_params(rng)

    def zero_grad(self):
        for p in self.params():
            p.grad[...] = 0.0

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, gy: np.ndarray) -> np.ndarray:
        # the first layer's input gradient is never consumed
        for idx in range(len(self.layers) - 1, 0, -1):
            gy = self.layers[idx].backward(gy)
        first = self.layers[0]
        if isinstance(first, Conv1d):
            return first.backward(gy, need_input_grad=False)
        return first.backward(gy)

    def intermediate_shapes(self, x: np.ndarray) -> list[tuple]:
        """Per-layer output shapes (without the batch axis) for one input."""
        shapes = []
        for layer in self.layers:
            x = layer.forward(x)
            shapes.append(x.shape[1:])
        return shapes


def build_conv_regressor(
    in_frames: int, in_channels: int, fc_width: int = 30
) -> Sequential:
    """Two conv+pool blocks and three dense layers ending in one output.

    With the canonical 17 x 45 feature the trace is (17,45) -> (15,20) ->
    (7,20) -> (6,10) -> (3,10) -> 30 -> 30 -> 30 -> 1.  The same skeleton
    accepts other channel counts (band-trim sweep) and, with in_channels=1,
    the decimated raw window.
    """
    t = in_frames - 3 + 1
    t = t // 2
    t = t - 2 + 1
    t = t // 2
    flat = t * 10
    return Sequential(
        [
            Conv1d(in_channels, 20, 3),
            ReLU(),
            AvgPool1d(2, 2),
            Conv1d(20, 10, 2),
            ReLU(),
            AvgPool1d(2, 2),
            Flatten(),
            Dense(flat, fc_width),
            ReLU(),
            Dense(fc_width, fc_width),
            ReLU(),
            Dense(fc_width, 1),
        ]
    )


def build_fnn_regressor(in_features: int, hidden: int = 50) -> Sequential:
    """Two hidden layers of 50 units and a single linear output."""
    return Sequential(
        [
            Dense(in_features, hidden),
            ReLU(),
            Dense(hidden, hidden),
            ReLU(),
            Dense(hidden, 1),
        ]
    )


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of (pred - target)^2 over the batch and its gradient w.r.t. pred."""
    pred = pred.reshape(-1)
    target = target.reshape(-1)
    residual = pred - target
    loss = float(np.mean(residual**2))
    grad = (2.0 / residual.shape[0]) * residual
    return loss, grad[:, None]


class Adam:
    """Bias-corrected Adam on a fixed parameter list."""

    def __init__(
        self,
        params: list[Param],
        lr: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
