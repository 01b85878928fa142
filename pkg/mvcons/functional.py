# -*- coding: utf-8 -*-
"""
Differentiable neural-network primitives built on :mod:`mvcons.tensor`.

- conv2d: direct cross-correlation via sliding windows (im2col), grouped and depthwise.
- linear: affine map over the last axis.
- layer_norm: per-last-axis normalisation with population variance.
- activations: gelu (exact Gaussian CDF), relu, softmax and log_softmax on the last axis.
- reductions: mean_all, sum_all, global average pooling over H and W.
"""

import math
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import ConfigurationError, DimensionError, UsageError
from .tensor import Function, Tensor, as_tensor

# --- Constants ---
DEFAULT_LN_EPS = 1e-6
ACTIVATION_KINDS = ("gelu", "relu", "softmax_lastaxis", "log_softmax_lastaxis")
REDUCTION_KINDS = ("mean_all", "sum_all", "global_avg_pool_spatial")

_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# --- Convolution ---

class Conv2d(Function):
    """Grouped 2-D cross-correlation; groups == C_in gives the depthwise case."""

    def forward(self, x, w, b, stride=1, padding=0, groups=1):
        if x.ndim != 4:
            raise DimensionError(f"conv2d input must be [N,C,H,W], got shape {x.shape}")
        if w.ndim != 4:
            raise DimensionError(f"conv2d weight must be [C_out,C_in/groups,kH,kW], got shape {w.shape}")
        n, c_in, h, width = x.shape
        c_out, c_group, kh, kw = w.shape
        if groups < 1 or c_in % groups != 0:
            raise ConfigurationError(f"groups={groups} does not divide C_in={c_in}")
        if c_out % groups != 0:
            raise ConfigurationError(f"groups={groups} does not divide C_out={c_out}")
        if c_group != c_in // groups:
            raise DimensionError(
                f"weight expects {c_group} input channels per group, input provides {c_in // groups}")
        if b.shape != (c_out,):
            raise DimensionError(f"conv2d bias must have shape ({c_out},), got {b.shape}")
        if stride < 1 or padding < 0:
            raise ConfigurationError(f"stride must be >= 1 and padding >= 0, got {stride}, {padding}")
        h_out = (h + 2 * padding - kh) // stride + 1
        w_out = (width + 2 * padding - kw) // stride + 1
        if h_out < 1 or w_out < 1:
            raise DimensionError(
                f"kernel {kh}x{kw} with padding {padding} does not fit input {h}x{width}")

        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        windows = windows[:, :, :h_out, :w_out]
        cols = windows.reshape(n, groups, c_group, h_out, w_out, kh, kw)
        wg = w.reshape(groups, c_out // groups, c_group, kh, kw)

        self.stride, self.padding, self.groups = stride, padding, groups
        self.padded_shape = xp.shape
        self.cols = cols
        out = np.einsum("ngchwij,gocij->ngohw", cols, wg)
        return out.reshape(n, c_out, h_out, w_out) + b[None, :, None, None]

    def backward(self, grad):
        x, w, _ = self.inputs
        n, c_in, h, width = x.shape
        c_out, c_group, kh, kw = w.shape
        groups, stride, padding = self.groups, self.stride, self.padding
        h_out, w_out = grad.shape[2], grad.shape[3]

        g = grad.reshape(n, groups, c_out // groups, h_out, w_out)
        wg = w.data.reshape(groups, c_out // groups, c_group, kh, kw)
        dw = np.einsum("ngchwij,ngohw->gocij", self.cols, g).reshape(w.shape)
        dcols = np.einsum("ngohw,gocij->ngchwij", g, wg).reshape(n, c_in, h_out, w_out, kh, kw)

        dxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += dcols[..., i, j]
        dx = dxp[:, :, padding:padding + h, padding:padding + width]
        db = grad.sum(axis=(0, 2, 3))
        return dx, dw, db


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    weight = as_tensor(weight)
    if bias is None:
        bias = Tensor(np.zeros(weight.shape[0]))
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding, groups=groups)


# --- Linear ---

class Linear(Function):
    def forward(self, x, w, b):
        if w.ndim != 2:
            raise DimensionError(f"linear weight must be [F_out,F_in], got shape {w.shape}")
        f_out, f_in = w.shape
        if x.ndim < 1 or x.shape[-1] != f_in:
            raise DimensionError(f"linear expects input width {f_in}, got shape {x.shape}")
        if b.shape != (f_out,):
            raise DimensionError(f"linear bias must have shape ({f_out},), got {b.shape}")
        self.x2 = x.reshape(-1, f_in)
        return (self.x2 @ w.T + b).reshape(*x.shape[:-1], f_out)

    def backward(self, grad):
        x, w, _ = self.inputs
        g2 = grad.reshape(-1, w.shape[0])
        dx = (g2 @ w.data).reshape(x.shape)
        dw = g2.T @ self.x2
        db = g2.sum(axis=0)
        return dx, dw, db


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """out[..., o] = sum_i weight[o, i] * x[..., i] + bias[o]."""
    weight = as_tensor(weight)
    if bias is None:
        bias = Tensor(np.zeros(weight.shape[0]))
    return Linear.apply(x, weight, bias)


# --- Normalisation ---

class LayerNorm(Function):
    def forward(self, x, gamma, beta, eps=DEFAULT_LN_EPS):
        features = x.shape[-1] if x.ndim else 0
        if features < 1:
            raise DimensionError(f"layer_norm needs a non-empty last axis, got shape {x.shape}")
        if gamma.shape != (features,) or beta.shape != (features,):
            raise DimensionError(
                f"layer_norm gamma/beta must have shape ({features},), got {gamma.shape}/{beta.shape}")
        if eps <= 0:
            raise ConfigurationError(f"layer_norm eps must be > 0, got {eps}")
        centered = x - x.mean(axis=-1, keepdims=True)
        var = (centered * centered).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = centered * self.inv_std
        return gamma * self.x_hat + beta

    def backward(self, grad):
        _, gamma, _ = self.inputs
        lead = tuple(range(grad.ndim - 1))
        dgamma = (grad * self.x_hat).sum(axis=lead)
        dbeta = grad.sum(axis=lead)
        dx_hat = grad * gamma.data
        dx = self.inv_std * (dx_hat - dx_hat.mean(axis=-1, keepdims=True)
                             - self.x_hat * (dx_hat * self.x_hat).mean(axis=-1, keepdims=True))
        return dx, dgamma, dbeta


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = DEFAULT_LN_EPS) -> Tensor:
    return LayerNorm.apply(x, gamma, beta, eps=eps)


# --- Activations ---

class Gelu(Function):
    def forward(self, x):
        self.cdf = 0.5 * (1.0 + erf(x / _SQRT_2))
        return x * self.cdf

    def backward(self, grad):
        (x,) = self.inputs
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x.data * x.data)
        return (grad * (self.cdf + x.data * pdf),)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0.0)

    def backward(self, grad):
        return (grad * self.mask,)


class Softmax(Function):
    def forward(self, x):
        shifted = np.exp(x - x.max(axis=-1, keepdims=True))
        self.out = shifted / shifted.sum(axis=-1, keepdims=True)
        return self.out

    def backward(self, grad):
        s = self.out
        return (s * (grad - (grad * s).sum(axis=-1, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, x):
        shifted = x - x.max(axis=-1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        out = shifted - log_norm
        self.softmax = np.exp(out)
        return out

    def backward(self, grad):
        return (grad - self.softmax * grad.sum(axis=-1, keepdims=True),)


def gelu(x: Tensor) -> Tensor:
    return Gelu.apply(x)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def softmax(x: Tensor) -> Tensor:
    _check_last_axis(x)
    return Softmax.apply(x)


def log_softmax(x: Tensor) -> Tensor:
    _check_last_axis(x)
    return LogSoftmax.apply(x)


def _check_last_axis(x) -> None:
    shape = as_tensor(x).shape
    if not shape or shape[-1] < 1:
        raise DimensionError(f"softmax needs a non-empty last axis, got shape {shape}")


_ACTIVATIONS = {
    "gelu": gelu,
    "relu": relu,
    "softmax_lastaxis": softmax,
    "log_softmax_lastaxis": log_softmax,
}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise UsageError(f"Unknown activation {kind!r}; expected one of {ACTIVATION_KINDS}") from None
    return fn(x)


# --- Reductions ---

def global_avg_pool(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N,C] mean over the spatial axes."""
    if x.ndim != 4:
        raise DimensionError(f"global average pooling needs [N,C,H,W], got shape {x.shape}")
    return x.mean(axis=(2, 3))


def reduction(x: Tensor, kind: str) -> Tensor:
    x = as_tensor(x)
    if kind == "mean_all":
        return x.mean()
    if kind == "sum_all":
        return x.sum()
    if kind == "global_avg_pool_spatial":
        return global_avg_pool(x)
    raise UsageError(f"Unknown reduction {kind!r}; expected one of {REDUCTION_KINDS}")
