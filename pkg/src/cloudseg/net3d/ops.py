"""Differentiable tensor operations on (batch, channels, depth, height, width) arrays.

Every forward returns (output, cache); the matching *_backward consumes the
cache and the upstream gradient. Convolutions are evaluated as 27 (or k^3)
shifted matrix products, which keeps peak memory at one channel-plane copy
instead of a full im2col buffer. float32 is the working precision; pass
float64 arrays for gradient checking.
"""

from __future__ import annotations

import os

import numpy as np

from ..errors import ShapeMismatch

BCE_CLAMP = 1e-7
SIGMOID_SATURATION = 40.0

_DEBUG_NAN = bool(os.environ.get("CLOUDSEG_DEBUG_NAN"))


def _guard(name: str, *arrays: np.ndarray) -> None:
    if _DEBUG_NAN:
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"non-finite values after {name}")


def _offsets(k: int):
    for kd in range(k):
        for kh in range(k):
            for kw in range(k):
                yield kd, kh, kw


def conv3d(x: np.ndarray, w: np.ndarray, b: np.ndarray,
           padding: int | None = None, stride: int = 1):
    """Cross-correlation with an odd cubic kernel; same-size output.

    x: (B, C, D, H, W); w: (O, C, k, k, k); b: (O,). Padding defaults to
    (k - 1) / 2 so spatial dims are preserved; stride must be 1.
    """
    if stride != 1:
        raise ShapeMismatch("only stride 1 is supported")
    B, C, D, H, W = x.shape
    O, C_w, k, k2, k3 = w.shape
    if C != C_w or k != k2 or k != k3 or k % 2 == 0:
        raise ShapeMismatch(f"kernel {w.shape} incompatible with input {x.shape}")
    pad = (k - 1) // 2 if padding is None else padding
    if pad != (k - 1) // 2:
        raise ShapeMismatch("padding must preserve spatial dims")

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad))) if pad else x
    S = D * H * W
    out = np.zeros((B, O, S), dtype=x.dtype)
    for kd, kh, kw in _offsets(k):
        xs = xp[:, :, kd:kd + D, kh:kh + H, kw:kw + W].reshape(B, C, S)
        out += np.matmul(w[:, :, kd, kh, kw], xs)
    out += b.reshape(1, O, 1).astype(x.dtype)
    out = out.reshape(B, O, D, H, W)
    _guard("conv3d", out)
    return out, (xp, x.shape, w, pad)


def conv3d_backward(dout: np.ndarray, cache):
    """Gradients (dx, dw, db) for conv3d."""
    xp, x_shape, w, pad = cache
    B, C, D, H, W = x_shape
    O = w.shape[0]
    k = w.shape[2]
    S = D * H * W
    d2 = dout.reshape(B, O, S)

    db = d2.sum(axis=(0, 2))
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for kd, kh, kw in _offsets(k):
        xs = xp[:, :, kd:kd + D, kh:kh + H, kw:kw + W].reshape(B, C, S)
        dw[:, :, kd, kh, kw] = np.matmul(d2, xs.transpose(0, 2, 1)).sum(axis=0)
        contrib = np.matmul(w[:, :, kd, kh, kw].T, d2).reshape(B, C, D, H, W)
        dxp[:, :, kd:kd + D, kh:kh + H, kw:kw + W] += contrib
    dx = dxp[:, :, pad:pad + D, pad:pad + H, pad:pad + W] if pad else dxp
    if pad:
        dx = np.ascontiguousarray(dx)
    return dx, dw, db


def maxpool3d(x: np.ndarray, window: int = 2, stride: int = 2):
    """2x2x2 max pooling; ties go to the lowest linear index inside the window."""
    if window != 2 or stride != 2:
        raise ShapeMismatch("only 2x2x2 pooling with stride 2 is supported")
    B, C, D, H, W = x.shape
    if D % 2 or H % 2 or W % 2:
        raise ShapeMismatch(f"spatial dims {D, H, W} not divisible by 2")
    Do, Ho, Wo = D // 2, H // 2, W // 2
    windows = (
        x.reshape(B, C, Do, 2, Ho, 2, Wo, 2)
        .transpose(0, 1, 2, 4, 6, 3, 5, 7)
        .reshape(B, C, Do, Ho, Wo, 8)
    )
    arg = windows.argmax(axis=-1)  # first max = lowest linear index
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    _guard("maxpool3d", out)
    return out, (arg, x.shape)


def maxpool3d_backward(dout: np.ndarray, cache):
    """Routes each output gradient to its window's argmax element."""
    arg, x_shape = cache
    B, C, D, H, W = x_shape
    Do, Ho, Wo = D // 2, H // 2, W // 2
    dwin = np.zeros((B, C, Do, Ho, Wo, 8), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dx = (
        dwin.reshape(B, C, Do, Ho, Wo, 2, 2, 2)
        .transpose(0, 1, 2, 5, 3, 6, 4, 7)
        .reshape(B, C, D, H, W)
    )
    return np.ascontiguousarray(dx)


def transposed_conv3d(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Fractionally-strided convolution, kernel 2 stride 2: doubles spatial dims.

    w: (C_in, C_out, 2, 2, 2). Output windows do not overlap, so each input
    voxel scatters into its own 2x2x2 output block.
    """
    B, C, D, H, W = x.shape
    C_w, O = w.shape[:2]
    if C != C_w or w.shape[2:] != (2, 2, 2):
        raise ShapeMismatch(f"kernel {w.shape} incompatible with input {x.shape}")
    S = D * H * W
    w2 = w.reshape(C, O * 8)
    out = np.matmul(w2.T, x.reshape(B, C, S))  # (B, O*8, S)
    out = (
        out.reshape(B, O, 2, 2, 2, D, H, W)
        .transpose(0, 1, 5, 2, 6, 3, 7, 4)
        .reshape(B, O, 2 * D, 2 * H, 2 * W)
    )
    out = np.ascontiguousarray(out) + b.reshape(1, O, 1, 1, 1).astype(x.dtype)
    _guard("transposed_conv3d", out)
    return out, (x, w)


def transposed_conv3d_backward(dout: np.ndarray, cache):
    x, w = cache
    B, C, D, H, W = x.shape
    O = w.shape[1]
    S = D * H * W
    dr = (
        dout.reshape(B, O, D, 2, H, 2, W, 2)
        .transpose(0, 1, 3, 5, 7, 2, 4, 6)
        .reshape(B, O * 8, S)
    )
    dr = np.ascontiguousarray(dr)
    db = dout.sum(axis=(0, 2, 3, 4))
    w2 = w.reshape(C, O * 8)
    dx = np.matmul(w2, dr).reshape(B, C, D, H, W)
    dw = np.matmul(dr, x.reshape(B, C, S).transpose(0, 2, 1)).sum(axis=0)  # (O*8, C)
    dw = dw.T.reshape(C, O, 2, 2, 2)
    return dx, dw, db


def instance_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = 1e-5):
    """Normalize each (batch, channel) slice over its spatial extent, then affine."""
    mu = x.mean(axis=(2, 3, 4), keepdims=True)
    var = x.var(axis=(2, 3, 4), keepdims=True)  # biased
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    out = gamma.reshape(1, -1, 1, 1, 1) * xhat + beta.reshape(1, -1, 1, 1, 1)
    _guard("instance_norm", out)
    return out, (xhat, inv_std, gamma)


def instance_norm_backward(dout: np.ndarray, cache):
    xhat, inv_std, gamma = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3, 4))
    dbeta = dout.sum(axis=(0, 2, 3, 4))
    dxhat = dout * gamma.reshape(1, -1, 1, 1, 1)
    mean_dxhat = dxhat.mean(axis=(2, 3, 4), keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(2, 3, 4), keepdims=True)
    dx = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return dx, dgamma, dbeta


def relu(x: np.ndarray):
    out = np.maximum(x, 0)
    _guard("relu", out)
    return out, (x > 0)


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def sigmoid(x: np.ndarray):
    """Numerically stable logistic; saturates to exact 0/1 beyond +-40."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    out[x > SIGMOID_SATURATION] = 1.0
    out[x < -SIGMOID_SATURATION] = 0.0
    _guard("sigmoid", out)
    return out, out


def sigmoid_backward(dout: np.ndarray, cache):
    y = cache
    return dout * y * (1.0 - y)


def bce_loss(y_true: np.ndarray, y_pred: np.ndarray):
    """Mean binary cross-entropy over every element; returns (loss, dloss/dy_pred).

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs.
    """
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"label shape {y_true.shape} != prediction shape {y_pred.shape}")
    n = y_pred.size
    p = np.clip(y_pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -float(np.sum(y_true * np.log(p) + (1.0 - y_true) * np.log(1.0 - p))) / n
    grad = (p - y_true) / (p * (1.0 - p) * n)
    return loss, grad


def bce_with_logits(y_true: np.ndarray, logits: np.ndarray):
    """Fused sigmoid + BCE on pre-activation values; returns (loss, dloss/dlogits).

    Evaluates the same mean cross-entropy without ever forming log(0).
    """
    if y_true.shape != logits.shape:
        raise ShapeMismatch(f"label shape {y_true.shape} != logits shape {logits.shape}")
    n = logits.size
    loss = float(np.sum(np.maximum(logits, 0) - logits * y_true + np.log1p(np.exp(-np.abs(logits))))) / n
    probs, _ = sigmoid(logits)
    grad = (probs - y_true) / n
    return loss, grad
