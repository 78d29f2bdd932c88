"""Dense-tensor kernels with explicit forward/backward pairs.

Activations are plain numpy arrays in (channels, height, width) layout;
convolution weights are (out_ch, in_ch, kh, kw). There is no computation
graph: callers compose the backward functions in reverse order themselves.
All kernels preserve the input dtype and accumulate reductions in float64.
"""

from __future__ import annotations

import numpy as np

# Treat a sliding-window standard deviation at or below this as the
# non-differentiable point of sqrt and use subgradient 0 there.
_STD_FLOOR = 1e-12


def _same_pad(x: np.ndarray, rh: int, rw: int) -> np.ndarray:
    return np.pad(x, ((0, 0), (rh, rh), (rw, rw)))


def _im2col(xp: np.ndarray, kh: int, kw: int, h: int, w: int) -> np.ndarray:
    cin = xp.shape[0]
    cols = np.empty((cin, kh, kw, h, w), dtype=xp.dtype)
    for di in range(kh):
        for dj in range(kw):
            cols[:, di, dj] = xp[:, di : di + h, dj : dj + w]
    return cols.reshape(cin * kh * kw, h * w)


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Cross-correlation with zero 'same' padding, stride 1, bias per channel."""
    cout, cin, kh, kw = weights.shape
    if x.shape[0] != cin:
        raise ValueError(f"channel mismatch: input {x.shape[0]}, kernel expects {cin}")
    _, h, w = x.shape
    cols = _im2col(_same_pad(x, kh // 2, kw // 2), kh, kw, h, w)
    y = weights.reshape(cout, cin * kh * kw) @ cols
    y += bias[:, None].astype(y.dtype)
    return y.reshape(cout, h, w)


def conv2d_backward(
    x: np.ndarray, weights: np.ndarray, gy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients w.r.t. input, weights, and bias for conv2d_forward."""
    cout, cin, kh, kw = weights.shape
    _, h, w = x.shape
    if gy.shape != (cout, h, w):
        raise ValueError(f"upstream shape {gy.shape} != {(cout, h, w)}")
    rh, rw = kh // 2, kw // 2
    gy_flat = gy.reshape(cout, h * w)
    cols = _im2col(_same_pad(x, rh, rw), kh, kw, h, w)
    gw = (gy_flat @ cols.T).reshape(cout, cin, kh, kw)
    gb = gy_flat.sum(axis=1, dtype=np.float64).astype(x.dtype)
    gcols = (weights.reshape(cout, cin * kh * kw).T @ gy_flat).reshape(cin, kh, kw, h, w)
    gxp = np.zeros((cin, h + 2 * rh, w + 2 * rw), dtype=x.dtype)
    for di in range(kh):
        for dj in range(kw):
            gxp[:, di : di + h, dj : dj + w] += gcols[:, di, dj]
    gx = gxp[:, rh : rh + h, rw : rw + w] if (rh or rw) else gxp
    return np.ascontiguousarray(gx), gw, gb


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    # Subgradient at exactly 0 is 0.
    return np.where(x > 0, gy, 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """1/(1+exp(-x)) evaluated without overflow for large |x|."""
    out = np.empty_like(x, dtype=np.result_type(x.dtype, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out.astype(x.dtype)


def sigmoid_backward(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Backward given the forward output y."""
    return gy * y * (1.0 - y)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def add_backward(gy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return gy, gy


def concat_channels(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts, axis=0)


def concat_backward(gy: np.ndarray, channel_counts: list[int]) -> list[np.ndarray]:
    if sum(channel_counts) != gy.shape[0]:
        raise ValueError("channel counts do not sum to upstream channels")
    edges = np.cumsum(channel_counts)[:-1]
    return [np.ascontiguousarray(p) for p in np.split(gy, edges, axis=0)]


def maxpool2x2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 max pooling, floor on odd sizes. Ties go to the first element in
    row-major window order. Returns (pooled, argmax) with argmax in 0..3."""
    c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    win = (
        x[:, : 2 * h2, : 2 * w2]
        .reshape(c, h2, 2, w2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, h2, w2, 4)
    )
    idx = win.argmax(axis=3)
    pooled = np.take_along_axis(win, idx[..., None], axis=3)[..., 0]
    return pooled, idx


def maxpool2x2_backward(gy: np.ndarray, idx: np.ndarray, in_shape: tuple) -> np.ndarray:
    c, h, w = in_shape
    h2, w2 = h // 2, w // 2
    gx = np.zeros(in_shape, dtype=gy.dtype)
    ci, ii, ji = np.indices((c, h2, w2), sparse=False)
    gx[ci, 2 * ii + idx // 2, 2 * ji + idx % 2] = gy
    return gx


# ---------------------------------------------------------------------------
# Separable Gaussian filter
# ---------------------------------------------------------------------------


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Unit-sum 1-D Gaussian taps, float64."""
    if size % 2 == 0 or size < 3:
        raise ValueError("kernel size must be odd and >= 3")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    t = np.arange(size, dtype=np.float64) - size // 2
    k = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return k / k.sum()


def _corr1d(x: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = kernel.size // 2
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    xp = np.pad(x.astype(np.float64, copy=False), pad)
    win = np.lib.stride_tricks.sliding_window_view(xp, kernel.size, axis=axis)
    return win @ kernel


def gaussian_filter(x: np.ndarray, size: int, sigma: float) -> np.ndarray:
    """Per-channel separable Gaussian with zero padding on (C, H, W) input."""
    k = gaussian_kernel(size, sigma)
    out = _corr1d(_corr1d(x, k, axis=1), k, axis=2)
    return out.astype(x.dtype)


def gaussian_filter_backward(gy: np.ndarray, size: int, sigma: float) -> np.ndarray:
    # The kernel is symmetric and the padding zero, so the adjoint is the
    # same filter applied to the upstream gradient.
    return gaussian_filter(gy, size, sigma)


# ---------------------------------------------------------------------------
# Sliding-window box statistics
# ---------------------------------------------------------------------------


def _box_sum_axis(x: np.ndarray, patch: int, axis: int, pad_value: float) -> np.ndarray:
    r = patch // 2
    pad = [(0, 0)] * x.ndim
    # One extra leading cell seeds the cumsum; every window sum is a
    # difference of cumulative sums, so the seed value cancels.
    pad[axis] = (r + 1, r)
    xp = np.pad(x, pad, constant_values=pad_value)
    c = np.cumsum(xp, axis=axis, dtype=np.float64)
    lead = c.take(range(patch, c.shape[axis]), axis=axis)
    lag = c.take(range(0, c.shape[axis] - patch), axis=axis)
    return lead - lag


def box_sum(x: np.ndarray, patch: int, pad_value: float = 0.0) -> np.ndarray:
    """Sliding patch-x-patch window sum with constant padding, float64."""
    if patch % 2 == 0 or patch < 1:
        raise ValueError("patch must be odd and >= 1")
    x64 = x.astype(np.float64, copy=False)
    rows = _box_sum_axis(x64, patch, 1, pad_value)
    # The second pass extends with whole out-of-bounds columns, each worth a
    # full window of padding cells.
    return _box_sum_axis(rows, patch, 2, patch * pad_value)


def box_stats(x: np.ndarray, patch: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding-window mean and population standard deviation per channel.

    The window mass is fixed at patch^2: padding zeros count as samples.
    The variance is computed on globally mean-shifted values (padding takes
    the negated shift), which keeps flat interior regions at exactly zero
    instead of picking up cumulative-sum cancellation noise.
    """
    p2 = float(patch * patch)
    shift = float(x.mean(dtype=np.float64))
    xc = x.astype(np.float64, copy=False) - shift
    m1 = box_sum(xc, patch, pad_value=-shift) / p2
    e2 = box_sum(xc * xc, patch, pad_value=shift * shift) / p2
    var = np.maximum(e2 - m1 * m1, 0.0)
    std = np.sqrt(var)
    mean = m1 + shift
    return mean.astype(x.dtype), std.astype(x.dtype)


def box_stats_backward(
    x: np.ndarray,
    mean: np.ndarray,
    std: np.ndarray,
    g_mean: np.ndarray,
    g_std: np.ndarray,
    patch: int,
) -> np.ndarray:
    """Gradient w.r.t. x of (mean, std) = box_stats(x, patch)."""
    p2 = float(patch * patch)
    g_var = np.where(std > _STD_FLOOR, g_std * 0.5 / np.maximum(std, _STD_FLOOR), 0.0)
    g_mean_total = g_mean - 2.0 * mean * g_var
    # The box window is symmetric, so the adjoint of the windowed mean is the
    # same windowed mean applied to the gradient.
    gx = box_sum(g_mean_total, patch) / p2
    gx += 2.0 * x * (box_sum(g_var, patch) / p2)
    return gx.astype(x.dtype)
