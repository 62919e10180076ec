"""Pure-numpy kernels. Reference path and fallback when numba is disabled."""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def render_windows(rows, cols, values, window_length, edge):
    """Paint every stride-1 window of precomputed pixel writes.

    ``rows``, ``cols`` and ``values`` hold one entry per timestep of the whole
    series. Window ``w`` paints timesteps ``w .. w + window_length - 1`` onto
    a black raster in time order, so the last write to a pixel wins.
    """
    n_steps = rows.shape[0]
    n_windows = n_steps - window_length + 1
    out = np.zeros((n_windows, edge, edge), dtype=np.uint8)
    if n_windows <= 0:
        return out
    offsets = np.arange(window_length)
    starts = np.arange(n_windows)
    steps = (starts[:, None] + offsets[None, :]).ravel()
    flat = (starts[:, None] * (edge * edge)).repeat(window_length, axis=1).ravel()
    flat = flat + rows[steps] * edge + cols[steps]
    # first hit in the reversed sequence == last write in time order
    _, first_rev = np.unique(flat[::-1], return_index=True)
    keep = flat.shape[0] - 1 - first_rev
    out.reshape(-1)[flat[keep]] = values[steps[keep]]
    return out


def _dilate(dout, stride):
    if stride == 1:
        return dout
    n, f, ho, wo = dout.shape
    dil = np.zeros((n, f, (ho - 1) * stride + 1, (wo - 1) * stride + 1), dtype=dout.dtype)
    dil[:, :, ::stride, ::stride] = dout
    return dil


def conv2d_forward(x, w, b, stride):
    # x (N,C,H,W), w (F,C,k,k) -> (N,F,Ho,Wo); valid padding
    k = w.shape[2]
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N,Ho,Wo,F)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out)


def conv2d_backward(dout, x, w, stride, need_dx=True):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    db = dout.sum(axis=(0, 2, 3))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))  # (F,C,k,k)
    if not need_dx:
        return np.zeros_like(x), dw, db

    dil = _dilate(dout, stride)
    pad = np.zeros((n, f, dil.shape[2] + 2 * (k - 1), dil.shape[3] + 2 * (k - 1)), dtype=dout.dtype)
    pad[:, :, k - 1:k - 1 + dil.shape[2], k - 1:k - 1 + dil.shape[3]] = dil
    pwin = sliding_window_view(pad, (k, k), axis=(2, 3))  # (N,F,h',w',k,k)
    flipped = w[:, :, ::-1, ::-1]
    full = np.tensordot(pwin, flipped, axes=([1, 4, 5], [0, 2, 3]))  # (N,h',w',C)
    dx = np.zeros_like(x)
    hh, ww = full.shape[1], full.shape[2]
    # stride remainders leave trailing input rows/cols untouched by the forward
    dx[:, :, :hh, :ww] = full.transpose(0, 3, 1, 2)
    return dx, dw, db


def maxpool_forward(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    blocks = x[:, :, :ho * k, :wo * k].reshape(n, c, ho, k, wo, k)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, k * k)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(dout, arg, x_shape, k):
    n, c, h, w = x_shape
    ho, wo = dout.shape[2], dout.shape[3]
    blocks = np.zeros((n, c, ho, wo, k * k), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    blocks = blocks.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, :ho * k, :wo * k] = blocks.reshape(n, c, ho * k, wo * k)
    return dx
