"""numba kernels. Same contracts as ``_numpy``.

Convolutions lower to im2col/col2im loops around one BLAS matrix product.
All loops and reductions run in a fixed order.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def render_windows(rows, cols, values, window_length, edge):
    n_windows = rows.shape[0] - window_length + 1
    if n_windows < 0:
        n_windows = 0
    out = np.zeros((n_windows, edge, edge), dtype=np.uint8)
    for w in range(n_windows):
        for t in range(w, w + window_length):
            out[w, rows[t], cols[t]] = values[t]
    return out


@njit(cache=True)
def _im2col(x, k, stride, ho, wo):
    # rows: (channel, u, v); columns: (sample, i, j)
    n, c = x.shape[0], x.shape[1]
    cols = np.empty((c * k * k, n * ho * wo), dtype=x.dtype)
    for ch in range(c):
        for u in range(k):
            for v in range(k):
                row = (ch * k + u) * k + v
                for s in range(n):
                    base = s * ho * wo
                    for i in range(ho):
                        r = i * stride + u
                        for j in range(wo):
                            cols[row, base + i * wo + j] = x[s, ch, r, j * stride + v]
    return cols


@njit(cache=True)
def _col2im(cols, shape, k, stride, ho, wo):
    n, c, h, w = shape
    dx = np.zeros((n, c, h, w), dtype=cols.dtype)
    for ch in range(c):
        for u in range(k):
            for v in range(k):
                row = (ch * k + u) * k + v
                for s in range(n):
                    base = s * ho * wo
                    for i in range(ho):
                        r = i * stride + u
                        for j in range(wo):
                            dx[s, ch, r, j * stride + v] += cols[row, base + i * wo + j]
    return dx


@njit(cache=True)
def _to_nchw(mat, n, f, ho, wo):
    out = np.empty((n, f, ho, wo), dtype=mat.dtype)
    for o in range(f):
        for s in range(n):
            base = s * ho * wo
            for i in range(ho):
                for j in range(wo):
                    out[s, o, i, j] = mat[o, base + i * wo + j]
    return out


@njit(cache=True)
def _from_nchw(a):
    n, f, ho, wo = a.shape
    mat = np.empty((f, n * ho * wo), dtype=a.dtype)
    for o in range(f):
        for s in range(n):
            base = s * ho * wo
            for i in range(ho):
                for j in range(wo):
                    mat[o, base + i * wo + j] = a[s, o, i, j]
    return mat


@njit(cache=True)
def conv2d_forward(x, w, b, stride):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho = (h - k) // stride + 1
    wo = (wd - k) // stride + 1
    cols = _im2col(x, k, stride, ho, wo)
    mat = np.dot(np.ascontiguousarray(w.reshape(f, c * k * k)), cols)
    for o in range(f):
        mat[o] += b[o]
    return _to_nchw(mat, n, f, ho, wo)


@njit(cache=True)
def conv2d_backward(dout, x, w, stride, need_dx=True):
    n, c, h, wd = x.shape
    f, _, k, _ = w.shape
    ho, wo = dout.shape[2], dout.shape[3]
    dmat = _from_nchw(dout)
    db = np.zeros(f, dtype=x.dtype)
    for o in range(f):
        # sequential sum over (sample, i, j): fixed reduction order
        acc = 0.0
        for q in range(dmat.shape[1]):
            acc += dmat[o, q]
        db[o] = acc
    cols = _im2col(x, k, stride, ho, wo)
    dw = np.dot(dmat, cols.T).reshape(f, c, k, k)
    if need_dx:
        dcols = np.dot(np.ascontiguousarray(w.reshape(f, c * k * k)).T, dmat)
        dx = _col2im(dcols, (n, c, h, wd), k, stride, ho, wo)
    else:
        dx = np.zeros_like(x)
    return dx, dw, db


@njit(cache=True)
def maxpool_forward(x, k):
    n, c, h, w = x.shape
    ho, wo = h // k, w // k
    out = np.empty((n, c, ho, wo), dtype=x.dtype)
    arg = np.empty((n, c, ho, wo), dtype=np.int64)
    for s in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[s, ch, i * k, j * k]
                    bi = 0
                    for u in range(k):
                        for v in range(k):
                            val = x[s, ch, i * k + u, j * k + v]
                            if val > best:
                                best = val
                                bi = u * k + v
                    out[s, ch, i, j] = best
                    arg[s, ch, i, j] = bi
    return out, arg


@njit(cache=True)
def _maxpool_backward(dout, arg, dx, k):
    n, c, ho, wo = dout.shape
    for s in range(n):
        for ch in range(c):
            for i in range(ho):
                for j in range(wo):
                    a = arg[s, ch, i, j]
                    dx[s, ch, i * k + a // k, j * k + a % k] += dout[s, ch, i, j]
    return dx


def maxpool_backward(dout, arg, x_shape, k):
    dx = np.zeros(x_shape, dtype=dout.dtype)
    return _maxpool_backward(dout, arg, dx, k)
