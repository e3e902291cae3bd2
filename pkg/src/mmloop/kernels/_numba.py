"""numba twins of the kernels in ``_numpy.py``."""

import numpy as np
from numba import njit

from ._numpy import tile_patches as _tile_patches


@njit(cache=True)
def _im2col(x, k, stride, pad):
    n, h, w, c = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.empty((n, oh, ow, k * k * c), dtype=x.dtype)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                j = 0
                for ky in range(k):
                    iy = oy * stride - pad + ky
                    for kx in range(k):
                        ix = ox * stride - pad + kx
                        if 0 <= iy < h and 0 <= ix < w:
                            for ch in range(c):
                                out[b, oy, ox, j + ch] = x[b, iy, ix, ch]
                        else:
                            for ch in range(c):
                                out[b, oy, ox, j + ch] = 0.0
                        j += c
    return out


def im2col(x, k, stride, pad):
    if stride == k and pad == 0:
        return _tile_patches(x, k)
    return _im2col(np.ascontiguousarray(x), k, stride, pad)


@njit(cache=True)
def _col2im(cols, n, h, w, c, k, stride, pad):
    oh, ow = cols.shape[1], cols.shape[2]
    dx = np.zeros((n, h, w, c), dtype=cols.dtype)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                j = 0
                for ky in range(k):
                    iy = oy * stride - pad + ky
                    for kx in range(k):
                        ix = ox * stride - pad + kx
                        if 0 <= iy < h and 0 <= ix < w:
                            for ch in range(c):
                                dx[b, iy, ix, ch] += cols[b, oy, ox, j + ch]
                        j += c
    return dx


def col2im(cols, x_shape, k, stride, pad):
    n, h, w, c = x_shape
    return _col2im(np.ascontiguousarray(cols), n, h, w, c, k, stride, pad)


@njit(cache=True)
def _maxpool_forward(x, p):
    n, h, w, c = x.shape
    oh, ow = h // p, w // p
    out = np.empty((n, oh, ow, c), dtype=x.dtype)
    arg = np.empty((n, oh, ow, c), dtype=np.int64)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for ch in range(c):
                    best = x[b, oy * p, ox * p, ch]
                    bi = 0
                    for dy in range(p):
                        for dxx in range(p):
                            v = x[b, oy * p + dy, ox * p + dxx, ch]
                            if v > best:
                                best = v
                                bi = dy * p + dxx
                    out[b, oy, ox, ch] = best
                    arg[b, oy, ox, ch] = bi
    return out, arg


def maxpool_forward(x, p):
    return _maxpool_forward(np.ascontiguousarray(x), p)


@njit(cache=True)
def _maxpool_backward(dout, arg, n, h, w, c, p):
    oh, ow = dout.shape[1], dout.shape[2]
    dx = np.zeros((n, h, w, c), dtype=dout.dtype)
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                for ch in range(c):
                    a = arg[b, oy, ox, ch]
                    dx[b, oy * p + a // p, ox * p + a % p, ch] = dout[b, oy, ox, ch]
    return dx


def maxpool_backward(dout, arg, x_shape, p):
    n, h, w, c = x_shape
    return _maxpool_backward(np.ascontiguousarray(dout), arg, n, h, w, c, p)


@njit(cache=True)
def _scatter_max(rows, cols, values, out):
    for i in range(rows.shape[0]):
        if values[i] > out[rows[i], cols[i]]:
            out[rows[i], cols[i]] = values[i]
    return out


def scatter_max(rows, cols, values, out):
    return _scatter_max(rows.astype(np.int64), cols.astype(np.int64), values.astype(out.dtype), out)


@njit(cache=True)
def _bilinear_resize(img, out_h, out_w):
    h, w, c = img.shape
    out = np.empty((out_h, out_w, c), dtype=np.float64)
    sy = h / out_h
    sx = w / out_w
    for oy in range(out_h):
        fy = (oy + 0.5) * sy - 0.5
        fy = min(max(fy, 0.0), h - 1.0)
        y0 = int(np.floor(fy))
        y1 = min(y0 + 1, h - 1)
        wy = fy - y0
        for ox in range(out_w):
            fx = (ox + 0.5) * sx - 0.5
            fx = min(max(fx, 0.0), w - 1.0)
            x0 = int(np.floor(fx))
            x1 = min(x0 + 1, w - 1)
            wx = fx - x0
            for ch in range(c):
                top = (1.0 - wx) * img[y0, x0, ch] + wx * img[y0, x1, ch]
                bot = (1.0 - wx) * img[y1, x0, ch] + wx * img[y1, x1, ch]
                out[oy, ox, ch] = (1.0 - wy) * top + wy * bot
    return out


def bilinear_resize(img, out_h, out_w):
    return _bilinear_resize(np.ascontiguousarray(img, dtype=np.float64), out_h, out_w)


@njit(cache=True)
def _nearest_rows(db, queries):
    nq = queries.shape[0]
    n, d = db.shape
    idx = np.empty(nq, dtype=np.int64)
    dist2 = np.empty(nq, dtype=np.float64)
    for q in range(nq):
        best = np.inf
        bi = -1
        for i in range(n):
            s = 0.0
            for j in range(d):
                t = db[i, j] - queries[q, j]
                s += t * t
                if s >= best:
                    break
            if s < best:
                best = s
                bi = i
        idx[q] = bi
        dist2[q] = best
    return idx, dist2


def nearest_rows(db, queries):
    return _nearest_rows(np.ascontiguousarray(db, dtype=np.float64),
                         np.ascontiguousarray(queries, dtype=np.float64))


@njit(cache=True)
def _greedy_places(east, north, heading, d_p, gate):
    n = east.shape[0]
    acc = np.empty(n, dtype=np.int64)
    m = 0
    two_pi = 2.0 * np.pi
    for i in range(n):
        ok = True
        for j in range(m):
            a = acc[j]
            de = east[a] - east[i]
            dn = north[a] - north[i]
            if de * de + dn * dn < d_p * d_p:
                dh = abs((heading[a] - heading[i] + np.pi) % two_pi - np.pi)
                if dh < gate:
                    ok = False
                    break
        if ok:
            acc[m] = i
            m += 1
    return acc[:m].copy()


def greedy_places(east, north, heading, d_p, gate):
    return _greedy_places(np.asarray(east, dtype=np.float64), np.asarray(north, dtype=np.float64),
                          np.asarray(heading, dtype=np.float64), float(d_p), float(gate))
