"""Pure-numpy reference kernels.

Every function here has a numba twin in ``_numba.py`` with the same
signature and semantics. These are also the fallback when numba is
unavailable or disabled through ``MMLOOP_DISABLE_NUMBA``.
"""

import numpy as np


def conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def tile_patches(x, k):
    """im2col for stride == kernel, no padding: a single reshape/transpose copy."""
    n, h, w, c = x.shape
    oh, ow = h // k, w // k
    t = x[:, :oh * k, :ow * k, :].reshape(n, oh, k, ow, k, c).transpose(0, 1, 3, 2, 4, 5)
    return t.reshape(n, oh, ow, k * k * c)


def im2col(x, k, stride, pad):
    """(N, H, W, C) -> (N, OH, OW, k*k*C), patch order (ky, kx, c)."""
    if stride == k and pad == 0:
        return tile_patches(x, k)
    n, h, w, c = x.shape
    oh = conv_out_size(h, k, stride, pad)
    ow = conv_out_size(w, k, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = np.empty((n, oh, ow, k, k, c), dtype=x.dtype)
    for ky in range(k):
        for kx in range(k):
            cols[:, :, :, ky, kx, :] = x[:, ky:ky + stride * oh:stride, kx:kx + stride * ow:stride, :]
    return cols.reshape(n, oh, ow, k * k * c)


def col2im(cols, x_shape, k, stride, pad):
    n, h, w, c = x_shape
    oh, ow = cols.shape[1], cols.shape[2]
    cols = cols.reshape(n, oh, ow, k, k, c)
    dx = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=cols.dtype)
    for ky in range(k):
        for kx in range(k):
            dx[:, ky:ky + stride * oh:stride, kx:kx + stride * ow:stride, :] += cols[:, :, :, ky, kx, :]
    if pad:
        dx = dx[:, pad:pad + h, pad:pad + w, :]
    return np.ascontiguousarray(dx)


def maxpool_forward(x, p):
    """Non-overlapping p x p max pooling; trailing rows/cols are dropped.

    Returns the pooled map and the flat in-window argmax (first max wins).
    """
    n, h, w, c = x.shape
    oh, ow = h // p, w // p
    win = x[:, :oh * p, :ow * p, :].reshape(n, oh, p, ow, p, c)
    win = win.transpose(0, 1, 3, 5, 2, 4).reshape(n, oh, ow, c, p * p)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(dout, arg, x_shape, p):
    n, h, w, c = x_shape
    oh, ow = dout.shape[1], dout.shape[2]
    win = np.zeros((n, oh, ow, c, p * p), dtype=dout.dtype)
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    win = win.reshape(n, oh, ow, c, p, p).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :oh * p, :ow * p, :] = win.reshape(n, oh * p, ow * p, c)
    return dx


def scatter_max(rows, cols, values, out):
    """out[rows[i], cols[i]] = max(out[...], values[i]) in place."""
    np.maximum.at(out, (rows, cols), values)
    return out


def _linear_taps(n_in, n_out):
    # half-pixel centres, edge clamped (same convention as OpenCV INTER_LINEAR)
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def bilinear_resize(img, out_h, out_w):
    """Resize an (H, W, C) float image."""
    h, w = img.shape[:2]
    y0, y1, fy = _linear_taps(h, out_h)
    x0, x1, fx = _linear_taps(w, out_w)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = img[y0]
    bot = img[y1]
    a = top[:, x0]
    b = top[:, x1]
    c = bot[:, x0]
    d = bot[:, x1]
    return (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d)


def nearest_rows(db, queries):
    """Exact L2 nearest row of ``db`` for each query; ties go to the lowest row.

    The matrix-product screen only nominates candidates, the winner is
    decided on exactly recomputed squared distances.
    """
    db_sq = np.einsum("ij,ij->i", db, db)
    out_idx = np.empty(len(queries), dtype=np.int64)
    out_d2 = np.empty(len(queries), dtype=np.float64)
    chunk = 256
    for s in range(0, len(queries), chunk):
        q = queries[s:s + chunk]
        approx = db_sq[None, :] - 2.0 * (q @ db.T) + np.einsum("ij,ij->i", q, q)[:, None]
        best = approx.min(axis=1)
        slack = 1e-7 * (np.abs(best) + db_sq.max() + 1.0)
        for r in range(len(q)):
            cand = np.flatnonzero(approx[r] <= best[r] + slack[r])
            diff = db[cand] - q[r]
            d2 = np.einsum("ij,ij->i", diff, diff)
            j = int(np.argmin(d2))
            out_idx[s + r] = cand[j]
            out_d2[s + r] = d2[j]
    return out_idx, out_d2


def greedy_places(east, north, heading, d_p, gate):
    """Time-ordered greedy place acceptance; returns accepted fix indices."""
    acc = []
    ae = np.empty(len(east))
    an = np.empty(len(east))
    ah = np.empty(len(east))
    m = 0
    for i in range(len(east)):
        if m:
            d2 = (ae[:m] - east[i]) ** 2 + (an[:m] - north[i]) ** 2
            dh = np.abs((ah[:m] - heading[i] + np.pi) % (2 * np.pi) - np.pi)
            if np.any((d2 < d_p * d_p) & (dh < gate)):
                continue
        ae[m], an[m], ah[m] = east[i], north[i], heading[i]
        acc.append(i)
        m += 1
    return np.asarray(acc, dtype=np.int64)
