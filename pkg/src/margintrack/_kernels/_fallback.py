"""Pure numpy versions of the compiled kernels in ``_ext.pyx``."""

import numpy as np


def orientation_histogram(gx, gy, cell, nbins):
    h, w = gx.shape
    nr, nc = h // cell, w // cell
    gx = gx[: nr * cell, : nc * cell]
    gy = gy[: nr * cell, : nc * cell]
    mag = np.sqrt(gx * gx + gy * gy)
    theta = np.arctan2(gy, gx)
    theta = np.where(theta < 0.0, theta + np.pi, theta)
    theta = np.where(theta >= np.pi, theta - np.pi, theta)
    bins = np.minimum(np.floor(theta / (np.pi / nbins)).astype(np.intp), nbins - 1)
    rows = np.arange(nr * cell)[:, None] // cell
    cols = np.arange(nc * cell)[None, :] // cell
    flat = (bins * nr + rows) * nc + cols
    out = np.bincount(flat.ravel(), weights=mag.ravel(), minlength=nbins * nr * nc)
    return out.reshape(nbins, nr, nc)


def _axis_weights(coords, n):
    c = np.clip(coords, 0.0, n - 1)
    if n == 1:
        zero = np.zeros(len(c), dtype=np.intp)
        return zero, zero, c - 0.0
    lo = np.minimum(np.floor(c).astype(np.intp), n - 2)
    return lo, lo + 1, c - lo


def bilinear_sample(img, rows, cols):
    h, w = img.shape
    r0, r1, fr = _axis_weights(np.asarray(rows, dtype=np.float64), h)
    c0, c1, fc = _axis_weights(np.asarray(cols, dtype=np.float64), w)
    a = img[r0][:, c0]
    b = img[r0][:, c1]
    c = img[r1][:, c0]
    d = img[r1][:, c1]
    top = a + fc * (b - a)
    bot = c + fc * (d - c)
    return top + fr[:, None] * (bot - top)


def sparse_conv_same(x, kernel):
    nl, n1, n2 = x.shape
    m1, m2 = kernel.shape
    h1, h2 = m1 // 2, m2 // 2
    out = np.zeros((nl, n1, n2), dtype=np.complex128)
    for p, q in zip(*np.nonzero(kernel)):
        di, dj = p - h1, q - h2
        if abs(di) >= n1 or abs(dj) >= n2:
            continue  # shifted entirely out; negative slice bounds would wrap
        dst_i = slice(max(di, 0), n1 + min(di, 0))
        src_i = slice(max(-di, 0), n1 - max(di, 0))
        dst_j = slice(max(dj, 0), n2 + min(dj, 0))
        src_j = slice(max(-dj, 0), n2 - max(dj, 0))
        out[:, dst_i, dst_j] += kernel[p, q] * x[:, src_i, src_j]
    return out
