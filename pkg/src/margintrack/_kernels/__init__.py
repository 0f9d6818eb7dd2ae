"""Hot inner loops, compiled when the extension is built.

The Cython module ``_ext`` is preferred; the numpy module ``_fallback`` is
used when the extension is missing or ``MARGINTRACK_PURE_PYTHON=1`` is set.
``BACKEND`` names the implementation that was picked.
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("MARGINTRACK_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _ext as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

__all__ = ["BACKEND", "orientation_histogram", "bilinear_sample", "sparse_conv_same"]


def orientation_histogram(gx, gy, cell, nbins):
    """Magnitude-weighted unsigned orientation histogram per ``cell``x``cell`` block.

    Returns an array of shape ``(nbins, rows // cell, cols // cell)``.
    """
    gx = np.ascontiguousarray(gx, dtype=np.float64)
    gy = np.ascontiguousarray(gy, dtype=np.float64)
    return _impl.orientation_histogram(gx, gy, int(cell), int(nbins))


def bilinear_sample(img, rows, cols):
    """Sample ``img`` on the separable grid ``rows x cols`` (array index units).

    Coordinates outside the image are clamped, which equals edge replication.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.float64)
    cols = np.ascontiguousarray(cols, dtype=np.float64)
    return _impl.bilinear_sample(img, rows, cols)


def sparse_conv_same(x, kernel):
    """Centered 2-D convolution of every channel of ``x`` with a small kernel.

    Output keeps the shape of ``x``; contributions that fall outside are dropped.
    """
    x = np.ascontiguousarray(x, dtype=np.complex128)
    kernel = np.ascontiguousarray(kernel, dtype=np.complex128)
    return _impl.sparse_conv_same(x, kernel)
