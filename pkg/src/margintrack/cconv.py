"""Continuous-domain feature interpolation and confidence maps.

Every T-periodic function is stored as a centered grid of Fourier
coefficients: entry ``[i, j]`` holds the coefficient for frequency
``(i - n1 // 2, j - n2 // 2)``. Positions are ``(row, col)`` in cell units of
the finest layer, so the domain is ``[0, T1) x [0, T2)``.
"""

import functools
import math
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

DEFAULT_KERNEL_A = -0.75

# Debug hook for mutation testing of the interpolation checks: +1 flips the
# half-cell phase of the kernel spectrum.
_PHASE_SIGN = -1.0


def set_phase_fault(enabled):
    """Flip the kernel phase sign (used by ``selftest --inject-fault``)."""
    global _PHASE_SIGN
    _PHASE_SIGN = 1.0 if enabled else -1.0


def cubic_kernel(x, a=DEFAULT_KERNEL_A):
    """Keys cubic convolution kernel, support ``[-2, 2]``."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    inner = ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    outer = ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    return np.where(x <= 1.0, inner, np.where(x < 2.0, outer, 0.0))


def cubic_kernel_ft(f, a=DEFAULT_KERNEL_A):
    """Continuous Fourier transform of :func:`cubic_kernel` at frequency ``f``.

    Closed form for ``|f| >= 1/4``. Below that the closed form cancels
    catastrophically (it divides by ``f^4``), so the cosine series
    ``sum_n (-1)^n (2 pi f)^(2n) / (2n)! * int b(x) x^(2n) dx`` is used with
    exact polynomial moments.
    """
    f = np.asarray(f, dtype=np.float64)
    pi = np.pi
    small = np.abs(f) < _SERIES_CUTOFF
    fs = np.where(small, 1.0, f)
    w2 = 2.0 * pi * fs
    w4 = 4.0 * pi * fs
    num = (6.0 - 6.0 * np.cos(w2) - 6.0 * pi * fs * np.sin(w2)
           + a * (3.0 - 3.0 * np.cos(w4) - 8.0 * pi * fs * np.sin(w2)
                  - 2.0 * pi * fs * np.sin(w4)))
    closed = num / (4.0 * pi ** 4 * fs ** 4)
    x2 = (2.0 * pi * np.where(small, f, 0.0)) ** 2
    coeffs = _series_coeffs(float(a))
    series = np.zeros_like(x2)
    for c in coeffs[::-1]:
        series = series * x2 + c
    return np.where(small, series, closed)


_SERIES_CUTOFF = 0.25
_SERIES_TERMS = 24


@functools.lru_cache(maxsize=8)
def _series_coeffs(a):
    """``(-1)^n / (2n)! * int_{-2}^{2} b(x) x^(2n) dx`` for ``n < _SERIES_TERMS``.

    Moments are exact rationals, so every coefficient is correctly rounded.
    """
    a = Fraction(a)

    def inner(p):  # int_0^1 x^p dx
        return Fraction(1, p + 1)

    def outer(p):  # int_1^2 x^p dx
        return Fraction(2 ** (p + 1) - 1, p + 1)

    out = []
    for n in range(_SERIES_TERMS):
        m = 2 * n
        moment = ((a + 2) * inner(m + 3) - (a + 3) * inner(m + 2) + inner(m)
                  + a * (outer(m + 3) - 5 * outer(m + 2) + 8 * outer(m + 1) - 4 * outer(m)))
        out.append(float((-1) ** n * 2 * moment / math.factorial(m)))
    return tuple(out)


def freqs(n):
    """Frequency index of each entry along a centered axis of length ``n``."""
    return np.arange(n) - n // 2


def truncation(n):
    """Largest symmetric frequency kept for a layer of ``n`` cells."""
    return (n - 1) // 2


def kernel_fourier(n_cells, K, period=None, a=DEFAULT_KERNEL_A):
    """Fourier coefficients ``k = -K..K`` of the periodized, half-cell shifted kernel.

    The kernel for a layer with ``n_cells`` cells is stretched to ``T / n_cells``
    per cell and centered on the middle of cell 0, giving
    ``(1 / N) * exp(-i pi k / N) * B(k / N)`` independent of ``T``.
    """
    if n_cells < 1 or K < 0:
        raise ValueError("need n_cells >= 1 and K >= 0")
    return _kernel_coeffs(np.arange(-K, K + 1, dtype=np.float64), n_cells, a)


def _kernel_coeffs(k, n_cells, a):
    return (np.exp(_PHASE_SIGN * 1j * np.pi * k / n_cells)
            * cubic_kernel_ft(k / n_cells, a) / n_cells)


def _pair(v):
    if np.ndim(v) == 0:
        return (v, v)
    v = tuple(v)
    if len(v) != 2:
        raise ValueError(f"expected a scalar or a pair, got {v}")
    return v


def embed(coeffs, shape):
    """Zero-pad (or crop) centered coefficient grids to ``shape`` along the last two axes."""
    coeffs = np.asarray(coeffs)
    out = np.zeros(coeffs.shape[:-2] + tuple(shape), dtype=np.complex128)
    src = []
    dst = []
    for n_in, n_out in zip(coeffs.shape[-2:], shape):
        lo = -min(n_in // 2, n_out // 2)
        hi = min(n_in - n_in // 2, n_out - n_out // 2)
        src.append(slice(n_in // 2 + lo, n_in // 2 + hi))
        dst.append(slice(n_out // 2 + lo, n_out // 2 + hi))
    out[(..., dst[0], dst[1])] = coeffs[(..., src[0], src[1])]
    return out


@dataclass(frozen=True)
class InterpolationModel:
    """Per-layer kernel spectra on the common index set ``|k_d| <= K_d``."""

    period: tuple
    K: tuple
    resolutions: tuple
    spectra: tuple
    a: float = DEFAULT_KERNEL_A

    @classmethod
    def build(cls, resolutions, a=DEFAULT_KERNEL_A):
        resolutions = tuple(_pair(r) for r in resolutions)
        finest = tuple(max(r[d] for r in resolutions) for d in range(2))
        period = tuple(float(n) for n in finest)
        K = tuple(truncation(n) for n in finest)
        spectra = []
        for res in resolutions:
            per_dim = []
            for d in range(2):
                b = kernel_fourier(res[d], K[d], period[d], a)
                # the layer's own band limit; even layers lose their Nyquist bin
                b[np.abs(np.arange(-K[d], K[d] + 1)) > truncation(res[d])] = 0.0
                per_dim.append(b)
            spectra.append(tuple(per_dim))
        return cls(period, K, resolutions, tuple(spectra), a)

    @property
    def shape(self):
        return (2 * self.K[0] + 1, 2 * self.K[1] + 1)


@dataclass(frozen=True)
class FourierMap:
    """Interpolated feature channels; ``coeffs`` has shape ``(L, 2K1+1, 2K2+1)``."""

    coeffs: np.ndarray
    period: tuple

    @property
    def num_channels(self):
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class ConfidenceMap:
    coeffs: np.ndarray
    period: tuple


@dataclass(frozen=True)
class GaussianLabel:
    sigma: float
    center: tuple
    period: tuple
    coeffs: np.ndarray


def interpolate(fm, model):
    """Fourier coefficients of every interpolated feature layer.

    ``Z[k] = X[k mod N] * b[k]`` with ``X`` the unnormalized DFT of the layer.
    """
    if len(fm.layers) != len(model.resolutions):
        raise ValueError(f"feature map has {len(fm.layers)} layers, model expects "
                         f"{len(model.resolutions)}")
    k1 = np.arange(-model.K[0], model.K[0] + 1)
    k2 = np.arange(-model.K[1], model.K[1] + 1)
    out = np.empty((len(fm.layers),) + model.shape, dtype=np.complex128)
    for l, (layer, res, (b1, b2)) in enumerate(zip(fm.layers, model.resolutions,
                                                    model.spectra)):
        if tuple(layer.shape) != tuple(res):
            raise ValueError(f"layer {l} has shape {layer.shape}, model expects {res}")
        X = np.fft.fft2(layer)
        out[l] = X[np.ix_(k1 % res[0], k2 % res[1])] * np.outer(b1, b2)
    return FourierMap(out, model.period)


def evaluate_interpolation(values, period, points, bandwidth, a=DEFAULT_KERNEL_A):
    """Evaluate the interpolated layer from its Fourier series at arbitrary points.

    Uses all frequencies ``|k_d| <= bandwidth``, far past the working
    truncation, grouping them by residue mod ``N`` so the cost stays linear in
    ``bandwidth``. ``points`` is ``(P, 2)`` in ``(row, col)`` order.
    """
    values = np.asarray(values, dtype=np.float64)
    period = _pair(period)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    X = np.fft.fft2(values)
    factors = []
    for d in range(2):
        n = values.shape[d]
        # k = r + n q covers [-bandwidth, bandwidth] for every residue r
        q = np.arange(-(bandwidth // n) - 1, bandwidth // n + 1)
        k = np.arange(n)[:, None] + n * q[None, :]
        # exp(i w (r + n q)) = exp(i w r) exp(i w n q): a product over q
        w = 2.0 * np.pi * points[:, d] / period[d]
        S = np.exp(1j * np.outer(w, np.arange(n))) * (
            np.exp(1j * np.outer(w, n * q))
            @ np.where(np.abs(k) <= bandwidth, _kernel_coeffs(k, n, a), 0.0).T)
        factors.append(S)
    vals = np.einsum("rs,pr,ps->p", X, factors[0], factors[1])
    return vals.real


def evaluate_confidence(w, z):
    """Coefficients of ``sum_l w^l (*) interp(phi^l)``: per-frequency products."""
    w = np.asarray(w)
    zc = z.coeffs if isinstance(z, FourierMap) else np.asarray(z)
    if w.shape != zc.shape:
        raise ValueError(f"filter shape {w.shape} does not match sample shape {zc.shape}")
    period = z.period if isinstance(z, FourierMap) else None
    return ConfidenceMap(np.einsum("lij,lij->ij", w, zc), period)


def _coeffs(c):
    return c.coeffs if hasattr(c, "coeffs") else np.asarray(c)


def sample_grid(c, G):
    """Real samples of a coefficient grid at ``t = g * T / G``.

    Needs ``G >= 2K + 1`` per dimension. Raises ``ArithmeticError`` if the
    imaginary part exceeds ``1e-9`` relative to the coefficients' l1 norm
    (input not Hermitian).
    """
    coeffs = _coeffs(c)
    G = tuple(int(g) for g in _pair(G))
    for n, g in zip(coeffs.shape[-2:], G):
        if n > g or (n % 2 == 0 and n != g):
            raise ValueError(f"grid {G} too small for coefficient shape {coeffs.shape}")
    full = embed(coeffs, G)
    vals = np.fft.ifft2(np.fft.ifftshift(full, axes=(-2, -1))) * (G[0] * G[1])
    scale = max(1.0, float(np.sum(np.abs(coeffs))))
    resid = float(np.max(np.abs(vals.imag))) if vals.size else 0.0
    if resid > 1e-9 * scale:
        raise ArithmeticError(f"imaginary residue {resid:.3e} on sampled grid")
    return vals.real


def grid_coefficients(values):
    """Centered DFT coefficients of a real grid, the inverse of :func:`sample_grid`."""
    values = np.asarray(values, dtype=np.float64)
    G = values.shape[-2] * values.shape[-1]
    return np.fft.fftshift(np.fft.fft2(values), axes=(-2, -1)) / G


def _phase_vectors(coeffs, t, period):
    n1, n2 = coeffs.shape
    k1, k2 = freqs(n1), freqs(n2)
    w1 = 2.0 * np.pi * k1 / period[0]
    w2 = 2.0 * np.pi * k2 / period[1]
    return w1, w2, np.exp(1j * w1 * t[0]), np.exp(1j * w2 * t[1])


def evaluate_at(c, t, period=None):
    """Value of the trigonometric polynomial at position ``t = (row, col)``."""
    coeffs = _coeffs(c)
    period = _pair(period if period is not None else c.period)
    _, _, e1, e2 = _phase_vectors(coeffs, t, period)
    return float((e1 @ coeffs @ e2).real)


def value_grad_hess(c, t, period=None):
    """Value, gradient and Hessian of the polynomial at ``t``."""
    coeffs = _coeffs(c)
    period = _pair(period if period is not None else c.period)
    w1, w2, e1, e2 = _phase_vectors(coeffs, t, period)
    d1 = 1j * w1 * e1
    d2 = 1j * w2 * e2
    v = (e1 @ coeffs @ e2).real
    g = np.array([(d1 @ coeffs @ e2).real, (e1 @ coeffs @ d2).real])
    h11 = ((-w1 * w1 * e1) @ coeffs @ e2).real
    h22 = (e1 @ coeffs @ (-w2 * w2 * e2)).real
    h12 = (d1 @ coeffs @ d2).real
    return float(v), g, np.array([[h11, h12], [h12, h22]])


def argmax_subgrid(c, G, iters=5, period=None):
    """Maximizer of a confidence map: grid search followed by Newton steps.

    A Newton step is accepted only while the Hessian is negative definite and
    the score increases; otherwise the best point so far is kept. Returns
    ``(position, score)`` with the position wrapped into ``[0, T)``.
    """
    coeffs = _coeffs(c)
    period = _pair(period if period is not None else c.period)
    G = _pair(G)
    grid = sample_grid(coeffs, G)
    idx = np.unravel_index(int(np.argmax(grid)), grid.shape)
    t = np.array([idx[0] * period[0] / G[0], idx[1] * period[1] / G[1]])
    best = float(grid[idx])
    for _ in range(max(0, int(iters))):
        v, g, H = value_grad_hess(coeffs, t, period)
        if not (H[0, 0] < 0 and np.linalg.det(H) > 0):
            break
        cand = t - np.linalg.solve(H, g)
        cv = evaluate_at(coeffs, cand, period)
        if not cv > best:
            break
        t, best = cand, cv
    t = np.mod(t, period)
    return (float(t[0]), float(t[1])), best


def gaussian_fourier(sigma, center, period, K):
    """Coefficients of the periodized unit-peak Gaussian centered at ``center``.

    Separable: ``sqrt(2 pi sigma^2) / T * exp(-2 sigma^2 (pi k / T)^2 - 2 pi i k y0 / T)``
    per dimension, for ``|k_d| <= K_d``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    period = _pair(period)
    center = _pair(center)
    K = _pair(K)
    factors = []
    for d in range(2):
        k = np.arange(-K[d], K[d] + 1, dtype=np.float64)
        T = float(period[d])
        factors.append(np.sqrt(2.0 * np.pi * sigma ** 2) / T
                       * np.exp(-2.0 * sigma ** 2 * (np.pi * k / T) ** 2
                                - 2j * np.pi * k * center[d] / T))
    return GaussianLabel(float(sigma), tuple(float(c) for c in center),
                         tuple(float(p) for p in period), np.outer(*factors))


def loss_fourier(label):
    """Coefficients of the structured loss ``1 - m(t)``."""
    coeffs = _coeffs(label)
    loss = -coeffs.astype(np.complex128)
    c = (coeffs.shape[0] // 2, coeffs.shape[1] // 2)
    loss[c] += 1.0
    return loss


def is_hermitian(coeffs, atol=1e-12):
    """True when a centered odd-shaped grid satisfies ``c[-k] == conj(c[k])``."""
    coeffs = np.asarray(coeffs)
    flipped = np.conj(coeffs[..., ::-1, ::-1])
    scale = max(1.0, float(np.max(np.abs(coeffs)))) if coeffs.size else 1.0
    return bool(np.all(np.abs(coeffs - flipped) <= atol * scale))


def hermitian_part(coeffs):
    """Projection of a centered odd-shaped grid onto Hermitian-symmetric grids."""
    coeffs = np.asarray(coeffs)
    return 0.5 * (coeffs + np.conj(coeffs[..., ::-1, ::-1]))


def dump_coefficients(path, coeffs):
    """Write ``(L, 2K1+1, 2K2+1)`` coefficients as ``LMSC`` + 3 x u32 + LE (re, im) f64."""
    coeffs = np.asarray(coeffs, dtype=np.complex128)
    if coeffs.ndim == 2:
        coeffs = coeffs[None]
    L, n1, n2 = coeffs.shape
    with open(path, "wb") as fh:
        fh.write(b"LMSC" + struct.pack("<III", n1 // 2, n2 // 2, L))
        fh.write(coeffs.astype("<c16").tobytes())


def read_coefficients(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != b"LMSC":
            raise ValueError(f"{path}: bad magic {head[:4]!r}")
        K1, K2, L = struct.unpack("<III", head[4:])
        data = np.frombuffer(fh.read(), dtype="<c16")
    return data.reshape(L, 2 * K1 + 1, 2 * K2 + 1).astype(np.complex128)
