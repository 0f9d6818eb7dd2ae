"""Built-in verification suite: analytic identities and brute-force oracles.

Each check returns a :class:`Check` with the measured error and its
tolerance. The oracles here are built independently of the fast paths they
verify (dense matrices assembled entry by entry, direct kernel sums, plain
quadrature), so a broken fast path cannot agree with them by construction.
"""

from dataclasses import dataclass

import numpy as np

from . import cconv, margin


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self):
        return bool(np.isfinite(self.measured) and self.measured < self.tolerance)

    def line(self):
        return (f"{'PASS' if self.passed else 'FAIL'} {self.name} "
                f"{self.measured:.3e} {self.tolerance:.0e}")


# -- random instances ---------------------------------------------------------

def random_hermitian(rng, shape, scale=1.0):
    """Random coefficients of a real function on a centered odd grid."""
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return cconv.hermitian_part(c) * scale


def smooth_grid(rng, G, K=3):
    """Real band-limited field on a ``G x G`` grid."""
    return cconv.sample_grid(random_hermitian(rng, (2 * K + 1, 2 * K + 1)), (G, G))


def random_problem(rng, n=8, channels=2, samples=1, mu=0.5, eta=2.0, C=10.0):
    """Small training problem on the centered index set of an ``n``-cell domain.

    Returns ``(Z, alphas, reg, C, rho_hats)`` with Hermitian samples and labels.
    """
    K = cconv.truncation(n)
    shape = (2 * K + 1, 2 * K + 1)
    Z = np.stack([np.stack([random_hermitian(rng, shape) for _ in range(channels)])
                  for _ in range(samples)])
    alphas = rng.uniform(0.5, 1.5, samples)
    alphas /= alphas.sum()
    reg = margin.regularizer_coeffs(n / 4.0, mu, eta, float(n))
    rho_hats = [random_hermitian(rng, shape) for _ in range(samples)]
    return Z, alphas, reg, C, rho_hats


# -- oracles --------------------------------------------------------------------

def conv_matrix(kernel, K):
    """Matrix of the full (untruncated) 2-D convolution with ``kernel``.

    Maps the ``(2K+1)^2`` index set into the ``(2K+2R+1)^2`` set, ``R`` being
    the kernel half-width. Assembled entry by entry.
    """
    R = kernel.shape[0] // 2
    n_in = 2 * K + 1
    n_out = 2 * (K + R) + 1
    M = np.zeros((n_out * n_out, n_in * n_in), dtype=np.complex128)
    for i1 in range(n_in):
        for i2 in range(n_in):
            col = i1 * n_in + i2
            for d1 in range(-R, R + 1):
                for d2 in range(-R, R + 1):
                    o1, o2 = i1 + d1 + R, i2 + d2 + R
                    M[o1 * n_out + o2, col] += kernel[d1 + R, d2 + R]
    return M


def dense_system(Z, alphas, reg, C, rho_hats):
    """Normal equations ``A w = b`` as an explicit matrix over all channels."""
    J, L, n1, n2 = Z.shape
    K = n1 // 2
    m = n1 * n2
    A = np.zeros((L * m, L * m), dtype=np.complex128)
    b = np.zeros(L * m, dtype=np.complex128)
    for j in range(J):
        # data term: D_j maps the stacked filter to the response coefficients
        D = np.hstack([np.diag(Z[j, l].ravel()) for l in range(L)])
        A += alphas[j] * D.conj().T @ D
        b += alphas[j] * D.conj().T @ cconv.embed(rho_hats[j], (n1, n2)).ravel()
    R = conv_matrix(reg.coeffs, K)
    A += np.kron(np.eye(L), R.conj().T @ R) / C
    return A, b


def explicit_objective(w, Z, alphas, reg, C, rho_hats):
    """``C sum_j alpha_j sum_k |Z_j w - rho_j|^2 + sum_l sum_k |gamma (*) w_l|^2``."""
    data = 0.0
    for j in range(Z.shape[0]):
        resp = np.einsum("lab,lab->ab", Z[j], w)
        data += alphas[j] * float(np.sum(np.abs(resp - rho_hats[j]) ** 2))
    K = w.shape[-1] // 2
    R = conv_matrix(reg.coeffs, K)
    reg_term = sum(float(np.sum(np.abs(R @ wl.ravel()) ** 2)) for wl in w)
    return C * data + reg_term


def direct_interpolation(values, period, points, a=cconv.DEFAULT_KERNEL_A):
    """Kernel sum ``sum_n phi[n] b(N t / T - n - 1/2)`` with periodic wrap-around."""
    values = np.asarray(values, dtype=np.float64)
    points = np.atleast_2d(points)
    period = cconv._pair(period)
    weights = []
    for d in range(2):
        n = values.shape[d]
        u = points[:, d] * n / period[d]
        idx = np.arange(n)
        w = sum(cconv.cubic_kernel(u[:, None] - idx[None, :] - 0.5 - m * n, a)
                for m in (-1, 0, 1))
        weights.append(w)
    return np.einsum("rs,pr,ps->p", values, weights[0], weights[1])


def wrapped_gaussian_coeffs(sigma, center, T, ks, samples=4096):
    """Fourier coefficients of the wrapped unit-peak Gaussian by trapezoid quadrature.

    The integrand is smooth and periodic, so the trapezoid rule converges
    geometrically.
    """
    t = np.arange(samples) * T / samples
    wraps = np.arange(-6, 7)
    m = np.exp(-((t[:, None] - center - wraps * T) ** 2) / (2 * sigma ** 2)).sum(axis=1)
    phase = np.exp(-2j * np.pi * np.outer(ks, t) / T)
    return phase @ m / samples


# -- checks ----------------------------------------------------------------------

def check_label_identity(rng, instances=50, G=32):
    worst = 0.0
    for _ in range(instances):
        j = smooth_grid(rng, G)
        loss = 1.0 - np.abs(smooth_grid(rng, G))
        s0 = float(rng.uniform(-1.0, 2.0))
        eps_grid, eps_hat = margin.update_slack(j, loss, s0)
        rho = cconv.sample_grid(margin.build_label(s0, cconv.grid_coefficients(loss),
                                                   eps_hat), (G, G))
        worst = max(worst, float(np.max(np.abs(rho - np.minimum(s0 - loss, j)))))
    return Check("slack_label_identity", worst, 1e-9)


def check_parseval(rng, instances=5, n=16, channels=3, G=64):
    """Data term on the spatial grid vs in Fourier coefficients, per sample."""
    worst = 0.0
    for _ in range(instances):
        K = cconv.truncation(n)
        shape = (2 * K + 1, 2 * K + 1)
        z = np.stack([random_hermitian(rng, shape) for _ in range(channels)])
        w = np.stack([random_hermitian(rng, shape) for _ in range(channels)])
        s0 = float(rng.uniform(0.0, 2.0))
        loss = cconv.loss_fourier(cconv.gaussian_fourier(2.0, n / 2.0, float(n), K))
        resp = np.einsum("lab,lab->ab", w, z)
        _, eps_hat = margin.update_slack(cconv.sample_grid(resp, G),
                                         cconv.sample_grid(loss, G), s0)
        rho_hat = margin.build_label(s0, loss, eps_hat)
        spatial = float(np.mean((cconv.sample_grid(resp, G)
                                 - cconv.sample_grid(rho_hat, G)) ** 2))
        fourier = float(np.sum(np.abs(cconv.embed(resp, (G, G)) - rho_hat) ** 2))
        worst = max(worst, abs(spatial - fourier) / abs(fourier))
    return Check("parseval_data_term", worst, 1e-8)


def check_gaussian_label(T=32, sigmas=(1.0, 2.0, 4.0)):
    worst = 0.0
    K = cconv.truncation(T)
    ks = np.arange(-K, K + 1)
    for sigma in sigmas:
        center = T / 2.0 + 0.3
        got = cconv.gaussian_fourier(sigma, (center, center), float(T), K).coeffs
        ref = wrapped_gaussian_coeffs(sigma, center, T, ks)
        worst = max(worst, float(np.max(np.abs(got - np.outer(ref, ref)))))
    return Check("gaussian_label_quadrature", worst, 1e-6)


def check_dense_cg(rng, n=8, channels=2):
    Z, alphas, reg, C, rho = random_problem(rng, n, channels)
    A, b = dense_system(Z, alphas, reg, C, rho)
    direct = np.linalg.solve(A, b).reshape((channels,) + Z.shape[-2:])
    rhs = margin.normal_rhs(Z, alphas, rho)
    res = margin.solve_cg(lambda x: margin.normal_operator_apply(x, Z, alphas, reg, C),
                          rhs, np.zeros_like(rhs), 10 * b.size, tol=1e-10)
    err = np.linalg.norm(res.x - direct) / np.linalg.norm(direct)
    return Check("dense_cg_oracle", float(err), 1e-6)


def check_cg_monotone(rng, instances=20, size=40):
    """Quadratic objective never increases; final residual below tolerance."""
    worst = 0.0
    tol = 1e-5
    for _ in range(instances):
        M = rng.standard_normal((size, size))
        A = M @ M.T + 0.1 * np.eye(size)
        b = rng.standard_normal(size)
        res = margin.solve_cg(lambda x: A @ x, b, np.zeros(size), 10 * size, tol=tol,
                              track_objective=True)
        obj = np.array(res.objectives)
        scale = np.maximum(np.abs(obj[1:]), 1e-300)
        worst = max(worst, float(np.max(np.maximum(obj[1:] - obj[:-1], 0.0) / scale)))
        if not res.residual < tol:
            return Check("cg_monotone", float("inf"), 1e-12)
    return Check("cg_monotone", worst, 1e-12)


def gradient_errors(rng, coords=20, n=8, channels=2, step=1e-5):
    """Relative errors between ``2 C (A w - b)`` and central differences."""
    Z, alphas, reg, C, rho = random_problem(rng, n, channels)
    shape = Z.shape[1:]
    w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    grad = 2.0 * C * (margin.normal_operator_apply(w, Z, alphas, reg, C)
                      - margin.normal_rhs(Z, alphas, rho))
    errors = []
    for _ in range(coords):
        idx = tuple(int(rng.integers(0, s)) for s in shape)
        for part, unit in (("re", 1.0), ("im", 1j)):
            wp, wm = w.copy(), w.copy()
            wp[idx] += step * unit
            wm[idx] -= step * unit
            fd = (explicit_objective(wp, Z, alphas, reg, C, rho)
                  - explicit_objective(wm, Z, alphas, reg, C, rho)) / (2 * step)
            an = grad[idx].real if part == "re" else grad[idx].imag
            errors.append(abs(fd - an) / max(abs(fd), abs(an), 1e-12))
    return np.array(errors)


def check_gradient(rng, coords=20):
    return Check("gradient_check", float(np.max(gradient_errors(rng, coords))), 1e-4)


def check_interpolation(rng, sizes=(4, 8, 16), points=100, bandwidth=100_000):
    worst = 0.0
    for n in sizes:
        values = rng.standard_normal((n, n))
        pts = rng.uniform(0.0, n, (points, 2))
        fourier = cconv.evaluate_interpolation(values, float(n), pts, bandwidth)
        worst = max(worst, float(np.max(np.abs(fourier - direct_interpolation(
            values, float(n), pts)))))
    return Check("interpolation_oracle", worst, 1e-8)


def run_all(seed=0):
    """Run every check with a generator seeded from ``seed``."""
    rng = np.random.default_rng(seed)
    return [
        check_label_identity(rng),
        check_parseval(rng),
        check_gaussian_label(),
        check_dense_cg(rng),
        check_cg_monotone(rng),
        check_gradient(rng),
        check_interpolation(rng),
    ]
