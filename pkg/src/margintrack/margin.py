"""Large-margin learning of the structured filter.

The filter is trained by alternating two steps over a weighted sample memory:
a closed-form slack update on the evaluation grid, and a Conjugate Gradient
solve of the spatially regularized normal equations in the Fourier domain.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from ._kernels import sparse_conv_same
from .cconv import embed, evaluate_at, grid_coefficients, hermitian_part, sample_grid
from .errors import NumericalError


@dataclass(frozen=True)
class SpatialRegularizer:
    """Penalty ``gamma(t) = mu + eta * (q(d1) / r1^2 + q(d2) / r2^2)``.

    ``q(d) = (T / pi)^2 (sin^2(pi d / T) + sin^4(pi d / T) / 3)`` is a periodic
    quadratic in the signed distance ``d`` from the domain center: it agrees
    with ``d^2`` up to sixth order and has only harmonics ``|k| <= 2``.
    """

    coeffs: np.ndarray
    mu: float
    eta: float
    half_size: tuple
    period: tuple

    @property
    def gram_kernel(self):
        """Coefficients of ``gamma^2``, the kernel of the regularization operator."""
        g = self.coeffs
        n = g.shape[0]
        out = np.zeros((2 * n - 1, 2 * n - 1), dtype=np.complex128)
        for i in range(n):
            for j in range(n):
                if g[i, j] != 0:
                    out[i:i + n, j:j + n] += g[i, j] * g
        return out

    def values(self, t1, t2):
        """Direct evaluation of ``gamma`` at positions (broadcasting)."""
        return self.mu + self.eta * (
            periodic_quadratic(np.asarray(t1) - self.period[0] / 2, self.period[0])
            / self.half_size[0] ** 2
            + periodic_quadratic(np.asarray(t2) - self.period[1] / 2, self.period[1])
            / self.half_size[1] ** 2)


def periodic_quadratic(d, T):
    s2 = np.sin(np.pi * np.asarray(d, dtype=np.float64) / T) ** 2
    return (T / np.pi) ** 2 * (s2 + s2 * s2 / 3.0)


def regularizer_coeffs(half_size, mu, eta, period):
    """Build the sparse ``5 x 5`` Fourier representation of the penalty.

    ``half_size`` is half the target size in cells, one value per dimension.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    if eta < 0:
        raise ValueError("eta must be non-negative")
    half_size = tuple(float(h) for h in np.broadcast_to(half_size, (2,)))
    period = tuple(float(p) for p in np.broadcast_to(period, (2,)))
    coeffs = np.zeros((5, 5), dtype=np.complex128)
    coeffs[2, 2] = mu
    for d in range(2):
        T = period[d]
        scale = eta * (T / np.pi) ** 2 / half_size[d] ** 2
        # k = -2..2; the shift to the domain center makes the k = +-1 terms positive
        harmonics = np.array([1 / 48, 1 / 3, 5 / 8, 1 / 3, 1 / 48]) * scale
        if d == 0:
            coeffs[:, 2] += harmonics
        else:
            coeffs[2, :] += harmonics
    return SpatialRegularizer(coeffs, float(mu), float(eta), half_size, period)


@dataclass(frozen=True)
class TrainConfig:
    C: float = 100.0
    cg_iters: int = 2
    alt_iters: int = 3
    init_iters: int = 30
    update_interval: int = 5
    cg_tol: float = 1e-5
    memory_size: int = 30
    learning_rate: float = 0.025
    grid_factor: int = 4

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        for name in ("cg_iters", "alt_iters", "init_iters", "update_interval", "memory_size",
                     "grid_factor"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")


@dataclass(frozen=True)
class TrainingSample:
    """One stored sample with its current slack field and confidence label.

    ``eps_hat`` and ``rho_hat`` live on the full evaluation-grid index set so
    they reproduce the grid values exactly; only their ``|k| <= K`` part
    enters the normal equations.
    """

    z: np.ndarray
    alpha: float
    s0: float = 0.0
    eps_hat: np.ndarray = None
    rho_hat: np.ndarray = None
    age: int = 0


@dataclass(frozen=True)
class SampleMemory:
    samples: tuple = ()
    capacity: int = 30
    learning_rate: float = 0.025

    @property
    def alphas(self):
        return np.array([s.alpha for s in self.samples])

    def stacked(self):
        return np.stack([s.z for s in self.samples])

    def insert(self, z):
        """Add a sample with weight ``learning_rate`` and decay the others.

        At capacity the lowest-weight sample (oldest on ties) is evicted first.
        """
        samples = [replace(s, alpha=s.alpha * (1.0 - self.learning_rate), age=s.age + 1)
                   for s in self.samples]
        if not samples:
            new_alpha = 1.0
        else:
            new_alpha = self.learning_rate
            if len(samples) >= self.capacity:
                weights = np.array([s.alpha for s in samples])
                ages = np.array([s.age for s in samples])
                victim = int(np.lexsort((-ages, weights))[0])
                del samples[victim]
        samples.append(TrainingSample(np.asarray(z, dtype=np.complex128), new_alpha))
        total = sum(s.alpha for s in samples)
        samples = [replace(s, alpha=s.alpha / total) for s in samples]
        return replace(self, samples=tuple(samples))


def update_slack(j_grid, loss_grid, s0):
    """Closed-form slack ``eps = max(0, s0 - j - loss)`` and its grid coefficients."""
    j_grid = np.asarray(j_grid, dtype=np.float64)
    loss_grid = np.asarray(loss_grid, dtype=np.float64)
    if j_grid.shape != loss_grid.shape:
        raise ValueError(f"grid shapes differ: {j_grid.shape} vs {loss_grid.shape}")
    eps = np.maximum(0.0, s0 - j_grid - loss_grid)
    return eps, grid_coefficients(eps)


def build_label(s0, loss_hat, eps_hat):
    """Confidence label ``rho = s0 - loss - eps`` in coefficient form."""
    loss_hat = np.asarray(loss_hat)
    eps_hat = np.asarray(eps_hat)
    shape = tuple(max(a, b) for a, b in zip(loss_hat.shape, eps_hat.shape))
    rho = -embed(loss_hat, shape) - embed(eps_hat, shape)
    rho[shape[0] // 2, shape[1] // 2] += s0
    return rho


def label_grid(s0, loss_grid, eps_grid):
    return s0 - np.asarray(loss_grid) - np.asarray(eps_grid)


def normal_operator_apply(w, Z, alphas, reg, C):
    """Left-hand side of the normal equations applied to the filter ``w``.

    ``sum_j alpha_j conj(Z_j) (Z_j . w) + (1 / C) (gamma^2 (*) w)``, where ``Z``
    is ``(J, L, n1, n2)`` and ``w`` is ``(L, n1, n2)``.
    """
    w = np.asarray(w)
    if Z.shape[1:] != w.shape:
        raise ValueError(f"filter shape {w.shape} does not match samples {Z.shape[1:]}")
    response = np.einsum("jlab,lab->jab", Z, w)
    data = np.einsum("j,jlab,jab->lab", np.asarray(alphas, dtype=np.float64), Z.conj(),
                     response)
    return data + sparse_conv_same(w, _gram(reg)) / C


def _gram(reg):
    return reg.gram_kernel if isinstance(reg, SpatialRegularizer) else np.asarray(reg)


def normal_rhs(Z, alphas, rho_hats):
    """``sum_j alpha_j conj(Z_j) rho_j`` restricted to the filter index set."""
    shape = Z.shape[-2:]
    rho = np.stack([embed(r, shape) for r in rho_hats])
    return np.einsum("j,jlab,jab->lab", np.asarray(alphas, dtype=np.float64), Z.conj(), rho)


def inner(u, v):
    """Real inner product of coefficient arrays."""
    return float(np.vdot(u, v).real)


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    objectives: list = field(default_factory=list)


def solve_cg(apply, rhs, x0, iters, tol=0.0, track_objective=False):
    """Conjugate Gradient on a Hermitian positive definite operator.

    Runs at most ``iters`` iterations from ``x0`` and stops once the relative
    residual drops below ``tol``. With ``track_objective`` the quadratic
    ``0.5 <x, Ax> - <x, b>`` is recorded after every iterate.
    """
    rhs = np.asarray(rhs, dtype=np.complex128)
    bnorm = np.sqrt(inner(rhs, rhs))
    if bnorm == 0.0:
        return CGResult(np.zeros_like(rhs), 0, 0.0, [0.0] if track_objective else [])
    x = np.array(x0, dtype=np.complex128, copy=True)
    Ax = apply(x)
    r = rhs - Ax
    rs = inner(r, r)
    if not np.isfinite(rs):
        raise NumericalError("non-finite initial residual", 0)
    objectives = []
    if track_objective:
        objectives.append(0.5 * inner(x, Ax) - inner(x, rhs))
    p = r.copy()
    it = 0
    while it < iters and np.sqrt(rs) / bnorm >= tol:
        Ap = apply(p)
        pAp = inner(p, Ap)
        if not np.isfinite(pAp) or pAp <= 0.0:
            if rs == 0.0:
                break
            raise NumericalError(f"CG breakdown at iteration {it}: p'Ap = {pAp}", it)
        step = rs / pAp
        x += step * p
        r -= step * Ap
        it += 1
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"non-finite iterate at CG iteration {it}", it)
        rs_new = inner(r, r)
        if track_objective:
            # 0.5 x'Ax - x'b = -0.5 x'(b + r)
            objectives.append(-0.5 * (inner(x, rhs) + inner(x, r)))
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CGResult(x, it, float(np.sqrt(rs) / bnorm), objectives)


def objective(w, memory, reg, C, loss_grid, G):
    """Full margin objective evaluated in the spatial domain on the ``G x G`` grid.

    ``||gamma w||^2 + C sum_j alpha_j mean_t (eps_j + loss - s0_j + j_j)^2``
    with each sample's stored ``s0`` and slack.
    """
    G = tuple(G)
    t1 = np.arange(G[0]) * reg.period[0] / G[0]
    t2 = np.arange(G[1]) * reg.period[1] / G[1]
    gamma = reg.values(t1[:, None], t2[None, :])
    reg_term = 0.0
    for wl in w:
        reg_term += float(np.mean((gamma * sample_grid(wl, G)) ** 2))
    data = 0.0
    for s in memory.samples:
        j = sample_grid(np.einsum("lab,lab->ab", w, s.z), G)
        eps = sample_grid(s.eps_hat, G)
        data += s.alpha * float(np.mean((eps + loss_grid - s.s0 + j) ** 2))
    return reg_term + C * data


def collaborative_update(w, memory, reg, cfg, loss_hat, center, G, new_sample=None,
                         first=False, trace=None, freeze_s0=False):
    """Insert a sample and run the alternating slack / filter optimization.

    Each of ``cfg.alt_iters`` alternations re-evaluates every stored sample
    with the current filter (``s0`` = response at ``center``), updates its
    slack and label, then runs ``cfg.cg_iters`` CG iterations warm-started
    from the current filter. With ``first`` the first alternation uses
    ``s0 = 1`` and zero slack (a plain regression on the Gaussian target) and
    the CG budget is ``cfg.init_iters`` in total. Returns ``(w, memory, info)``.

    ``freeze_s0`` keeps each sample's ``s0`` from the first alternation. The
    loop is then exact block-coordinate descent on the margin objective, which
    is non-increasing; re-estimating ``s0`` moves the objective itself.
    """
    if new_sample is not None:
        memory = memory.insert(new_sample)
    Z = memory.stacked()
    alphas = memory.alphas
    G = tuple(G)
    loss_grid = sample_grid(loss_hat, G)

    def apply(x):
        return normal_operator_apply(x, Z, alphas, reg, cfg.C)

    if first:
        budget = [max(cfg.init_iters - (cfg.alt_iters - 1) * cfg.cg_iters, 1)]
        budget += [cfg.cg_iters] * (cfg.alt_iters - 1)
    else:
        budget = [cfg.cg_iters] * cfg.alt_iters

    info = {"alternations": [], "objective": []}
    w = np.array(w, dtype=np.complex128, copy=True)
    for a, n_iter in enumerate(budget):
        samples = []
        for i, s in enumerate(memory.samples):
            if first and a == 0:
                s0 = 1.0
                eps_hat = np.zeros(G, dtype=np.complex128)
            else:
                resp = np.einsum("lab,lab->ab", w, s.z)
                if freeze_s0 and a > 0:
                    s0 = frozen[i]
                else:
                    s0 = evaluate_at(resp, center, reg.period)
                _, eps_hat = update_slack(sample_grid(resp, G), loss_grid, s0)
            samples.append(replace(s, s0=s0, eps_hat=eps_hat,
                                   rho_hat=build_label(s0, loss_hat, eps_hat)))
        memory = replace(memory, samples=tuple(samples))
        if a == 0:
            frozen = [s.s0 for s in samples]
        rhs = normal_rhs(Z, alphas, [s.rho_hat for s in memory.samples])
        result = solve_cg(apply, rhs, w, n_iter, cfg.cg_tol)
        # exact solutions are Hermitian; drop the rounding drift CG accumulates
        w = hermitian_part(result.x)
        entry = {"alternation": a, "cg_iterations": result.iterations,
                 "residual": result.residual}
        if trace is not None:
            entry["objective"] = objective(w, memory, reg, cfg.C, loss_grid, G)
        info["alternations"].append(entry)
    if trace is not None:
        trace.write(json.dumps(info, sort_keys=True) + "\n")
    return w, memory, info
