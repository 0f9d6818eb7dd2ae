import numpy as np
import pytest

from margintrack import bench, cconv, margin
from margintrack.selftest import random_hermitian


def learning_problem(rng, n=16, channels=3, samples=3, C=50.0, mu=0.1, eta=0.5):
    """Random samples in a memory plus the label machinery of an ``n``-cell domain."""
    K = cconv.truncation(n)
    shape = (channels, 2 * K + 1, 2 * K + 1)
    T = float(n)
    center = (T / 2, T / 2)
    label = cconv.gaussian_fourier(n / 10.0, center, T, K)
    loss_hat = cconv.loss_fourier(label)
    reg = margin.regularizer_coeffs(n / 6.0, mu, eta, T)
    memory = margin.SampleMemory(capacity=10, learning_rate=0.3)
    for _ in range(samples):
        memory = memory.insert(random_hermitian(rng, shape))
    cfg = margin.TrainConfig(C=C, cg_iters=3, alt_iters=4, init_iters=20, cg_tol=0.0)
    return dict(memory=memory, reg=reg, loss_hat=loss_hat, center=center, G=(4 * n, 4 * n),
                cfg=cfg, shape=shape)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_sequence():
    """A 20-frame textured target moving sinusoidally, shared across tests."""
    return bench.synth_sequence(bench.SynthSpec(frames=20), seed=0)


_CRITERIA = {}


def report(number, passed, detail):
    """Record the outcome of acceptance criterion ``number`` for the run summary."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    _CRITERIA[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
