"""Time the compiled kernels against their numpy fallbacks.

Usage: ``python benchmarks/bench_kernels.py [--repeat N]``. Inputs have the
sizes the tracker uses (248 px patches, 62x62 cells, 9x9 regularizer kernel)
so the numbers reflect per-frame cost. Also times one full tracking step with
each backend active.
"""

import argparse
import timeit

import numpy as np

from margintrack import bench, tracker
from margintrack import _kernels
from margintrack._kernels import _fallback

try:
    from margintrack._kernels import _ext
except ImportError:
    _ext = None


def cases(rng):
    gx = rng.standard_normal((248, 248))
    gy = rng.standard_normal((248, 248))
    img = rng.uniform(size=(400, 400))
    coords = np.linspace(-5.0, 405.0, 248)
    x = rng.standard_normal((10, 61, 61)) + 1j * rng.standard_normal((10, 61, 61))
    kern = rng.standard_normal((9, 9)) + 1j * rng.standard_normal((9, 9))
    return {
        "orientation_histogram": ("orientation_histogram", (gx, gy, 4, 9)),
        "bilinear_sample": ("bilinear_sample", (img, coords, coords)),
        "sparse_conv_same": ("sparse_conv_same", (x, kern)),
    }


def time_call(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def time_step(impl, repeat):
    """One detect + update step (frame 5) with ``impl`` installed as the backend."""
    saved = _kernels._impl
    _kernels._impl = impl
    try:
        seq = bench.synth_sequence(bench.SynthSpec(frames=6), seed=0)
        state = tracker.init(seq.frame(0), seq.ground_truth[0])
        state = tracker.replace(state, frame_index=4)
        return min(timeit.repeat(lambda: tracker.step(state, seq.frame(5)), number=1,
                                 repeat=repeat))
    finally:
        _kernels._impl = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ext is None:
        print("compiled extension not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'cython ms':>12}{'numpy ms':>12}{'speedup':>10}")
    rows = [(name, fname, call_args) for name, (fname, call_args) in cases(rng).items()]
    for name, fname, call_args in rows:
        t_py = time_call(getattr(_fallback, fname), call_args, args.repeat)
        if _ext is not None:
            t_c = time_call(getattr(_ext, fname), call_args, args.repeat)
            print(f"{name:<24}{t_c * 1e3:>12.3f}{t_py * 1e3:>12.3f}{t_py / t_c:>10.2f}")
        else:
            print(f"{name:<24}{'-':>12}{t_py * 1e3:>12.3f}{'-':>10}")
    step_py = time_step(_fallback, max(1, args.repeat // 2))
    if _ext is not None:
        step_c = time_step(_ext, max(1, args.repeat // 2))
        print(f"{'tracker step (update)':<24}{step_c * 1e3:>12.1f}{step_py * 1e3:>12.1f}"
              f"{step_py / step_c:>10.2f}")
    else:
        print(f"{'tracker step (update)':<24}{'-':>12}{step_py * 1e3:>12.1f}{'-':>10}")


if __name__ == "__main__":
    main()
