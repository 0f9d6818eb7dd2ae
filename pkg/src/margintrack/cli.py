"""Command-line entry points: ``track``, ``eval``, ``synth`` and ``selftest``.

Exit codes: 0 success, 1 selftest failure, 2 input or format error,
3 numerical error.
"""

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

from . import bench, cconv, selftest
from .errors import FormatError
from .tracker import load_config

EXIT_OK, EXIT_SELFTEST, EXIT_FORMAT, EXIT_NUMERICAL = 0, 1, 2, 3


def _load(directory, frames):
    seq = bench.load_sequence(directory)
    if frames is not None:
        if frames < 2:
            raise FormatError("--frames must be at least 2")
        seq = seq.truncated(frames)
    return seq


def cmd_track(args):
    config = load_config(args.config)
    seq = _load(args.sequence, args.frames)
    trace = open(args.trace, "a") if args.trace else None
    try:
        result = bench.run_reset_protocol(seq, bench.TrackerAdapter(config, trace),
                                          skip=0, burn_in=0, resets=False)
    finally:
        if trace is not None:
            trace.close()
    bench.write_results_csv(args.output, result)
    return EXIT_OK


def _eval_one(directory, config_path, csv_path, skip, burn_in, oracle, frames):
    config = load_config(config_path)
    seq = _load(directory, frames)
    tracker = (bench.OracleTracker(seq.ground_truth) if oracle
               else bench.TrackerAdapter(config))
    result, metrics = bench.evaluate(seq, tracker, skip, burn_in)
    bench.write_results_csv(csv_path, result)
    return bench.write_metrics_json(Path(csv_path).with_suffix(".json"), metrics, result,
                                    seq.name, config.digest())


def cmd_eval(args):
    dirs = [Path(d) for d in args.sequences]
    if len(dirs) == 1:
        outputs = [Path(args.output)]
    else:
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = [out_dir / f"{d.name}.csv" for d in dirs]
    jobs = [(str(d), args.config, str(o), args.skip, args.burn_in, args.oracle, args.frames)
            for d, o in zip(dirs, outputs)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_eval_one, *zip(*jobs)))
    else:
        summaries = [_eval_one(*job) for job in jobs]
    for s in summaries:
        acc = "n/a" if s["accuracy"] is None else f"{s['accuracy']:.4f}"
        print(f"{s['sequence']}: accuracy {acc} robustness {s['robustness']} "
              f"fps {s['fps']:.2f}")
    return EXIT_OK


def _pair(text, kind=float):
    parts = [p for p in text.replace("x", ",").split(",") if p]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise FormatError(f"expected one or two numbers, got {text!r}")
    try:
        return tuple(kind(p) for p in parts)
    except ValueError:
        raise FormatError(f"bad number in {text!r}") from None


def _parse_motion(text):
    """``linear:vx,vy``, ``sinusoidal`` or ``sinusoidal:ax,ay``."""
    name, _, params = text.partition(":")
    if name == "linear":
        return {"motion": "linear", "velocity": _pair(params or "0")}
    if name == "sinusoidal":
        out = {"motion": "sinusoidal"}
        if params:
            out["amplitude"] = _pair(params)
        return out
    raise FormatError(f"unknown motion {text!r} (use linear:vx,vy or sinusoidal[:ax,ay])")


def _read_synth_spec(path):
    """``key = value`` file whose keys mirror the synth flags."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read spec {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        values[key.replace("-", "_")] = value
    return values


_SYNTH_FIELDS = {f.name for f in fields(bench.SynthSpec)}


def _synth_spec(args):
    raw = _read_synth_spec(args.spec) if args.spec else {}
    for key in ("frames", "size", "target", "motion", "scale_drift", "noise", "period",
                "contrast", "start"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    params = {}
    for key, value in raw.items():
        value = str(value)
        if key == "motion":
            params.update(_parse_motion(value))
        elif key == "size":
            params["size"] = _pair(value, int)
        elif key in ("target", "start", "velocity", "amplitude"):
            params[key] = _pair(value)
        elif key == "frames":
            params["frames"] = int(value)
        elif key in _SYNTH_FIELDS:
            params[key] = float(value)
        elif key != "seed":
            raise FormatError(f"unknown synth key {key!r}")
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    return bench.SynthSpec(**params), seed


def cmd_synth(args):
    try:
        spec, seed = _synth_spec(args)
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if spec.frames < 2:
        raise FormatError(f"frames = {spec.frames}: a sequence needs at least 2 frames")
    seq = bench.synth_sequence(spec, seed, name=Path(args.output).name)
    bench.write_sequence(seq, args.output)
    print(f"wrote {len(seq)} frames to {args.output}")
    return EXIT_OK


def cmd_selftest(args):
    cconv.set_phase_fault(args.inject_fault)
    try:
        checks = selftest.run_all(args.seed)
    finally:
        cconv.set_phase_fault(False)
    for check in checks:
        print(check.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_SELFTEST


def build_parser():
    parser = argparse.ArgumentParser(prog="margintrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="track a sequence without resets")
    p.add_argument("sequence", help="VOT-layout directory")
    p.add_argument("-c", "--config", help="key = value configuration file")
    p.add_argument("-o", "--output", default="results.csv", help="per-frame CSV")
    p.add_argument("--frames", type=int, help="only use the first N frames")
    p.add_argument("--trace", help="append per-update diagnostics (NDJSON) here")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="evaluate with the reset protocol")
    p.add_argument("sequences", nargs="+", help="one or more VOT-layout directories")
    p.add_argument("-c", "--config", help="key = value configuration file")
    p.add_argument("-o", "--output", default="results.csv",
                   help="CSV path (one sequence) or output directory (several); "
                        "metrics go next to each CSV with a .json suffix")
    p.add_argument("--skip", type=int, default=5, help="frames skipped after a failure")
    p.add_argument("--burn-in", type=int, default=10,
                   help="frames excluded from accuracy after a re-initialization")
    p.add_argument("--frames", type=int, help="only use the first N frames")
    p.add_argument("--jobs", type=int, default=1, help="sequences evaluated in parallel")
    p.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic sequence")
    p.add_argument("output", help="output directory")
    p.add_argument("--spec", help="key = value file with any of the flags below")
    p.add_argument("--frames", type=int)
    p.add_argument("--size", help="frame size W or WxH (px)")
    p.add_argument("--target", help="target size S or W,H (px)")
    p.add_argument("--start", help="initial target center X,Y (px)")
    p.add_argument("--motion", help="linear:vx,vy or sinusoidal[:ax,ay]")
    p.add_argument("--period", type=float, help="sinusoid period (frames)")
    p.add_argument("--scale-drift", type=float, help="total relative size change")
    p.add_argument("--noise", type=float)
    p.add_argument("--contrast", type=float)
    p.add_argument("--seed", type=int, help="default 0")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("selftest", help="run the built-in verification suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)
    return parser


def _describe(exc):
    return "; ".join([str(exc), *getattr(exc, "__notes__", [])])


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArithmeticError as exc:
        print(f"numerical error: {_describe(exc)}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {_describe(exc)}", file=sys.stderr)
        return EXIT_FORMAT
