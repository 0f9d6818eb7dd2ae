"""Sequences, synthetic data, the reset-based evaluation protocol and metrics."""

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tracker as trk
from .errors import FormatError
from .imaging import BoundingBox, Frame, load_frame, save_pgm

TRACKING, FAILED, REINIT, BURN_IN = "T", "F", "R", "B"
_FRAME_RE = re.compile(r"^\d+\.(png|pgm)$", re.IGNORECASE)


@dataclass
class Sequence:
    """Frames (paths or :class:`Frame` objects) with one ground-truth box each."""

    frames: list
    ground_truth: list
    name: str = "sequence"

    def __post_init__(self):
        if len(self.frames) != len(self.ground_truth):
            raise FormatError(f"{self.name}: {len(self.frames)} frames vs "
                              f"{len(self.ground_truth)} ground-truth boxes")
        if len(self.frames) < 2:
            raise FormatError(f"{self.name}: a sequence needs at least 2 frames")

    def __len__(self):
        return len(self.frames)

    def frame(self, i):
        f = self.frames[i]
        return f if isinstance(f, Frame) else load_frame(f)

    def truncated(self, n):
        return Sequence(self.frames[:n], self.ground_truth[:n], self.name)


def iou(a, b):
    """Intersection over union of two axis-aligned boxes."""
    ax0, ay0 = a.cx - a.w / 2, a.cy - a.h / 2
    bx0, by0 = b.cx - b.w / 2, b.cy - b.h / 2
    iw = min(ax0 + a.w, bx0 + b.w) - max(ax0, bx0)
    ih = min(ay0 + a.h, by0 + b.h) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # rounding in the edge coordinates can push identical boxes a hair above 1
    return min(1.0, inter / (a.w * a.h + b.w * b.h - inter))


def parse_groundtruth_line(line, lineno):
    try:
        vals = [float(v) for v in re.split(r"[,\s]+", line.strip()) if v]
    except ValueError:
        raise FormatError(f"groundtruth.txt line {lineno}: cannot parse {line.strip()!r}") from None
    if len(vals) == 4:
        x, y, w, h = vals
    elif len(vals) == 8:
        xs, ys = vals[0::2], vals[1::2]
        x, y = min(xs), min(ys)
        w, h = max(xs) - x, max(ys) - y
    else:
        raise FormatError(f"groundtruth.txt line {lineno}: expected 4 or 8 values, "
                          f"got {len(vals)}")
    try:
        return BoundingBox.from_corner(x, y, w, h)
    except ValueError as exc:
        raise FormatError(f"groundtruth.txt line {lineno}: {exc}") from None


def load_sequence(directory):
    """Read a VOT-style directory: numbered PNG/PGM frames plus ``groundtruth.txt``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"{directory}: not a directory")
    gt_path = directory / "groundtruth.txt"
    if not gt_path.is_file():
        raise FormatError(f"{gt_path}: missing ground truth file")
    lines = [ln for ln in gt_path.read_text().splitlines() if ln.strip()]
    boxes = [parse_groundtruth_line(ln, i) for i, ln in enumerate(lines, 1)]
    frames = sorted(p for p in directory.iterdir() if _FRAME_RE.match(p.name))
    if len(frames) != len(boxes):
        raise FormatError(f"{directory}: frame/ground-truth count mismatch "
                          f"({len(frames)} vs {len(boxes)})")
    return Sequence(frames, boxes, directory.name)


@dataclass(frozen=True)
class SynthSpec:
    """Motion and appearance of a synthetic sequence.

    ``motion`` is ``"linear"`` (``velocity`` px/frame) or ``"sinusoidal"``
    (``amplitude`` px per axis, ``period`` frames, quarter-period phase lag
    between x and y). ``scale_drift`` is the total relative size change over
    the sequence, applied linearly.
    """

    frames: int = 100
    size: tuple = (200, 200)
    target: tuple = (40.0, 40.0)
    start: tuple = None
    motion: str = "sinusoidal"
    velocity: tuple = (0.0, 0.0)
    amplitude: tuple = (10.0, 10.0)
    period: float = 25.0
    scale_drift: float = 0.0
    noise: float = 0.02
    contrast: float = 0.6


def synth_kinematics(spec):
    """Ground-truth boxes of a :class:`SynthSpec`, frame 0 first."""
    W, H = spec.size
    x0, y0 = spec.start if spec.start is not None else (W / 2.0, H / 2.0)
    boxes = []
    for t in range(spec.frames):
        if spec.motion == "linear":
            cx, cy = x0 + spec.velocity[0] * t, y0 + spec.velocity[1] * t
        elif spec.motion == "sinusoidal":
            ph = 2.0 * np.pi * t / spec.period
            cx = x0 + spec.amplitude[0] * np.sin(ph)
            cy = y0 + spec.amplitude[1] * np.sin(ph - np.pi / 2.0) + spec.amplitude[1]
        else:
            raise ValueError(f"unknown motion {spec.motion!r}")
        s = 1.0 + spec.scale_drift * t / max(spec.frames - 1, 1)
        boxes.append(BoundingBox(cx, cy, spec.target[0] * s, spec.target[1] * s))
    return boxes


def _texture(rng, n=16):
    coarse = rng.uniform(0.0, 1.0, (n, n))
    fine = rng.uniform(0.0, 1.0, (4 * n, 4 * n))
    tex = np.kron(coarse, np.ones((4, 4))) * 0.7 + fine * 0.3
    return (tex - tex.min()) / (tex.max() - tex.min())


def _bilinear_lookup(tex, u, v):
    n1, n2 = tex.shape
    y = np.clip(v * n1 - 0.5, 0, n1 - 1)
    x = np.clip(u * n2 - 0.5, 0, n2 - 1)
    y0 = np.minimum(np.floor(y).astype(int), n1 - 2)
    x0 = np.minimum(np.floor(x).astype(int), n2 - 2)
    fy, fx = y - y0, x - x0
    top = tex[y0, x0] * (1 - fx) + tex[y0, x0 + 1] * fx
    bot = tex[y0 + 1, x0] * (1 - fx) + tex[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def synth_sequence(spec=None, seed=0, name=None):
    """Render a textured rectangle moving over a low-contrast noise background."""
    spec = spec or SynthSpec()
    W, H = spec.size
    boxes = synth_kinematics(spec)
    for b in boxes:
        if b.w >= W or b.h >= H:
            raise ValueError(f"target {b.w:.1f}x{b.h:.1f} does not fit a {W}x{H} frame")
    rng = np.random.default_rng(seed)
    tex = _texture(rng)
    background = 0.5 + 0.1 * (_bilinear_lookup(_texture(rng, 32), *np.meshgrid(
        (np.arange(W) + 0.5) / W, (np.arange(H) + 0.5) / H)) - 0.5)
    xs = np.arange(W) + 0.5
    ys = np.arange(H) + 0.5
    frames = []
    for b in boxes:
        u = (xs - (b.cx - b.w / 2)) / b.w
        v = (ys - (b.cy - b.h / 2)) / b.h
        inside = ((u >= 0) & (u < 1))[None, :] & ((v >= 0) & (v < 1))[:, None]
        uu, vv = np.meshgrid(u, v)
        target = 0.5 + spec.contrast * (_bilinear_lookup(tex, uu, vv) - 0.5)
        img = np.where(inside, target, background)
        img = img + spec.noise * rng.standard_normal(img.shape)
        frames.append(Frame(np.clip(img, 0.0, 1.0)))
    return Sequence(frames, boxes, name or f"synth-{seed}")


def write_sequence(seq, directory):
    """Write a sequence in VOT layout (8-digit PGM frames + ``groundtruth.txt``)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(len(seq)):
        save_pgm(directory / f"{i + 1:08d}.pgm", seq.frame(i))
    with open(directory / "groundtruth.txt", "w") as fh:
        for b in seq.ground_truth:
            x, y, w, h = b.corner
            fh.write(f"{x:.4f},{y:.4f},{w:.4f},{h:.4f}\n")


@dataclass
class FrameRecord:
    status: str
    bbox: BoundingBox = None
    overlap: float = None
    score: float = None


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    failure_count: int = 0
    skip: int = 5
    burn_in: int = 10

    @property
    def statuses(self):
        return "".join(r.status for r in self.records)


@dataclass
class Metrics:
    accuracy: float
    robustness: int
    frames_evaluated: int
    fps: float


class TrackerAdapter:
    """The production tracker behind the ``initialize`` / ``update`` interface."""

    def __init__(self, config=None, trace=None):
        self.config = config or trk.TrackerConfig()
        self.trace = trace
        self.state = None

    def initialize(self, frame, bbox):
        self.state = trk.init(frame, bbox, self.config, trace=self.trace)

    def update(self, frame):
        self.state, bbox, score = trk.step(self.state, frame, trace=self.trace)
        return bbox, score


class OracleTracker:
    """Replays ground truth; used to check the protocol and the CLI plumbing."""

    def __init__(self, ground_truth):
        self.ground_truth = ground_truth
        self.index = 0

    def initialize(self, frame, bbox):
        self.index = self.ground_truth.index(bbox)

    def update(self, frame):
        self.index += 1
        return self.ground_truth[self.index], 1.0


def run_reset_protocol(seq, tracker, skip=5, burn_in=10, resets=True):
    """Evaluate ``tracker`` on ``seq`` with failure detection and re-initialization.

    Initialization frames (frame 1 and every re-initialization) are marked
    ``R``. A frame with zero overlap is ``F``; the tracker is re-initialized
    from ground truth ``max(skip, 1)`` frames later and the frames in between
    are ``R`` as well, so a tracker that always fails produces one failure per
    ``1 + skip`` frames. The first ``burn_in`` tracked frames after a
    re-initialization are ``B`` and are excluded from accuracy (their
    failures still count). With ``resets=False`` tracking continues through
    failures.
    """
    if skip < 0 or burn_in < 0:
        raise ValueError("skip and burn_in must be >= 0")
    result = RunResult(skip=skip, burn_in=burn_in)
    records = result.records
    n = len(seq)
    i = 0
    need_init, first, burn = True, True, 0
    while i < n:
        try:
            if need_init:
                tracker.initialize(seq.frame(i), seq.ground_truth[i])
                records.append(FrameRecord(REINIT, seq.ground_truth[i]))
                burn = 0 if first else burn_in
                need_init = first = False
                i += 1
                continue
            bbox, score = tracker.update(seq.frame(i))
        except Exception as exc:
            # same effect as add_note on 3.11+
            exc.__notes__ = [*getattr(exc, "__notes__", []), f"at frame {i + 1} of {seq.name}"]
            raise
        ov = iou(bbox, seq.ground_truth[i])
        if ov <= 0.0:
            records.append(FrameRecord(FAILED, bbox, 0.0, score))
            result.failure_count += 1
            if resets:
                gap = max(skip, 1)
                records.extend(FrameRecord(REINIT) for _ in range(i + 1, min(i + gap, n)))
                i += gap
                need_init = True
                continue
        else:
            records.append(FrameRecord(BURN_IN if burn > 0 else TRACKING, bbox, ov, score))
        burn = max(burn - 1, 0)
        i += 1
    return result


def compute_metrics(result, elapsed):
    """Accuracy (mean overlap of ``T`` frames, ``None`` if there are none),
    robustness (failure count) and throughput."""
    overlaps = [r.overlap for r in result.records if r.status == TRACKING]
    accuracy = float(np.mean(overlaps)) if overlaps else None
    fps = len(result.records) / elapsed if elapsed > 0 else float("inf")
    return Metrics(accuracy, result.failure_count, len(overlaps), fps)


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def write_results_csv(path, result):
    """One line per frame: ``frame_index,status,x,y,w,h,overlap,score`` (top-left boxes)."""
    with open(path, "w", newline="") as fh:
        fh.write("frame_index,status,x,y,w,h,overlap,score\n")
        for idx, r in enumerate(result.records, 1):
            box = r.bbox.corner if r.bbox is not None else (None,) * 4
            fields_ = [str(idx), r.status] + [_fmt(v) for v in box]
            fields_ += [_fmt(r.overlap), _fmt(r.score)]
            fh.write(",".join(fields_) + "\n")


def write_metrics_json(path, metrics, result, sequence, config_hash):
    payload = {
        "accuracy": metrics.accuracy,
        "robustness": metrics.robustness,
        "frames_evaluated": metrics.frames_evaluated,
        "fps": metrics.fps,
        "sequence": sequence,
        "config_hash": config_hash,
        "skip": result.skip,
        "burn_in": result.burn_in,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return payload


def evaluate(seq, tracker, skip=5, burn_in=10, resets=True):
    """Run the protocol and time it; returns ``(result, metrics)``."""
    start = time.perf_counter()
    result = run_reset_protocol(seq, tracker, skip, burn_in, resets)
    return result, compute_metrics(result, time.perf_counter() - start)
