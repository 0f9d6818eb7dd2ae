import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from margintrack import bench
from margintrack.bench import (FrameRecord, RunResult, Sequence, SynthSpec, compute_metrics, iou,
                               load_sequence, run_reset_protocol, synth_kinematics,
                               synth_sequence, write_metrics_json, write_results_csv,
                               write_sequence)
from margintrack.errors import FormatError
from margintrack.imaging import BoundingBox, Frame, save_pgm


# -- iou -----------------------------------------------------------------------------

def test_iou_examples():
    a = BoundingBox(1, 1, 2, 2)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(10, 10, 2, 2)) == 0.0
    assert iou(a, BoundingBox(2, 2, 2, 2)) == pytest.approx(1 / 7, abs=1e-15)
    assert iou(a, BoundingBox(3, 1, 2, 2)) == 0.0  # touching edges


boxes = st.builds(BoundingBox, st.floats(-50, 50), st.floats(-50, 50), st.floats(0.1, 40),
                  st.floats(0.1, 40))


@settings(max_examples=200)
@given(boxes, boxes)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == pytest.approx(1.0, abs=1e-12)


# -- sequence loading ----------------------------------------------------------------

def make_dir(path, n_frames, lines):
    path.mkdir()
    for i in range(n_frames):
        save_pgm(path / f"{i + 1:08d}.pgm", Frame(np.full((8, 8), i / 10)))
    (path / "groundtruth.txt").write_text("\n".join(lines) + "\n")
    return path


def test_four_value_lines_are_top_left(tmp_path):
    seq = load_sequence(make_dir(tmp_path / "s", 2, ["10,20,30,40", "0,0,4,4"]))
    b = seq.ground_truth[0]
    assert (b.cx, b.cy, b.w, b.h) == (25.0, 40.0, 30.0, 40.0)
    assert len(seq) == 2 and seq.name == "s"
    assert seq.frame(1).intensity[0, 0] == pytest.approx(0.1, abs=1 / 255)


def test_polygon_lines_become_enclosing_boxes(tmp_path):
    r = math.sqrt(2) / 2
    poly = ",".join(f"{v:.12f}" for v in (r, 0, 0, r, -r, 0, 0, -r))
    seq = load_sequence(make_dir(tmp_path / "s", 2, [poly, "1,1,2,2"]))
    b = seq.ground_truth[0]
    assert b.w == pytest.approx(math.sqrt(2)) and b.h == pytest.approx(math.sqrt(2))
    assert b.cx == pytest.approx(0.0, abs=1e-12) and b.cy == pytest.approx(0.0, abs=1e-12)


def test_count_mismatch_names_counts(tmp_path):
    with pytest.raises(FormatError, match="3 vs 2"):
        load_sequence(make_dir(tmp_path / "s", 3, ["1,1,2,2", "1,1,2,2"]))


def test_unparseable_line_is_located(tmp_path):
    with pytest.raises(FormatError, match="line 2"):
        load_sequence(make_dir(tmp_path / "s", 2, ["1,1,2,2", "1,x,2,2"]))
    with pytest.raises(FormatError, match="line 1.*4 or 8"):
        load_sequence(make_dir(tmp_path / "t", 2, ["1,1,2", "1,1,2,2"]))


def test_missing_inputs(tmp_path):
    with pytest.raises(FormatError, match="not a directory"):
        load_sequence(tmp_path / "nope")
    (tmp_path / "empty").mkdir()
    with pytest.raises(FormatError, match="groundtruth.txt"):
        load_sequence(tmp_path / "empty")


def test_sequence_needs_two_frames():
    with pytest.raises(FormatError):
        Sequence([Frame(np.zeros((4, 4)))], [BoundingBox(2, 2, 2, 2)])


# -- synthetic sequences -------------------------------------------------------------

def test_zero_velocity_keeps_boxes_fixed():
    boxes = synth_kinematics(SynthSpec(frames=12, motion="linear"))
    assert all(b == boxes[0] for b in boxes)


def test_linear_motion():
    spec = SynthSpec(frames=20, motion="linear", velocity=(2.0, 0.0), start=(50.0, 50.0))
    b = synth_kinematics(spec)[10]
    assert (b.cx, b.cy) == (70.0, 50.0)


def test_kinematics_independent_recomputation():
    spec = SynthSpec(frames=100, amplitude=(10.0, 7.0), period=25.0, scale_drift=-0.1,
                     target=(30.0, 20.0))
    seq = synth_sequence(spec, seed=3)
    t = np.arange(100)
    ph = 2 * np.pi * t / 25.0
    cx = 100 + 10 * np.sin(ph)
    cy = 100 + 7 * (1 - np.cos(ph))
    s = 1 - 0.1 * t / 99
    got = np.array([[b.cx, b.cy, b.w, b.h] for b in seq.ground_truth])
    np.testing.assert_allclose(got, np.column_stack([cx, cy, 30 * s, 20 * s]), atol=1e-12)
    speed = np.hypot(np.diff(got[:, 0]), np.diff(got[:, 1]))
    assert speed.max() <= 4.0


def test_synth_is_deterministic_and_seeded():
    spec = SynthSpec(frames=3)
    a, b = synth_sequence(spec, seed=5), synth_sequence(spec, seed=5)
    c = synth_sequence(spec, seed=6)
    for i in range(3):
        assert a.frame(i).intensity.tobytes() == b.frame(i).intensity.tobytes()
    assert not np.array_equal(a.frame(0).intensity, c.frame(0).intensity)


def test_target_is_rendered_where_ground_truth_says():
    spec = SynthSpec(frames=2, noise=0.0, motion="linear", start=(60.3, 80.7))
    seq = synth_sequence(spec, seed=0)
    img = seq.frame(0).intensity
    b = seq.ground_truth[0]
    inside = img[int(b.cy - 15):int(b.cy + 15), int(b.cx - 15):int(b.cx + 15)]
    outside = img[:40, :]
    # the target spans the full texture range, the background only a tenth of it
    assert np.ptp(inside) > 3 * np.ptp(outside)


def test_target_larger_than_frame():
    with pytest.raises(ValueError):
        synth_sequence(SynthSpec(frames=2, size=(64, 64), target=(80.0, 20.0)))
    with pytest.raises(ValueError):
        synth_kinematics(SynthSpec(frames=2, motion="zigzag"))


def test_write_and_reload(tmp_path):
    seq = synth_sequence(SynthSpec(frames=3, size=(64, 48), target=(12.0, 10.0)), seed=2)
    write_sequence(seq, tmp_path / "out")
    back = load_sequence(tmp_path / "out")
    assert len(back) == 3
    for a, b in zip(seq.ground_truth, back.ground_truth):
        np.testing.assert_allclose([a.cx, a.cy, a.w, a.h], [b.cx, b.cy, b.w, b.h], atol=1e-4)
    np.testing.assert_allclose(back.frame(2).intensity, seq.frame(2).intensity, atol=1 / 255)


# -- reset protocol ------------------------------------------------------------------

GT = BoundingBox(50, 50, 10, 10)
FAR = BoundingBox(500, 500, 10, 10)


class ScriptedTracker:
    """Answers frame ``i`` with ``script[i]``; frames carry their index as intensity."""

    def __init__(self, script):
        self.script = script
        self.inits = []

    def initialize(self, frame, bbox):
        self.inits.append(int(frame.intensity[0, 0]))

    def update(self, frame):
        return self.script[int(frame.intensity[0, 0])], 0.5


def indexed_sequence(n):
    return Sequence([Frame(np.full((2, 2), float(i))) for i in range(n)], [GT] * n, "stub")


def shifted(dx):
    return BoundingBox(GT.cx + dx, GT.cy, GT.w, GT.h)


def test_always_failing_stub_trace():
    # frame 1 init; each failure is followed by skip-1 skipped frames and a re-init
    # 1 R | 2 F | 3-6 R | 7 R(init) | 8 F | 9-12 R | 13 R | 14 F | 15-18 R | 19 R | 20 F
    tracker = ScriptedTracker({i: FAR for i in range(20)})
    result = run_reset_protocol(indexed_sequence(20), tracker, skip=5, burn_in=10)
    assert result.statuses == "RF" + "RRRRRF" * 3
    assert result.failure_count == 4
    assert tracker.inits == [0, 6, 12, 18]
    m = compute_metrics(result, 1.0)
    assert m.accuracy is None and m.robustness == 4 and m.frames_evaluated == 0


def test_mixed_stub_trace():
    # skip=2, burn_in=3 over 16 frames:
    # 1 R | 2 T 1.0 | 3 T 1/3 | 4 F | 5 R | 6 R(init) | 7 B | 8 F (inside burn-in, counted)
    # | 9 R | 10 R(init) | 11-13 B | 14 T 1.0 | 15 T 1/3 | 16 T 1.0
    third = shifted(5.0)  # overlap 50 / 150
    script = {i: GT for i in range(16)}
    script.update({2: third, 3: FAR, 7: FAR, 14: third})
    tracker = ScriptedTracker(script)
    result = run_reset_protocol(indexed_sequence(16), tracker, skip=2, burn_in=3)
    assert result.statuses == "RTTFRRBFRRBBBTTT"
    assert result.failure_count == 2
    assert tracker.inits == [0, 5, 9]
    m = compute_metrics(result, 2.0)
    assert m.accuracy == pytest.approx((3 + 2 / 3) / 5, abs=1e-12)
    assert m.robustness == 2 and m.frames_evaluated == 5 and m.fps == 8.0


def test_burn_in_excluded_from_accuracy():
    script = {i: GT for i in range(16)}
    script.update({2: FAR, 6: shifted(5.0), 11: shifted(5.0)})
    result = run_reset_protocol(indexed_sequence(16), ScriptedTracker(script), skip=1,
                                burn_in=4)
    # 1 R | 2 T | 3 F | 4 R(init) | 5-8 B (7 has 1/3) | 9-16 T (12 has 1/3)
    assert result.statuses == "RTFR" + "B" * 4 + "T" * 8
    m = compute_metrics(result, 1.0)
    assert m.accuracy == pytest.approx((8 + 1 / 3) / 9, abs=1e-12)
    assert m.robustness == 1


def test_oracle_is_perfect():
    seq = synth_sequence(SynthSpec(frames=15), seed=0)
    result, m = bench.evaluate(seq, bench.OracleTracker(seq.ground_truth))
    assert m.accuracy == 1.0 and m.robustness == 0
    assert result.statuses == "R" + "T" * 14


def test_no_reset_mode_continues_through_failures():
    result = run_reset_protocol(indexed_sequence(6), ScriptedTracker({i: FAR for i in range(6)}),
                                resets=False)
    assert result.statuses == "RFFFFF" and result.failure_count == 5


def test_protocol_argument_errors():
    with pytest.raises(ValueError):
        run_reset_protocol(indexed_sequence(3), ScriptedTracker({}), skip=-1)


def test_tracker_errors_carry_frame_index():
    class Broken(ScriptedTracker):
        def update(self, frame):
            raise ArithmeticError("boom")

    with pytest.raises(ArithmeticError) as info:
        run_reset_protocol(indexed_sequence(4), Broken({}))
    assert "at frame 2 of stub" in "".join(info.value.__notes__)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from([0.0, 2.0, 5.0, 9.0, 400.0]), min_size=2, max_size=40),
       st.integers(0, 6), st.integers(0, 6))
def test_status_partition(shifts, skip, burn_in):
    n = len(shifts)
    script = {i: shifted(d) for i, d in enumerate(shifts)}
    seq = indexed_sequence(n)
    result = run_reset_protocol(seq, ScriptedTracker(script), skip=skip, burn_in=burn_in)
    again = run_reset_protocol(seq, ScriptedTracker(script), skip=skip, burn_in=burn_in)
    assert len(result.records) == n
    assert set(result.statuses) <= set("TFRB")
    assert result.statuses[0] == "R"
    assert result.failure_count == result.statuses.count("F")
    for r in result.records:
        if r.status == "F":
            assert r.overlap == 0.0
        if r.status in "TB":
            assert 0.0 < r.overlap <= 1.0
        if r.status == "R":
            assert r.overlap is None
    assert result == again


# -- metrics and output files --------------------------------------------------------

def test_metrics_examples():
    r = RunResult([FrameRecord("R", GT), FrameRecord("T", GT, 1.0, 1.0),
                   FrameRecord("T", GT, 0.5, 1.0)])
    m = compute_metrics(r, 1.0)
    assert m.accuracy == 0.75 and m.robustness == 0
    burn = RunResult([FrameRecord("B", GT, 0.9)] * 3)
    assert compute_metrics(burn, 1.0).accuracy is None
    assert compute_metrics(RunResult([FrameRecord("T", GT, 1.0)] * 100), 4.0).fps == 25.0


def test_csv_and_json_formats(tmp_path):
    result = run_reset_protocol(indexed_sequence(4),
                                ScriptedTracker({1: GT, 2: FAR, 3: GT}), skip=5)
    write_results_csv(tmp_path / "r.csv", result)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "frame_index,status,x,y,w,h,overlap,score"
    assert lines[1] == "1,R,45.000000,45.000000,10.000000,10.000000,,"
    assert lines[2] == "2,T,45.000000,45.000000,10.000000,10.000000,1.000000,0.500000"
    assert lines[3].startswith("3,F,495.000000,") and lines[3].endswith(",0.000000,0.500000")
    assert lines[4] == "4,R,,,,,,"
    m = compute_metrics(result, 2.0)
    payload = write_metrics_json(tmp_path / "r.json", m, result, "stub", "abc")
    on_disk = json.loads((tmp_path / "r.json").read_text())
    assert on_disk == payload
    assert {"accuracy", "robustness", "frames_evaluated", "fps", "sequence",
            "config_hash"} <= set(on_disk)
    assert on_disk["accuracy"] == 1.0 and on_disk["robustness"] == 1
    assert (on_disk["skip"], on_disk["burn_in"]) == (5, 10)
