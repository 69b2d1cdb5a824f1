import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazegraph import gaze
from gazegraph.errors import ContractError, CoverageError, EmptyInputError, FormatError, OrderingError
from gazegraph.gaze import Fixation, GazeSample, ScreenGeometry

RATE_MS = 1000.0 / 1200.0


def stream(points, valid=None):
    """(n, 4) sample array at 1200 Hz from a list of (x, y)."""
    pts = np.asarray(points, dtype=float)
    t = np.arange(len(pts)) * RATE_MS
    v = np.ones(len(pts)) if valid is None else np.asarray(valid, dtype=float)
    return np.column_stack([t, pts, v])


def test_geometry_defaults():
    g = ScreenGeometry()
    assert (g.width_px, g.height_px, g.physical_width_mm, g.viewing_distance_mm) == (1920, 1080, 530.0, 600.0)


def test_geometry_rejects_nonpositive():
    with pytest.raises(ContractError):
        ScreenGeometry(viewing_distance_mm=0)


def test_px_deg_round_trip():
    g = ScreenGeometry()
    assert g.deg_to_px(g.px_to_deg(75.0)) == pytest.approx(75.0, rel=1e-12)


def test_stationary_second_is_one_fixation():
    samples = stream([(640.0, 360.0)] * 1200)
    fix = gaze.ivt_filter(samples)
    assert len(fix) == 1
    assert (fix[0].cx, fix[0].cy) == (640.0, 360.0)


def test_two_clusters_joined_by_jump():
    # 400 ms at A, 10 ms linear jump of 500 px, 400 ms at B
    n_hold, n_jump = 480, 12
    a, b = np.array([400.0, 500.0]), np.array([900.0, 500.0])
    jump = [a + (b - a) * (k + 1) / n_jump for k in range(n_jump)]
    pts = [a] * n_hold + jump + [b] * n_hold
    # hand velocity for one jump step: 500/12 px over one sample period
    mm = 500.0 / n_jump * 530.0 / 1920.0
    deg_per_s = math.degrees(math.atan(mm / 600.0)) / (RATE_MS / 1000.0)
    assert deg_per_s > 1000.0  # far above the 30 deg/s threshold
    fix = gaze.ivt_filter(stream(pts))
    assert len(fix) == 2
    assert fix[0].cx == pytest.approx(400.0) and fix[1].cx == pytest.approx(900.0)
    assert fix[0].end_ms < fix[1].start_ms


def test_all_invalid_is_empty_input():
    with pytest.raises(EmptyInputError):
        gaze.ivt_filter(stream([(1.0, 1.0)] * 10, valid=[0] * 10))


def test_non_monotone_timestamps():
    s = stream([(1.0, 1.0)] * 10)
    s[5, 0] = s[4, 0]
    with pytest.raises(OrderingError):
        gaze.ivt_filter(s)


def test_gaze_sample_objects_accepted():
    samples = [GazeSample(i * RATE_MS, 10.0, 10.0) for i in range(200)]
    assert len(gaze.ivt_filter(samples)) == 1


def test_short_runs_dropped():
    # 50 ms stationary is below the 60 ms minimum
    assert gaze.ivt_filter(stream([(5.0, 5.0)] * 60)) == []


def _random_walk(seed, n=3000):
    rng = np.random.default_rng(seed)
    steps = np.where(rng.uniform(size=(n, 1)) < 0.02, rng.normal(0, 60, (n, 2)), rng.normal(0, 0.05, (n, 2)))
    return stream(np.cumsum(steps, axis=0) + 500.0)


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_fixations_time_ordered_and_disjoint(seed):
    fix = gaze.ivt_filter(_random_walk(seed))
    for f in fix:
        assert f.end_ms > f.start_ms
    for f, g in zip(fix, fix[1:]):
        assert f.end_ms < g.start_ms


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(1.0, 100.0), st.floats(1.0, 100.0))
def test_lower_threshold_never_adds_fixation_samples(seed, t1, t2):
    lo, hi = sorted((t1, t2))
    s = _random_walk(seed, 800)
    a = gaze.classify_samples(s, lo)
    b = gaze.classify_samples(s, hi)
    assert a.sum() <= b.sum()
    assert not np.any(a & ~b)


# ---------------------------------------------------------------- assign_per_frame

def test_single_fixation_covers_all_frames():
    fr = gaze.assign_per_frame([Fixation(0.0, 1000.0, 3.0, 4.0)], np.arange(5) * 200.0)
    assert np.array_equal(fr, np.tile([3.0, 4.0], (5, 1)))


def test_gap_frames_inherit_previous():
    # frames 1..10 at t = 100 k; A covers frames 1-4, B covers frames 7-10
    times = np.arange(1, 11) * 100.0
    A = Fixation(100.0, 400.0, 1.0, 1.0)
    B = Fixation(700.0, 1000.0, 2.0, 2.0)
    track = gaze.assign_per_frame([A, B], times)
    expected = [1.0] * 6 + [2.0] * 4
    assert track[:, 0].tolist() == expected


def test_leading_frames_take_first_fixation():
    track = gaze.assign_per_frame([Fixation(500.0, 900.0, 7.0, 8.0)], [0.0, 100.0, 600.0])
    assert track[:, 0].tolist() == [7.0, 7.0, 7.0]


def test_zero_fixations_is_coverage_error():
    with pytest.raises(CoverageError):
        gaze.assign_per_frame([], [0.0, 1.0])


def test_unsorted_frame_times():
    with pytest.raises(OrderingError):
        gaze.assign_per_frame([Fixation(0.0, 10.0, 0.0, 0.0)], [5.0, 1.0])


@given(st.lists(st.floats(0, 5000), min_size=1, max_size=50), st.integers(1, 5))
def test_assign_is_total(times, n_fix):
    fixes = [Fixation(k * 300.0, k * 300.0 + 100.0, float(k), 0.0) for k in range(n_fix)]
    out = gaze.assign_per_frame(fixes, sorted(times))
    assert out.shape == (len(times), 2)


def test_samples_round_trip_through_ivt():
    rng = np.random.default_rng(4)
    frames = 40
    times = np.arange(frames) * 250.0
    track = np.repeat(rng.uniform(100, 900, (10, 2)), 4, axis=0)
    samples = gaze.samples_from_track(track, times, seed=1)
    rec = gaze.assign_per_frame(gaze.ivt_filter(samples), times)
    assert np.max(np.abs(rec - track)) < 0.5


def test_samples_from_track_length_mismatch():
    with pytest.raises(ContractError):
        gaze.samples_from_track(np.zeros((3, 2)), [0.0, 1.0])


# ---------------------------------------------------------------- ablation inputs

def test_random_track_deterministic():
    a = gaze.random_fixation_track(50, seed=9)
    assert np.array_equal(a, gaze.random_fixation_track(50, seed=9))
    assert not np.array_equal(a, gaze.random_fixation_track(50, seed=10))


def test_random_track_mean_near_center():
    track = gaze.random_fixation_track(100_000, seed=0)
    assert abs(track[:, 0].mean() / 960.0 - 1) < 0.02
    assert abs(track[:, 1].mean() / 540.0 - 1) < 0.02
    assert track.min() >= 0 and track[:, 0].max() < 1920 and track[:, 1].max() < 1080


def test_random_track_rejects_empty():
    with pytest.raises(ContractError):
        gaze.random_fixation_track(0)


@given(st.integers(2, 30), st.integers(0, 1000))
def test_derangement_has_no_fixed_point(n, seed):
    perm = gaze.derangement(n, np.random.default_rng(seed))
    assert sorted(perm.tolist()) == list(range(n))
    assert not np.any(perm == np.arange(n))


def test_scanpath_assignment_lengths_and_no_self():
    rng = np.random.default_rng(0)
    counts = [5, 12, 8, 20]
    tracks = [rng.uniform(0, 100, (c, 2)) for c in counts]
    out = gaze.random_scanpath_assignment(tracks, counts, seed=3)
    for i, t in enumerate(out):
        assert len(t) == counts[i]
        assert not np.array_equal(t, tracks[i])


def test_two_videos_swap():
    a, b = np.zeros((4, 2)), np.ones((4, 2))
    out = gaze.random_scanpath_assignment([a, b], [4, 4])
    assert np.array_equal(out[0], b) and np.array_equal(out[1], a)


def test_single_video_rejected():
    with pytest.raises(ContractError):
        gaze.random_scanpath_assignment([np.zeros((3, 2))], [3])


def test_fit_track_clips_and_stretches():
    t = np.arange(8.0).reshape(4, 2)
    assert np.array_equal(gaze.fit_track(t, 2), t[:2])
    assert gaze.fit_track(t, 8)[:, 0].tolist() == [0, 0, 2, 2, 4, 4, 6, 6]


# ---------------------------------------------------------------- gaze log

def test_gaze_log_round_trip(tmp_path):
    s = stream([(1.5, 2.25), (3.0, 4.0), (5.0, 6.0)], valid=[1, 0, 1])
    geo = ScreenGeometry(1280, 720, 400.0, 550.0)
    gaze.write_gaze_log(tmp_path / "g.csv", s, geo)
    back, geo2 = gaze.read_gaze_log(tmp_path / "g.csv")
    assert np.array_equal(back, s)
    assert geo2 == geo


def test_gaze_log_missing_header(tmp_path):
    (tmp_path / "g.csv").write_text("1,2,3,1\n")
    with pytest.raises(FormatError):
        gaze.read_gaze_log(tmp_path / "g.csv")
