"""Fixation filtering and per-frame gaze tracks.

Raw eye-tracker samples go through a velocity-threshold classifier (I-VT);
surviving fixations are then mapped onto video frames so that every frame
carries exactly one gaze point. The module also produces the two gaze
ablation inputs: uniform random fixations and deranged real scanpaths.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ContractError, CoverageError, EmptyInputError, FormatError, OrderingError

DEFAULT_VELOCITY_THRESHOLD = 30.0  # deg/s
DEFAULT_MIN_DURATION_MS = 60.0


@dataclass(frozen=True)
class GazeSample:
    timestamp: float  # ms
    x: float
    y: float
    valid: bool = True


@dataclass(frozen=True)
class ScreenGeometry:
    width_px: int = 1920
    height_px: int = 1080
    physical_width_mm: float = 530.0
    viewing_distance_mm: float = 600.0

    def __post_init__(self):
        if min(self.width_px, self.height_px, self.physical_width_mm, self.viewing_distance_mm) <= 0:
            raise ContractError(f"screen geometry must be positive: {self}")

    @property
    def mm_per_px(self) -> float:
        return self.physical_width_mm / self.width_px

    def px_to_deg(self, dist_px: float) -> float:
        return math.degrees(math.atan(dist_px * self.mm_per_px / self.viewing_distance_mm))

    def deg_to_px(self, deg: float) -> float:
        return math.tan(math.radians(deg)) * self.viewing_distance_mm / self.mm_per_px


@dataclass(frozen=True)
class Fixation:
    start_ms: float
    end_ms: float
    cx: float
    cy: float

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


def _as_arrays(samples) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(samples, np.ndarray):
        arr = np.asarray(samples, dtype=np.float64)
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3].astype(bool)
    t = np.array([s.timestamp for s in samples], dtype=np.float64)
    x = np.array([s.x for s in samples], dtype=np.float64)
    y = np.array([s.y for s in samples], dtype=np.float64)
    v = np.array([bool(s.valid) for s in samples], dtype=bool)
    return t, x, y, v


def classify_samples(samples, velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD,
                     geometry: ScreenGeometry = ScreenGeometry()) -> np.ndarray:
    """Boolean mask of samples whose angular velocity is below the threshold."""
    t, x, y, valid = _as_arrays(samples)
    mm = geometry.mm_per_px
    is_fix, _, _ = _kernels.ivt(t, x * mm, y * mm, valid, geometry.viewing_distance_mm, velocity_threshold)
    return is_fix


def ivt_filter(samples, velocity_threshold: float = DEFAULT_VELOCITY_THRESHOLD,
               geometry: ScreenGeometry = ScreenGeometry(),
               min_duration_ms: float = DEFAULT_MIN_DURATION_MS) -> list[Fixation]:
    """Group sub-threshold samples into fixations.

    ``samples`` is a sequence of :class:`GazeSample` or an (n, 4) array of
    ``timestamp_ms, x, y, valid``. Velocity of sample i is measured against
    sample i-1 (the first sample of a valid run borrows its successor's).
    Invalid samples break runs. Runs shorter than ``min_duration_ms`` are
    dropped.
    """
    t, x, y, valid = _as_arrays(samples)
    if int(valid.sum()) < 2:
        raise EmptyInputError("I-VT needs at least 2 valid samples")
    if np.any(np.diff(t) <= 0):
        bad = int(np.flatnonzero(np.diff(t) <= 0)[0]) + 1
        raise OrderingError(f"timestamps not strictly increasing at sample {bad} ({t[bad - 1]} -> {t[bad]})")
    mm = geometry.mm_per_px
    _, starts, ends = _kernels.ivt(t, x * mm, y * mm, valid, geometry.viewing_distance_mm, velocity_threshold)
    out = []
    for s, e in zip(starts, ends):
        if t[e] - t[s] < min_duration_ms:
            continue
        out.append(Fixation(float(t[s]), float(t[e]), float(x[s:e + 1].mean()), float(y[s:e + 1].mean())))
    return out


def assign_per_frame(fixations: Sequence[Fixation], frame_times) -> np.ndarray:
    """One (x, y) per frame time, shape (T, 2).

    A frame takes the fixation whose [start, end] interval contains its
    timestamp; frames in saccade gaps keep the latest earlier fixation and
    leading frames take the first one.
    """
    if len(fixations) == 0:
        raise CoverageError("cannot assign frames without any fixation")
    frame_times = np.asarray(frame_times, dtype=np.float64)
    if np.any(np.diff(frame_times) < 0):
        raise OrderingError("frame times must be sorted")
    starts = np.array([f.start_ms for f in fixations])
    centers = np.array([(f.cx, f.cy) for f in fixations], dtype=np.float64)
    # latest fixation that started at or before the frame; covers both the
    # overlap case and the gap-inherit case since fixations are time-ordered
    idx = np.searchsorted(starts, frame_times, side="right") - 1
    idx = np.clip(idx, 0, len(fixations) - 1)
    return centers[idx].copy()


def random_fixation_track(frame_count: int, geometry: ScreenGeometry = ScreenGeometry(), seed: int = 0) -> np.ndarray:
    if frame_count < 1:
        raise ContractError("frame_count must be >= 1")
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.0, geometry.width_px, frame_count)
    ys = rng.uniform(0.0, geometry.height_px, frame_count)
    return np.column_stack([xs, ys])


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation without fixed points (rejection sampling)."""
    if n < 2:
        raise ContractError("a derangement needs at least 2 elements")
    while True:
        perm = rng.permutation(n)
        if not np.any(perm == np.arange(n)):
            return perm


def fit_track(track: np.ndarray, frame_count: int) -> np.ndarray:
    """Clip a longer track; stretch a shorter one by nearest-index resampling."""
    track = np.asarray(track, dtype=np.float64)
    if len(track) >= frame_count:
        return track[:frame_count].copy()
    idx = np.floor(np.arange(frame_count) * len(track) / frame_count).astype(np.int64)
    return track[idx].copy()


def random_scanpath_assignment(tracks: Sequence[np.ndarray], frame_counts: Sequence[int], seed: int = 0) -> list[np.ndarray]:
    """Give each video the track of a different video, fitted to its length."""
    if len(tracks) != len(frame_counts):
        raise ContractError("one track per video required")
    if len(tracks) < 2:
        raise ContractError("random scanpath assignment needs at least 2 videos")
    perm = derangement(len(tracks), np.random.default_rng(seed))
    return [fit_track(tracks[perm[i]], frame_counts[i]) for i in range(len(tracks))]


def samples_from_track(track: np.ndarray, frame_times, rate_hz: float = 1200.0, saccade_ms: float = 20.0,
                       jitter_px: float = 0.1, seed: int = 0) -> np.ndarray:
    """Synthesise a raw sample stream that reproduces a per-frame track.

    Runs of equal frame points become steady fixations with sub-pixel noise.
    A change of point becomes a linear saccade in the ``saccade_ms`` before
    the next frame; it lands a quarter of the way early so the new fixation
    is already under way at the frame timestamp. Returns an (n, 4) array of
    ``timestamp_ms, x, y, valid``.
    """
    track = np.asarray(track, dtype=np.float64)
    frame_times = np.asarray(frame_times, dtype=np.float64)
    if len(track) != len(frame_times) or len(track) == 0:
        raise ContractError("need one track point per frame time")
    rng = np.random.default_rng(seed)
    dt = 1000.0 / rate_hz
    frame_ms = frame_times[1] - frame_times[0] if len(frame_times) > 1 else 250.0
    t = np.arange(frame_times[0], frame_times[-1] + frame_ms, dt)
    k = np.clip(np.searchsorted(frame_times, t, side="right") - 1, 0, len(track) - 1)
    nxt = np.minimum(k + 1, len(track) - 1)
    pos = track[k].copy()
    begin = frame_times[nxt] - saccade_ms
    moving = (nxt > k) & (t >= begin) & np.any(track[nxt] != track[k], axis=1)
    frac = np.clip((t - begin) / (0.75 * saccade_ms), 0.0, 1.0)[:, None]
    pos[moving] = (track[k] + (track[nxt] - track[k]) * frac)[moving]
    pos += rng.normal(0.0, jitter_px, pos.shape) * (~moving)[:, None]
    return np.column_stack([t, pos, np.ones(len(t))])


# ---------------------------------------------------------------------------
# gaze-log files
# ---------------------------------------------------------------------------

GAZE_LOG_MAGIC = "# gazegraph gaze-log v1"


def write_gaze_log(path, samples, geometry: ScreenGeometry = ScreenGeometry()) -> None:
    t, x, y, v = _as_arrays(samples)
    lines = [
        GAZE_LOG_MAGIC,
        f"# width_px={geometry.width_px}",
        f"# height_px={geometry.height_px}",
        f"# physical_width_mm={geometry.physical_width_mm!r}",
        f"# viewing_distance_mm={geometry.viewing_distance_mm!r}",
        "timestamp_ms,x_px,y_px,valid",
    ]
    lines += [f"{ti!r},{xi!r},{yi!r},{int(vi)}" for ti, xi, yi, vi in zip(t.tolist(), x.tolist(), y.tolist(), v.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_gaze_log(path) -> tuple[np.ndarray, ScreenGeometry]:
    """Return an (n, 4) sample array and the geometry recorded in the header."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != GAZE_LOG_MAGIC:
        raise FormatError(f"{path}: missing gaze-log header")
    geo = {}
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            try:
                geo[key.strip()] = float(val)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad header field {line!r}") from None
            continue
        if line.startswith("timestamp_ms"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric field in {line!r}") from None
    geometry = ScreenGeometry(
        width_px=int(geo.get("width_px", 1920)),
        height_px=int(geo.get("height_px", 1080)),
        physical_width_mm=geo.get("physical_width_mm", 530.0),
        viewing_distance_mm=geo.get("viewing_distance_mm", 600.0),
    )
    return np.array(rows, dtype=np.float64).reshape(-1, 4), geometry
