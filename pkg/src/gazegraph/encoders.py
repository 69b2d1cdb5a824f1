"""Visual and semantic encoders plus a noisy object detector.

The synthetic visual encoder never sees pixels: a scene tells it which object
lies under the fixation and which objects fall inside the crop window, and
the embedding is built from fixed random basis vectors for those objects and
for the screen cell of the fixation. Real encoder outputs can be swapped in
through :class:`PrecomputedTable`.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BoundsError, ContractError, FormatError, VocabularyError
from .world import OBJECT_VOCAB

# objects that look alike from a distance; members share part of their basis
VISUAL_GROUPS = (
    ("fork", "knife", "spoon"),
    ("cellphone", "remote_control", "book", "mouse", "keyboard"),
    ("water_glass", "mug", "milk", "cereal"),
    ("fridge", "cabinet", "closet", "microwave"),
    ("pillow", "clothes", "towel"),
    ("sofa", "bed", "chair", "toilet"),
    ("kitchen_table", "coffee_table", "desk"),
)


def _seed_of(*parts) -> int:
    h = hashlib.sha256("\x1f".join(map(str, parts)).encode()).digest()
    return int.from_bytes(h[:8], "little")


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


@dataclass(frozen=True)
class PatchSpec:
    frame: int
    x: float
    y: float
    half_size: float = 75.0

    def __post_init__(self):
        if self.half_size <= 0:
            raise ContractError("patch half-size must be positive")

    def window(self) -> tuple:
        return (self.x - self.half_size, self.y - self.half_size, self.x + self.half_size, self.y + self.half_size)


def _check_inside(scene, patch: PatchSpec):
    x0, y0, x1, y1 = patch.window()
    if x1 <= 0 or y1 <= 0 or x0 >= scene.width or y0 >= scene.height:
        raise BoundsError(f"patch at ({patch.x:.1f}, {patch.y:.1f}) with B={patch.half_size} misses the frame")


def _center_pixel(scene, patch: PatchSpec) -> tuple:
    return (min(max(patch.x, 0.0), scene.width - 1e-6), min(max(patch.y, 0.0), scene.height - 1e-6))


@dataclass
class VisualEncoder:
    """l2norm(alpha*object + beta*cell + gamma*noise + context*crop_mix)."""

    dim: int = 512
    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.1
    context: float = 0.2
    group_share: float = 0.8
    grid: tuple = (4, 4)
    seed: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    def object_basis(self, label: str) -> np.ndarray:
        key = ("obj", label)
        if key not in self._cache:
            own = _unit(np.random.default_rng(_seed_of("visual-object", self.seed, label)), self.dim)
            group = next((g for g in VISUAL_GROUPS if label in g), None)
            if group is not None:
                shared = _unit(np.random.default_rng(_seed_of("visual-group", self.seed, group[0])), self.dim)
                own = own + self.group_share * shared
                own /= np.linalg.norm(own)
            self._cache[key] = own
        return self._cache[key]

    def cell_of(self, scene, x: float, y: float) -> tuple:
        gx = min(int(x / scene.width * self.grid[0]), self.grid[0] - 1)
        gy = min(int(y / scene.height * self.grid[1]), self.grid[1] - 1)
        return max(gx, 0), max(gy, 0)

    def cell_basis(self, cell: tuple) -> np.ndarray:
        key = ("cell", cell)
        if key not in self._cache:
            self._cache[key] = _unit(np.random.default_rng(_seed_of("visual-cell", self.seed, *cell)), self.dim)
        return self._cache[key]

    def _noise(self, seed, frame) -> np.ndarray:
        return _unit(np.random.default_rng(_seed_of("visual-noise", self.seed, seed, frame)), self.dim)

    def _mix(self, coverage: dict) -> np.ndarray:
        total = sum(coverage.values())
        out = np.zeros(self.dim)
        if total <= 0:
            return out
        for label in sorted(coverage):
            out += coverage[label] / total * self.object_basis(label)
        return out

    def encode_patch(self, scene, patch: PatchSpec, seed=0) -> np.ndarray:
        _check_inside(scene, patch)
        cx, cy = _center_pixel(scene, patch)
        v = self.alpha * self.object_basis(scene.object_at(cx, cy))
        v = v + self.beta * self.cell_basis(self.cell_of(scene, cx, cy))
        v = v + self.gamma * self._noise(seed, patch.frame)
        if self.context:
            v = v + self.context * self._mix(scene.coverage(*patch.window()))
        return v / np.linalg.norm(v)

    def encode_frame(self, scene, frame: int, seed=0) -> np.ndarray:
        """Whole-frame embedding without any fixation (no cropping)."""
        v = self.alpha * self._mix(scene.coverage(0, 0, scene.width, scene.height))
        v = v + self.gamma * self._noise(seed, frame)
        return v / np.linalg.norm(v)


@dataclass
class SemanticEncoder:
    """Seeded random unit vector per object label."""

    dim: int = 300
    vocabulary: Sequence[str] = OBJECT_VOCAB
    seed: int = 0

    def __post_init__(self):
        self._index = {w: i for i, w in enumerate(self.vocabulary)}
        self._table = self._build(tuple(self.vocabulary), self.dim, self.seed)

    @staticmethod
    @lru_cache(maxsize=8)
    def _build(vocab: tuple, dim: int, seed: int) -> np.ndarray:
        return np.stack([_unit(np.random.default_rng(_seed_of("semantic", seed, w)), dim) for w in vocab])

    def encode_label(self, label: str) -> np.ndarray:
        try:
            return self._table[self._index[label]].copy()
        except KeyError:
            raise VocabularyError(f"label {label!r} not in vocabulary") from None


def detect_object(scene, patch: PatchSpec, accuracy: float = 0.72, seed=0,
                  vocabulary: Sequence[str] = OBJECT_VOCAB) -> str:
    """Ground truth under the patch centre with probability ``accuracy``, else a uniform wrong label."""
    if not 0.0 <= accuracy <= 1.0:
        raise ContractError(f"detector accuracy must be in [0, 1], got {accuracy}")
    truth = scene.object_at(*_center_pixel(scene, patch))
    rng = np.random.default_rng(_seed_of("detector", seed, patch.frame, round(patch.x, 6), round(patch.y, 6)))
    if rng.random() < accuracy:
        return truth
    wrong = [w for w in vocabulary if w != truth]
    return wrong[int(rng.integers(len(wrong)))]


# ---------------------------------------------------------------------------
# precomputed embedding files
# ---------------------------------------------------------------------------

TABLE_MAGIC = "# gazegraph embeddings v1"


@dataclass
class PrecomputedTable:
    dim: int
    vocabulary: tuple
    embeddings: dict = field(default_factory=dict)  # (video_id, frame) -> vector
    labels: dict = field(default_factory=dict)  # (video_id, frame) -> label

    def add(self, video_id: str, frame: int, vector, label: str) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.dim,):
            raise FormatError(f"({video_id}, {frame}): vector has shape {vector.shape}, table dim is {self.dim}")
        if label not in self.vocabulary:
            raise FormatError(f"({video_id}, {frame}): label {label!r} not in vocabulary")
        self.embeddings[(video_id, int(frame))] = vector
        self.labels[(video_id, int(frame))] = label

    def embedding(self, video_id: str, frame: int) -> np.ndarray:
        try:
            return self.embeddings[(video_id, int(frame))]
        except KeyError:
            raise FormatError(f"missing embedding for key ({video_id}, {frame})") from None

    def label(self, video_id: str, frame: int) -> str:
        try:
            return self.labels[(video_id, int(frame))]
        except KeyError:
            raise FormatError(f"missing label for key ({video_id}, {frame})") from None

    def frames(self, video_id: str) -> int:
        return sum(1 for v, _ in self.embeddings if v == video_id)

    def __eq__(self, other):
        if not isinstance(other, PrecomputedTable):
            return NotImplemented
        return (self.dim == other.dim and tuple(self.vocabulary) == tuple(other.vocabulary)
                and self.labels == other.labels and self.embeddings.keys() == other.embeddings.keys()
                and all(np.array_equal(self.embeddings[k], other.embeddings[k]) for k in self.embeddings))


def save_precomputed(path, table: PrecomputedTable) -> None:
    lines = [TABLE_MAGIC, f"# dim={table.dim}", "# vocab=" + ",".join(table.vocabulary)]
    for key in sorted(table.embeddings):
        vec = " ".join(repr(float(x)) for x in table.embeddings[key])
        lines.append(f"{key[0]}\t{key[1]}\t{table.labels[key]}\t{vec}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_precomputed(path, expected_dim: int | None = None) -> PrecomputedTable:
    """Parse a table file; each video's frames must run 0..n-1 without gaps."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != TABLE_MAGIC:
        raise FormatError(f"{path}: missing embeddings header")
    header = {}
    body = []
    for line in lines[1:]:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            header[k] = v
        elif line.strip():
            body.append(line)
    try:
        dim = int(header["dim"])
        vocab = tuple(header["vocab"].split(","))
    except (KeyError, ValueError):
        raise FormatError(f"{path}: header needs dim= and vocab=") from None
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"{path}: file dim {dim} does not match configured {expected_dim}")
    table = PrecomputedTable(dim, vocab)
    for lineno, line in enumerate(body, start=1):
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{path}: record {lineno} has {len(parts)} fields, expected 4")
        vid, frame, label, vec = parts
        table.add(vid, int(frame), np.array(vec.split(), dtype=np.float64), label)
    per_video: dict = {}
    for vid, frame in table.embeddings:
        per_video.setdefault(vid, []).append(frame)
    for vid in sorted(per_video):
        frames = sorted(per_video[vid])
        for expect, got in enumerate(frames):
            if got != expect:
                raise FormatError(f"{path}: missing key ({vid}, {expect})")
    return table
