"""Turn a (partial) video plus its gaze track into a visual-semantic graph.

Each frame is cropped around its fixation and embedded. A frame either joins
the most similar existing node (cosine >= rho) or opens a new one; moving
between nodes adds a directed edge. Edge attributes concatenate the semantic
embeddings of the fixated objects at both ends.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .encoders import PatchSpec, SemanticEncoder, VisualEncoder, detect_object
from .errors import ContractError, FormatError

DEFAULT_CROP = 75.0
DEFAULT_RHO = 0.9


@dataclass
class Node:
    feature: np.ndarray
    fixated_object: str
    member_frames: list
    creation_frame: int


@dataclass
class Edge:
    src: int
    dst: int
    attr: np.ndarray


@dataclass
class ActivityGraph:
    nodes: list
    edges: list
    video_id: str = ""
    frame_count: int = 0

    @property
    def edge_pairs(self) -> list:
        return [(e.src, e.dst) for e in self.edges]

    def node_features(self) -> np.ndarray:
        return np.stack([n.feature for n in self.nodes])

    def has_self_loops(self) -> bool:
        pairs = set(self.edge_pairs)
        return all((i, i) in pairs for i in range(len(self.nodes)))

    def __eq__(self, other):
        if not isinstance(other, ActivityGraph):
            return NotImplemented
        if (self.video_id, self.frame_count, len(self.nodes), len(self.edges)) != (
                other.video_id, other.frame_count, len(other.nodes), len(other.edges)):
            return False
        for a, b in zip(self.nodes, other.nodes):
            if (a.fixated_object, list(a.member_frames), a.creation_frame) != (
                    b.fixated_object, list(b.member_frames), b.creation_frame):
                return False
            if not np.array_equal(a.feature, b.feature):
                return False
        return all(a.src == b.src and a.dst == b.dst and np.array_equal(a.attr, b.attr)
                   for a, b in zip(self.edges, other.edges))


@dataclass
class GraphSkeleton:
    """Node assignment before any labels or edge attributes are attached."""

    node_of_frame: np.ndarray
    creators: np.ndarray
    edges: np.ndarray  # (E, 2)


def assign_frames(embeddings, rho: float = DEFAULT_RHO) -> GraphSkeleton:
    """Run the node-merging recurrence over a (K, d) embedding sequence."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 1:
        raise ContractError(f"need a nonempty (K, d) embedding matrix, got {emb.shape}")
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    unit = emb / np.where(norms == 0, 1.0, norms)
    node_of, creators, edges = _kernels.assign_nodes(unit, rho)
    return GraphSkeleton(np.asarray(node_of), np.asarray(creators), np.asarray(edges).reshape(-1, 2))


def assemble(skeleton: GraphSkeleton, embeddings, labels: Sequence[str], semantic: SemanticEncoder,
             video_id: str = "") -> ActivityGraph:
    """Attach features, per-node labels and concatenated-label edge attributes."""
    emb = np.asarray(embeddings, dtype=np.float64)
    members: list = [[] for _ in skeleton.creators]
    for t, n in enumerate(skeleton.node_of_frame):
        members[int(n)].append(t)
    nodes = [Node(emb[int(c)].copy(), labels[i], members[i], int(c)) for i, c in enumerate(skeleton.creators)]
    edges = [Edge(int(s), int(d), edge_attr(semantic, nodes[int(s)].fixated_object, nodes[int(d)].fixated_object))
             for s, d in skeleton.edges]
    return ActivityGraph(nodes, edges, video_id, len(skeleton.node_of_frame))


def edge_attr(semantic: SemanticEncoder, src_label: str, dst_label: str) -> np.ndarray:
    return np.concatenate([semantic.encode_label(src_label), semantic.encode_label(dst_label)])


@dataclass
class FramePipeline:
    """Per-frame embedding and labelling for one video.

    ``scene_of(frame)`` returns the scene shown in that frame. The visual
    noise and detector draws are keyed by ``seed`` and the frame index, so a
    frame always yields the same outputs no matter when it is evaluated.
    """

    scene_of: Callable
    visual: VisualEncoder
    semantic: SemanticEncoder
    detector_accuracy: float = 0.72
    seed: int = 0
    full_frame: bool = False

    def embed(self, frame: int, point, half_size: float) -> np.ndarray:
        scene = self.scene_of(frame)
        if self.full_frame:
            return self.visual.encode_frame(scene, frame, self.seed)
        return self.visual.encode_patch(scene, PatchSpec(frame, float(point[0]), float(point[1]), half_size), self.seed)

    def detect(self, frame: int, point, half_size: float) -> str:
        scene = self.scene_of(frame)
        if self.full_frame:
            point = (scene.width / 2, scene.height / 2)
        return detect_object(scene, PatchSpec(frame, float(point[0]), float(point[1]), half_size),
                             self.detector_accuracy, self.seed, self.semantic.vocabulary)


def build_graph(frame_count: int, track, pipeline: FramePipeline, crop: float = DEFAULT_CROP,
                rho: float = DEFAULT_RHO, video_id: str = "") -> ActivityGraph:
    """Build the graph for frames 0..K-1 with one gaze point per frame.

    The fixated object of a node is detected once, on the frame that created it.
    """
    track = np.asarray(track, dtype=np.float64)
    if frame_count < 1:
        raise ContractError("need at least one frame")
    if len(track) != frame_count:
        raise ContractError(f"gaze track has {len(track)} points for {frame_count} frames")
    emb = np.stack([pipeline.embed(t, track[t], crop) for t in range(frame_count)])
    skel = assign_frames(emb, rho)
    labels = [pipeline.detect(int(c), track[int(c)], crop) for c in skel.creators]
    return assemble(skel, emb, labels, pipeline.semantic, video_id)


def add_self_loops(graph: ActivityGraph, semantic: SemanticEncoder | None = None) -> ActivityGraph:
    """Return a copy with exactly one self-edge per node (idempotent).

    Self-edge attributes are concat(label_i, label_i); without a semantic
    encoder the attribute is rebuilt from any existing edge's halves, or zeros.
    """
    present = set(graph.edge_pairs)
    edges = list(graph.edges)
    dim = graph.edges[0].attr.shape[0] if graph.edges else None
    for i, node in enumerate(graph.nodes):
        if (i, i) in present:
            continue
        if semantic is not None:
            attr = edge_attr(semantic, node.fixated_object, node.fixated_object)
        else:
            if dim is None:
                raise ContractError("cannot infer edge dimension for self-loops; pass a semantic encoder")
            attr = _self_attr_from_edges(graph, i, dim)
        edges.append(Edge(i, i, attr))
    return ActivityGraph(graph.nodes, edges, graph.video_id, graph.frame_count)


def _self_attr_from_edges(graph: ActivityGraph, i: int, dim: int) -> np.ndarray:
    half = dim // 2
    for e in graph.edges:
        if e.src == i:
            return np.concatenate([e.attr[:half], e.attr[:half]])
        if e.dst == i:
            return np.concatenate([e.attr[half:], e.attr[half:]])
    return np.zeros(dim)


def map_edge_attrs(graph: ActivityGraph, fn: Callable) -> ActivityGraph:
    return ActivityGraph(graph.nodes, [Edge(e.src, e.dst, fn(e)) for e in graph.edges], graph.video_id,
                         graph.frame_count)


# ---------------------------------------------------------------------------
# similarity histograms
# ---------------------------------------------------------------------------

def pairwise_cosines(embeddings) -> np.ndarray:
    emb = np.asarray(embeddings, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    unit = emb / np.where(norms == 0, 1.0, norms)
    sims = unit @ unit.T
    iu = np.triu_indices(len(emb), k=1)
    return np.clip(sims[iu], -1.0, 1.0)


def cosine_histogram(per_video: dict, bins: int = 20) -> tuple[np.ndarray, dict]:
    """Histogram of pairwise frame cosines per video on [-1, 1].

    ``per_video`` maps video id to its (K, d) embeddings. Returns the bin
    edges and a dict of count arrays; counts for a video sum to K(K-1)/2.
    """
    if not per_video:
        raise ContractError("cosine_histogram needs at least one video")
    edges = np.linspace(-1.0, 1.0, bins + 1)
    out = {}
    for vid, emb in per_video.items():
        counts, _ = np.histogram(pairwise_cosines(emb), bins=edges)
        out[vid] = counts
    return edges, out


def write_histogram_csv(path, edges: np.ndarray, counts: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["video_id", "bin_lo", "bin_hi", "count"])
        for vid in sorted(counts):
            for lo, hi, c in zip(edges[:-1], edges[1:], counts[vid]):
                w.writerow([vid, f"{lo:.4f}", f"{hi:.4f}", int(c)])


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------

def graph_to_dict(graph: ActivityGraph) -> dict:
    return {
        "format": "gazegraph-graph",
        "version": 1,
        "video_id": graph.video_id,
        "frame_count": graph.frame_count,
        "nodes": [{"index": i, "feature": n.feature.tolist(), "object": n.fixated_object,
                   "member_frames": list(map(int, n.member_frames)), "creation_frame": n.creation_frame}
                  for i, n in enumerate(graph.nodes)],
        "edges": [{"src": e.src, "dst": e.dst, "attr": e.attr.tolist()} for e in graph.edges],
    }


def graph_from_dict(d: dict) -> ActivityGraph:
    if d.get("format") != "gazegraph-graph":
        raise FormatError("not a gazegraph graph file")
    nodes = [Node(np.array(n["feature"], dtype=np.float64), n["object"], list(n["member_frames"]),
                  int(n["creation_frame"])) for n in d["nodes"]]
    edges = [Edge(int(e["src"]), int(e["dst"]), np.array(e["attr"], dtype=np.float64)) for e in d["edges"]]
    return ActivityGraph(nodes, edges, d.get("video_id", ""), int(d.get("frame_count", 0)))


def to_dot(graph: ActivityGraph) -> str:
    def q(s):
        return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'

    name = q(graph.video_id or "graph")
    lines = [f"digraph {name} {{"]
    for i, n in enumerate(graph.nodes):
        lines.append(f"  n{i} [label={q(n.fixated_object)}];")
    for e in graph.edges:
        lines.append(f"  n{e.src} -> n{e.dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(graph: ActivityGraph, path, fmt: str = "json") -> None:
    """Write ``json`` (lossless, floats via repr) or ``dot``."""
    if fmt == "json":
        Path(path).write_text(json.dumps(graph_to_dict(graph)))
    elif fmt == "dot":
        Path(path).write_text(to_dot(graph))
    else:
        raise FormatError(f"unknown graph format {fmt!r}")


def import_graph(path) -> ActivityGraph:
    try:
        return graph_from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise FormatError(f"{path}: cannot parse graph ({exc})") from None
