"""From synthetic videos to training/evaluation samples under each variant.

Per video, every frame is embedded and labelled once; graphs for any input
fraction are then cut from that table, since node merging on a prefix is
the prefix of merging on the whole video.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import RunConfig, derive_seed
from .encoders import SemanticEncoder, VisualEncoder
from .errors import ConfigError
from .gaze import (ScreenGeometry, assign_per_frame, ivt_filter, random_fixation_track, random_scanpath_assignment,
                   samples_from_track)
from .graphbuild import (ActivityGraph, Edge, FramePipeline, add_self_loops, assemble, assign_frames)
from .model import GraphSample
from .world import OBJECT_VOCAB, ActivityProgram, SyntheticVideo, cutoff

VARIANTS = ("full", "no_fixation", "random_fixation", "random_scanpath", "visual_only_edges",
            "random_object_edges", "no_activity_head", "flat_cotrain")

CONDITIONING_OF = {"no_activity_head": "none", "flat_cotrain": "flat"}


def check_variant(variant: str) -> str:
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    return variant


def conditioning_of(variant: str) -> str:
    return CONDITIONING_OF.get(check_variant(variant), "hierarchical")


@dataclass
class Encoders:
    visual: VisualEncoder
    semantic: SemanticEncoder

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Encoders":
        vis = VisualEncoder(dim=cfg.node_dim, alpha=cfg.visual_alpha, beta=cfg.visual_beta, gamma=cfg.visual_gamma,
                            context=cfg.visual_context, seed=derive_seed(cfg.seed, "visual-basis"))
        sem = SemanticEncoder(dim=cfg.semantic_dim, seed=derive_seed(cfg.seed, "semantic-basis"))
        return cls(vis, sem)


@dataclass
class FrameTable:
    """Per-frame embeddings and detected labels for one video under one variant."""

    video: SyntheticVideo
    embeddings: np.ndarray
    labels: list
    track: np.ndarray


def observed_track(video: SyntheticVideo, cfg: RunConfig) -> np.ndarray:
    """The video's scanpath as seen by the tracker: raw samples through I-VT, one point per frame."""
    if cfg.gaze_source == "direct":
        return video.track.copy()
    samples = samples_from_track(video.track, video.frame_times, seed=derive_seed(cfg.seed, "samples/" + video.video_id))
    fixations = ivt_filter(samples, cfg.velocity_threshold, ScreenGeometry(), cfg.min_fixation_ms)
    return assign_per_frame(fixations, video.frame_times)


def variant_tracks(videos: Sequence[SyntheticVideo], variant: str, cfg: RunConfig, split: str) -> list:
    real = [observed_track(v, cfg) for v in videos]
    if variant == "random_fixation":
        return [random_fixation_track(v.frame_count, ScreenGeometry(), derive_seed(cfg.seed, "random-fix/" + v.video_id))
                for v in videos]
    if variant == "random_scanpath":
        return random_scanpath_assignment(real, [v.frame_count for v in videos],
                                          derive_seed(cfg.seed, "random-scanpath/" + split))
    return real


def frame_table(video: SyntheticVideo, track: np.ndarray, variant: str, cfg: RunConfig,
                enc: Encoders) -> FrameTable:
    pipe = FramePipeline(video.scene, enc.visual, enc.semantic, cfg.detector_accuracy,
                         derive_seed(cfg.seed, "frames/" + video.video_id), full_frame=(variant == "no_fixation"))
    emb = np.stack([pipe.embed(t, track[t], cfg.crop) for t in range(video.frame_count)])
    if variant == "random_object_edges":
        rng = np.random.default_rng(derive_seed(cfg.seed, "random-labels/" + video.video_id))
        labels = [OBJECT_VOCAB[i] for i in rng.integers(len(OBJECT_VOCAB), size=video.frame_count)]
    else:
        labels = [pipe.detect(t, track[t], cfg.crop) for t in range(video.frame_count)]
    return FrameTable(video, emb, labels, track)


def build_tables(videos: Sequence[SyntheticVideo], variant: str, cfg: RunConfig, split: str,
                 enc: Encoders | None = None) -> list:
    check_variant(variant)
    enc = enc or Encoders.from_config(cfg)
    tracks = variant_tracks(videos, variant, cfg, split)
    return [frame_table(v, tr, variant, cfg, enc) for v, tr in zip(videos, tracks)]


def prefix_graph(table: FrameTable, frames: int, variant: str, cfg: RunConfig, enc: Encoders) -> ActivityGraph:
    skel = assign_frames(table.embeddings[:frames], cfg.rho)
    labels = [table.labels[int(c)] for c in skel.creators]
    graph = add_self_loops(assemble(skel, table.embeddings[:frames], labels, enc.semantic, table.video.video_id),
                           enc.semantic)
    if variant == "visual_only_edges":
        graph = ActivityGraph(graph.nodes, [Edge(e.src, e.dst, np.zeros_like(e.attr)) for e in graph.edges],
                              graph.video_id, graph.frame_count)
    return graph


def suffix_tokens(program: ActivityProgram, n_viewed: int) -> list:
    return list(program.tokens[n_viewed:])


def make_samples(tables: Sequence[FrameTable], fractions: Sequence[float], variant: str, cfg: RunConfig,
                 enc: Encoders) -> list:
    out = []
    for table in tables:
        for frac in fractions:
            k, viewed = cutoff(table.video, frac)
            out.append(GraphSample(prefix_graph(table, k, variant, cfg, enc), table.video.activity,
                                   suffix_tokens(table.video.program, viewed), table.video.video_id))
    return out
