"""Sequence metrics, evaluation runs, ablations and crop-size sweeps."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ContractError
from .config import RunConfig, derive_seed
from .model import GazeGraphModel, GraphSample, Prediction, TrainLog, train
from .pipeline import Encoders, build_tables, check_variant, conditioning_of, make_samples
from .world import ACTION_VOCAB, Dataset, cutoff, generate_dataset, success_rate

EOS_TOKEN = len(ACTION_VOCAB)


def _strip(seq) -> list:
    out = []
    for tok in seq:
        if tok == EOS_TOKEN or tok == "<eos>":
            break
        out.append(tok)
    return out


def action_iou(gold: Sequence, pred: Sequence) -> float:
    """Set IoU of the two token sequences; two empty sequences score 1."""
    a, b = set(_strip(gold)), set(_strip(pred))
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def norm_levenshtein(gold: Sequence, pred: Sequence) -> float:
    """Unit-cost edit distance divided by the longer length; two empty sequences score 0."""
    gold, pred = _strip(gold), _strip(pred)
    longest = max(len(gold), len(pred))
    if longest == 0:
        return 0.0
    codes: dict = {}
    a = np.array([codes.setdefault(t, len(codes)) for t in gold], dtype=np.int64)
    b = np.array([codes.setdefault(t, len(codes)) for t in pred], dtype=np.int64)
    return _kernels.levenshtein(a, b) / longest


@dataclass
class MetricsReport:
    accuracy: float
    iou: float
    levenshtein: float
    success_rate: float
    n: int
    fraction: float
    variant: str
    seed: int
    crop: float | None = None

    def as_row(self) -> dict:
        return {"variant": self.variant, "fraction": self.fraction, "seed": self.seed,
                "crop": "" if self.crop is None else self.crop, "acc": self.accuracy, "iou": self.iou,
                "leven": self.levenshtein, "sr": self.success_rate, "n": self.n}


RESULT_COLUMNS = ("variant", "fraction", "seed", "crop", "acc", "iou", "leven", "sr", "n")


def results_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in reports:
        row = r.as_row()
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in (row[c] for c in RESULT_COLUMNS)])
    return buf.getvalue()


def write_results_csv(path, reports: Sequence[MetricsReport]) -> None:
    with open(path, "w") as fh:
        fh.write(results_csv(reports))


def score(samples: Sequence[GraphSample], predictions: Sequence[Prediction], programs: Sequence,
          fraction: float, variant: str, seed: int, report_accuracy: bool = True) -> MetricsReport:
    """Aggregate per-sample metrics. ``programs`` holds (program, n_viewed) per sample for SR."""
    acc = float(np.mean([p.activity == s.activity for p, s in zip(predictions, samples)])) if report_accuracy \
        else math.nan
    iou = float(np.mean([action_iou(s.suffix, p.actions) for p, s in zip(predictions, samples)]))
    lev = float(np.mean([norm_levenshtein(s.suffix, p.actions) for p, s in zip(predictions, samples)]))
    sr = success_rate(programs, [p.actions for p in predictions])
    return MetricsReport(acc, iou, lev, sr, len(samples), fraction, variant, seed)


class OraclePredictor:
    """Returns the gold activity and suffix; used to sanity-check the harness."""

    def __init__(self, samples: Sequence[GraphSample]):
        self._gold = {(s.graph.video_id, s.graph.frame_count): s for s in samples}

    def predict(self, graphs):
        gold = [self._gold[(g.video_id, g.frame_count)] for g in graphs]
        return [Prediction(s.activity, list(s.suffix)) for s in gold]


class RandomActivityPredictor:
    """Uniform random activity, empty suffix."""

    def __init__(self, classes: int, seed: int = 0):
        self.classes = classes
        self.rng = np.random.default_rng(seed)

    def predict(self, graphs):
        return [Prediction(int(self.rng.integers(self.classes)), []) for _ in graphs]


@dataclass
class Experiment:
    """A dataset plus cached per-variant frame tables for one configuration."""

    cfg: RunConfig
    dataset: Dataset | None = None
    encoders: Encoders | None = None
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dataset is None:
            self.dataset = generate_dataset(self.cfg.dataset_config(), derive_seed(self.cfg.seed, "dataset"))
        if self.encoders is None:
            self.encoders = Encoders.from_config(self.cfg)

    def tables(self, variant: str, split: str) -> list:
        check_variant(variant)
        # variants that only differ in training share the same inputs
        key = (variant if variant in ("no_fixation", "random_fixation", "random_scanpath",
                                      "random_object_edges") else "full", split)
        if key not in self._tables:
            self._tables[key] = build_tables(getattr(self.dataset, split), key[0], self.cfg, split, self.encoders)
        return self._tables[key]

    def samples(self, variant: str, split: str, fractions: Sequence[float]) -> list:
        return make_samples(self.tables(variant, split), fractions, variant, self.cfg, self.encoders)

    def train(self, variant: str = "full") -> tuple[GazeGraphModel, TrainLog]:
        samples = self.samples(variant, "train", self.cfg.train_fractions)
        return train(samples, self.cfg.model_config(conditioning_of(variant)), derive_seed(self.cfg.seed, "train"))

    def evaluate(self, predictor, variant: str = "full", fraction: float | None = None,
                 split: str = "test") -> MetricsReport:
        fraction = self.cfg.fraction if fraction is None else fraction
        samples = self.samples(variant, split, [fraction])
        preds = predictor.predict([s.graph for s in samples])
        programs = [(v.program, cutoff(v, fraction)[1]) for v in getattr(self.dataset, split)]
        report = score(samples, preds, programs, fraction, variant, self.cfg.seed,
                       report_accuracy=conditioning_of(variant) != "none")
        report.crop = self.cfg.crop
        return report


def evaluate(model, cfg: RunConfig, variant: str = "full", fraction: float | None = None,
             experiment: Experiment | None = None, split: str = "test") -> MetricsReport:
    exp = experiment or Experiment(cfg)
    return exp.evaluate(model, variant, fraction, split)


def ablate(variant: str, cfg: RunConfig, experiment: Experiment | None = None,
           fractions: Sequence[float] | None = None) -> list[MetricsReport]:
    """Train and evaluate one variant; one report per evaluation fraction."""
    check_variant(variant)
    exp = experiment or Experiment(cfg)
    model, _ = exp.train(variant)
    return [exp.evaluate(model, variant, f) for f in (fractions or [cfg.fraction])]


def sweep_crop(cfg: RunConfig, sizes: Sequence[float] = (25, 50, 75, 100)) -> list[MetricsReport]:
    """One train+evaluate per crop size on the same dataset; CSV-ready reports."""
    if not sizes:
        raise ContractError("sweep_crop needs at least one crop size")
    base = Experiment(cfg)
    out = []
    for b in sizes:
        exp = Experiment(cfg.with_(crop=float(b)), dataset=base.dataset, encoders=base.encoders)
        out += ablate("full", exp.cfg, exp)
    return out
