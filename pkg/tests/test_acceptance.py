"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a PASS/FAIL line (also echoed in the pytest terminal
summary). Criteria 6-9 share one cache of trained models so each
(seed, variant) pair is trained once.
"""
import time
from pathlib import Path

import numpy as np
import pytest

from gazegraph import evaluation as E
from gazegraph import model as M
from gazegraph import numerics as nx
from gazegraph import world as W
from gazegraph.cli import main as cli_main
from gazegraph.config import derive_seed, load_config
from gazegraph.encoders import SemanticEncoder
from gazegraph.graphbuild import add_self_loops, build_graph
from gazegraph.world import OBJECT_VOCAB
from oracles import alg1_trace, levenshtein_dp

DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.conf"
SEEDS = (0, 1, 2)
FRACTION = 0.7
LINES: list = []


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    LINES.append(line)
    print(line)


# ---------------------------------------------------------------- shared training cache

class _Runs:
    def __init__(self):
        self.experiments: dict = {}
        self.models: dict = {}
        self.seconds: dict = {}
        self.reports: dict = {}

    def experiment(self, seed: int) -> E.Experiment:
        if seed not in self.experiments:
            self.experiments[seed] = E.Experiment(load_config(DESK, {"seed": str(seed)}, environ={}))
        return self.experiments[seed]

    def report(self, seed: int, variant: str, fraction: float = FRACTION) -> E.MetricsReport:
        key = (seed, variant, fraction)
        if key not in self.reports:
            exp = self.experiment(seed)
            if (seed, variant) not in self.models:
                t0 = time.perf_counter()
                self.models[seed, variant] = exp.train(variant)[0]
                self.seconds[seed, variant] = time.perf_counter() - t0
            self.reports[key] = exp.evaluate(self.models[seed, variant], variant, fraction)
        return self.reports[key]

    def mean(self, variant: str, metric: str) -> float:
        return float(np.mean([getattr(self.report(s, variant), metric) for s in SEEDS]))


RUNS = _Runs()


# ---------------------------------------------------------------- 1. gradient fidelity

def _perturbed_model(cfg: M.ModelConfig) -> M.GazeGraphModel:
    rng = np.random.default_rng(100)
    params = M.init_params(cfg, 0)
    for p in params.values():
        p.data = p.data + 0.3 * rng.normal(size=p.shape)
    return M.GazeGraphModel(cfg, params=params)


def _five_node_graph(cfg: M.ModelConfig):
    from gazegraph.graphbuild import assemble, assign_frames

    rng = np.random.default_rng(7)
    sem = SemanticEncoder(dim=cfg.edge_dim // 2)
    while True:
        emb = rng.normal(size=(30, cfg.node_dim))
        skel = assign_frames(emb, float(rng.uniform(-0.5, 0.5)))
        if len(skel.creators) == 5:
            labels = [OBJECT_VOCAB[int(i)] for i in rng.integers(0, 8, 5)]
            return add_self_loops(assemble(skel, emb, labels, sem), sem)


def test_criterion_01_gradient_fidelity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    errors = {}
    a, b = nx.Param(rng.uniform(-1, 1, (2, 3)), "a"), nx.Param(rng.uniform(0.2, 1, (2, 3)), "b")
    ops = {
        "add": lambda: nx.add(a, b), "sub": lambda: nx.sub(a, b), "mul": lambda: nx.mul(a, b),
        "scale": lambda: nx.scale(a, 1.7),
        "matmul": lambda: nx.matmul(a, nx.reshape(b, (3, 2))),
        "batched_matvec": lambda: nx.batched_matvec(nx.reshape(nx.concat([a, b], axis=1), (2, 3, 2)),
                                                    nx.slice_last(b, 0, 2)),
        "relu": lambda: nx.mul(nx.relu(a), b), "tanh": lambda: nx.tanh(a), "sigmoid": lambda: nx.sigmoid(a),
        "concat": lambda: nx.concat([a, b], axis=0), "reshape": lambda: nx.mul(nx.reshape(a, (3, 2)), 1.0),
        "transpose": lambda: nx.mul(nx.transpose(a, (1, 0)), nx.reshape(b, (3, 2))),
        "slice_last": lambda: nx.mul(nx.slice_last(a, 1, 3), nx.slice_last(b, 0, 2)),
        "take_rows": lambda: nx.take_rows(a, [1, 0, 1]),
        "segment_sum": lambda: nx.segment_sum(a, [1, 1], 3),
        "segment_mean": lambda: nx.segment_mean(a, [1, 0], 2),
        "mean": lambda: nx.mean(nx.mul(a, b), axis=0),
        "l2norm": lambda: nx.l2norm(b),
        "lstm_cell": lambda: nx.lstm_cell(nx.concat([a, b, a, b], axis=1), nx.slice_last(b, 0, 3)),
        "cross_entropy": lambda: nx.cross_entropy(a, [2, 0], [0.3, 1.2]),
    }
    for name, op in ops.items():
        def loss(op=op):
            out = op()
            w = np.linspace(-1.0, 1.0, out.size).reshape(out.shape)
            return nx.sum_all(nx.mul(out, w))

        errors[name] = max(nx.gradcheck(loss, [a, b]).values())

    cfg = M.ModelConfig(node_dim=4, edge_dim=6, ecc_layers=3, ecc_hidden=3, lstm_hidden=4, lstm_layers=2,
                        head_hidden=5, activity_classes=3, action_vocab=5, max_decode_len=6)
    model = _perturbed_model(cfg)
    sample = M.GraphSample(_five_node_graph(cfg), 1, [0, 2])
    assert len(sample.graph.nodes) == 5
    errors["full model"] = max(nx.gradcheck(lambda: model.loss([sample])[0], model.param_list, h=1e-5).values())
    worst = max(errors, key=errors.get)
    elapsed = time.perf_counter() - t0
    ok = errors[worst] < 1e-4 and elapsed < 60
    record(1, "gradient fidelity", ok, f"max rel err {errors[worst]:.2e} ({worst}), {elapsed:.1f}s")
    assert errors[worst] < 1e-4
    assert elapsed < 60


# ---------------------------------------------------------------- 2. graph construction oracle

class _TablePipeline:
    """Stand-in frame pipeline returning precomputed embeddings."""

    def __init__(self, emb):
        self.emb = emb
        self.semantic = SemanticEncoder(dim=4)

    def embed(self, frame, point, half_size):
        return self.emb[frame]

    def detect(self, frame, point, half_size):
        return OBJECT_VOCAB[frame % len(OBJECT_VOCAB)]


def _sequence(rng):
    k = int(rng.integers(1, 51))
    centers = rng.normal(size=(int(rng.integers(1, 8)), 8))
    emb = centers[rng.integers(0, len(centers), k)] + rng.normal(0, float(rng.uniform(0.05, 1.0)), (k, 8))
    return k, emb


def test_criterion_02_graph_construction_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        k, emb = _sequence(rng)
        rho = float(rng.uniform(-1.1, 1.1))
        g = build_graph(k, np.zeros((k, 2)), _TablePipeline(emb), rho=rho)
        members, edges = alg1_trace(emb, rho)
        same = ([n.member_frames for n in g.nodes] == members and g.edge_pairs == edges
                and [n.creation_frame for n in g.nodes] == [m[0] for m in members])
        mismatches += not same
    extremes = 0
    for _ in range(200):
        k, emb = _sequence(rng)
        extremes += len(build_graph(k, np.zeros((k, 2)), _TablePipeline(emb), rho=1.0 + 1e-9).nodes) != k
        extremes += len(build_graph(k, np.zeros((k, 2)), _TablePipeline(emb), rho=-1.0).nodes) != 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and extremes == 0 and elapsed < 60
    record(2, "graph construction oracle", ok,
           f"{mismatches}/1000 trace mismatches, {extremes} extreme-rho failures, {elapsed:.1f}s")
    assert mismatches == 0 and extremes == 0
    assert elapsed < 60


# ---------------------------------------------------------------- 3. metric oracles

def test_criterion_03_metric_oracles():
    rng = np.random.default_rng(3)
    lev_bad = iou_bad = 0
    for _ in range(10_000):
        a = rng.integers(0, 12, int(rng.integers(0, 16))).tolist()
        b = rng.integers(0, 12, int(rng.integers(0, 16))).tolist()
        longest = max(len(a), len(b))
        lev_bad += E.norm_levenshtein(a, b) != (levenshtein_dp(a, b) / longest if longest else 0.0)
        sa, sb = set(a), set(b)
        iou_bad += E.action_iou(a, b) != (len(sa & sb) / len(sa | sb) if sa | sb else 1.0)
    anchors = (E.norm_levenshtein([3, 1, 4], [3, 1, 4]) == 0.0 and E.action_iou([3, 1, 4], [3, 1, 4]) == 1.0)
    ok = lev_bad == 0 and iou_bad == 0 and anchors
    record(3, "metric oracles", ok, f"{lev_bad} Levenshtein and {iou_bad} IoU mismatches in 10^4 pairs, "
                                    f"anchors {'hold' if anchors else 'broken'}")
    assert ok


# ---------------------------------------------------------------- 4. executor soundness

def test_criterion_04_executor_soundness():
    rng = np.random.default_rng(4)
    programs = [W.make_program(act, rng, camera=cam) for act in range(18) for cam in range(3)]
    ds = W.generate_dataset(W.DatasetConfig(activities=18, cameras=3, videos_per_pair=1), seed=4)
    programs += [v.program for v in ds.videos]
    full = W.success_rate([(p, 0) for p in programs], [p.tokens for p in programs])
    truncated = W.success_rate([(p, 0) for p in programs], [p.tokens[:-1] for p in programs])
    templates = len({p.activity for p in programs})
    ok = full == 1.0 and truncated == 0.0 and templates == 18
    record(4, "executor soundness", ok,
           f"gold SR {full:.2f}, truncated SR {truncated:.2f} over {len(programs)} programs, {templates} templates")
    assert ok


# ---------------------------------------------------------------- 5. capacity

def test_criterion_05_capacity():
    t0 = time.perf_counter()
    cfg = load_config(DESK, {"activities": "10", "cameras": "2", "test_cameras_per_activity": "1",
                             "videos_per_pair": "2", "train_fractions": "0.7", "epochs": "300",
                             "batch_size": "20"}, environ={})
    exp = E.Experiment(cfg)
    assert len(exp.dataset.train) == 20
    samples = exp.samples("full", "train", [FRACTION])
    seen = []

    def check(epoch, model):
        if epoch % 10:
            return False
        r = exp.evaluate(model, "full", FRACTION, split="train")
        seen.append((epoch, r.accuracy, r.iou))
        return r.accuracy >= 0.95 and r.iou >= 0.90

    M.train(samples, cfg.model_config("hierarchical"), derive_seed(cfg.seed, "train"), callback=check)
    epoch, acc, iou = seen[-1]
    elapsed = time.perf_counter() - t0
    ok = acc >= 0.95 and iou >= 0.90 and epoch <= 300 and elapsed < 300
    record(5, "capacity", ok, f"train acc {acc:.3f}, IoU {iou:.3f} after {epoch} epochs, {elapsed:.0f}s")
    assert acc >= 0.95 and iou >= 0.90
    assert elapsed < 300


# ---------------------------------------------------------------- 6-9. ablation trends

def test_criterion_06_gaze_ablation():
    exp = RUNS.experiment(SEEDS[0])
    assert len(exp.dataset.test) >= 100 and exp.cfg.activities >= 6
    full = RUNS.mean("full", "accuracy")
    rand_fix = RUNS.mean("random_fixation", "accuracy")
    rand_scan = RUNS.mean("random_scanpath", "accuracy")
    train_s = sum(RUNS.seconds[s, v] for s in SEEDS for v in ("full", "random_fixation", "random_scanpath"))
    ok = full - rand_fix >= 0.10 and full - rand_scan >= 0.10
    record(6, "gaze ablation", ok, f"acc full {full:.3f} vs random_fixation {rand_fix:.3f}, "
                                   f"random_scanpath {rand_scan:.3f} ({len(SEEDS)} seeds, {train_s:.0f}s training)")
    assert full - rand_fix >= 0.10
    assert full - rand_scan >= 0.10
    assert train_s < 15 * 60


def test_criterion_07_conditioning_ablation():
    tol = 0.02
    full = RUNS.mean("full", "levenshtein")
    flat = RUNS.mean("flat_cotrain", "levenshtein")
    none = RUNS.mean("no_activity_head", "levenshtein")
    ok = full <= flat + tol and flat <= none + tol
    record(7, "conditioning ablation", ok,
           f"Levenshtein hierarchical {full:.3f}, flat {flat:.3f}, no head {none:.3f} (tol {tol})")
    assert full <= flat + tol
    assert flat <= none + tol


def test_criterion_08_edge_ablation():
    tol = 0.02
    full = RUNS.mean("full", "levenshtein")
    visual = RUNS.mean("visual_only_edges", "levenshtein")
    ok = full <= visual + tol
    record(8, "edge ablation", ok, f"Levenshtein full edges {full:.3f}, visual only {visual:.3f} (tol {tol})")
    assert ok


def test_criterion_09_fraction_monotonicity():
    low = RUNS.report(SEEDS[0], "full", 0.5).iou
    high = RUNS.report(SEEDS[0], "full", 0.9).iou
    ok = high >= low
    record(9, "input fraction", ok, f"IoU at 50% {low:.3f}, at 90% {high:.3f}")
    assert ok


# ---------------------------------------------------------------- 10. reproducibility

def test_criterion_10_reproducibility(tmp_path):
    conf = tmp_path / "small.conf"
    conf.write_text("node_dim = 16\nedge_dim = 16\necc_hidden = 8\nlstm_hidden = 16\nhead_hidden = 16\n"
                    "epochs = 3\nactivities = 4\ncameras = 2\nvideos_per_pair = 2\nseed = 5\n")
    outs = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert cli_main(["train", "--config", str(conf), "--out", str(out)]) == 0
        assert cli_main(["eval", "--config", str(conf), "--out", str(out), "--fractions", "0.5,0.7,0.9"]) == 0
        assert cli_main(["ablate", "--config", str(conf), "--out", str(out), "--variant", "random_scanpath"]) == 0
        outs.append(out)
    names = ("model.ckpt", "results.csv", "results_random_scanpath.csv", "train_log.csv")
    same = {n: (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names}
    ok = all(same.values())
    record(10, "reproducibility", ok, ", ".join(f"{n} {'identical' if s else 'DIFFERS'}" for n, s in same.items()))
    assert ok
