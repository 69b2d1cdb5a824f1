"""Edge-conditioned graph encoder with an activity head and an LSTM action decoder.

Graphs in a mini-batch are packed into one disjoint union. Each ECC layer
turns every message's edge attribute into a (d_out, d_in) filter, applies it
to the neighbour's features and averages the results per receiving node.
The graph vector is the concatenation of per-layer node means.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import numerics as nx
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .graphbuild import ActivityGraph
from .world import ACTION_VOCAB, ACTIVITY_NAMES

EOS = len(ACTION_VOCAB)
CONDITIONING = ("hierarchical", "flat", "none")


@dataclass
class ModelConfig:
    node_dim: int = 512
    edge_dim: int = 600
    ecc_layers: int = 3
    ecc_hidden: int = 128
    lstm_hidden: int = 384
    lstm_layers: int = 2
    head_hidden: int = 128
    activity_classes: int = len(ACTIVITY_NAMES)
    action_vocab: int = len(ACTION_VOCAB) + 1  # last index is EOS
    max_decode_len: int = 32
    lr: float = 1e-3
    epochs: int = 300
    batch_size: int = 16
    conditioning: str = "hierarchical"
    feedback: bool = False
    activity_loss_weight: float = 1.0

    def __post_init__(self):
        if self.conditioning not in CONDITIONING:
            raise ConfigError(f"conditioning must be one of {CONDITIONING}, got {self.conditioning!r}")
        for name in ("node_dim", "edge_dim", "ecc_layers", "ecc_hidden", "lstm_hidden", "lstm_layers",
                     "head_hidden", "activity_classes", "action_vocab", "max_decode_len", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.action_vocab < 2:
            raise ConfigError("action_vocab must hold at least one action plus EOS")

    @property
    def readout_dim(self) -> int:
        return self.ecc_layers * self.ecc_hidden

    @property
    def eos(self) -> int:
        return self.action_vocab - 1


# ---------------------------------------------------------------------------
# graph packing
# ---------------------------------------------------------------------------

@dataclass
class PackedGraphs:
    """Disjoint union of graphs with one row per directed message j -> i."""

    features: np.ndarray  # (n, d1)
    msg_src: np.ndarray  # j
    msg_dst: np.ndarray  # i
    msg_attr: np.ndarray  # (m, d2), e_{i,j}
    graph_of_node: np.ndarray
    n_graphs: int


def _messages(graph: ActivityGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(src, dst, attr, node features) for one graph, cached on the graph."""
    # graphs are treated as immutable once packed; reuse the message lists
    cached = graph.__dict__.get("_message_cache")
    key = (id(graph.edges), len(graph.edges), id(graph.nodes), len(graph.nodes))
    if cached is not None and cached[0] == key:
        return cached[1]
    out = _build_messages(graph) + (graph.node_features(),)
    graph.__dict__["_message_cache"] = (key, out)
    return out


def _build_messages(graph: ActivityGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(graph.nodes)
    stored = {}
    for e in graph.edges:
        if not (0 <= e.src < n and 0 <= e.dst < n):
            raise ContractError(f"edge ({e.src}, {e.dst}) outside {n} nodes")
        stored.setdefault((e.src, e.dst), e.attr)
    for i in range(n):
        if (i, i) not in stored:
            raise ContractError(f"node {i} of graph {graph.video_id!r} has no self-loop")
    pairs = sorted({(a, b) for a, b in stored} | {(b, a) for a, b in stored})
    src, dst, attr = [], [], []
    for i, j in pairs:
        # message into i from j carries e_{i,j} = (label_i, label_j)
        if (i, j) in stored:
            a = stored[(i, j)]
        else:
            a = stored[(j, i)]
            half = a.shape[0] // 2
            a = np.concatenate([a[half:], a[:half]])
        src.append(j)
        dst.append(i)
        attr.append(a)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.stack(attr)


def pack_graphs(graphs: Sequence[ActivityGraph]) -> PackedGraphs:
    if not graphs:
        raise ContractError("cannot pack an empty list of graphs")
    feats, src, dst, attr, gid = [], [], [], [], []
    offset = 0
    for g_idx, g in enumerate(graphs):
        if not g.nodes:
            raise ContractError(f"graph {g.video_id!r} has no nodes")
        s, d, a, f = _messages(g)
        feats.append(f)
        src.append(s + offset)
        dst.append(d + offset)
        attr.append(a)
        gid.append(np.full(len(g.nodes), g_idx, dtype=np.int64))
        offset += len(g.nodes)
    return PackedGraphs(np.concatenate(feats), np.concatenate(src), np.concatenate(dst),
                        np.concatenate(attr), np.concatenate(gid), len(graphs))


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def _glorot(rng, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


@dataclass
class EccLayer:
    filter_w: nx.Param  # (d2, d_out*d_in)
    filter_b: nx.Param  # (1, d_out*d_in)
    bias: nx.Param  # (1, d_out)
    d_in: int
    d_out: int


def init_params(config: ModelConfig, seed: int = 0) -> dict:
    """All trainable tensors keyed by name, in a fixed creation order."""
    rng = np.random.default_rng(seed)
    p: dict = {}

    def add(name, data):
        p[name] = nx.Param(data, name)

    d_in = config.node_dim
    for layer in range(config.ecc_layers):
        d_out = config.ecc_hidden
        std = math.sqrt(2.0 / (d_in + d_out))
        # edge attrs have norm ~sqrt(2); the edge-driven part starts at half the bias-matrix scale
        add(f"ecc{layer}.filter_w", rng.normal(0.0, 0.35 * std, (config.edge_dim, d_out * d_in)))
        add(f"ecc{layer}.filter_b", _glorot(rng, d_in, d_out, (1, d_out * d_in)))
        add(f"ecc{layer}.bias", np.zeros((1, d_out)))
        d_in = d_out
    r = config.readout_dim
    add("head.w1", _glorot(rng, r, config.head_hidden, (r, config.head_hidden)))
    add("head.b1", np.zeros((1, config.head_hidden)))
    add("head.w2", _glorot(rng, config.head_hidden, config.activity_classes,
                           (config.head_hidden, config.activity_classes)))
    add("head.b2", np.zeros((1, config.activity_classes)))
    x_dim = decoder_input_dim(config)
    h = config.lstm_hidden
    for layer in range(config.lstm_layers):
        add(f"lstm{layer}.w_x", _glorot(rng, x_dim, 4 * h, (x_dim, 4 * h)))
        add(f"lstm{layer}.w_h", _glorot(rng, h, 4 * h, (h, 4 * h)))
        b = np.zeros((1, 4 * h))
        b[0, h:2 * h] = 1.0  # forget gate
        add(f"lstm{layer}.b", b)
        x_dim = h
    add("out.w", _glorot(rng, h, config.action_vocab, (h, config.action_vocab)))
    add("out.b", np.zeros((1, config.action_vocab)))
    return p


def decoder_input_dim(config: ModelConfig) -> int:
    d = config.readout_dim + config.activity_classes
    if config.feedback:
        d += config.action_vocab
    return d


def ecc_layer(params: dict, index: int, config: ModelConfig) -> EccLayer:
    d_in = config.node_dim if index == 0 else config.ecc_hidden
    return EccLayer(params[f"ecc{index}.filter_w"], params[f"ecc{index}.filter_b"], params[f"ecc{index}.bias"],
                    d_in, config.ecc_hidden)


# ---------------------------------------------------------------------------
# forward pieces
# ---------------------------------------------------------------------------

def ecc_forward(packed: PackedGraphs, feats, layer: EccLayer) -> nx.Tensor:
    """v_i = mean_{j in N(i)} Theta(e_ij) v_j + b, with N(i) containing i."""
    feats = nx.as_tensor(feats)
    if feats.shape[1] != layer.d_in:
        raise DimensionError(f"ECC layer expects {layer.d_in}-d node features, got {feats.shape[1]}")
    # Theta(e) v = sum_k e_k W_k v + B v. Projecting every node through all W_k
    # first costs O(n) filter products instead of O(messages).
    d2 = packed.msg_attr.shape[1]
    filters = nx.concat([layer.filter_w, layer.filter_b], axis=0)  # (d2+1, d_out*d_in)
    filters = nx.transpose(nx.reshape(filters, (d2 + 1, layer.d_out, layer.d_in)), (2, 1, 0))
    proj = nx.matmul(feats, nx.reshape(filters, (layer.d_in, -1)))  # (n, d_out*(d2+1))
    per_msg = nx.reshape(nx.take_rows(proj, packed.msg_src), (-1, layer.d_out, d2 + 1))
    attr = np.concatenate([packed.msg_attr, np.ones((packed.msg_attr.shape[0], 1))], axis=1)
    msgs = nx.batched_matvec(per_msg, attr)
    return nx.add(nx.segment_mean(msgs, packed.msg_dst, feats.shape[0]), layer.bias)


def encode_graphs(params: dict, config: ModelConfig, packed: PackedGraphs) -> tuple[nx.Tensor, list]:
    """Run the ECC stack and return (v_G rows, per-layer node features)."""
    h = nx.as_tensor(packed.features)
    layers = []
    for i in range(config.ecc_layers):
        h = ecc_forward(packed, h, ecc_layer(params, i, config))
        layers.append(h)
        if i + 1 < config.ecc_layers:
            h = nx.relu(h)
    return readout(layers, packed.graph_of_node, packed.n_graphs), layers


def readout(per_layer: Sequence, graph_of_node, n_graphs: int) -> nx.Tensor:
    if not per_layer:
        raise ContractError("readout needs at least one layer of node features")
    if len(graph_of_node) == 0:
        raise ContractError("readout of an empty graph")
    return nx.concat([nx.segment_mean(h, graph_of_node, n_graphs) for h in per_layer], axis=1)


def activity_head(params: dict, v_g) -> nx.Tensor:
    hidden = nx.relu(nx.add(nx.matmul(v_g, params["head.w1"]), params["head.b1"]))
    return nx.add(nx.matmul(hidden, params["head.w2"]), params["head.b2"])


def _lstm_cell(params: dict, layer: int, x_proj, h, c, hidden: int):
    gates = nx.add(x_proj, nx.matmul(h, params[f"lstm{layer}.w_h"]))
    both = nx.lstm_cell(gates, c)
    return nx.slice_last(both, 0, hidden), nx.slice_last(both, hidden, 2 * hidden)


def decode_actions(params: dict, config: ModelConfig, v_g, condition, steps: int,
                   prev_tokens: np.ndarray | None = None) -> list:
    """Unroll the decoder for ``steps`` steps and return per-step (B, M2) logits.

    ``condition`` is the (B, M1) activity one-hot (or zeros). In feedback mode
    ``prev_tokens`` (B, steps) gives the token fed at each step; the first
    column is ignored and replaced by a zero vector.
    """
    v_g = nx.as_tensor(v_g)
    rows = v_g.shape[0]
    condition = np.asarray(condition, dtype=np.float64)
    if condition.shape != (rows, config.activity_classes):
        raise DimensionError(f"activity condition must be ({rows}, {config.activity_classes}), got {condition.shape}")
    base = nx.concat([v_g, nx.as_tensor(condition)], axis=1)
    hidden = config.lstm_hidden
    hs = [nx.as_tensor(np.zeros((rows, hidden))) for _ in range(config.lstm_layers)]
    cs = [nx.as_tensor(np.zeros((rows, hidden))) for _ in range(config.lstm_layers)]
    # the constant input is projected once and reused at every step
    base_proj = None if config.feedback else nx.add(nx.matmul(base, params["lstm0.w_x"]), params["lstm0.b"])
    out = []
    for step in range(steps):
        if config.feedback:
            fb = np.zeros((rows, config.action_vocab))
            if step > 0 and prev_tokens is not None:
                fb[np.arange(rows), prev_tokens[:, step]] = 1.0
            x = nx.concat([base, nx.as_tensor(fb)], axis=1)
            x_proj = nx.add(nx.matmul(x, params["lstm0.w_x"]), params["lstm0.b"])
        else:
            x_proj = base_proj
        for layer in range(config.lstm_layers):
            if layer > 0:
                x_proj = nx.add(nx.matmul(hs[layer - 1], params[f"lstm{layer}.w_x"]), params[f"lstm{layer}.b"])
            hs[layer], cs[layer] = _lstm_cell(params, layer, x_proj, hs[layer], cs[layer], hidden)
        out.append(nx.add(nx.matmul(hs[-1], params["out.w"]), params["out.b"]))
    return out


def gold_matrix(sequences: Sequence[Sequence[int]], eos: int) -> tuple[np.ndarray, np.ndarray]:
    """Pad EOS-terminated gold sequences to (B, L) targets plus a 0/1 mask."""
    length = max(len(s) for s in sequences) + 1
    targets = np.full((len(sequences), length), eos, dtype=np.int64)
    mask = np.zeros((len(sequences), length))
    for r, s in enumerate(sequences):
        targets[r, :len(s)] = s
        mask[r, :len(s) + 1] = 1.0
    return targets, mask


def sequence_loss(step_logits: Sequence, targets: np.ndarray, mask: np.ndarray, reduction: str = "sum") -> nx.Tensor:
    """Masked cross-entropy over decoder steps.

    ``sum`` adds the per-step terms (the training objective); ``mean``
    divides each row by its number of unmasked steps.
    """
    rows, length = targets.shape
    if len(step_logits) < length:
        raise ContractError(f"decoder produced {len(step_logits)} steps, gold needs {length}")
    weights = mask.copy()
    if reduction == "mean":
        weights = weights / np.maximum(weights.sum(axis=1, keepdims=True), 1.0)
    elif reduction != "sum":
        raise ConfigError(f"unknown reduction {reduction!r}")
    stacked = nx.concat(list(step_logits[:length]), axis=0)  # step-major rows
    return nx.cross_entropy(stacked, targets.T.reshape(-1), weights.T.reshape(-1))


def joint_loss(activity_logits, activities, step_logits, gold_sequences, eos: int,
               activity_weight: float = 1.0) -> tuple[nx.Tensor, nx.Tensor, nx.Tensor]:
    """CE(activity) + sum of per-step CEs up to and including EOS, averaged over rows.

    Returns (total, activity part, action part).
    """
    targets, mask = gold_matrix(gold_sequences, eos)
    rows = targets.shape[0]
    act = nx.scale(nx.cross_entropy(activity_logits, activities), 1.0 / rows)
    seq = nx.scale(sequence_loss(step_logits, targets, mask), 1.0 / rows)
    total = nx.add(nx.scale(act, activity_weight), seq) if activity_weight else seq
    return total, act, seq


# ---------------------------------------------------------------------------
# model wrapper
# ---------------------------------------------------------------------------

@dataclass
class GraphSample:
    graph: ActivityGraph
    activity: int
    suffix: list  # gold remaining action tokens, no EOS
    video_id: str = ""


def one_hot(labels, classes: int) -> np.ndarray:
    out = np.zeros((len(labels), classes))
    out[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)] = 1.0
    return out


@dataclass
class Prediction:
    activity: int
    actions: list
    activity_probs: np.ndarray = field(repr=False, default=None)


class GazeGraphModel:
    def __init__(self, config: ModelConfig, seed: int = 0, params: dict | None = None):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    @property
    def param_list(self) -> list:
        return list(self.params.values())

    def _condition(self, activities, rows: int) -> np.ndarray:
        if self.config.conditioning == "hierarchical":
            return one_hot(activities, self.config.activity_classes)
        return np.zeros((rows, self.config.activity_classes))

    def loss(self, samples: Sequence[GraphSample]) -> tuple[nx.Tensor, nx.Tensor, nx.Tensor]:
        cfg = self.config
        packed = pack_graphs([s.graph for s in samples])
        v_g, _ = encode_graphs(self.params, cfg, packed)
        labels = [s.activity for s in samples]
        act_logits = activity_head(self.params, v_g)
        golds = [list(s.suffix)[:cfg.max_decode_len - 1] for s in samples]
        targets, _ = gold_matrix(golds, cfg.eos)
        prev = np.concatenate([np.full((len(samples), 1), cfg.eos), targets[:, :-1]], axis=1) if cfg.feedback else None
        steps = decode_actions(self.params, cfg, v_g, self._condition(labels, len(samples)), targets.shape[1], prev)
        weight = cfg.activity_loss_weight if cfg.conditioning != "none" else 0.0
        return joint_loss(act_logits, labels, steps, golds, cfg.eos, weight)

    def predict(self, graphs: Sequence[ActivityGraph]) -> list[Prediction]:
        cfg = self.config
        packed = pack_graphs(graphs)
        v_g, _ = encode_graphs(self.params, cfg, packed)
        logits = activity_head(self.params, v_g).data
        acts = np.argmax(logits, axis=1)
        cond = self._condition(acts, len(graphs))
        if cfg.feedback:
            tokens = self._greedy_feedback(v_g, cond)
        else:
            steps = decode_actions(self.params, cfg, v_g, cond, cfg.max_decode_len)
            tokens = np.stack([np.argmax(s.data, axis=1) for s in steps], axis=1)
        out = []
        for r in range(len(graphs)):
            seq = []
            for tok in tokens[r]:
                if tok == cfg.eos:
                    break
                seq.append(int(tok))
            out.append(Prediction(int(acts[r]), seq, nx.softmax(logits[r])))
        return out

    def _greedy_feedback(self, v_g, cond) -> np.ndarray:
        cfg = self.config
        rows = cond.shape[0]
        prev = np.full((rows, cfg.max_decode_len), cfg.eos, dtype=np.int64)
        for step in range(cfg.max_decode_len):
            logits = decode_actions(self.params, cfg, v_g, cond, step + 1, prev)[-1].data
            if step + 1 < cfg.max_decode_len:
                prev[:, step + 1] = np.argmax(logits, axis=1)
            else:
                last = np.argmax(logits, axis=1)
        return np.concatenate([prev[:, 1:], last[:, None]], axis=1)

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"model_config": asdict(self.config)}
        meta.update(extra or {})
        nx.save_checkpoint(path, self.param_list, meta)

    @classmethod
    def load(cls, path) -> "GazeGraphModel":
        arrays, meta = nx.load_checkpoint(path)
        config = ModelConfig(**meta["model_config"])
        params = init_params(config, 0)
        if set(params) != set(arrays):
            raise ContractError("checkpoint parameters do not match the stored configuration")
        for name, p in params.items():
            if p.shape != arrays[name].shape:
                raise DimensionError(f"checkpoint {name}: shape {arrays[name].shape}, expected {p.shape}")
            p.data = np.array(arrays[name], dtype=np.float64)
        return cls(config, params=params)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, total, activity, action)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "total_loss", "activity_loss", "action_loss"])
        for e, t, a, s in self.rows:
            w.writerow([e, repr(t), repr(a), repr(s)])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


def train(samples: Sequence[GraphSample], config: ModelConfig, seed: int = 0,
          model: GazeGraphModel | None = None, callback=None) -> tuple[GazeGraphModel, TrainLog]:
    """Mini-batch Adam on the joint loss; deterministic for a given seed.

    ``callback(epoch, model)`` runs after every epoch; returning True stops early.
    """
    if not samples:
        raise ContractError("training needs at least one sample")
    model = model or GazeGraphModel(config, seed)
    state = nx.AdamState(lr=config.lr)
    rng = np.random.default_rng(seed)
    log = TrainLog()
    params = model.param_list
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(samples))
        sums = np.zeros(3)
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start:start + config.batch_size]]
            nx.zero_grad(params)
            total, act, seq = model.loss(batch)
            if not np.isfinite(total.item()):
                raise NumericError(f"training diverged at epoch {epoch}: loss is {total.item()}")
            nx.backward(total)
            try:
                nx.adam_step(state, params)
            except NumericError as exc:
                raise NumericError(f"training diverged at epoch {epoch}: {exc}") from None
            sums += np.array([total.item(), act.item(), seq.item()]) * len(batch)
        sums /= len(samples)
        log.rows.append((epoch, float(sums[0]), float(sums[1]), float(sums[2])))
        if callback is not None and callback(epoch, model):
            break
    return model, log
