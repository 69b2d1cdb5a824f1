"""Run configuration: one flat set of keys read from ``key = value`` files.

Values are coerced to the type of the field default. Environment variables
named ``GAZEGRAPH_SET_<KEY>`` override file values, which override defaults.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .world import DatasetConfig

ENV_PREFIX = "GAZEGRAPH_SET_"


@dataclass(frozen=True)
class RunConfig:
    # model
    node_dim: int = 512
    edge_dim: int = 600
    ecc_layers: int = 3
    ecc_hidden: int = 128
    lstm_hidden: int = 384
    lstm_layers: int = 2
    head_hidden: int = 128
    max_decode_len: int = 32
    lr: float = 1e-3
    epochs: int = 300
    batch_size: int = 16
    feedback: bool = False
    # dataset
    activities: int = 18
    cameras: int = 4
    test_cameras_per_activity: int = 1
    videos_per_pair: int = 3
    frame_rate: float = 4.0
    max_seconds: float = 32.0
    filler_max: int = 3
    jitter_px: float = 20.0
    lookahead: float = 0.2
    distractor_p: float = 0.1
    # gaze
    velocity_threshold: float = 30.0
    min_fixation_ms: float = 60.0
    gaze_source: str = "ivt"
    # graph construction
    crop: float = 75.0
    rho: float = 0.9
    detector_accuracy: float = 0.72
    visual_alpha: float = 1.0
    visual_beta: float = 0.5
    visual_gamma: float = 0.1
    visual_context: float = 0.2
    # experiment
    fraction: float = 0.7
    train_fractions: tuple = (0.7,)
    variant: str = "full"
    seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        if self.edge_dim % 2:
            raise ConfigError(f"edge_dim must be even (two label halves), got {self.edge_dim}")
        if self.crop <= 0:
            raise ConfigError("crop must be positive")
        if not 0.0 < self.fraction <= 1.0:
            raise ConfigError(f"fraction must be in (0, 1], got {self.fraction}")
        if not self.train_fractions or any(not 0.0 < f <= 1.0 for f in self.train_fractions):
            raise ConfigError(f"train_fractions must be nonempty values in (0, 1], got {self.train_fractions}")
        if self.gaze_source not in ("ivt", "direct"):
            raise ConfigError(f"gaze_source must be 'ivt' or 'direct', got {self.gaze_source!r}")

    @property
    def semantic_dim(self) -> int:
        return self.edge_dim // 2

    def model_config(self, conditioning: str = "hierarchical") -> ModelConfig:
        return ModelConfig(
            node_dim=self.node_dim, edge_dim=self.edge_dim, ecc_layers=self.ecc_layers,
            ecc_hidden=self.ecc_hidden, lstm_hidden=self.lstm_hidden, lstm_layers=self.lstm_layers,
            head_hidden=self.head_hidden, max_decode_len=self.max_decode_len, lr=self.lr, epochs=self.epochs,
            batch_size=self.batch_size, feedback=self.feedback, conditioning=conditioning)

    def dataset_config(self) -> DatasetConfig:
        return DatasetConfig(
            activities=self.activities, cameras=self.cameras,
            test_cameras_per_activity=self.test_cameras_per_activity, videos_per_pair=self.videos_per_pair,
            frame_rate=self.frame_rate, max_seconds=self.max_seconds, filler_max=self.filler_max,
            jitter_px=self.jitter_px, lookahead=self.lookahead, distractor_p=self.distractor_p)

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train_fractions"] = list(self.train_fractions)
        return d

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    default = _FIELDS[key].default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {type(default).__name__}") from None


def parse_overrides(pairs: dict, source: str = "config") -> dict:
    out = {}
    for key, raw in pairs.items():
        if key not in _FIELDS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        out[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    return out


def read_config_text(text: str, source: str = "config") -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        pairs[key] = value
    return parse_overrides(pairs, source)


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    pairs = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            if key not in _FIELDS:
                raise ConfigError(f"environment: unknown key {key!r} (from {name})")
            pairs[key] = value
    return parse_overrides(pairs, "environment")


def load_config(path=None, overrides: dict | None = None, environ=None) -> RunConfig:
    """Defaults, then the file, then the environment, then explicit overrides."""
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        values.update(read_config_text(p.read_text(), str(p)))
    values.update(env_overrides(environ))
    values.update(parse_overrides(overrides or {}, "override"))
    return RunConfig(**values)


def derive_seed(global_seed: int, component: str) -> int:
    """Fixed hash schedule from one global seed to per-component seeds."""
    digest = hashlib.sha256(f"gazegraph/{int(global_seed)}/{component}".encode()).digest()
    return int.from_bytes(digest[:4], "little")
