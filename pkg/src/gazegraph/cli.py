"""``gazegraph`` command line.

Every command regenerates the synthetic dataset from the resolved config, so
a run can be reproduced from its ``run_manifest.json`` alone.

Exit codes: 0 success, 1 unexpected library error, 2 bad usage or config,
3 missing input file, 4 malformed input or numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigError, FormatError, GazeGraphError, NumericError
from .evaluation import Experiment, results_csv, sweep_crop
from .graphbuild import cosine_histogram, export_graph, write_histogram_csv
from .model import GazeGraphModel
from .pipeline import VARIANTS, prefix_graph
from .world import cutoff, write_program

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_FILE, EXIT_DATA = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: RunConfig, artifacts: list) -> Path:
    manifest = {
        "tool": "gazegraph",
        "version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "artifacts": {str(p.relative_to(out)): _sha256(p) for p in sorted(artifacts)},
    }
    path = out / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _resolve(args) -> RunConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, _, v = item.partition("=")
        overrides[k.strip()] = v.strip()
    for key in ("seed", "variant", "fraction", "crop", "rho", "epochs"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = str(val)
    if args.out is not None:
        overrides["out_dir"] = args.out
    return load_config(args.config, overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(cfg: RunConfig, args) -> list:
    exp = Experiment(cfg)
    out = _out_dir(cfg)
    prog_dir = out / "programs"
    prog_dir.mkdir(exist_ok=True)
    arts = []
    rows = ["video_id,frame,x_px,y_px"]
    manifest = {"seed": cfg.seed, "splits": {}}
    for split in ("train", "test"):
        entries = []
        for v in getattr(exp.dataset, split):
            p = prog_dir / f"{v.video_id}.txt"
            write_program(p, v.program)
            arts.append(p)
            entries.append({"video_id": v.video_id, "activity": v.program.name, "camera": v.camera,
                            "frames": v.frame_count, "actions": len(v.program.actions)})
            rows += [f"{v.video_id},{t},{x!r},{y!r}" for t, (x, y) in enumerate(v.track.tolist())]
        manifest["splits"][split] = entries
    ds_path = out / "dataset_manifest.json"
    ds_path.write_text(json.dumps(manifest, indent=2) + "\n")
    tracks = out / "tracks.csv"
    tracks.write_text("\n".join(rows) + "\n")
    print(f"generated {len(exp.dataset.train)} train / {len(exp.dataset.test)} test videos in {out}")
    return arts + [ds_path, tracks]


def cmd_build_graphs(cfg: RunConfig, args) -> list:
    exp = Experiment(cfg)
    out = _out_dir(cfg) / "graphs"
    out.mkdir(exist_ok=True)
    arts = []
    for split in ("train", "test"):
        for s in exp.samples(cfg.variant, split, [cfg.fraction]):
            p = out / f"{s.video_id}.json"
            export_graph(s.graph, p, "json")
            arts.append(p)
    print(f"wrote {len(arts)} graphs to {out}")
    return arts


def cmd_train(cfg: RunConfig, args) -> list:
    exp = Experiment(cfg)
    out = _out_dir(cfg)
    model, log = exp.train(cfg.variant)
    ckpt = out / "model.ckpt"
    model.save(ckpt, {"variant": cfg.variant, "seed": cfg.seed})
    log_path = out / "train_log.csv"
    log.write(log_path)
    print(f"trained {cfg.variant} for {len(log.rows)} epochs, final loss {log.rows[-1][1]:.4f}; saved {ckpt}")
    return [ckpt, log_path]


def _write_reports(out: Path, name: str, reports) -> Path:
    p = out / name
    p.write_text(results_csv(reports))
    for r in reports:
        print(f"{r.variant} fraction={r.fraction} acc={r.accuracy:.3f} iou={r.iou:.3f} "
              f"leven={r.levenshtein:.3f} sr={r.success_rate:.3f} n={r.n}")
    return p


def cmd_eval(cfg: RunConfig, args) -> list:
    ckpt = Path(args.checkpoint) if args.checkpoint else Path(cfg.out_dir) / "model.ckpt"
    if not ckpt.is_file():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model = GazeGraphModel.load(ckpt)
    exp = Experiment(cfg)
    out = _out_dir(cfg)
    fractions = _fractions(args.fractions) or [cfg.fraction]
    reports = [exp.evaluate(model, cfg.variant, f) for f in fractions]
    return [_write_reports(out, "results.csv", reports)]


def cmd_ablate(cfg: RunConfig, args) -> list:
    exp = Experiment(cfg)
    out = _out_dir(cfg)
    model, log = exp.train(cfg.variant)
    fractions = _fractions(args.fractions) or [cfg.fraction]
    reports = [exp.evaluate(model, cfg.variant, f) for f in fractions]
    return [_write_reports(out, f"results_{cfg.variant}.csv", reports)]


def cmd_sweep_crop(cfg: RunConfig, args) -> list:
    sizes = _fractions(args.sizes) or [25.0, 50.0, 75.0, 100.0]
    out = _out_dir(cfg)
    return [_write_reports(out, "sweep_crop.csv", sweep_crop(cfg, sizes))]


def _find_video(exp: Experiment, video_id: str):
    for v in exp.dataset.videos:
        if v.video_id == video_id:
            split = "train" if any(v is x for x in exp.dataset.train) else "test"
            return v, split
    raise UsageError(f"no video named {video_id!r} in the dataset")


def cmd_export_graph(cfg: RunConfig, args) -> list:
    exp = Experiment(cfg)
    video_id = args.video or exp.dataset.test[0].video_id
    video, split = _find_video(exp, video_id)
    tables = exp.tables(cfg.variant, split)
    table = next(t for t in tables if t.video.video_id == video_id)
    graph = prefix_graph(table, cutoff(video, cfg.fraction)[0], cfg.variant, cfg, exp.encoders)
    out = _out_dir(cfg)
    ext = "dot" if args.format == "dot" else "json"
    p = out / f"{video_id}.{ext}"
    export_graph(graph, p, args.format)
    print(f"{video_id}: {len(graph.nodes)} nodes, {len(graph.edges)} edges -> {p}")
    return [p]


def cmd_hist(cfg: RunConfig, args) -> list:
    exp = Experiment(cfg)
    split = args.split
    per_video = {t.video.video_id: t.embeddings for t in exp.tables(cfg.variant, split)}
    edges, counts = cosine_histogram(per_video, args.bins)
    out = _out_dir(cfg)
    p = out / "cosine_hist.csv"
    write_histogram_csv(p, edges, counts)
    total = np.sum([c for c in counts.values()], axis=0)
    above = total[edges[:-1] >= cfg.rho].sum() / max(total.sum(), 1)
    print(f"{len(counts)} videos; {above:.3f} of frame pairs have cosine >= rho={cfg.rho}")
    return [p]


def _fractions(text):
    if not text:
        return None
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


COMMANDS = {
    "gen-data": cmd_gen_data,
    "build-graphs": cmd_build_graphs,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "sweep-crop": cmd_sweep_crop,
    "export-graph": cmd_export_graph,
    "hist": cmd_hist,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--fraction", type=float, help="input fraction for evaluation")
    common.add_argument("--crop", type=float, help="crop half-size B in pixels")
    common.add_argument("--rho", type=float, help="node merge threshold")
    common.add_argument("--epochs", type=int)

    parser = argparse.ArgumentParser(prog="gazegraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gazegraph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[common], help="generate the synthetic dataset")
    sub.add_parser("build-graphs", parents=[common], help="build and export graphs for every video")
    sub.add_parser("train", parents=[common], help="train a model and save a checkpoint")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    p.add_argument("--checkpoint", help="defaults to <out>/model.ckpt")
    p.add_argument("--fractions", help="comma-separated input fractions")
    p = sub.add_parser("ablate", parents=[common], help="train and evaluate one variant")
    p.add_argument("--fractions", help="comma-separated input fractions")
    p = sub.add_parser("sweep-crop", parents=[common], help="train and evaluate per crop size")
    p.add_argument("--sizes", help="comma-separated crop sizes (default 25,50,75,100)")
    p = sub.add_parser("export-graph", parents=[common], help="export one video's graph")
    p.add_argument("--video", help="video id (default: first test video)")
    p.add_argument("--format", choices=("json", "dot"), default="dot")
    p = sub.add_parser("hist", parents=[common], help="pairwise frame-cosine histograms")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--split", choices=("train", "test"), default="train")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        artifacts = COMMANDS[args.command](cfg, args)
        write_manifest(Path(cfg.out_dir), args.command, cfg, artifacts)
        return EXIT_OK
    except (UsageError, ConfigError) as exc:
        print(f"gazegraph {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"gazegraph {args.command}: file error: {exc}", file=sys.stderr)
        return EXIT_FILE
    except (FormatError, NumericError) as exc:
        print(f"gazegraph {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GazeGraphError as exc:
        print(f"gazegraph {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
