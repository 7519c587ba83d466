"""Command-line entry point binding ingestion, training, and analysis.

Config precedence is flags > config file > defaults; the fully resolved
config is echoed into the run manifest so any run can be reproduced from it
(`train --config <run>/manifest.json`).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__, analysis, train as train_mod
from .errors import ConfigError, LoadError, MvpruneError
from .graphio import load_tu, save_anomaly_truth, save_tu, split, synth_planted_anomalies
from .pooling import BACKEND_KINDS
from .prune import export_scores
from .train import TrainConfig, build_model, forward_graph, run_trials

EXIT_OK, EXIT_ERROR, EXIT_CONFIG = 0, 1, 2


def _resolve_dataset_dir(path: str) -> str:
    if os.path.isdir(path):
        return path
    root = os.environ.get("MVPRUNE_DATA_DIR")
    if root and os.path.isdir(os.path.join(root, path)):
        return os.path.join(root, path)
    raise LoadError(f"dataset directory not found: {path}")


def _load_dataset(path: str, name: str | None):
    directory = _resolve_dataset_dir(path)
    return load_tu(directory, name or os.path.basename(os.path.normpath(directory)))


def _prepare_out(out: str, force: bool):
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise MvpruneError(f"output directory {out} is not empty; pass --force to overwrite")
    os.makedirs(out, exist_ok=True)


def _resolve_config(args) -> TrainConfig:
    base: dict = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        base = raw.get("config", raw)  # accept a bare config or a manifest
    flag_map = {"epochs": "epochs", "pretrain_epochs": "pretrain_epochs",
                "lr": "learning_rate", "batch_size": "batch_size",
                "lam": "lam", "threshold": "threshold_c", "views": "views",
                "overlap": "overlap_ratio", "latent_width": "latent_width",
                "backend": "backend", "keep_ratio": "keep_ratio",
                "clusters": "clusters"}
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    if getattr(args, "seeds", None) is not None:
        base["seeds"] = [int(s) for s in args.seeds.split(",")]
    if getattr(args, "no_mvp", False):
        base["use_mvp"] = False
    return TrainConfig.from_dict(base)


def _write_manifest(out: str, config: TrainConfig, dataset, dataset_path: str,
                    report, command: str):
    manifest = {
        "tool_version": __version__,
        "command": command,
        "dataset": {"path": os.path.abspath(dataset_path), "name": dataset.name,
                    "fingerprint": dataset.fingerprint()},
        "config": config.to_dict(),
        "seeds": list(config.seeds),
        "partitions": report.partitions if report is not None else [],
        "artifacts": sorted(f for f in os.listdir(out) if f != "manifest.json"),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _write_metrics(report, path: str):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["seed", "accuracy", "pruned_fraction"])
        writer.writeheader()
        for row in report.metrics_rows():
            writer.writerow(row)


def _score_rows(model, dataset):
    for gi, graph in enumerate(dataset.graphs):
        res = forward_graph(model, graph)
        scores = res.scores if res.scores is not None else np.zeros(graph.n)
        deg = graph.degrees
        for node in range(graph.n):
            yield gi, node, deg[node], scores[node], res.indicator[node]


def _load_run_model(run_dir: str, dataset):
    manifest_path = os.path.join(run_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise LoadError(f"missing run manifest: {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest["dataset"]["fingerprint"] != dataset.fingerprint():
        raise MvpruneError("dataset fingerprint does not match the run manifest")
    config = TrainConfig.from_dict(manifest["config"])
    seed = manifest["seeds"][0]
    model_path = os.path.join(run_dir, "models", f"seed{seed}.npz")
    if not os.path.isfile(model_path):
        raise LoadError(f"missing model weights: {model_path}")
    model = build_model(config, dataset, split(dataset, seed), seed)
    with np.load(model_path) as state:
        model.load_state_dict(dict(state))
    return model, config


# -- commands --------------------------------------------------------------

def cmd_train(args) -> int:
    config = _resolve_config(args)
    if config.backend not in BACKEND_KINDS:
        raise ConfigError(
            f"unknown backend '{config.backend}'; valid kinds: {', '.join(BACKEND_KINDS)}")
    dataset = _load_dataset(args.dataset, args.name)
    _prepare_out(args.out, args.force)
    report, models = run_trials(config, dataset, return_models=True, jobs=args.jobs)
    train_mod.save_report(report, os.path.join(args.out, "report.json"))
    _write_metrics(report, os.path.join(args.out, "metrics.csv"))
    models_dir = os.path.join(args.out, "models")
    os.makedirs(models_dir, exist_ok=True)
    for seed, model in zip(report.seeds, models):
        np.savez(os.path.join(models_dir, f"seed{seed}.npz"), **model.state_dict())
    if models:
        export_scores(_score_rows(models[0], dataset), os.path.join(args.out, "scores.csv"))
    _write_manifest(args.out, config, dataset, args.dataset, report, "train")
    print(f"accuracy {report.mean_accuracy:.4f} +/- {report.std_accuracy:.4f} "
          f"over {len(report.seeds)} seeds ({len(report.failures)} failures)")
    return EXIT_OK if not report.failures else EXIT_ERROR


def cmd_synth(args) -> int:
    dataset, truth = synth_planted_anomalies(
        args.graphs, args.nodes, args.anomaly, args.seed,
        n_classes=args.classes, n_features=args.features,
        name=os.path.basename(os.path.normpath(args.out)))
    _prepare_out(args.out, args.force)
    save_tu(dataset, args.out)
    save_anomaly_truth(truth, args.out, dataset.name)
    print(f"wrote {len(dataset)} graphs to {args.out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    dataset = _load_dataset(args.dataset, args.name)
    model, config = _load_run_model(args.run, dataset)
    out_dir = args.out or args.run
    os.makedirs(out_dir, exist_ok=True)
    mvp_scores, keeps_mvp = [], []
    for graph in dataset.graphs:
        res = forward_graph(model, graph)
        mvp_scores.append(res.scores if res.scores is not None else np.zeros(graph.n))
        keeps_mvp.append(res.indicator)
    if args.what == "centrality":
        keeps = {"mvp": keeps_mvp}
        for policy in analysis.DEGREE_POLICIES:
            keeps[policy] = [analysis.policy_indicator(policy, g) for g in dataset.graphs]
        path = os.path.join(out_dir, "centrality.csv")
        analysis.write_centrality_csv(path, dataset, keeps)
    else:  # degree-profile
        rows = analysis.degree_pruning_profile(
            dataset, {"mvp": mvp_scores}, c=config.threshold_c,
            keep_ratio=config.keep_ratio)
        path = os.path.join(out_dir, "degree_profile.csv")
        analysis.write_profile_csv(path, rows)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _resolve_config(args)
    dataset = _load_dataset(args.dataset, args.name)
    _prepare_out(args.out, args.force)
    multipliers = [float(m) for m in args.multipliers.split(",")]
    points = analysis.threshold_sweep(dataset, config, multipliers, retrain=args.retrain)
    path = os.path.join(args.out, "sweep.csv")
    analysis.write_sweep_csv(path, dataset.name, points)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_export_scores(args) -> int:
    dataset = _load_dataset(args.dataset, args.name)
    model, _ = _load_run_model(args.run, dataset)
    out = args.out or os.path.join(args.run, "scores.csv")
    export_scores(_score_rows(model, dataset), out)
    print(f"wrote {out}")
    return EXIT_OK


# -- argument parsing ------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file or a previous run's manifest.json")
    p.add_argument("--epochs", type=int)
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--lam", type=float, help="adjacency/feature score blend")
    p.add_argument("--threshold", type=float, help="pruning threshold multiplier c")
    p.add_argument("--views", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--latent-width", dest="latent_width", type=int)
    p.add_argument("--backend", help=f"one of {', '.join(BACKEND_KINDS)}")
    p.add_argument("--keep-ratio", dest="keep_ratio", type=float)
    p.add_argument("--clusters", type=int)
    p.add_argument("--no-mvp", dest="no_mvp", action="store_true",
                   help="train the bare backend without the pruning layer")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mvprune",
                                     description="Multi-view pruning for graph pooling")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the multi-seed training protocol")
    p.add_argument("--dataset", required=True)
    p.add_argument("--name", help="TU dataset name (default: directory basename)")
    p.add_argument("--out", default="mvprune_out")
    p.add_argument("--force", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="generate a planted-anomaly corpus")
    p.add_argument("--graphs", type=int, default=200)
    p.add_argument("--nodes", type=int, default=20)
    p.add_argument("--anomaly", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--features", type=int, default=8)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="pruning-quality diagnostics for a run")
    p.add_argument("what", choices=["centrality", "degree-profile"])
    p.add_argument("--dataset", required=True)
    p.add_argument("--name")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="threshold-multiplier sweep")
    p.add_argument("--dataset", required=True)
    p.add_argument("--name")
    p.add_argument("--multipliers", default="0.5,1,1.5,2,2.5,3")
    p.add_argument("--retrain", action="store_true",
                   help="retrain per multiplier instead of re-evaluating")
    p.add_argument("--out", default="mvprune_sweep")
    p.add_argument("--force", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-scores", help="per-node scores of a trained run")
    p.add_argument("--dataset", required=True)
    p.add_argument("--name")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_scores)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MvpruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
