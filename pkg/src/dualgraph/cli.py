"""Command-line surface: train, eval, ablate, synth, inspect.

Exit codes are a stable contract: 0 success, 2 for usage or input
problems, 3 when training fails numerically. Every command is
deterministic given identical arguments and input files.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace

from dualgraph.model import load_checkpoint, save_checkpoint, subject_graphs
from dualgraph.preprocess import generate_synthetic, load_dataset, save_dataset, pearson_correlation
from dualgraph.train import (
    TrainConfig,
    TrainingDiverged,
    load_train_config,
    run_ablation,
    train_model,
    evaluate,
)

_METRIC_KEYS = ("f1", "sensitivity", "specificity", "auc", "tp", "fp", "tn", "fn")


def _metrics_json(metrics) -> str:
    data = metrics.to_dict()
    return json.dumps({k: data[k] for k in _METRIC_KEYS}, indent=2) + "\n"


def _artifact_paths(checkpoint_path: str) -> tuple:
    base, _ = os.path.splitext(checkpoint_path)
    return base + ".log.csv", base + ".metrics.json"


def _apply_overrides(config: TrainConfig, args) -> TrainConfig:
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "mode", None) is not None:
        config = replace(config, mode=args.mode.replace("-", "_"))
    return config


def cmd_train(args) -> int:
    dataset = load_dataset(args.data)
    config = _apply_overrides(load_train_config(args.config), args)
    state, metrics, log = train_model(dataset, config)

    save_checkpoint(state, args.out)
    log_path, metrics_path = _artifact_paths(args.out)
    with open(log_path, "w", newline="") as fh:
        fh.write("epoch,train_loss,val_f1,val_loss\n")
        for row in log:
            fh.write(
                f"{row['epoch']},{row['train_loss']!r},"
                f"{row['val_f1']!r},{row['val_loss']!r}\n"
            )
    with open(metrics_path, "w", newline="") as fh:
        fh.write(_metrics_json(metrics))

    print(f"trained {config.mode} model on {dataset.name}: test F1 {metrics.f1:.4f}")
    print(f"checkpoint: {args.out}")
    print(f"training log: {log_path}")
    print(f"metrics: {metrics_path}")
    return 0


def cmd_eval(args) -> int:
    state = load_checkpoint(args.model)
    dataset = load_dataset(args.data)
    metrics = evaluate(state, dataset, list(range(len(dataset))))
    text = _metrics_json(metrics)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        print(f"metrics: {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_ablate(args) -> int:
    dataset = load_dataset(args.data)
    config = _apply_overrides(load_train_config(args.config), args)
    table = run_ablation(dataset, config)
    with open(args.out, "w", newline="") as fh:
        fh.write("mode," + ",".join(_METRIC_KEYS) + "\n")
        for mode, metrics in table:
            data = metrics.to_dict()
            fh.write(mode + "," + ",".join(repr(data[k]) for k in _METRIC_KEYS) + "\n")
    for mode, metrics in table:
        print(f"{mode:<10s} F1 {metrics.f1:.4f}  AUC {metrics.auc:.4f}")
    print(f"ablation table: {args.out}")
    return 0


def cmd_synth(args) -> int:
    dataset = generate_synthetic(args.subjects, args.rois, args.steps, args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} subjects ({args.rois}x{args.steps}) to {args.out}")
    return 0


def _write_edges(path: str, edges: list) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("source,target,weight\n")
        for source, target, weight in edges:
            fh.write(f"{source},{target},{weight!r}\n")


def _top_edges(edges: list, top_percent: float) -> list:
    """Keep the ceil(p%) heaviest edges; ties resolved by (source, target)."""
    if not edges:
        return []
    keep = math.ceil(len(edges) * top_percent / 100.0)
    ranked = sorted(edges, key=lambda e: (-e[2], e[0], e[1]))
    return ranked[:keep]


def cmd_inspect(args) -> int:
    if not 0.0 < args.top_percent <= 100.0:
        raise ValueError(f"--top-percent must be in (0, 100], got {args.top_percent}")
    state = load_checkpoint(args.model)
    dataset = load_dataset(args.data)
    by_id = {s.subject_id: s for s in dataset.subjects}
    if args.subject not in by_id:
        raise ValueError(f"unknown subject {args.subject!r} in {args.data}")
    subject = by_id[args.subject]

    corr = pearson_correlation(subject.series)
    filtered, theta, hard = subject_graphs(subject.series, corr, state)
    n = filtered.shape[0]

    # Undirected edges once with source < target; directed edges as ordered pairs.
    filtered_edges = [
        (i, j, float(corr[i, j]))
        for i in range(n)
        for j in range(i + 1, n)
        if filtered[i, j] == 1.0
    ]
    optimal_edges = [
        (i, j, float(theta[i, j]))
        for i in range(n)
        for j in range(n)
        if i != j and hard[i, j] == 1.0
    ]
    filtered_top = _top_edges(filtered_edges, args.top_percent)
    optimal_top = _top_edges(optimal_edges, args.top_percent)

    os.makedirs(args.out, exist_ok=True)
    _write_edges(os.path.join(args.out, "edges_filtered.csv"), filtered_top)
    _write_edges(os.path.join(args.out, "edges_optimal.csv"), optimal_top)

    degrees = {"filtered": [0] * n, "optimal": [0] * n}
    for source, target, _ in filtered_top:
        degrees["filtered"][source] += 1  # undirected: both endpoints incident
        degrees["filtered"][target] += 1
    for _, target, _ in optimal_top:
        degrees["optimal"][target] += 1
    degrees_path = os.path.join(args.out, "degrees.csv")
    with open(degrees_path, "w", newline="") as fh:
        fh.write("graph,node_id,in_degree\n")
        for graph in ("filtered", "optimal"):
            for node in range(n):
                fh.write(f"{graph},{node},{degrees[graph][node]}\n")

    print(
        f"subject {args.subject}: kept {len(filtered_top)}/{len(filtered_edges)} "
        f"filtered and {len(optimal_top)}/{len(optimal_edges)} sampled edges"
    )
    print(f"inspection files in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualgraph",
        description="Train and inspect the dual-graph brain-network classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model and write its artifacts")
    train.add_argument("--data", required=True, help="dataset directory")
    train.add_argument("--config", required=True, help="JSON training config")
    train.add_argument("--out", required=True, help="checkpoint output path")
    train.add_argument("--seed", type=int, help="override the config seed")
    train.add_argument(
        "--mode",
        choices=["full", "no-corr", "no-optim", "no-gconv"],
        help="override the config ablation mode",
    )
    train.set_defaults(func=cmd_train)

    evaluate_p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    evaluate_p.add_argument("--model", required=True, help="checkpoint path")
    evaluate_p.add_argument("--data", required=True, help="dataset directory")
    evaluate_p.add_argument("--out", help="metrics JSON path (default: stdout)")
    evaluate_p.set_defaults(func=cmd_eval)

    ablate = sub.add_parser("ablate", help="train all ablation modes, same splits")
    ablate.add_argument("--data", required=True, help="dataset directory")
    ablate.add_argument("--config", required=True, help="JSON training config")
    ablate.add_argument("--out", required=True, help="ablation table CSV path")
    ablate.add_argument("--seed", type=int, help="override the config seed")
    ablate.set_defaults(func=cmd_ablate)

    synth = sub.add_parser("synth", help="generate a synthetic dataset directory")
    synth.add_argument("--out", required=True, help="output dataset directory")
    synth.add_argument("--subjects", type=int, default=80)
    synth.add_argument("--rois", type=int, default=16)
    synth.add_argument("--steps", type=int, default=64)
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    inspect = sub.add_parser(
        "inspect", help="export a subject's graph structure for inspection"
    )
    inspect.add_argument("--model", required=True, help="checkpoint path")
    inspect.add_argument("--data", required=True, help="dataset directory")
    inspect.add_argument("--subject", required=True, help="subject id to inspect")
    inspect.add_argument(
        "--top-percent",
        type=float,
        default=2.0,
        help="keep this percentage of the heaviest edges (default 2)",
    )
    inspect.add_argument("--out", default=".", help="output directory")
    inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
