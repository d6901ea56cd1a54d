"""Command-line entry points: train a ratio model from an exported graph
dataset and evaluate predictions against labels."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .data import load_graphs, load_manifest, norm_stats_from_manifest
from .evaluate import evaluate
from .export import save_weights
from .train import TrainConfig, predict_ratios, train


@click.group()
def main() -> None:
    """Train and evaluate effective-capacitance ratio models."""


@main.command("train")
@click.option("--dataset-dir", type=click.Path(exists=True, file_okay=False),
              required=True,
              help="Directory with manifest.json plus train/test JSONL files.")
@click.option("--output", type=click.Path(dir_okay=False), required=True,
              help="Weight bundle path to write.")
@click.option("--train-file", default="train.jsonl", show_default=True,
              help="Train split file name inside the dataset directory.")
@click.option("--epochs", type=int, default=None, help="Epoch cap override.")
@click.option("--runs", type=int, default=1, show_default=True,
              help="Independent restarts; the best validation model wins.")
@click.option("--batch-size", type=int, default=512, show_default=True)
@click.option("--learning-rate", type=float, default=0.001, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON training report path.")
def train_cmd(dataset_dir, output, train_file, epochs, runs, batch_size,
              learning_rate, seed, report):
    """Train on the dataset's train split and export a weight bundle."""
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir / "manifest.json")
    stats = norm_stats_from_manifest(manifest)
    graphs = load_graphs(dataset_dir / train_file)
    if not graphs:
        click.echo("train split is empty", err=True)
        sys.exit(3)
    config = TrainConfig(runs=runs, batch_size=batch_size,
                         learning_rate=learning_rate, seed=seed)
    if epochs is not None:
        config.max_epochs = epochs
    result = train(graphs, stats, config)
    save_weights(result.model, result.norm_stats, output)
    click.echo(
        f"trained on {len(graphs)} graphs in {result.wall_seconds:.1f}s; "
        f"best validation error ratio {result.best_val_meaer:.3f}% "
        f"(run {result.run_index + 1}/{runs}); bundle written to {output}"
    )
    if report:
        with open(report, "w") as f:
            json.dump({
                "n_train_graphs": len(graphs),
                "best_val_meaer_pct": result.best_val_meaer,
                "run_index": result.run_index,
                "wall_seconds": result.wall_seconds,
                "history": result.history,
            }, f, indent=2)


@main.command("evaluate")
@click.option("--dataset-dir", type=click.Path(exists=True, file_okay=False),
              required=True)
@click.option("--weights", type=click.Path(exists=True, dir_okay=False),
              required=True, help="Weight bundle to evaluate.")
@click.option("--split-file", default="test.jsonl", show_default=True,
              help="Split file name inside the dataset directory.")
@click.option("--report", type=click.Path(dir_okay=False), default=None,
              help="Optional JSON report path.")
def evaluate_cmd(dataset_dir, weights, split_file, report):
    """Report absolute and ratio errors of a bundle on a dataset split."""
    from .export import load_into_model
    from .data import NormStats

    dataset_dir = Path(dataset_dir)
    load_manifest(dataset_dir / "manifest.json")
    graphs = load_graphs(dataset_dir / split_file)
    if not graphs:
        click.echo(f"{split_file} split is empty", err=True)
        sys.exit(3)
    with open(weights) as f:
        doc = json.load(f)
    model = load_into_model(doc)
    stats = NormStats(np.asarray(doc["norm_stats"]["mean"], float),
                      np.asarray(doc["norm_stats"]["std"], float))
    ratios = predict_ratios(model, graphs, stats)
    c_tot = np.array([g.c_total for g in graphs])
    labels = np.array([g.label_ratio for g in graphs])
    rep = evaluate(ratios * c_tot, labels * c_tot)
    click.echo(
        f"{split_file}: n={rep['all']['count']}  "
        f"mean abs err {rep['all']['meae_f'] * 1e15:.4f} fF  "
        f"max abs err {rep['all']['maae_f'] * 1e15:.4f} fF  "
        f"mean err ratio {rep['all']['meaer_pct']:.3f}%  "
        f"max err ratio {rep['all']['maaer_pct']:.3f}%"
    )
    if report:
        with open(report, "w") as f:
            json.dump(rep, f, indent=2)


if __name__ == "__main__":
    main()
