"""Training loop: Adam on mean-squared error of the predicted ratio, with
plateau-based learning-rate reduction, early stopping on validation mean
absolute error ratio, best-state restoration, and best-of-N restarts."""
from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .data import Batch, GraphRecord, NormStats, collate, stratified_val_split
from .evaluate import meaer
from .model import DEFAULT_DESCRIPTOR, CeffRatioModel


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    lr_reduce_factor: float = 0.1
    lr_patience: int = 5
    early_stop_patience: int = 10
    layer_dropout: float = 1e-4
    attention_dropout: float = 1e-4
    batch_size: int = 512
    max_epochs: int = 300
    val_fraction: float = 0.1
    runs: int = 1
    seed: int = 0
    descriptor: Dict = field(default_factory=lambda: dict(DEFAULT_DESCRIPTOR))


@dataclass
class TrainResult:
    model: CeffRatioModel
    norm_stats: NormStats
    best_val_meaer: float
    history: List[dict]
    run_index: int
    wall_seconds: float


def _epoch_batches(graphs: List[GraphRecord], stats: NormStats,
                   batch_size: int, rng: np.random.Generator) -> List[Batch]:
    order = rng.permutation(len(graphs))
    return [
        collate([graphs[i] for i in order[k:k + batch_size]], stats)
        for k in range(0, len(order), batch_size)
    ]


def _val_meaer(model: CeffRatioModel, batch: Batch) -> float:
    model.eval()
    with torch.no_grad():
        pred = model(batch.x, batch.src, batch.dst, batch.graph_index,
                     batch.n_graphs)
    return meaer(pred.numpy().astype(float), batch.y.numpy().astype(float))


def _train_one_run(train_graphs: List[GraphRecord],
                   val_graphs: List[GraphRecord], stats: NormStats,
                   config: TrainConfig, seed: int,
                   history: List[dict]) -> tuple:
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    model = CeffRatioModel(config.descriptor, config.layer_dropout,
                           config.attention_dropout)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=config.lr_reduce_factor, patience=config.lr_patience)
    val_batch = collate(val_graphs, stats) if val_graphs else None
    best_val = float("inf")
    best_state = copy.deepcopy(model.state_dict())
    stall = 0
    for epoch in range(config.max_epochs):
        model.train()
        losses = []
        for batch in _epoch_batches(train_graphs, stats, config.batch_size, rng):
            optimizer.zero_grad()
            pred = model(batch.x, batch.src, batch.dst, batch.graph_index,
                         batch.n_graphs)
            loss = torch.nn.functional.mse_loss(pred, batch.y)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        train_loss = float(np.mean(losses))
        if val_batch is not None:
            val = _val_meaer(model, val_batch)
        else:
            val = train_loss
        scheduler.step(val)
        history.append({
            "epoch": epoch,
            "train_loss": train_loss,
            "val_meaer_pct": val,
            "lr": optimizer.param_groups[0]["lr"],
        })
        if val < best_val - 1e-12:
            best_val = val
            best_state = copy.deepcopy(model.state_dict())
            stall = 0
        else:
            stall += 1
            if stall >= config.early_stop_patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return model, best_val


def train(graphs: Sequence[GraphRecord], stats: NormStats,
          config: Optional[TrainConfig] = None) -> TrainResult:
    """Train on `graphs` (already normalized statistics in `stats`), holding
    out a stratified validation fraction, and return the best model over
    `config.runs` independently seeded restarts."""
    config = config or TrainConfig()
    start = time.monotonic()
    train_graphs, val_graphs = stratified_val_split(
        list(graphs), config.val_fraction, config.seed)
    best: Optional[TrainResult] = None
    for run in range(config.runs):
        history: List[dict] = []
        model, val = _train_one_run(
            train_graphs, val_graphs, stats, config, config.seed + run, history)
        if best is None or val < best.best_val_meaer:
            best = TrainResult(model, stats, val, history, run,
                               time.monotonic() - start)
    best.wall_seconds = time.monotonic() - start
    return best


def predict_ratios(model: CeffRatioModel, graphs: Sequence[GraphRecord],
                   stats: NormStats, batch_size: int = 1024) -> np.ndarray:
    model.eval()
    out = []
    graphs = list(graphs)
    with torch.no_grad():
        for k in range(0, len(graphs), batch_size):
            batch = collate(graphs[k:k + batch_size], stats,
                            require_labels=False)
            pred = model(batch.x, batch.src, batch.dst, batch.graph_index,
                         batch.n_graphs)
            out.append(pred.numpy().astype(float))
    return np.concatenate(out)
