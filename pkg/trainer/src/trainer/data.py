"""Graph dataset I/O: the JSONL graph format and the dataset manifest
(feature order, split, normalization statistics) are the only contract
with the producing toolchain."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

FEATURE_ORDER = (
    "f_d", "f_f", "t_delta", "r_d", "c_p", "r_w", "c_w", "r_u", "c_d", "h_d",
    "c_total",
)


class DatasetEmpty(ValueError):
    pass


class FormatMismatch(ValueError):
    pass


@dataclass(frozen=True)
class GraphRecord:
    x: np.ndarray  # (N, F) float64, unnormalized
    edges: Tuple[Tuple[int, int], ...]
    label_ratio: Optional[float]
    name: str
    c_total: float
    degree: int

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def load_graphs(path) -> List[GraphRecord]:
    out: List[GraphRecord] = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            meta = doc.get("meta", {})
            out.append(GraphRecord(
                x=np.asarray(doc["x"], dtype=np.float64),
                edges=tuple((int(a), int(b)) for a, b in doc["edges"]),
                label_ratio=doc.get("y"),
                name=meta.get("name", ""),
                c_total=float(meta.get("c_total_f", 0.0)),
                degree=int(meta.get("degree", 0)),
            ))
    return out


def load_manifest(path) -> dict:
    with open(path) as f:
        manifest = json.load(f)
    if tuple(manifest.get("feature_order", ())) != FEATURE_ORDER:
        raise FormatMismatch(
            f"dataset feature order {manifest.get('feature_order')} does not "
            f"match the expected {list(FEATURE_ORDER)}"
        )
    return manifest


def norm_stats_from_manifest(manifest: dict) -> NormStats:
    ns = manifest["norm_stats"]
    return NormStats(np.asarray(ns["mean"], float), np.asarray(ns["std"], float))


@dataclass
class Batch:
    x: torch.Tensor  # (total_nodes, F) float32, normalized
    src: torch.Tensor  # self-loop-augmented edge sources
    dst: torch.Tensor
    graph_index: torch.Tensor  # (total_nodes,)
    y: torch.Tensor  # (n_graphs,)
    n_graphs: int


def collate(graphs: Sequence[GraphRecord], stats: NormStats,
            require_labels: bool = True) -> Batch:
    if not graphs:
        raise DatasetEmpty("cannot collate an empty graph list")
    xs, srcs, dsts, gidx, ys = [], [], [], [], []
    offset = 0
    for i, g in enumerate(graphs):
        xs.append((g.x - stats.mean) / stats.std)
        for a, b in g.edges:
            srcs.append(a + offset)
            dsts.append(b + offset)
        # self-loop per node, appended after the real edges
        for v in range(g.n_nodes):
            srcs.append(v + offset)
            dsts.append(v + offset)
        gidx.extend([i] * g.n_nodes)
        if require_labels:
            if g.label_ratio is None:
                raise DatasetEmpty(f"graph {g.name!r} has no label")
            ys.append(g.label_ratio)
        offset += g.n_nodes
    return Batch(
        x=torch.tensor(np.concatenate(xs), dtype=torch.float32),
        src=torch.tensor(srcs, dtype=torch.long),
        dst=torch.tensor(dsts, dtype=torch.long),
        graph_index=torch.tensor(gidx, dtype=torch.long),
        y=torch.tensor(ys, dtype=torch.float32) if require_labels
        else torch.empty(0),
        n_graphs=len(graphs),
    )


def audit_split_overlap(train_graphs: Sequence[GraphRecord],
                        test_graphs: Sequence[GraphRecord]) -> set:
    """Names present in both splits; must be empty before training."""
    return {g.name for g in train_graphs} & {g.name for g in test_graphs}


def stratified_val_split(graphs: Sequence[GraphRecord], fraction: float,
                         seed: int) -> Tuple[List[GraphRecord], List[GraphRecord]]:
    """Per-degree stratified split into (train, validation)."""
    if not graphs:
        raise DatasetEmpty("cannot split an empty dataset")
    by_degree: Dict[int, List[GraphRecord]] = {}
    for g in graphs:
        by_degree.setdefault(g.degree, []).append(g)
    rng = np.random.default_rng(seed)
    train: List[GraphRecord] = []
    val: List[GraphRecord] = []
    for degree in sorted(by_degree):
        group = by_degree[degree]
        n_val = max(1, round(fraction * len(group))) if len(group) > 1 else 0
        chosen = set(rng.choice(len(group), size=n_val, replace=False).tolist())
        for i, g in enumerate(group):
            (val if i in chosen else train).append(g)
    if not train:
        train, val = val, []
    return train, val
