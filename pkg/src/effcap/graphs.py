"""RC-network to GNN-graph conversion: wire segments become edge-nodes,
junction nodes are trimmed away, coupling caps become virtual fanout-type
sinks, and every node carries the fixed 11-column feature vector.

Feature columns, in order:
    f_d, f_f, t_delta, r_d, c_p, r_w, c_w, r_u, c_d, h_d, c_total
Flags and the hop count pass through normalization unscaled.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptySplit, MissingLabel, OutOfRangeLabel
from .network import NodeKind, RcNetwork, derive_node_quantities, total_capacitance

FEATURE_ORDER = (
    "f_d", "f_f", "t_delta", "r_d", "c_p", "r_w", "c_w", "r_u", "c_d", "h_d",
    "c_total",
)
N_FEATURES = len(FEATURE_ORDER)
_PASSTHROUGH = ("f_d", "f_f", "h_d")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class GnnGraph:
    node_features: np.ndarray  # (N, 11) float64
    edges: Tuple[Tuple[int, int], ...]  # directed, driver -> fanouts
    label_ratio: Optional[float]
    name: str = ""
    c_total: float = 0.0
    degree: int = 0

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @staticmethod
    def from_dict(doc: dict) -> "NormStats":
        return NormStats(np.asarray(doc["mean"], float), np.asarray(doc["std"], float))


def to_gnn_graph(net: RcNetwork, label: Optional[float] = None) -> GnnGraph:
    """Build the trimmed graph: pins and edge-nodes only, edges oriented
    away from the driver. Node ordering is canonical (driver, then
    interleaved edge-nodes/pins in tree order, then coupling virtuals), so
    the output is independent of input node numbering."""
    derived = derive_node_quantities(net)
    c_total = total_capacitance(net)
    order = net.rooted_order()
    kind_of = {n.id: n.kind for n in net.nodes}
    cp_of = {n.id: n.pin_capacitance for n in net.nodes}

    rows: List[List[float]] = []
    edges: List[Tuple[int, int]] = []
    t_delta = net.driver.input_slew
    r_d = net.driver.drive_resistance

    def add_row(f_d, f_f, c_p, r_w, c_w, r_u, c_d, h_d, ct) -> int:
        rows.append([f_d, f_f, t_delta, r_d, c_p, r_w, c_w, r_u, c_d, float(h_d), ct])
        return len(rows) - 1

    # map each surviving RC node to a graph row; junctions map to the graph
    # node that feeds them (their incoming edge-node) so successors re-wire
    # along current flow
    feed: Dict[int, int] = {}
    root = net.driver_node_id()
    driver_row = add_row(1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                         derived[root].downstream_capacitance, 0, c_total)
    feed[root] = driver_row
    hop: Dict[int, int] = {driver_row: 0}
    edge_row_of_seg: Dict[int, int] = {}
    for v, u, seg in order[1:]:
        src = feed[u]
        e_row = add_row(
            0.0, 0.0, 0.0, seg.resistance, seg.capacitance,
            derived[v].upstream_resistance,
            derived[v].downstream_capacitance + 0.5 * seg.capacitance,
            0, 0.0,
        )
        edges.append((src, e_row))
        hop[e_row] = hop[src] + 1
        # edge-nodes report the hop count of their downstream endpoint
        rows[e_row][9] = float(hop[e_row] + 1)
        edge_row_of_seg[seg.id] = e_row
        if kind_of[v] is NodeKind.JUNCTION:
            feed[v] = e_row
        else:
            p_row = add_row(
                0.0, 1.0 if kind_of[v] is NodeKind.FANOUT else 0.0,
                cp_of[v], 0.0, 0.0,
                derived[v].upstream_resistance,
                derived[v].downstream_capacitance,
                hop[e_row] + 1, 0.0,
            )
            edges.append((e_row, p_row))
            hop[p_row] = hop[e_row] + 1
            feed[v] = p_row
    # coupling caps: virtual fanout-type sinks on their segment's edge-node
    down_of = {sid: dn for sid, (_, dn) in net.segment_orientation().items()}
    for sid, cval in net.coupling:
        e_row = edge_row_of_seg[sid]
        v_row = add_row(
            0.0, 1.0, cval, 0.0, 0.0,
            derived[down_of[sid]].upstream_resistance, cval,
            hop[e_row] + 1, 0.0,
        )
        edges.append((e_row, v_row))
    degree = sum(1 for n in net.nodes if n.kind is NodeKind.FANOUT) + 1
    x = np.asarray(rows, dtype=float)
    if label is not None:
        _check_ratio(label)
    return GnnGraph(x, tuple(edges), label, net.name, c_total, degree)


def _check_ratio(ratio: float) -> None:
    if not (0.0 < ratio <= 1.0):
        raise OutOfRangeLabel(f"label ratio must be in (0, 1], got {ratio}")


def attach_label(g: GnnGraph, ceff: float) -> GnnGraph:
    if g.c_total <= 0:
        raise OutOfRangeLabel("graph has no total capacitance")
    ratio = ceff / g.c_total
    _check_ratio(ratio)
    return replace(g, label_ratio=ratio)


def pretrim_node_count(net: RcNetwork) -> int:
    """Node count before junction trimming: |V_RC| circuit nodes plus one
    edge-node per segment, i.e. 2n - 1 for a tree."""
    return len(net.nodes) + len(net.segments)


def posttrim_node_count(net: RcNetwork) -> int:
    fanouts = sum(1 for n in net.nodes if n.kind is NodeKind.FANOUT)
    return 1 + fanouts + len(net.coupling) + len(net.segments)


# -- normalization -----------------------------------------------------------


class FeatureNormalizer:
    """Per-feature z-scoring fitted on the training split only.

    sklearn-style: fit / transform / get_params. Flag and hop columns pass
    through unscaled, as do constant columns.
    """

    def __init__(self, stats: Optional[NormStats] = None):
        self.stats = stats

    def get_params(self, deep: bool = True) -> dict:
        return {"stats": self.stats}

    def set_params(self, **params) -> "FeatureNormalizer":
        for k, v in params.items():
            setattr(self, k, v)
        return self

    def fit(self, graphs: Sequence[GnnGraph]) -> "FeatureNormalizer":
        graphs = list(graphs)
        if not graphs:
            raise EmptySplit("cannot fit normalization on an empty split")
        x = np.concatenate([g.node_features for g in graphs], axis=0)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        for i, name in enumerate(FEATURE_ORDER):
            if name in _PASSTHROUGH or std[i] == 0.0:
                mean[i] = 0.0
                std[i] = 1.0
        self.stats = NormStats(mean, std)
        return self

    def transform(self, g: GnnGraph) -> GnnGraph:
        if self.stats is None:
            raise EmptySplit("normalizer is not fitted")
        x = (g.node_features - self.stats.mean) / self.stats.std
        return replace(g, node_features=x)

    def fit_transform(self, graphs: Sequence[GnnGraph]) -> List[GnnGraph]:
        self.fit(graphs)
        return [self.transform(g) for g in graphs]


def fit_norm_stats(graphs: Sequence[GnnGraph]) -> NormStats:
    return FeatureNormalizer().fit(graphs).stats


def apply_norm(g: GnnGraph, stats: NormStats) -> GnnGraph:
    return FeatureNormalizer(stats).transform(g)


# -- serialization -----------------------------------------------------------


def graph_to_dict(g: GnnGraph, require_label: bool = False) -> dict:
    if require_label and g.label_ratio is None:
        raise MissingLabel(f"graph {g.name!r} has no label")
    return {
        "x": g.node_features.tolist(),
        "edges": [list(e) for e in g.edges],
        "y": g.label_ratio,
        "meta": {"name": g.name, "c_total_f": g.c_total, "degree": g.degree},
    }


def graph_from_dict(doc: dict) -> GnnGraph:
    meta = doc.get("meta", {})
    return GnnGraph(
        node_features=np.asarray(doc["x"], dtype=float),
        edges=tuple((int(a), int(b)) for a, b in doc["edges"]),
        label_ratio=doc.get("y"),
        name=meta.get("name", ""),
        c_total=float(meta.get("c_total_f", 0.0)),
        degree=int(meta.get("degree", 0)),
    )


def export_dataset(
    graphs: Iterable[GnnGraph],
    split: dict,
    train_path,
    test_path,
    manifest_path,
    norm_stats: Optional[NormStats] = None,
) -> dict:
    """Write train/test JSONL per the manifest split; every graph must be
    labeled. Returns the written manifest."""
    train_names = set(split["train"])
    test_names = set(split["test"])
    counts = {"train": 0, "test": 0}
    train_graphs: List[GnnGraph] = []
    with open(train_path, "w") as ftrain, open(test_path, "w") as ftest:
        for g in graphs:
            line = json.dumps(graph_to_dict(g, require_label=True),
                              separators=(",", ":"))
            if g.name in train_names:
                ftrain.write(line + "\n")
                counts["train"] += 1
                if norm_stats is None:
                    train_graphs.append(g)
            elif g.name in test_names:
                ftest.write(line + "\n")
                counts["test"] += 1
            else:
                raise MissingLabel(f"graph {g.name!r} is not in the split manifest")
    if norm_stats is None:
        if not train_graphs:
            raise EmptySplit("no training graphs to fit normalization on")
        norm_stats = fit_norm_stats(train_graphs)
    manifest = {
        "format_version": FORMAT_VERSION,
        "feature_order": list(FEATURE_ORDER),
        "counts": counts,
        "split": {"train": sorted(train_names), "test": sorted(test_names)},
        "norm_stats": norm_stats.to_dict(),
    }
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2)
    return manifest


def load_graphs(path) -> List[GnnGraph]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(graph_from_dict(json.loads(line)))
    return out
