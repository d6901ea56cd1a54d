"""Forward-pass engine for the attention-based Ceff ratio model.

Architecture (fixed by the bundle descriptor): three multi-head graph
attention layers (per-head linear + shared attention vector, LeakyReLU 0.2,
softmax over each node's incoming neighborhood including a self-loop,
heads concatenated, ELU), an attentional aggregation readout (learned gate
softmax over nodes, learned transform), and a three-layer MLP ending in a
sigmoid.

Tensors are float32; softmax and segment reductions accumulate in float64
so results are independent of batch composition and node ordering.

Bundle file layout: a single JSON document with the architecture
descriptor, normalization statistics, and named tensors stored as base64
little-endian float32, row-major. Tensor keys:

    conv{L}.weight      (heads, in_dim, channels)   per-head linear
    conv{L}.att_dst     (heads, channels)           attention, target half
    conv{L}.att_src     (heads, channels)           attention, source half
    conv{L}.bias        (heads * channels,)         added after concat
    agg.gate_weight     (hidden,)    agg.gate_bias      (1,)
    agg.transform_weight (hidden, hidden)   agg.transform_bias (hidden,)
    mlp{K}.weight       (out, in)    mlp{K}.bias        (out,)

with L in 1..conv_layers and K in 1..linear_layers. The payload hash is
sha256 over the descriptor JSON plus all tensor bytes in key order.
"""
from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .errors import (
    FeatureOrderMismatch,
    HashMismatch,
    ShapeMismatch,
    VersionUnsupported,
)
from .graphs import FEATURE_ORDER, GnnGraph, NormStats, apply_norm

BUNDLE_VERSION = 1
LEAKY_SLOPE = 0.2

DEFAULT_DESCRIPTOR = {
    "conv_layers": 3,
    "conv_channels": 32,
    "heads": 12,
    "linear_layers": 3,
    "linear_channels": 64,
    "activation": "ELU",
    "final": "Sigmoid",
    "in_features": len(FEATURE_ORDER),
}


@dataclass(frozen=True)
class Prediction:
    name: str
    ratio: float
    ceff: float


def expected_shapes(desc: dict) -> Dict[str, Tuple[int, ...]]:
    heads = desc["heads"]
    ch = desc["conv_channels"]
    hidden = heads * ch
    lin = desc["linear_channels"]
    shapes: Dict[str, Tuple[int, ...]] = {}
    in_dim = desc["in_features"]
    for layer in range(1, desc["conv_layers"] + 1):
        shapes[f"conv{layer}.weight"] = (heads, in_dim, ch)
        shapes[f"conv{layer}.att_dst"] = (heads, ch)
        shapes[f"conv{layer}.att_src"] = (heads, ch)
        shapes[f"conv{layer}.bias"] = (hidden,)
        in_dim = hidden
    shapes["agg.gate_weight"] = (hidden,)
    shapes["agg.gate_bias"] = (1,)
    shapes["agg.transform_weight"] = (hidden, hidden)
    shapes["agg.transform_bias"] = (hidden,)
    dims = [hidden] + [lin] * (desc["linear_layers"] - 1) + [1]
    for k in range(1, desc["linear_layers"] + 1):
        shapes[f"mlp{k}.weight"] = (dims[k], dims[k - 1])
        shapes[f"mlp{k}.bias"] = (dims[k],)
    return shapes


class WeightBundle:
    """Validated, immutable parameter set plus normalization statistics."""

    def __init__(self, descriptor: dict, tensors: Dict[str, np.ndarray],
                 norm_stats: NormStats):
        self.descriptor = dict(descriptor)
        self.tensors = {k: np.ascontiguousarray(v, dtype=np.float32)
                        for k, v in tensors.items()}
        self.norm_stats = norm_stats
        self._validate_shapes()

    def _validate_shapes(self) -> None:
        shapes = expected_shapes(self.descriptor)
        if set(shapes) != set(self.tensors):
            missing = sorted(set(shapes) - set(self.tensors))
            extra = sorted(set(self.tensors) - set(shapes))
            raise ShapeMismatch(f"tensor keys mismatch: missing {missing}, extra {extra}")
        for key, shape in shapes.items():
            if self.tensors[key].shape != shape:
                raise ShapeMismatch(
                    f"{key}: expected {shape}, got {self.tensors[key].shape}"
                )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.descriptor, sort_keys=True).encode())
        for key in sorted(self.tensors):
            h.update(key.encode())
            h.update(self.tensors[key].tobytes())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "format_version": BUNDLE_VERSION,
            "descriptor": self.descriptor,
            "norm_stats": self.norm_stats.to_dict(),
            "tensors": {
                k: {
                    "shape": list(v.shape),
                    "dtype": "float32",
                    "data": base64.b64encode(v.tobytes()).decode("ascii"),
                }
                for k, v in self.tensors.items()
            },
            "hash": self.content_hash(),
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)


def bundle_from_dict(doc: dict) -> WeightBundle:
    version = doc.get("format_version")
    if version != BUNDLE_VERSION:
        raise VersionUnsupported(f"bundle format_version {version!r} not supported")
    tensors = {}
    for key, spec in doc["tensors"].items():
        raw = base64.b64decode(spec["data"])
        arr = np.frombuffer(raw, dtype="<f4")
        expected = int(np.prod(spec["shape"]))
        if arr.size != expected:
            # truncated payload: surface as a hash failure, the payload
            # cannot match what was signed
            raise HashMismatch(
                f"{key}: payload holds {arr.size} values, header says {expected}"
            )
        tensors[key] = arr.reshape(spec["shape"])
    bundle = WeightBundle(
        doc["descriptor"], tensors, NormStats.from_dict(doc["norm_stats"])
    )
    if bundle.content_hash() != doc.get("hash"):
        raise HashMismatch("bundle payload does not match its recorded hash")
    return bundle


def load_weights(path) -> WeightBundle:
    with open(path) as f:
        doc = json.load(f)
    return bundle_from_dict(doc)


# -- forward pass ------------------------------------------------------------


def _elu(x: np.ndarray) -> np.ndarray:
    """ELU, mutating its (always freshly allocated) argument. expm1 runs
    only on the negative entries and in float32 — the weights are float32,
    so the activation's ~1e-8 rounding sits below parameter precision,
    and an elementwise op keeps batch/permutation invariance bitwise."""
    neg = np.expm1(np.minimum(x, 0.0).astype(np.float32))
    return np.where(x > 0, x, neg)


def _elu_inplace(x: np.ndarray) -> np.ndarray:
    """ELU mutating a freshly allocated float64 array: identity on the
    positive part, expm1 on the negative part. The expm1 runs in float32 —
    the weights are float32, so the ~1e-8 activation rounding sits below
    parameter precision, and elementwise ops keep batch and permutation
    invariance bitwise."""
    neg32 = np.minimum(x, 0.0).astype(np.float32)
    np.expm1(neg32, out=neg32)
    np.maximum(x, 0.0, out=x)
    x += neg32
    return x


def _leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _edge_segments(edges: np.ndarray, n: int) -> tuple:
    """Self-loop-augmented (src, dst) plus the sort order and group starts
    that grouped softmax reductions need; computed once per batch."""
    loops = np.arange(n)
    src = np.concatenate([edges[:, 0], loops]) if edges.size else loops
    dst = np.concatenate([edges[:, 1], loops]) if edges.size else loops
    order = np.argsort(dst, kind="stable")
    starts = np.searchsorted(dst[order], np.arange(n))
    return src, dst, order, starts


def _segment_softmax(scores: np.ndarray, targets: np.ndarray, n: int,
                     order: Optional[np.ndarray] = None,
                     starts: Optional[np.ndarray] = None) -> np.ndarray:
    """Softmax over groups defined by `targets`, float64 accumulation.
    scores: (E, heads). Grouped reductions run over a sorted view so the
    hot path stays in vectorized reduceat calls."""
    s = np.asarray(scores, dtype=np.float64)
    if order is None or starts is None:
        order = np.argsort(targets, kind="stable")
        starts = np.searchsorted(targets[order], np.arange(n))
    smax = np.maximum.reduceat(s[order], starts, axis=0)
    ex = np.exp(s - smax[targets])
    denom = np.add.reduceat(ex[order], starts, axis=0)
    return ex / denom[targets]


def gat_layer(
    h: np.ndarray,
    edges: np.ndarray,
    weight: np.ndarray,
    att_dst: np.ndarray,
    att_src: np.ndarray,
    bias: np.ndarray,
    check: bool = False,
    segment_info: Optional[tuple] = None,
) -> np.ndarray:
    """One multi-head attention layer over incoming edges plus self-loops.

    h: (N, F) float32; edges: (E, 2) of (source, target) pairs.
    `segment_info` optionally carries the (src, dst, sort order, group
    starts) of the self-loop-augmented edge list, which is identical for
    every layer of a batch. Returns (N, heads * channels) after ELU.
    """
    n = h.shape[0]
    heads, _, ch = weight.shape
    h64 = np.asarray(h, dtype=np.float64)
    if segment_info is None:
        segment_info = _edge_segments(edges, n)
    src, dst, order, starts = segment_info
    # per-head projection, attention, and neighborhood sum on contiguous
    # (N, C) blocks; heads concatenate into the (N, heads*C) output
    projs = []
    scores_dst = np.empty((n, heads))
    scores_src = np.empty((n, heads))
    w64 = weight.astype(np.float64)
    a_dst = att_dst.astype(np.float64)
    a_src = att_src.astype(np.float64)
    for head in range(heads):
        p = h64 @ w64[head]
        projs.append(p)
        scores_dst[:, head] = p @ a_dst[head]
        scores_src[:, head] = p @ a_src[head]
    e = _leaky_relu(scores_dst[dst] + scores_src[src])  # (E, heads)
    alpha = _segment_softmax(e, dst, n, order=order, starts=starts)
    if check:
        sums = np.zeros((n, heads))
        np.add.at(sums, dst, alpha)
        assert np.allclose(sums, 1.0, atol=1e-12)
    # out block = A_head @ proj_head with A sparse over (dst, src)
    for head in range(heads):
        a = sparse.csr_matrix((alpha[:, head], (dst, src)), shape=(n, n))
        projs[head] = a @ projs[head]
    stacked = np.concatenate(projs, axis=1)
    stacked += bias
    return _elu_inplace(stacked)


def attentional_aggregation(
    h: np.ndarray,
    gate_weight: np.ndarray,
    gate_bias: np.ndarray,
    transform_weight: np.ndarray,
    transform_bias: np.ndarray,
    graph_index: Optional[np.ndarray] = None,
    n_graphs: int = 1,
) -> np.ndarray:
    """Gate-softmax weighted sum of transformed node features per graph.
    Returns (n_graphs, hidden)."""
    if graph_index is None:
        graph_index = np.zeros(h.shape[0], dtype=int)
    h64 = np.asarray(h, dtype=np.float64)
    scores = (h64 @ gate_weight.astype(np.float64)) + float(gate_bias[0])
    # graph_index is non-decreasing (batch concatenation order)
    starts = np.searchsorted(graph_index, np.arange(n_graphs))
    smax = np.maximum.reduceat(scores, starts)
    ex = np.exp(scores - smax[graph_index])
    denom = np.add.reduceat(ex, starts)
    w = ex / denom[graph_index]
    transformed = h64 @ transform_weight.astype(np.float64).T + transform_bias
    pooled = np.add.reduceat(transformed * w[:, None], starts, axis=0)
    return pooled


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos].astype(np.float64)))
    ez = np.exp(x[~pos].astype(np.float64))
    out[~pos] = ez / (1.0 + ez)
    return out


def forward_activations(bundle: WeightBundle, graphs: Sequence[GnnGraph],
                        normalized: bool = False, check: bool = False) -> dict:
    """Run the full forward pass on a batch; returns intermediate
    activations keyed by stage (used for parity tests) plus 'ratio'."""
    desc = bundle.descriptor
    t = bundle.tensors
    if graphs and graphs[0].node_features.shape[1] != desc["in_features"]:
        raise FeatureOrderMismatch(
            f"graphs have {graphs[0].node_features.shape[1]} features, "
            f"bundle expects {desc['in_features']}"
        )
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    x = np.concatenate([g.node_features for g in graphs]).astype(np.float64)
    if not normalized:
        stats = bundle.norm_stats
        x = (x - stats.mean) / stats.std
    edge_list = []
    for i, g in enumerate(graphs):
        if g.edges:
            edge_list.append(np.asarray(g.edges, dtype=int) + offsets[i])
    edges = (np.concatenate(edge_list) if edge_list
             else np.empty((0, 2), dtype=int))
    graph_index = np.repeat(np.arange(len(graphs)), [g.n_nodes for g in graphs])
    seg = _edge_segments(edges, x.shape[0])
    acts = {"input": x}
    h = x
    for layer in range(1, desc["conv_layers"] + 1):
        h = gat_layer(
            h, edges,
            t[f"conv{layer}.weight"], t[f"conv{layer}.att_dst"],
            t[f"conv{layer}.att_src"], t[f"conv{layer}.bias"],
            check=check, segment_info=seg,
        )
        acts[f"conv{layer}"] = h
    pooled = attentional_aggregation(
        h, t["agg.gate_weight"], t["agg.gate_bias"],
        t["agg.transform_weight"], t["agg.transform_bias"],
        graph_index, len(graphs),
    )
    acts["agg"] = pooled
    z = pooled
    for k in range(1, desc["linear_layers"] + 1):
        z = z @ t[f"mlp{k}.weight"].astype(np.float64).T + t[f"mlp{k}.bias"]
        if k < desc["linear_layers"]:
            z = _elu(z)
        acts[f"mlp{k}"] = z
    acts["ratio"] = _sigmoid(z[:, 0])
    return acts


def predict(graphs: Sequence[GnnGraph], bundle: WeightBundle,
            batch_size: int = 4096) -> List[Prediction]:
    """Batched ratio/Ceff prediction; results are independent of batch
    composition and preserve input order."""
    out: List[Prediction] = []
    graphs = list(graphs)
    for start in range(0, len(graphs), batch_size):
        chunk = graphs[start: start + batch_size]
        ratios = forward_activations(bundle, chunk)["ratio"]
        for g, r in zip(chunk, ratios):
            out.append(Prediction(g.name, float(r), float(r) * g.c_total))
    return out


def random_bundle(seed: int = 0, descriptor: Optional[dict] = None,
                  norm_stats: Optional[NormStats] = None) -> WeightBundle:
    """Fixed-seed bundle with Glorot-style weights; used for golden files
    and tests that need deterministic parameters."""
    desc = dict(DEFAULT_DESCRIPTOR if descriptor is None else descriptor)
    rng = np.random.Generator(
        np.random.Philox(key=[np.uint64(seed), np.uint64(0xB0D1)])
    )
    tensors = {}
    for key, shape in expected_shapes(desc).items():
        if key.endswith("bias"):
            tensors[key] = np.zeros(shape, dtype=np.float32)
        else:
            fan = shape[-1] + (shape[-2] if len(shape) > 1 else 1)
            scale = np.sqrt(2.0 / fan)
            tensors[key] = rng.normal(0.0, scale, size=shape).astype(np.float32)
    if norm_stats is None:
        norm_stats = NormStats(
            np.zeros(desc["in_features"]), np.ones(desc["in_features"])
        )
    return WeightBundle(desc, tensors, norm_stats)
