"""Weight-bundle export: a single JSON document with the architecture
descriptor, normalization statistics, and base64 float32 row-major tensors,
hashed with sha256 over the descriptor JSON plus tensor bytes in key order.
This file format is the contract with the inference engine."""
from __future__ import annotations

import base64
import hashlib
import json
from typing import Dict

import numpy as np

from .data import NormStats
from .model import CeffRatioModel

BUNDLE_VERSION = 1


def model_tensors(model: CeffRatioModel) -> Dict[str, np.ndarray]:
    tensors: Dict[str, np.ndarray] = {}
    for i, conv in enumerate(model.convs, start=1):
        tensors[f"conv{i}.weight"] = conv.weight.detach().numpy()
        tensors[f"conv{i}.att_dst"] = conv.att_dst.detach().numpy()
        tensors[f"conv{i}.att_src"] = conv.att_src.detach().numpy()
        tensors[f"conv{i}.bias"] = conv.bias.detach().numpy()
    tensors["agg.gate_weight"] = model.agg.gate_weight.detach().numpy()
    tensors["agg.gate_bias"] = model.agg.gate_bias.detach().numpy()
    tensors["agg.transform_weight"] = model.agg.transform_weight.detach().numpy()
    tensors["agg.transform_bias"] = model.agg.transform_bias.detach().numpy()
    for k, lin in enumerate(model.mlps, start=1):
        tensors[f"mlp{k}.weight"] = lin.weight.detach().numpy()
        tensors[f"mlp{k}.bias"] = lin.bias.detach().numpy()
    return {
        k: np.ascontiguousarray(v, dtype=np.float32) for k, v in tensors.items()
    }


def content_hash(descriptor: dict, tensors: Dict[str, np.ndarray]) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(descriptor, sort_keys=True).encode())
    for key in sorted(tensors):
        h.update(key.encode())
        h.update(tensors[key].tobytes())
    return h.hexdigest()


def export_weights(model: CeffRatioModel, norm_stats: NormStats) -> dict:
    tensors = model_tensors(model)
    descriptor = dict(model.descriptor)
    return {
        "format_version": BUNDLE_VERSION,
        "descriptor": descriptor,
        "norm_stats": {
            "mean": norm_stats.mean.tolist(),
            "std": norm_stats.std.tolist(),
        },
        "tensors": {
            k: {
                "shape": list(v.shape),
                "dtype": "float32",
                "data": base64.b64encode(v.tobytes()).decode("ascii"),
            }
            for k, v in tensors.items()
        },
        "hash": content_hash(descriptor, tensors),
    }


def save_weights(model: CeffRatioModel, norm_stats: NormStats, path) -> None:
    with open(path, "w") as f:
        json.dump(export_weights(model, norm_stats), f)


def load_into_model(doc: dict, layer_dropout: float = 0.0,
                    attention_dropout: float = 0.0) -> CeffRatioModel:
    """Rebuild a model from an exported bundle document (for warm starts
    and round-trip tests)."""
    import torch

    model = CeffRatioModel(doc["descriptor"], layer_dropout, attention_dropout)
    tensors = {}
    for key, spec in doc["tensors"].items():
        arr = np.frombuffer(base64.b64decode(spec["data"]), dtype="<f4")
        tensors[key] = torch.tensor(arr.reshape(spec["shape"]).copy())
    with torch.no_grad():
        for i, conv in enumerate(model.convs, start=1):
            conv.weight.copy_(tensors[f"conv{i}.weight"])
            conv.att_dst.copy_(tensors[f"conv{i}.att_dst"])
            conv.att_src.copy_(tensors[f"conv{i}.att_src"])
            conv.bias.copy_(tensors[f"conv{i}.bias"])
        model.agg.gate_weight.copy_(tensors["agg.gate_weight"])
        model.agg.gate_bias.copy_(tensors["agg.gate_bias"])
        model.agg.transform_weight.copy_(tensors["agg.transform_weight"])
        model.agg.transform_bias.copy_(tensors["agg.transform_bias"])
        for k, lin in enumerate(model.mlps, start=1):
            lin.weight.copy_(tensors[f"mlp{k}.weight"])
            lin.bias.copy_(tensors[f"mlp{k}.bias"])
    return model
