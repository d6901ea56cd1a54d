import json
from pathlib import Path

import numpy as np
import pytest
import torch

from trainer.data import GraphRecord, NormStats, collate
from trainer.export import (
    content_hash,
    export_weights,
    load_into_model,
    model_tensors,
    save_weights,
)
from trainer.model import DEFAULT_DESCRIPTOR, CeffRatioModel

DATA = Path(__file__).parent / "data"

infer = pytest.importorskip(
    "effcap.model", reason="inference engine not installed; cross-component "
    "parity checks need it")
import effcap.graphs  # noqa: E402


def golden_graph():
    doc = json.loads((DATA / "golden_graph.json").read_text())
    g = effcap.graphs.graph_from_dict(doc)
    record = GraphRecord(x=g.node_features, edges=g.edges, label_ratio=0.5,
                         name=g.name, c_total=g.c_total, degree=g.degree)
    return g, record


@pytest.fixture(scope="module")
def trained_like_model():
    torch.manual_seed(99)
    return CeffRatioModel()


@pytest.fixture(scope="module")
def stats():
    rng = np.random.default_rng(17)
    return NormStats(rng.normal(size=11), rng.uniform(0.5, 2.0, size=11))


def test_tensor_keys_and_shapes(trained_like_model):
    tensors = model_tensors(trained_like_model)
    expected = infer.expected_shapes(DEFAULT_DESCRIPTOR)
    assert set(tensors) == set(expected)
    for key, shape in expected.items():
        assert tensors[key].shape == shape, key
        assert tensors[key].dtype == np.float32, key


def test_export_load_forward_parity(trained_like_model, stats, tmp_path):
    """Weights exported to a bundle file and run through the inference
    engine must reproduce the training model's forward pass to 1e-5."""
    path = tmp_path / "w.bundle"
    save_weights(trained_like_model, stats, path)
    bundle = infer.load_weights(path)

    g_infer, g_record = golden_graph()
    preds = infer.predict([g_infer], bundle)

    batch = collate([g_record], stats, require_labels=False)
    trained_like_model.eval()
    with torch.no_grad():
        ratio = trained_like_model(
            batch.x, batch.src, batch.dst, batch.graph_index, 1).item()
    assert preds[0].ratio == pytest.approx(ratio, abs=1e-5, rel=1e-5)
    assert preds[0].ceff == pytest.approx(ratio * g_record.c_total, rel=1e-4)


def test_roundtrip_reimport_is_exact(trained_like_model, stats, rng,
                                     unit_stats):
    doc = export_weights(trained_like_model, stats)
    model2 = load_into_model(doc)
    from conftest import make_graph
    batch = collate([make_graph(rng, 7, "g")], unit_stats,
                    require_labels=False)
    trained_like_model.eval()
    model2.eval()
    with torch.no_grad():
        a = trained_like_model(batch.x, batch.src, batch.dst,
                               batch.graph_index, 1)
        b = model2(batch.x, batch.src, batch.dst, batch.graph_index, 1)
    torch.testing.assert_close(a, b, rtol=0.0, atol=0.0)


def test_hash_stable_across_reexport(trained_like_model, stats):
    doc1 = export_weights(trained_like_model, stats)
    doc2 = export_weights(load_into_model(doc1), stats)
    assert doc1["hash"] == doc2["hash"]


def test_hash_changes_with_weights(trained_like_model, stats):
    doc1 = export_weights(trained_like_model, stats)
    with torch.no_grad():
        trained_like_model.convs[0].bias += 1e-3
    doc2 = export_weights(trained_like_model, stats)
    with torch.no_grad():
        trained_like_model.convs[0].bias -= 1e-3
    assert doc1["hash"] != doc2["hash"]


def test_hash_agrees_with_inference_engine(trained_like_model, stats,
                                           tmp_path):
    path = tmp_path / "w.bundle"
    save_weights(trained_like_model, stats, path)
    doc = json.loads(path.read_text())
    bundle = infer.load_weights(path)
    assert bundle.content_hash() == doc["hash"]


def test_descriptor_matches_model_architecture(stats):
    desc = {
        "conv_layers": 2, "conv_channels": 8, "heads": 3,
        "linear_layers": 2, "linear_channels": 10,
        "activation": "ELU", "final": "Sigmoid", "in_features": 11,
    }
    model = CeffRatioModel(desc)
    doc = export_weights(model, stats)
    assert doc["descriptor"] == desc
    assert doc["format_version"] == 1
    assert np.allclose(doc["norm_stats"]["mean"], stats.mean)
    assert np.allclose(doc["norm_stats"]["std"], stats.std)


def test_content_hash_key_order_independent(trained_like_model):
    tensors = model_tensors(trained_like_model)
    reordered = dict(reversed(list(tensors.items())))
    assert content_hash(DEFAULT_DESCRIPTOR, tensors) == content_hash(
        DEFAULT_DESCRIPTOR, reordered)
