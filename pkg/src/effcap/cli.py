"""Command-line pipeline: gen -> label -> reduce/ceff -> export-graphs ->
infer -> eval -> bench. One JSON config file may supply defaults; explicit
flags win. Every artifact embeds {tool version, seed, config hash} so
reruns with identical inputs are byte-identical apart from timing fields.

Exit codes: 0 ok, 2 validation error, 3 numeric failure, 4 I/O error.
"""
from __future__ import annotations

import hashlib
import json
import sys
import time
from typing import Optional

import click

from . import __version__
from .dartu import compute_ceff_dartu
from .errors import NumericFailure, ValidationError
from .graphs import (
    NormStats,
    attach_label,
    export_dataset,
    graph_to_dict,
    load_graphs,
    to_gnn_graph,
)
from .metrics import evaluate as evaluate_metrics
from .model import load_weights, predict
from .netgen import (
    DEFAULT_TECH,
    GenSpec,
    TechProfile,
    iter_dataset,
    split_manifest,
)
from .network import network_from_dict, network_to_dict, total_capacitance
from .pimodel import reduce_network
from .sim import oracle_ceff, simulate, spice_deck


def _config_hash(params: dict) -> str:
    return hashlib.sha256(
        json.dumps(params, sort_keys=True, default=str).encode()
    ).hexdigest()[:16]


def _provenance(seed: Optional[int], params: dict) -> dict:
    return {
        "tool_version": __version__,
        "seed": seed,
        "config_hash": _config_hash(params),
    }


def _iter_jsonl(path):
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


def _load_nets(path):
    for doc in _iter_jsonl(path):
        yield network_from_dict(doc)


def _load_tech(path: Optional[str]) -> TechProfile:
    if path is None:
        return DEFAULT_TECH
    with open(path) as f:
        return TechProfile.from_dict(json.load(f))


def _parse_range(text: str):
    lo, _, hi = text.partition(":")
    return int(lo), int(hi or lo)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="JSON config file with flag defaults.")
@click.pass_context
def main(ctx, config_path):
    """Effective-capacitance pipeline tools."""
    ctx.ensure_object(dict)
    if config_path:
        with open(config_path) as f:
            ctx.default_map = json.load(f)


def _run(fn):
    """Map toolkit errors onto the documented exit codes."""
    try:
        fn()
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    except NumericFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)


@main.command()
@click.option("--degrees", default="3:10", help="Degree range lo:hi.")
@click.option("--per-degree", default=10, type=int)
@click.option("--seed", default=0, type=int)
@click.option("--tech", "tech_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(), default=None)
@click.option("--coupling-probability", default=0.0, type=float)
def gen(degrees, per_degree, seed, tech_path, out_path, manifest_path,
        coupling_probability):
    """Generate a synthetic net corpus (JSONL) plus a split manifest."""
    def body():
        spec = GenSpec(degrees=_parse_range(degrees), nets_per_degree=per_degree,
                       seed=seed, coupling_probability=coupling_probability)
        tech = _load_tech(tech_path)
        count = 0
        with open(out_path, "w") as f:
            for net in iter_dataset(spec, tech):
                f.write(json.dumps(network_to_dict(net), separators=(",", ":")) + "\n")
                count += 1
        manifest = split_manifest(spec)
        manifest["provenance"] = _provenance(seed, {
            "degrees": degrees, "per_degree": per_degree, "tech": tech.to_dict(),
        })
        mpath = manifest_path or (str(out_path) + ".manifest.json")
        with open(mpath, "w") as f:
            json.dump(manifest, f, indent=2)
        click.echo(f"wrote {count} nets to {out_path}")
    _run(body)


@main.command()
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--spice-dir", type=click.Path(), default=None,
              help="Also dump one SPICE deck per net (write-only export).")
def label(in_path, out_path, spice_dir):
    """Label a net corpus with oracle Ceff via transient simulation."""
    def body():
        import pathlib
        if spice_dir:
            pathlib.Path(spice_dir).mkdir(parents=True, exist_ok=True)
        with open(out_path, "w") as f:
            for net in _load_nets(in_path):
                res = oracle_ceff(net)
                ct = total_capacitance(net)
                f.write(json.dumps({
                    "name": net.name,
                    "ceff_f": res.ceff,
                    "ctotal_f": ct,
                    "ratio": res.ceff / ct,
                    "t50_s": res.t50,
                }, separators=(",", ":")) + "\n")
                if spice_dir:
                    deck = spice_deck(net)
                    (pathlib.Path(spice_dir) / f"{net.name}.sp").write_text(deck)
        click.echo(f"labels written to {out_path}")
    _run(body)


@main.command()
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def reduce(in_path, out_path):
    """Reduce each net to its pi-model (JSONL)."""
    def body():
        with open(out_path, "w") as f:
            for net in _load_nets(in_path):
                pi = reduce_network(net)
                f.write(json.dumps({
                    "name": net.name, "c1_f": pi.c1, "c2_f": pi.c2,
                    "rpi_ohm": pi.r_pi, "degenerate": pi.degenerate,
                }, separators=(",", ":")) + "\n")
    _run(body)


@main.command()
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--method", type=click.Choice(["dartu"]), default="dartu")
def ceff(in_path, out_path, method):
    """Run the iterative Ceff heuristic on each net."""
    def body():
        with open(out_path, "w") as f:
            for net in _load_nets(in_path):
                pi = reduce_network(net)
                res = compute_ceff_dartu(pi, net.driver)
                f.write(json.dumps({
                    "name": net.name, "ceff_f": res.ceff,
                    "failed": res.failed, "iterations": res.iterations,
                }, separators=(",", ":")) + "\n")
    _run(body)


@main.command("simulate")
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def simulate_cmd(in_path, out_path):
    """Transient-simulate each net; report the driver-output 50% crossing."""
    def body():
        with open(out_path, "w") as f:
            for net in _load_nets(in_path):
                res = simulate(net)
                f.write(json.dumps({
                    "name": net.name, "t50_s": res.t50_root,
                    "steps": len(res.times) - 1,
                    "horizon_s": float(res.times[-1]),
                }, separators=(",", ":")) + "\n")
    _run(body)


@main.command("export-graphs")
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--manifest", "manifest_path", type=click.Path(exists=True), required=True)
@click.option("--train-out", type=click.Path(), required=True)
@click.option("--test-out", type=click.Path(), required=True)
@click.option("--manifest-out", type=click.Path(), required=True)
def export_graphs(in_path, labels_path, manifest_path, train_out, test_out,
                  manifest_out):
    """Convert labeled nets into the GNN graph dataset (train/test JSONL)."""
    def body():
        labels = {d["name"]: d["ratio"] for d in _iter_jsonl(labels_path)}
        with open(manifest_path) as f:
            split = json.load(f)

        def graphs():
            for net in _load_nets(in_path):
                g = to_gnn_graph(net)
                yield attach_label(g, labels[net.name] * g.c_total)

        export_dataset(graphs(), split, train_out, test_out, manifest_out)
        click.echo(f"dataset written: {train_out}, {test_out}")
    _run(body)


@main.command()
@click.option("--weights", "weights_path", type=click.Path(exists=True), required=True)
@click.option("--in", "in_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--batch-size", default=4096, type=int)
def infer(weights_path, in_path, out_path, batch_size):
    """Batched model inference over a graph JSONL file."""
    def body():
        bundle = load_weights(weights_path)
        graphs = load_graphs(in_path)
        preds = predict(graphs, bundle, batch_size=batch_size)
        with open(out_path, "w") as f:
            for p in preds:
                f.write(json.dumps({
                    "name": p.name, "ratio": p.ratio, "ceff_f": p.ceff,
                }, separators=(",", ":")) + "\n")
    _run(body)


@main.command("eval")
@click.option("--pred", "pred_path", type=click.Path(exists=True), required=True)
@click.option("--labels", "labels_path", type=click.Path(exists=True), required=True)
@click.option("--baseline", "baseline_path", type=click.Path(exists=True),
              default=None, help="Heuristic results supplying failure flags.")
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_cmd(pred_path, labels_path, baseline_path, out_path):
    """Accuracy report (MeAE/MaAE/MeAER/MaAER, cohort split on failures)."""
    def body():
        labels = {d["name"]: d["ceff_f"] for d in _iter_jsonl(labels_path)}
        preds = [(d["name"], d["ceff_f"]) for d in _iter_jsonl(pred_path)]
        pred_f = [c for _, c in preds]
        label_f = [labels[n] for n, _ in preds]
        failed = None
        if baseline_path:
            flags = {d["name"]: d["failed"] for d in _iter_jsonl(baseline_path)}
            failed = [flags[n] for n, _ in preds]
        report = evaluate_metrics(pred_f, label_f, failed)
        report["provenance"] = _provenance(None, {"pred": pred_path})
        text = json.dumps(report, indent=2)
        if out_path:
            with open(out_path, "w") as f:
                f.write(text + "\n")
        click.echo(text)
    _run(body)


@main.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True), required=True,
              help="Net corpus (JSONL) for the heuristic timings.")
@click.option("--graphs", "graphs_path", type=click.Path(exists=True), required=True,
              help="Matching graph dataset for model inference.")
@click.option("--weights", "weights_path", type=click.Path(exists=True), required=True)
@click.option("--workers", default=1, type=int)
@click.option("--out", "out_path", type=click.Path(), default=None)
def bench(corpus_path, graphs_path, weights_path, workers, out_path):
    """Throughput comparison: heuristic serial/parallel vs batched model."""
    def body():
        nets = list(_load_nets(corpus_path))
        graphs = load_graphs(graphs_path)
        bundle = load_weights(weights_path)
        pis = [reduce_network(n) for n in nets]

        t0 = time.perf_counter()
        for pi, net in zip(pis, nets):
            compute_ceff_dartu(pi, net.driver)
        dartu_serial = time.perf_counter() - t0

        if workers > 1:
            from multiprocessing import Pool
            t0 = time.perf_counter()
            with Pool(workers) as pool:
                pool.starmap(compute_ceff_dartu,
                             [(pi, net.driver) for pi, net in zip(pis, nets)],
                             chunksize=max(1, len(nets) // (workers * 4)))
            dartu_parallel = time.perf_counter() - t0
        else:
            dartu_parallel = dartu_serial

        t0 = time.perf_counter()
        predict(graphs, bundle)
        gnn_batch = time.perf_counter() - t0

        report = {
            "nets": len(nets),
            "nets_per_sec": {
                "dartu_serial": len(nets) / dartu_serial,
                "dartu_parallel": len(nets) / dartu_parallel,
                "gnn_batch": len(graphs) / gnn_batch,
            },
            "speedup_gnn_vs_dartu_serial": dartu_serial / gnn_batch,
            "workers": workers,
            "provenance": _provenance(None, {"corpus": corpus_path}),
        }
        text = json.dumps(report, indent=2)
        if out_path:
            with open(out_path, "w") as f:
                f.write(text + "\n")
        click.echo(text)
    _run(body)


if __name__ == "__main__":
    main()
