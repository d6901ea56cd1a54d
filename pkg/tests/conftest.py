"""Shared builders and fixtures for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from effcap.netgen import DEFAULT_TECH, GenSpec, generate_net
from effcap.network import (
    DriverParams,
    NodeKind,
    RcNetwork,
    RcNode,
    WireSegment,
)


def make_driver(rd=1000.0, slew=2e-11, vdd=1.0, vlo=0.2, vhi=0.8) -> DriverParams:
    return DriverParams(rd, slew, vdd, vlo, vhi)


def two_node_net(r=100.0, c=1e-15, pin=1e-15, driver=None, name="two") -> RcNetwork:
    """Smallest legal net: driver -- one segment -- one fanout pin."""
    return RcNetwork(
        nodes=(
            RcNode(0, NodeKind.DRIVER),
            RcNode(1, NodeKind.FANOUT, pin),
        ),
        segments=(WireSegment(0, 0, 1, r, c),),
        driver=driver or make_driver(),
        name=name,
    )


def chain_net(r_list, c_list, pin, driver=None, name="chain") -> RcNetwork:
    """Driver -> junction chain -> fanout, one pin cap at the far end."""
    n = len(r_list)
    nodes = [RcNode(0, NodeKind.DRIVER)]
    for i in range(1, n):
        nodes.append(RcNode(i, NodeKind.JUNCTION))
    nodes.append(RcNode(n, NodeKind.FANOUT, pin))
    segs = tuple(
        WireSegment(i, i, i + 1, r_list[i], c_list[i]) for i in range(n)
    )
    return RcNetwork(tuple(nodes), segs, driver or make_driver(), name=name)


def random_tree_net(rng: np.random.Generator, n_nodes: int,
                    driver=None, name="rand") -> RcNetwork:
    """Random RC tree: node 0 drives; internal nodes are junctions, leaves
    are fanout pins. Element values span realistic interconnect decades."""
    assert n_nodes >= 2
    parent = [0] * n_nodes
    for i in range(1, n_nodes):
        parent[i] = int(rng.integers(0, i))
    is_leaf = [True] * n_nodes
    is_leaf[0] = False
    for i in range(1, n_nodes):
        is_leaf[parent[i]] = False
    nodes = [RcNode(0, NodeKind.DRIVER)]
    for i in range(1, n_nodes):
        if is_leaf[i]:
            pin = float(10 ** rng.uniform(-16, -14.5))
            nodes.append(RcNode(i, NodeKind.FANOUT, pin))
        else:
            nodes.append(RcNode(i, NodeKind.JUNCTION))
    segs = []
    for i in range(1, n_nodes):
        r = float(10 ** rng.uniform(0, 3.5))
        c = float(10 ** rng.uniform(-17, -14.8))
        segs.append(WireSegment(i - 1, parent[i], i, r, c))
    drv = driver or make_driver(
        rd=float(10 ** rng.uniform(2, 3.8)),
        slew=float(10 ** rng.uniform(-11.5, -10)),
    )
    return RcNetwork(tuple(nodes), tuple(segs), drv, name=name)


@pytest.fixture(scope="session")
def small_corpus():
    """80 deterministic synthetic nets, degrees 3..10."""
    spec = GenSpec(degrees=(3, 10), nets_per_degree=10, seed=7)
    return [
        generate_net(spec, DEFAULT_TECH, d, i)
        for d in range(3, 11)
        for i in range(10)
    ]
