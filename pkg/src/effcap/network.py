"""RC interconnect network model: parsing, validation, and derived per-node
quantities (upstream resistance, downstream capacitance, Elmore delay).

All persisted values are SI (ohms, farads, seconds, volts); positions are
nanometers. Networks are immutable after construction and safe to share
across workers.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .errors import (
    MalformedDocument,
    MultipleDrivers,
    NegativeElement,
    NoDriver,
    NonTreeTopology,
)


class NodeKind(enum.Enum):
    DRIVER = "driver"
    FANOUT = "fanout"
    JUNCTION = "junction"
    COUPLING_VIRTUAL = "coupling_virtual"


@dataclass(frozen=True)
class RcNode:
    id: int
    kind: NodeKind
    pin_capacitance: float = 0.0  # farads; zero unless fanout/coupling-virtual
    position: Optional[Tuple[float, float]] = None  # nanometers


@dataclass(frozen=True)
class WireSegment:
    id: int
    from_node: int
    to_node: int
    resistance: float  # ohms
    capacitance: float  # farads
    layer: Optional[str] = None


@dataclass(frozen=True)
class DriverParams:
    drive_resistance: float  # ohms, > 0
    input_slew: float  # seconds; low-to-high threshold ramp time
    vdd: float = 1.0
    v_low_frac: float = 0.2
    v_high_frac: float = 0.8

    def validate(self) -> None:
        if not (self.drive_resistance > 0 and math.isfinite(self.drive_resistance)):
            raise NegativeElement(f"drive_resistance must be > 0, got {self.drive_resistance}")
        if not (self.input_slew > 0 and math.isfinite(self.input_slew)):
            raise NegativeElement(f"input_slew must be > 0, got {self.input_slew}")
        if not (0 < self.v_low_frac < 0.5 < self.v_high_frac < 1):
            raise MalformedDocument(
                f"thresholds must satisfy 0 < vlo < 0.5 < vhi < 1, got "
                f"({self.v_low_frac}, {self.v_high_frac})"
            )
        if not (self.vdd > 0):
            raise NegativeElement(f"vdd must be > 0, got {self.vdd}")


@dataclass(frozen=True)
class NodeDerived:
    upstream_resistance: float  # ohms, excluding drive resistance
    downstream_capacitance: float  # farads, subtree ground cap incl. self
    hops_from_driver: int
    node_ground_cap: float  # pin cap + half of incident segment caps + coupling


@dataclass(frozen=True)
class RcNetwork:
    nodes: Tuple[RcNode, ...]
    segments: Tuple[WireSegment, ...]
    driver: DriverParams
    coupling: Tuple[Tuple[int, float], ...] = ()  # (segment id, farads)
    name: str = ""

    def __post_init__(self):
        self._validate()

    # -- validation ---------------------------------------------------------

    def _validate(self) -> None:
        if not self.nodes:
            raise MalformedDocument("network has no nodes")
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise MalformedDocument("duplicate node ids")
        drivers = [n for n in self.nodes if n.kind is NodeKind.DRIVER]
        if not drivers:
            raise NoDriver(f"net {self.name!r} has no driver node")
        if len(drivers) > 1:
            raise MultipleDrivers(f"net {self.name!r} has {len(drivers)} driver nodes")
        for n in self.nodes:
            if n.pin_capacitance < 0 or not math.isfinite(n.pin_capacitance):
                raise NegativeElement(f"node {n.id}: bad pin capacitance {n.pin_capacitance}")
            if n.kind in (NodeKind.JUNCTION, NodeKind.DRIVER) and n.pin_capacitance != 0:
                raise MalformedDocument(f"node {n.id}: {n.kind.value} nodes must have cp = 0")
        node_set = set(ids)
        seg_ids = [s.id for s in self.segments]
        if len(set(seg_ids)) != len(seg_ids):
            raise MalformedDocument("duplicate segment ids")
        for s in self.segments:
            if s.from_node not in node_set or s.to_node not in node_set:
                raise MalformedDocument(f"segment {s.id} references unknown node")
            if s.resistance < 0 or s.capacitance < 0:
                raise NegativeElement(f"segment {s.id}: negative R or C")
            if not (math.isfinite(s.resistance) and math.isfinite(s.capacitance)):
                raise NegativeElement(f"segment {s.id}: non-finite R or C")
        if len(self.segments) != len(self.nodes) - 1:
            raise NonTreeTopology(
                f"net {self.name!r}: {len(self.segments)} segments for "
                f"{len(self.nodes)} nodes (tree requires n-1)"
            )
        # connectivity check doubles as cycle detection given the edge count
        adj = self.adjacency()
        seen = {self.driver_node_id()}
        stack = [self.driver_node_id()]
        while stack:
            u = stack.pop()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != len(self.nodes):
            raise NonTreeTopology(f"net {self.name!r} is not connected")
        seg_set = set(seg_ids)
        for sid, c in self.coupling:
            if sid not in seg_set:
                raise MalformedDocument(f"coupling references unknown segment {sid}")
            if c < 0 or not math.isfinite(c):
                raise NegativeElement(f"coupling on segment {sid}: bad capacitance {c}")
        deg: Dict[int, int] = {i: 0 for i in ids}
        for s in self.segments:
            deg[s.from_node] += 1
            deg[s.to_node] += 1
        for n in self.nodes:
            if n.kind is NodeKind.FANOUT and deg[n.id] != 1:
                raise NonTreeTopology(f"fanout node {n.id} is not a leaf")
        self.driver.validate()
        if not total_capacitance(self) > 0:
            raise NegativeElement(f"net {self.name!r} has zero total capacitance")

    # -- accessors ----------------------------------------------------------

    def driver_node_id(self) -> int:
        for n in self.nodes:
            if n.kind is NodeKind.DRIVER:
                return n.id
        raise NoDriver(self.name)

    def node_by_id(self, nid: int) -> RcNode:
        for n in self.nodes:
            if n.id == nid:
                return n
        raise KeyError(nid)

    def adjacency(self) -> Dict[int, List[Tuple[int, WireSegment]]]:
        adj: Dict[int, List[Tuple[int, WireSegment]]] = {n.id: [] for n in self.nodes}
        for s in self.segments:
            adj[s.from_node].append((s.to_node, s))
            adj[s.to_node].append((s.from_node, s))
        return adj

    def rooted_order(self) -> List[Tuple[int, int, Optional[WireSegment]]]:
        """BFS order from the driver as (node, parent, connecting segment).

        The driver appears first with parent -1 and segment None. Children
        are visited in ascending node-id order (canonical ordering).
        """
        adj = self.adjacency()
        root = self.driver_node_id()
        order = [(root, -1, None)]
        seen = {root}
        queue = [root]
        while queue:
            u = queue.pop(0)
            for v, seg in sorted(adj[u], key=lambda t: t[0]):
                if v not in seen:
                    seen.add(v)
                    order.append((v, u, seg))
                    queue.append(v)
        return order

    def segment_orientation(self) -> Dict[int, Tuple[int, int]]:
        """Each segment id mapped to (upstream node, downstream node)."""
        out = {}
        for v, u, seg in self.rooted_order():
            if seg is not None:
                out[seg.id] = (u, v)
        return out


# -- operations -------------------------------------------------------------


def total_capacitance(net: RcNetwork) -> float:
    """Sum of all wire, pin, and coupling capacitances of the net."""
    return (
        sum(s.capacitance for s in net.segments)
        + sum(n.pin_capacitance for n in net.nodes)
        + sum(c for _, c in net.coupling)
    )


def node_ground_caps(net: RcNetwork) -> Dict[int, float]:
    """Grounded capacitance per node: pin cap plus half of each incident
    segment's wire cap, plus coupling caps grounded at the segment's
    downstream endpoint."""
    caps = {n.id: n.pin_capacitance for n in net.nodes}
    for s in net.segments:
        caps[s.from_node] += 0.5 * s.capacitance
        caps[s.to_node] += 0.5 * s.capacitance
    if net.coupling:
        down = {sid: dn for sid, (_, dn) in net.segment_orientation().items()}
        for sid, c in net.coupling:
            caps[down[sid]] += c
    return caps


def derive_node_quantities(net: RcNetwork) -> Dict[int, NodeDerived]:
    caps = node_ground_caps(net)
    order = net.rooted_order()
    r_u = {net.driver_node_id(): 0.0}
    hops = {net.driver_node_id(): 0}
    for v, u, seg in order[1:]:
        r_u[v] = r_u[u] + seg.resistance
        hops[v] = hops[u] + 1
    c_d = dict(caps)
    for v, u, _ in reversed(order[1:]):
        c_d[u] += c_d[v]
    return {
        nid: NodeDerived(r_u[nid], c_d[nid], hops[nid], caps[nid])
        for nid in r_u
    }


def elmore_delay(net: RcNetwork) -> Dict[int, float]:
    """First-moment delay per node, including the drive resistance at the
    root: delay(n) = sum_k R(shared path) * ground_cap(k)."""
    derived = derive_node_quantities(net)
    c_total = total_capacitance(net)
    root = net.driver_node_id()
    delay = {root: net.driver.drive_resistance * c_total}
    for v, u, seg in net.rooted_order()[1:]:
        delay[v] = delay[u] + seg.resistance * derived[v].downstream_capacitance
    return delay


# -- JSON schema ------------------------------------------------------------

_DRIVER_KEYS = {"rd_ohm", "slew_s", "vdd_v", "vlo", "vhi"}
_NODE_KEYS = {"id", "kind", "cp_f", "x_nm", "y_nm"}
_SEG_KEYS = {"id", "from", "to", "r_ohm", "c_f", "layer"}
_COUPLING_KEYS = {"seg", "c_f"}
_TOP_KEYS = {"name", "driver", "nodes", "segments", "coupling"}

_KIND_NAMES = {k.value: k for k in NodeKind}


def _check_keys(obj: dict, allowed: set, ctx: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise MalformedDocument(f"{ctx}: unknown fields {sorted(unknown)}")


def network_from_dict(doc: dict, name: Optional[str] = None) -> RcNetwork:
    if not isinstance(doc, dict):
        raise MalformedDocument("net document must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "net")
    try:
        drv = doc["driver"]
        _check_keys(drv, _DRIVER_KEYS, "driver")
        driver = DriverParams(
            drive_resistance=float(drv["rd_ohm"]),
            input_slew=float(drv["slew_s"]),
            vdd=float(drv.get("vdd_v", 1.0)),
            v_low_frac=float(drv.get("vlo", 0.2)),
            v_high_frac=float(drv.get("vhi", 0.8)),
        )
        nodes = []
        for nd in doc["nodes"]:
            _check_keys(nd, _NODE_KEYS, f"node {nd.get('id')}")
            kind = _KIND_NAMES.get(nd["kind"])
            if kind is None:
                raise MalformedDocument(f"node {nd.get('id')}: unknown kind {nd['kind']!r}")
            pos = None
            if "x_nm" in nd or "y_nm" in nd:
                pos = (float(nd["x_nm"]), float(nd["y_nm"]))
            nodes.append(RcNode(int(nd["id"]), kind, float(nd.get("cp_f", 0.0)), pos))
        segments = []
        for sg in doc["segments"]:
            _check_keys(sg, _SEG_KEYS, f"segment {sg.get('id')}")
            segments.append(
                WireSegment(
                    int(sg["id"]), int(sg["from"]), int(sg["to"]),
                    float(sg["r_ohm"]), float(sg["c_f"]), sg.get("layer"),
                )
            )
        coupling = []
        for cp in doc.get("coupling", []):
            _check_keys(cp, _COUPLING_KEYS, "coupling")
            coupling.append((int(cp["seg"]), float(cp["c_f"])))
        coupling = tuple(coupling)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocument(f"bad net document: {exc}") from exc
    return RcNetwork(
        nodes=tuple(nodes),
        segments=tuple(segments),
        driver=driver,
        coupling=coupling,
        name=name if name is not None else doc.get("name", ""),
    )


def parse_network(text: str) -> RcNetwork:
    """Parse a single JSON net document into a validated RcNetwork."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from exc
    return network_from_dict(doc)


def network_to_dict(net: RcNetwork) -> dict:
    net = canonicalize(net)
    doc = {
        "name": net.name,
        "driver": {
            "rd_ohm": net.driver.drive_resistance,
            "slew_s": net.driver.input_slew,
            "vdd_v": net.driver.vdd,
            "vlo": net.driver.v_low_frac,
            "vhi": net.driver.v_high_frac,
        },
        "nodes": [],
        "segments": [],
        "coupling": [{"seg": sid, "c_f": c} for sid, c in net.coupling],
    }
    for n in net.nodes:
        nd = {"id": n.id, "kind": n.kind.value, "cp_f": n.pin_capacitance}
        if n.position is not None:
            nd["x_nm"], nd["y_nm"] = n.position
        doc["nodes"].append(nd)
    for s in net.segments:
        sg = {"id": s.id, "from": s.from_node, "to": s.to_node,
              "r_ohm": s.resistance, "c_f": s.capacitance}
        if s.layer is not None:
            sg["layer"] = s.layer
        doc["segments"].append(sg)
    return doc


def serialize_network(net: RcNetwork) -> str:
    return json.dumps(network_to_dict(net), separators=(",", ":"))


def canonicalize(net: RcNetwork) -> RcNetwork:
    """Renumber nodes 0..n-1 with the driver at 0 in BFS order (children
    visited in ascending original id) and segments 0..n-2 in that order."""
    order = net.rooted_order()
    remap = {nid: i for i, (nid, _, _) in enumerate(order)}
    already = all(remap[n] == n for n in remap)
    nodes = sorted(
        (RcNode(remap[n.id], n.kind, n.pin_capacitance, n.position) for n in net.nodes),
        key=lambda n: n.id,
    )
    seg_remap = {}
    segments = []
    for i, (v, u, seg) in enumerate(order[1:]):
        seg_remap[seg.id] = i
        segments.append(
            WireSegment(i, remap[u], remap[v], seg.resistance, seg.capacitance, seg.layer)
        )
    coupling = tuple(sorted((seg_remap[sid], c) for sid, c in net.coupling))
    if already and tuple(segments) == net.segments and coupling == net.coupling:
        return net
    return RcNetwork(tuple(nodes), tuple(segments), net.driver, coupling, net.name)
