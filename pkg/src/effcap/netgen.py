"""Synthetic net generation: random terminal placement, rectilinear
Steiner trees (iterated 1-Steiner over the Hanan grid), layer-based RC
assignment, and electrical parameter sampling.

Randomness is counter-based: every net draws from a Philox generator keyed
by (seed, degree, index), so serial and parallel generation produce the
same corpus byte for byte.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import MalformedDocument
from .network import (
    DriverParams,
    NodeKind,
    RcNetwork,
    RcNode,
    WireSegment,
    canonicalize,
)

Point = Tuple[int, int]

_COORD_GRID = 1_000_000


@dataclass(frozen=True)
class Layer:
    name: str
    r_per_nm: float  # ohms / nm
    c_per_nm: float  # farads / nm


@dataclass(frozen=True)
class TechProfile:
    """Per-unit wire parasitics and electrical sampling ranges.

    The shipped default uses representative advanced-node orders of
    magnitude; it is illustrative, not any foundry's data.
    """

    layers: Tuple[Layer, ...]
    via_resistance: float = 0.0
    slew_range: Tuple[float, float] = (5e-12, 2e-10)
    rd_range: Tuple[float, float] = (100.0, 8000.0)
    cp_range: Tuple[float, float] = (1e-16, 2e-15)
    vdd: float = 0.7

    def validate(self) -> None:
        if not self.layers:
            raise MalformedDocument("tech profile needs at least one layer")
        for layer in self.layers:
            if layer.r_per_nm <= 0 or layer.c_per_nm <= 0:
                raise MalformedDocument(f"layer {layer.name}: per-unit values must be > 0")
        for name, (lo, hi) in (
            ("slew", self.slew_range), ("rd", self.rd_range), ("cp", self.cp_range)
        ):
            if not (0 < lo <= hi):
                raise MalformedDocument(f"bad {name} range [{lo}, {hi}]")

    @staticmethod
    def from_dict(doc: dict) -> "TechProfile":
        layers = tuple(
            Layer(l["name"], float(l["r_per_nm"]), float(l["c_per_nm"]))
            for l in doc["layers"]
        )
        prof = TechProfile(
            layers=layers,
            via_resistance=float(doc.get("via_resistance_ohm", 0.0)),
            slew_range=tuple(doc.get("slew_range_s", (5e-12, 2e-10))),
            rd_range=tuple(doc.get("rd_range_ohm", (100.0, 8000.0))),
            cp_range=tuple(doc.get("cp_range_f", (1e-16, 2e-15))),
            vdd=float(doc.get("vdd_v", 0.7)),
        )
        prof.validate()
        return prof

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"name": l.name, "r_per_nm": l.r_per_nm, "c_per_nm": l.c_per_nm}
                for l in self.layers
            ],
            "via_resistance_ohm": self.via_resistance,
            "slew_range_s": list(self.slew_range),
            "rd_range_ohm": list(self.rd_range),
            "cp_range_f": list(self.cp_range),
            "vdd_v": self.vdd,
        }


DEFAULT_TECH = TechProfile(
    layers=(
        Layer("lower", 5e-2, 2.2e-19),
        Layer("middle", 1.5e-2, 2.0e-19),
        Layer("upper", 4e-3, 1.8e-19),
    )
)


@dataclass(frozen=True)
class GenSpec:
    degrees: Tuple[int, int] = (3, 50)
    nets_per_degree: int = 100
    bbox_long_side: Tuple[float, float] = (30.0, 100000.0)  # nm
    seed: int = 0
    coupling_probability: float = 0.0
    coupling_cap: float = 1e-16

    def validate(self) -> None:
        if self.degrees[0] < 3:
            raise MalformedDocument("minimum synthetic degree is 3")
        if self.degrees[1] < self.degrees[0]:
            raise MalformedDocument("degree range is empty")
        if self.nets_per_degree < 1:
            raise MalformedDocument("nets_per_degree must be >= 1")


def _rng(seed: int, degree: int, index: int) -> np.random.Generator:
    # 128-bit counter-based key: (seed, degree:index) — independent streams
    # per net, so parallel and serial generation agree byte for byte.
    lane = (int(degree) << 32) | (int(index) & 0xFFFF_FFFF)
    key = [np.uint64(int(seed) & 0xFFFF_FFFF_FFFF_FFFF), np.uint64(lane)]
    return np.random.Generator(np.random.Philox(key=key))


# -- terminal placement ------------------------------------------------------


def generate_terminals(spec: GenSpec, degree: int, rng: np.random.Generator) -> List[Point]:
    """Distinct grid coordinates scaled so the longer bounding-box side is
    log-uniform in the configured range."""
    pts: set = set()
    while len(pts) < degree:
        xs = rng.integers(0, _COORD_GRID + 1, size=degree - len(pts))
        ys = rng.integers(0, _COORD_GRID + 1, size=degree - len(pts))
        pts.update(zip(map(int, xs), map(int, ys)))
    pts = sorted(pts)[:degree]
    lo, hi = spec.bbox_long_side
    target = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    span = max(max(xs) - min(xs), max(ys) - min(ys), 1)
    scale = target / span
    return [(p[0] * scale, p[1] * scale) for p in pts]


# -- rectilinear Steiner tree ------------------------------------------------


def _mst_length_and_edges(pts: Sequence[Point]) -> Tuple[float, List[Tuple[int, int]]]:
    """Prim on Manhattan distances."""
    n = len(pts)
    if n == 1:
        return 0.0, []
    arr = np.asarray(pts, dtype=float)
    dist = np.abs(arr[:, None, :] - arr[None, :, :]).sum(axis=2)
    in_tree = np.zeros(n, dtype=bool)
    best = dist[0].copy()
    parent = np.zeros(n, dtype=int)
    in_tree[0] = True
    best[0] = np.inf
    edges = []
    total = 0.0
    for _ in range(n - 1):
        j = int(np.argmin(best))
        total += best[j]
        edges.append((int(parent[j]), j))
        in_tree[j] = True
        upd = dist[j] < best
        upd &= ~in_tree
        parent[upd] = j
        best[upd] = dist[j][upd]
        best[j] = np.inf
    return total, edges


def _mst_with_extra_point(
    pts: Sequence[Point], mst_edges: List[Tuple[int, int]], p: Point
) -> float:
    """Length of the MST over pts + {p}: only the old MST edges plus p's
    star need considering (adding a vertex preserves non-tree exclusions)."""
    n = len(pts)
    arr = np.asarray(pts, dtype=float)
    dp = np.abs(arr - np.asarray(p, dtype=float)).sum(axis=1)
    cand = [(abs(pts[a][0] - pts[b][0]) + abs(pts[a][1] - pts[b][1]), a, b)
            for a, b in mst_edges]
    cand.extend((float(dp[i]), i, n) for i in range(n))
    cand.sort()
    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total = 0.0
    joined = 0
    for w, a, b in cand:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            total += w
            joined += 1
            if joined == n:
                break
    return total


def _hanan_points(pts: Sequence[Point]) -> List[Point]:
    xs = sorted({p[0] for p in pts})
    ys = sorted({p[1] for p in pts})
    existing = set(pts)
    return [(x, y) for x in xs for y in ys if (x, y) not in existing]


def _exact_steiner_small(terminals: Sequence[Point]) -> Tuple[List[Point], List[Tuple[int, int]]]:
    """Optimal rectilinear Steiner tree for a handful of terminals by
    dynamic programming over terminal subsets on the Hanan grid (an optimal
    tree always exists with branch points on that grid)."""
    terms = list(terminals)
    xs = sorted({p[0] for p in terms})
    ys = sorted({p[1] for p in terms})
    verts = [(x, y) for x in xs for y in ys]
    vidx = {p: i for i, p in enumerate(verts)}
    nv = len(verts)
    arr = np.asarray(verts, dtype=float)
    dist = np.abs(arr[:, None, :] - arr[None, :, :]).sum(axis=2)
    t_ids = [vidx[p] for p in terms]
    root, rest = t_ids[0], t_ids[1:]
    nt = len(rest)
    inf = math.inf
    # dp[S][v]: cheapest tree spanning {rest[i] : i in S} plus vertex v
    dp = np.full((1 << nt, nv), inf)
    choice: Dict[Tuple[int, int], tuple] = {}
    dp[0] = 0.0
    for s in range(1, 1 << nt):
        bits = [i for i in range(nt) if s >> i & 1]
        lsb = s & -s
        # split into two subtrees meeting at v
        sub = (s - 1) & s
        while sub:
            if sub & lsb:  # enumerate each unordered split once
                tot = dp[sub] + dp[s ^ sub]
                better = tot < dp[s]
                for v in np.nonzero(better)[0]:
                    dp[s][v] = tot[v]
                    choice[(s, int(v))] = ("split", sub)
            sub = (sub - 1) & s
        if len(bits) == 1:
            t = rest[bits[0]]
            better = dist[t] < dp[s]
            for v in np.nonzero(better)[0]:
                dp[s][v] = dist[t][v]
                choice[(s, int(v))] = ("leaf", t)
        # grow: attach v to the tree at u (metric weights: one pass suffices)
        grown = dp[s][:, None] + dist
        u_best = np.argmin(grown, axis=0)
        v_best = grown[u_best, np.arange(nv)]
        for v in np.nonzero(v_best < dp[s])[0]:
            dp[s][v] = v_best[v]
            choice[(s, int(v))] = ("grow", int(u_best[v]))
    # reconstruct the edge set
    edges_v: List[Tuple[int, int]] = []
    stack = [((1 << nt) - 1, root)]
    while stack:
        s, v = stack.pop()
        if s == 0:
            continue
        kind = choice.get((s, v))
        if kind is None:
            continue
        if kind[0] == "split":
            stack.append((kind[1], v))
            stack.append((s ^ kind[1], v))
        elif kind[0] == "leaf":
            if kind[1] != v:
                edges_v.append((kind[1], v))
        else:  # grow through u
            u = kind[1]
            if u != v:
                edges_v.append((u, v))
            stack.append((s, u))
    # keep only vertices that appear; drop degree<=2 non-terminals by
    # merging their incident edges (chains in an optimal tree are shortest,
    # so merged length equals the endpoint Manhattan distance)
    term_set = set(t_ids)
    adj: Dict[int, set] = {}
    for a, b in edges_v:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    changed = True
    while changed:
        changed = False
        for v in list(adj):
            if v in term_set:
                continue
            nbrs = sorted(adj.get(v, ()))
            if len(nbrs) <= 2:
                for u in nbrs:
                    adj[u].discard(v)
                if len(nbrs) == 2:
                    a, b = nbrs
                    adj[a].add(b)
                    adj[b].add(a)
                del adj[v]
                changed = True
    pts = list(terms)
    out_idx = {vidx[p]: i for i, p in enumerate(terms)}
    for v in sorted(adj):
        if v not in out_idx:
            out_idx[v] = len(pts)
            pts.append(verts[v])
    edges = sorted(
        (min(out_idx[a], out_idx[b]), max(out_idx[a], out_idx[b]))
        for a in adj for b in adj[a] if a < b
    )
    return pts, edges


def _adjacent_pair_candidates(
    pts: Sequence[Point], mst_edges: List[Tuple[int, int]]
) -> List[Point]:
    """Hanan points spanned by MST-adjacent node pairs — the corners where
    an L-route bend could become a branch point."""
    existing = set(pts)
    cands = set()
    for a, b in mst_edges:
        for c in ((pts[a][0], pts[b][1]), (pts[b][0], pts[a][1])):
            if c not in existing:
                cands.add(c)
    return sorted(cands)


def build_rsmt(terminals: Sequence[Point]) -> Tuple[List[Point], List[Tuple[int, int]]]:
    """Rectilinear Steiner tree. Small instances (<= 6 terminals) are solved
    exactly on the Hanan grid; larger ones use iterated 1-Steiner with
    candidate branch points drawn from MST-adjacent pairs. Returns
    (points, edges); points[:len(terminals)] are the terminals, the rest
    are Steiner points of tree degree >= 3.

    Edge lengths are Manhattan (each edge realized as an L-route), so the
    tree length never exceeds the rectilinear MST length.
    """
    pts = list(terminals)
    n_term = len(pts)
    if n_term < 2:
        return pts, []
    if n_term == 2:
        return pts, [(0, 1)]
    if n_term <= 6:
        return _exact_steiner_small(pts)
    while True:
        base_len, base_edges = _mst_length_and_edges(pts)
        best_gain = 1e-9 * base_len
        best_pt = None
        for h in _adjacent_pair_candidates(pts, base_edges):
            gain = base_len - _mst_with_extra_point(pts, base_edges, h)
            if gain > best_gain:
                best_gain = gain
                best_pt = h
        if best_pt is None:
            break
        pts.append(best_pt)
    _, edges = _mst_length_and_edges(pts)
    # prune Steiner points that did not earn tree degree >= 3
    while True:
        deg = [0] * len(pts)
        for a, b in edges:
            deg[a] += 1
            deg[b] += 1
        drop = next(
            (i for i in range(n_term, len(pts)) if deg[i] <= 2), None
        )
        if drop is None:
            break
        pts.pop(drop)
        _, edges = _mst_length_and_edges(pts)
    return pts, edges


def rsmt_length(pts: Sequence[Point], edges: Sequence[Tuple[int, int]]) -> float:
    return sum(
        abs(pts[a][0] - pts[b][0]) + abs(pts[a][1] - pts[b][1]) for a, b in edges
    )


# -- RC realization ----------------------------------------------------------


def _layer_groups(tech: TechProfile) -> Tuple[Tuple[Layer, ...], ...]:
    """Layers split into lower/middle/upper thirds for length-class binning."""
    n = len(tech.layers)
    if n < 3:
        return (tech.layers,) * 3
    third = n // 3
    return (
        tech.layers[:third],
        tech.layers[third: n - third],
        tech.layers[n - third:],
    )


def realize_rc(
    pts: Sequence[Point],
    edges: Sequence[Tuple[int, int]],
    n_terminals: int,
    tech: TechProfile,
    rng: np.random.Generator,
    driver_terminal: int = 0,
    name: str = "",
    coupling_probability: float = 0.0,
    coupling_cap: float = 0.0,
) -> RcNetwork:
    """Assign layers by edge-length class, scale per-unit RC by Manhattan
    length, and sample driver/pin electrical values."""
    lengths = [
        abs(pts[a][0] - pts[b][0]) + abs(pts[a][1] - pts[b][1]) for a, b in edges
    ]
    groups = _layer_groups(tech)
    if lengths:
        cut1, cut2 = np.quantile(lengths, [1 / 3, 2 / 3])
    segments = []
    coupling = []
    for sid, ((a, b), length) in enumerate(zip(edges, lengths)):
        group = groups[0 if length <= cut1 else (1 if length <= cut2 else 2)]
        layer = group[int(rng.integers(0, len(group)))]
        segments.append(
            WireSegment(
                sid, a, b,
                resistance=length * layer.r_per_nm + tech.via_resistance,
                capacitance=length * layer.c_per_nm,
                layer=layer.name,
            )
        )
        if coupling_probability > 0 and rng.random() < coupling_probability:
            coupling.append((sid, coupling_cap))
    deg = [0] * len(pts)
    for a, b in edges:
        deg[a] += 1
        deg[b] += 1
    nodes = []
    stubs = []  # fanout pins split off interior terminals
    for i, p in enumerate(pts):
        pos = (float(p[0]), float(p[1]))
        if i == driver_terminal:
            kind, cp = NodeKind.DRIVER, 0.0
        elif i < n_terminals:
            cp = float(rng.uniform(*tech.cp_range))
            if deg[i] > 1:
                # interior terminal: keep a junction in the tree and hang
                # the pin off it as a zero-length stub so pins stay leaves
                kind, cp, stubs = NodeKind.JUNCTION, 0.0, stubs + [(i, cp)]
            else:
                kind = NodeKind.FANOUT
        else:
            kind, cp = NodeKind.JUNCTION, 0.0
        nodes.append(RcNode(i, kind, cp, pos))
    for at, cp in stubs:
        nid = len(nodes)
        nodes.append(RcNode(nid, NodeKind.FANOUT, cp, nodes[at].position))
        segments.append(WireSegment(len(segments), at, nid, 0.0, 0.0, None))
    driver = DriverParams(
        drive_resistance=float(rng.uniform(*tech.rd_range)),
        input_slew=float(rng.uniform(*tech.slew_range)),
        vdd=tech.vdd,
    )
    net = RcNetwork(
        tuple(nodes), tuple(segments), driver, tuple(coupling), name
    )
    return canonicalize(net)


def generate_net(spec: GenSpec, tech: TechProfile, degree: int, index: int) -> RcNetwork:
    rng = _rng(spec.seed, degree, index)
    terminals = generate_terminals(spec, degree, rng)
    pts, edges = build_rsmt(terminals)
    driver_terminal = int(rng.integers(0, degree))
    return realize_rc(
        pts, edges, degree, tech, rng,
        driver_terminal=driver_terminal,
        name=f"synth_d{degree}_{index}",
        coupling_probability=spec.coupling_probability,
        coupling_cap=spec.coupling_cap,
    )


def iter_dataset(spec: GenSpec, tech: TechProfile) -> Iterator[RcNetwork]:
    """Stream nets degree by degree without materializing the corpus."""
    spec.validate()
    tech.validate()
    for degree in range(spec.degrees[0], spec.degrees[1] + 1):
        for index in range(spec.nets_per_degree):
            yield generate_net(spec, tech, degree, index)


def split_manifest(spec: GenSpec, train_fraction: float = 0.1) -> dict:
    """Per-degree random train/test assignment, recorded by net name."""
    train: List[str] = []
    test: List[str] = []
    for degree in range(spec.degrees[0], spec.degrees[1] + 1):
        rng = _rng(spec.seed, degree, 0xFFFF_FFFF)
        names = [f"synth_d{degree}_{i}" for i in range(spec.nets_per_degree)]
        n_train = max(1, round(train_fraction * len(names)))
        chosen = set(map(int, rng.choice(len(names), size=n_train, replace=False)))
        for i, nm in enumerate(names):
            (train if i in chosen else test).append(nm)
    return {
        "seed": spec.seed,
        "degrees": list(spec.degrees),
        "nets_per_degree": spec.nets_per_degree,
        "count": (spec.degrees[1] - spec.degrees[0] + 1) * spec.nets_per_degree,
        "train_fraction": train_fraction,
        "train": train,
        "test": test,
    }
