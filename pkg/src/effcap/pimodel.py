"""Driving-point admittance moments and reduction to the three-parameter
pi load (c1 at the driver, r_pi, c2 downstream).

The first three Taylor coefficients of Y(s) seen from the driver are
computed by a bottom-up tree recursion; a series resistance R maps child
moments (y1, y2, y3) to (y1, y2 - R*y1^2, y3 - 2R*y1*y2 + R^2*y1^3) and
parallel branches add component-wise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List

from .errors import NonPhysicalMoments
from .network import RcNetwork, node_ground_caps

# Near-lumped nets collapse to a degenerate pi instead of dividing
# near-zero moments. The test is scale-invariant: the intrinsic time
# constant |y2|/y1 sets the reference, so y3 is compared against
# y2^2 / y1 and y2 against the cancellation floor of y1.
_DEGEN_EPS = 1e-12


@dataclass(frozen=True)
class AdmittanceMoments:
    y1: float  # farads
    y2: float  # farad-seconds, <= 0 for RC trees
    y3: float  # farad-seconds^2, >= 0 for RC trees


@dataclass(frozen=True)
class PiModel:
    c1: float
    c2: float
    r_pi: float
    degenerate: bool = False
    clamped: bool = False

    @property
    def c_total(self) -> float:
        return self.c1 + self.c2


def admittance_moments(net: RcNetwork) -> AdmittanceMoments:
    """First three admittance moments at the driver, excluding the drive
    resistance."""
    caps = node_ground_caps(net)
    order = net.rooted_order()
    # moments of the subtree hanging below each node, built leaves-first
    y1: Dict[int, float] = {}
    y2: Dict[int, float] = {}
    y3: Dict[int, float] = {}
    children: Dict[int, List] = {nid: [] for nid in caps}
    for v, u, seg in order[1:]:
        children[u].append((v, seg))
    for v, _, _ in reversed(order):
        a1 = caps[v]
        a2 = 0.0
        a3 = 0.0
        for child, seg in children[v]:
            r = seg.resistance
            b1, b2, b3 = y1[child], y2[child], y3[child]
            a1 += b1
            a2 += b2 - r * b1 * b1
            a3 += b3 - 2.0 * r * b1 * b2 + r * r * b1 ** 3
        y1[v], y2[v], y3[v] = a1, a2, a3
    root = net.driver_node_id()
    return AdmittanceMoments(y1[root], y2[root], y3[root])


def reduce_to_pi(m: AdmittanceMoments, c_total: float) -> PiModel:
    """Match the first three moments with a pi load. Near-lumped inputs
    collapse to a degenerate pi (all capacitance in c1, r_pi = 0)."""
    if m.y1 <= 0:
        raise NonPhysicalMoments(f"y1 must be positive, got {m.y1}")
    t_ref = abs(m.y2) / m.y1
    if m.y2 > _DEGEN_EPS * m.y1 * t_ref:
        raise NonPhysicalMoments(f"y2 must be <= 0 for an RC tree, got {m.y2}")
    if m.y3 < -_DEGEN_EPS * m.y1 * t_ref ** 2:
        raise NonPhysicalMoments(f"y3 must be >= 0 for an RC tree, got {m.y3}")
    if m.y2 == 0.0 or m.y3 < _DEGEN_EPS * m.y2 ** 2 / m.y1:
        return PiModel(c1=c_total, c2=0.0, r_pi=0.0, degenerate=True)
    c2 = m.y2 * m.y2 / m.y3
    r_pi = -(m.y3 * m.y3) / (m.y2 ** 3)
    c1 = m.y1 - c2
    clamped = False
    if c1 < 0:
        if -c1 < 1e-9 * m.y1:
            # rounding-level negative: fold everything into c2
            c1, c2, clamped = 0.0, m.y1, True
        else:
            raise NonPhysicalMoments(
                f"moment matching produced c1 = {c1} (y1 = {m.y1})"
            )
    return PiModel(c1=c1, c2=c2, r_pi=r_pi, clamped=clamped)


def pi_moments(pi: PiModel) -> AdmittanceMoments:
    """Admittance moments of a pi load: Y(s) = s*c1 + s*c2/(1 + s*r_pi*c2)."""
    return AdmittanceMoments(
        y1=pi.c1 + pi.c2,
        y2=-pi.r_pi * pi.c2 ** 2,
        y3=pi.r_pi ** 2 * pi.c2 ** 3,
    )


def reduce_network(net: RcNetwork) -> PiModel:
    from .network import total_capacitance

    return reduce_to_pi(admittance_moments(net), total_capacitance(net))
