"""Iterative effective-capacitance heuristic: match the average source
current of the pi-loaded driver against a single-capacitor load over the
window ending at the lumped load's 50% output crossing.

Failure (an iterate leaving (0, c1+c2] or no convergence) is reported,
not raised: the result falls back to the lumped capacitance c1+c2.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from .network import DriverParams
from .pimodel import PiModel

REL_TOL = 1e-6
MAX_ITERATIONS = 100


class CeffMethod(enum.Enum):
    DARTU = "dartu"
    GNN = "gnn"
    ORACLE = "oracle"
    LUMPED_FALLBACK = "lumped_fallback"


@dataclass(frozen=True)
class CeffResult:
    ceff: float
    method: CeffMethod
    converged: bool
    failed: bool
    iterations: int
    t50: float


def ramp_response_cap(rd: float, c: float, slew: float, vdd: float, t: float) -> float:
    """Exact output voltage of a single cap c behind rd driven by a
    0 -> vdd ramp of duration `slew`, with v(0) = 0."""
    if t <= 0:
        return 0.0
    tau = rd * c
    if tau == 0:
        return vdd * min(t, slew) / slew
    if t <= slew:
        return (vdd / slew) * (t - tau * (1.0 - math.exp(-t / tau)))
    v_slew = vdd - (vdd * tau / slew) * (1.0 - math.exp(-slew / tau))
    return vdd - (vdd - v_slew) * math.exp(-(t - slew) / tau)


def _unshielded(rd: float, pi: PiModel) -> bool:
    """True when the pi is numerically indistinguishable from a single cap
    c1+c2: no far-side time constant, or one so far below the drive time
    constant that it is invisible in float64."""
    if pi.r_pi == 0.0 or pi.c2 == 0.0:
        return True
    return pi.r_pi * pi.c2 <= 1e-14 * rd * pi.c_total


def _pi_system(rd: float, pi: PiModel) -> Tuple[np.ndarray, np.ndarray]:
    """State matrices of d/dt [v1, v2] = M [v1, v2] + g * e(t)."""
    c1, c2, rp = pi.c1, pi.c2, pi.r_pi
    m = np.array(
        [
            [-(1.0 / rd + 1.0 / rp) / c1, 1.0 / (rp * c1)],
            [1.0 / (rp * c2), -1.0 / (rp * c2)],
        ]
    )
    g = np.array([1.0 / (rd * c1), 0.0])
    return m, g


def _expm2(m: np.ndarray, t: float) -> np.ndarray:
    """Matrix exponential of a 2x2 with real eigenvalues (RC systems)."""
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = tr * tr - 4.0 * det
    if disc < 0:
        disc = 0.0
    rt = math.sqrt(disc)
    l1 = 0.5 * (tr + rt)
    l2 = 0.5 * (tr - rt)
    e1 = math.exp(l1 * t)
    e2 = math.exp(l2 * t)
    if rt * abs(t) < 1e-12:
        # near-defective: exp(Mt) ~ e^{l1 t} (I + t(M - l1 I))
        ident = np.eye(2)
        return e1 * (ident + t * (m - l1 * ident))
    # Lagrange interpolation on the spectrum
    ident = np.eye(2)
    return (e1 * (m - l2 * ident) - e2 * (m - l1 * ident)) / (l1 - l2)


def ramp_response_pi(
    rd: float, pi: PiModel, slew: float, vdd: float, t: float
) -> Tuple[float, float]:
    """Exact (v1, v2) of the pi load behind rd under the ramp input.

    A collapsed pi (r_pi = 0 or c2 = 0 or c1 = 0) reduces to the single-cap
    response with c = c1 + c2.
    """
    if _unshielded(rd, pi):
        v = ramp_response_cap(rd, pi.c_total, slew, vdd, t)
        return v, v
    if pi.c1 <= 1e-14 * pi.c2:
        # near-zero c1: series rd + r_pi into c2; v1 divides resistively
        v2 = ramp_response_cap(rd + pi.r_pi, pi.c2, slew, vdd, t)
        e = vdd * min(max(t, 0.0), slew) / slew
        v1 = v2 + (e - v2) * pi.r_pi / (rd + pi.r_pi)
        return v1, v2
    if t <= 0:
        return 0.0, 0.0
    m, g = _pi_system(rd, pi)
    m_inv = np.linalg.inv(m)
    k = vdd / slew
    # ramp segment: particular solution alpha*t + beta
    alpha = -k * (m_inv @ g)
    beta = m_inv @ alpha
    t1 = min(t, slew)
    x = alpha * t1 + beta + _expm2(m, t1) @ (-beta)
    if t > slew:
        x_inf = -vdd * (m_inv @ g)
        x = x_inf + _expm2(m, t - slew) @ (x - x_inf)
    return float(x[0]), float(x[1])


def _t50_cap(rd: float, c: float, slew: float, vdd: float) -> float:
    """Time the single-cap output crosses vdd/2 (monotone closed form)."""
    half = 0.5 * vdd
    tau = rd * c
    hi = slew + 40.0 * tau + slew
    lo = 0.0
    f = lambda t: ramp_response_cap(rd, c, slew, vdd, t) - half
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, lo, hi, xtol=1e-30, rtol=8.9e-16)


def compute_ceff_dartu(pi: PiModel, driver: DriverParams) -> CeffResult:
    """Fixed point of the average-current match, started at c_total.

    Each iteration: (1) find T, the 50% crossing of the ceff-loaded output;
    (2) average currents over [0, T] via the charge identity; (3) solve
    I_c(ceff') = I_pi for the next iterate by bisection on (0, c1+c2].
    """
    rd = driver.drive_resistance
    slew = driver.input_slew
    vdd = driver.vdd
    c_lump = pi.c_total
    if pi.degenerate or _unshielded(rd, pi):
        t50 = _t50_cap(rd, c_lump, slew, vdd)
        return CeffResult(c_lump, CeffMethod.DARTU, True, False, 1, t50)

    def fallback(iterations: int, t50: float) -> CeffResult:
        return CeffResult(
            c_lump, CeffMethod.LUMPED_FALLBACK, False, True, iterations, t50
        )

    ceff = c_lump
    t50 = 0.0
    for it in range(1, MAX_ITERATIONS + 1):
        t50 = _t50_cap(rd, ceff, slew, vdd)
        v1, v2 = ramp_response_pi(rd, pi, slew, vdd, t50)
        q_pi = pi.c1 * v1 + pi.c2 * v2

        def q_cap(c: float) -> float:
            return c * ramp_response_cap(rd, c, slew, vdd, t50)

        # charge delivered by T grows with the load; bisection is valid
        if q_cap(c_lump) < q_pi:
            return fallback(it, t50)
        lo, hi = 0.0, c_lump
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if q_cap(mid) < q_pi:
                lo = mid
            else:
                hi = mid
        nxt = 0.5 * (lo + hi)
        if nxt <= 0.0 or nxt > c_lump:
            return fallback(it, t50)
        if abs(nxt - ceff) <= REL_TOL * c_lump:
            t50 = _t50_cap(rd, nxt, slew, vdd)
            return CeffResult(nxt, CeffMethod.DARTU, True, False, it, t50)
        ceff = nxt
    return fallback(MAX_ITERATIONS, t50)
