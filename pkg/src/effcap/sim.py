"""Full-network transient simulation (nodal analysis, trapezoidal stepping)
and effective-capacitance labeling by binary search on the driver-output
50% crossing.

The driver is a Thevenin ramp source behind its drive resistance. The step
size is halved globally until the 50% crossing is stable, which keeps runs
deterministic. The lumped reference circuit in the binary search is stepped
with the same integrator and step size so discretization error cancels.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import signal, sparse
from scipy.sparse.linalg import splu

from .dartu import CeffMethod, CeffResult
from .errors import NoCrossing
from .network import (
    DriverParams,
    RcNetwork,
    elmore_delay,
    node_ground_caps,
    total_capacitance,
)

# Zero-resistance segments get this floor so the conductance matrix stays
# finite; tau = 1e-6 ohm * fF-scale caps is far below any crossing time.
_R_FLOOR = 1e-6

_T50_REL_TOL = 1e-4  # step halving stops when t50 moves less than this
_V_ABS_TOL = 2e-4  # ... and every node voltage (vs vdd) is stable too
_INITIAL_STEPS = 256
_MAX_HALVINGS = 12


@dataclass(frozen=True)
class TransientResult:
    times: np.ndarray
    node_voltages: np.ndarray  # shape (steps, nodes), canonical node order
    t50_root: float


def _assemble(net: RcNetwork, driver: DriverParams):
    ids = sorted(n.id for n in net.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    n = len(ids)
    g = sparse.lil_matrix((n, n))
    root = index[net.driver_node_id()]
    g[root, root] = 1.0 / driver.drive_resistance
    for s in net.segments:
        r = max(s.resistance, _R_FLOOR)
        i, j = index[s.from_node], index[s.to_node]
        inv = 1.0 / r
        g[i, i] += inv
        g[j, j] += inv
        g[i, j] -= inv
        g[j, i] -= inv
    caps = node_ground_caps(net)
    c = np.array([caps[nid] for nid in ids])
    return g.tocsc(), c, root, index


def _ramp(t: np.ndarray, slew: float, vdd: float) -> np.ndarray:
    return vdd * np.clip(t / slew, 0.0, 1.0)


def _cross_time(times: np.ndarray, v: np.ndarray, level: float) -> Optional[float]:
    above = v >= level
    if not above.any():
        return None
    k = int(np.argmax(above))
    if k == 0:
        return float(times[0])
    t0, t1 = times[k - 1], times[k]
    v0, v1 = v[k - 1], v[k]
    return float(t0 + (level - v0) * (t1 - t0) / (v1 - v0))


def _step_network(g, c, root, driver, horizon, n_steps):
    times = np.linspace(0.0, horizon, n_steps + 1)
    dt = times[1] - times[0]
    c_diag = sparse.diags(c)
    lhs = (g + (2.0 / dt) * c_diag).tocsc()
    rhs_op = ((2.0 / dt) * c_diag - g).tocsr()
    lu = splu(lhs)
    e = _ramp(times, driver.input_slew, driver.vdd)
    b = np.zeros(len(c))
    v = np.zeros(len(c))
    out = np.empty((n_steps + 1, len(c)))
    out[0] = v
    inv_rd = 1.0 / driver.drive_resistance
    for k in range(n_steps):
        b[:] = rhs_op @ v
        b[root] += (e[k] + e[k + 1]) * inv_rd
        v = lu.solve(b)
        out[k + 1] = v
    return times, out


def default_horizon(net: RcNetwork, driver: DriverParams) -> float:
    d = elmore_delay(net)
    return max(20.0 * max(d.values()), 5.0 * driver.input_slew)


def simulate(
    net: RcNetwork, driver: Optional[DriverParams] = None, horizon: Optional[float] = None
) -> TransientResult:
    """Trapezoidal transient of the full net; step count doubles until the
    driver-output 50% crossing is converged."""
    driver = driver or net.driver
    if horizon is None:
        horizon = default_horizon(net, driver)
    g, c, root, _ = _assemble(net, driver)
    half = 0.5 * driver.vdd
    prev_t50 = None
    prev_volts = None
    n_steps = _INITIAL_STEPS
    for _ in range(_MAX_HALVINGS):
        times, volts = _step_network(g, c, root, driver, horizon, n_steps)
        t50 = _cross_time(times, volts[:, root], half)
        if t50 is None:
            raise NoCrossing(
                f"net {net.name!r}: driver output never reached 50% of vdd "
                f"within horizon {horizon}"
            )
        if prev_t50 is not None and abs(t50 - prev_t50) <= _T50_REL_TOL * t50:
            # the coarser grid is every other point of this one, so the
            # voltage field can be compared directly; trapezoidal error
            # shrinks 4x per halving, making the Richardson gap a bound
            v_gap = float(np.abs(volts[::2] - prev_volts).max())
            if v_gap <= _V_ABS_TOL * driver.vdd:
                return TransientResult(times, volts, t50)
        prev_t50 = t50
        prev_volts = volts
        n_steps *= 2
    return TransientResult(times, volts, t50)


def _lumped_t50(
    rd: float, cap: float, slew: float, vdd: float, horizon: float, n_steps: int
) -> Optional[float]:
    """Trapezoidal single-cap circuit on the same grid as the network run."""
    times = np.linspace(0.0, horizon, n_steps + 1)
    dt = times[1] - times[0]
    e = _ramp(times, slew, vdd)
    a = 2.0 * cap * rd / dt
    # (1 + a) v_{k+1} = (a - 1) v_k + e_k + e_{k+1}
    drive = e[:-1] + e[1:]
    v = signal.lfilter([1.0 / (1.0 + a)], [1.0, -(a - 1.0) / (1.0 + a)], drive)
    v = np.concatenate(([0.0], v))
    return _cross_time(times, v, 0.5 * vdd)


def oracle_ceff(net: RcNetwork, driver: Optional[DriverParams] = None) -> CeffResult:
    """Binary search for the single capacitance whose simulated 50% delay
    matches the full network's; valid because the lumped delay is strictly
    increasing in the capacitance."""
    driver = driver or net.driver
    result = simulate(net, driver)
    n_steps = len(result.times) - 1
    horizon = float(result.times[-1])
    target = result.t50_root
    c_total = total_capacitance(net)
    rd, slew, vdd = driver.drive_resistance, driver.input_slew, driver.vdd

    def t50_of(c: float) -> float:
        t = _lumped_t50(rd, c, slew, vdd, horizon, n_steps)
        if t is None:
            raise NoCrossing(f"lumped circuit with c={c} did not cross within horizon")
        return t

    hi = c_total
    lo = c_total * 1e-9
    if t50_of(hi) <= target:
        ceff = c_total
    elif t50_of(lo) >= target:
        ceff = lo
    else:
        while hi - lo > 1e-6 * hi:
            mid = 0.5 * (lo + hi)
            if t50_of(mid) < target:
                lo = mid
            else:
                hi = mid
        ceff = 0.5 * (lo + hi)
    return CeffResult(ceff, CeffMethod.ORACLE, True, False, 0, target)


def delivered_charge(net: RcNetwork, result: TransientResult,
                     driver: Optional[DriverParams] = None) -> Tuple[float, float]:
    """(integrated source charge, stored charge at horizon) for the
    conservation check."""
    driver = driver or net.driver
    g, c, root, _ = _assemble(net, driver)
    e = _ramp(result.times, driver.input_slew, driver.vdd)
    i_src = (e - result.node_voltages[:, root]) / driver.drive_resistance
    q_in = float(np.trapezoid(i_src, result.times))
    q_stored = float(c @ result.node_voltages[-1])
    return q_in, q_stored


def spice_deck(net: RcNetwork, driver: Optional[DriverParams] = None,
               horizon: Optional[float] = None) -> str:
    """Write-only SPICE export of the net with its Thevenin ramp driver,
    for external cross-validation."""
    driver = driver or net.driver
    if horizon is None:
        horizon = default_horizon(net, driver)
    lines = [f"* net {net.name}"]
    root = net.driver_node_id()
    lines.append(
        f"Vin in 0 PWL(0 0 {driver.input_slew:.6e} {driver.vdd:.6e})"
    )
    lines.append(f"Rd in n{root} {driver.drive_resistance:.6e}")
    caps = node_ground_caps(net)
    for s in net.segments:
        lines.append(
            f"Rw{s.id} n{s.from_node} n{s.to_node} {max(s.resistance, _R_FLOOR):.6e}"
        )
    for nid, cval in sorted(caps.items()):
        if cval > 0:
            lines.append(f"Cn{nid} n{nid} 0 {cval:.6e}")
    lines.append(f".tran {horizon / 1000.0:.6e} {horizon:.6e}")
    lines.append(".end")
    return "\n".join(lines) + "\n"
