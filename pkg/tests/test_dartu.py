"""Iterative effective-capacitance heuristic: closed-form responses,
fixed-point behavior, limits, and the failure mode."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from effcap.dartu import (
    CeffMethod,
    compute_ceff_dartu,
    ramp_response_cap,
    ramp_response_pi,
)
from effcap.network import (
    DriverParams,
    NodeKind,
    RcNetwork,
    RcNode,
    WireSegment,
)
from effcap.pimodel import PiModel, reduce_network
from effcap.sim import simulate


def pi_circuit_net(c1, c2, r_pi, driver, name="pi2") -> RcNetwork:
    """Exact 2-node pi circuit as an RcNetwork: the wire cap 2*c1 grounds
    c1 at each end, the pin supplies the remaining c2 - c1 (requires
    c2 > c1, which holds for far-end-dominated loads)."""
    assert c2 > c1
    return RcNetwork(
        nodes=(
            RcNode(0, NodeKind.DRIVER),
            RcNode(1, NodeKind.FANOUT, c2 - c1),
        ),
        segments=(WireSegment(0, 0, 1, r_pi, 2.0 * c1),),
        driver=driver,
        name=name,
    )


class TestRampResponseCap:
    def test_steady_state(self):
        v = ramp_response_cap(1000.0, 1e-14, 2e-11, 1.0, 2e-11 + 60 * 1e-11)
        assert v == pytest.approx(1.0, rel=1e-9)

    def test_step_half_point(self):
        # slew -> 0: pure step response crosses vdd/2 at tau*ln2
        rd, c = 1000.0, 1e-14
        tau = rd * c
        v = ramp_response_cap(rd, c, 1e-22, 1.0, tau * math.log(2.0))
        assert v == pytest.approx(0.5, rel=1e-6)

    def test_zero_before_start(self):
        assert ramp_response_cap(1000.0, 1e-14, 2e-11, 1.0, -1e-12) == 0.0
        assert ramp_response_cap(1000.0, 1e-14, 2e-11, 1.0, 0.0) == 0.0

    def test_matches_transient_sim(self):
        rd, c, slew, vdd = 1000.0, 1e-14, 2e-11, 1.0
        net = RcNetwork(
            nodes=(RcNode(0, NodeKind.DRIVER), RcNode(1, NodeKind.FANOUT, c)),
            segments=(WireSegment(0, 0, 1, 0.0, 0.0),),
            driver=DriverParams(rd, slew, vdd),
        )
        res = simulate(net, horizon=8e-11)
        for t in (5e-12, 2e-11, 4e-11):
            v_sim = float(np.interp(t, res.times, res.node_voltages[:, 0]))
            v = ramp_response_cap(rd, c, slew, vdd, t)
            assert abs(v - v_sim) < 1e-3 * vdd

    def test_monotone_in_time(self):
        ts = np.linspace(0, 1e-10, 200)
        vs = [ramp_response_cap(700.0, 5e-15, 1.5e-11, 1.0, t) for t in ts]
        assert all(b >= a for a, b in zip(vs, vs[1:]))


class TestRampResponsePi:
    def test_collapsed_pi_equals_single_cap(self):
        pi = PiModel(2e-15, 8e-15, 0.0)
        for t in (1e-12, 1e-11, 5e-11):
            v1, v2 = ramp_response_pi(1000.0, pi, 2e-11, 1.0, t)
            v = ramp_response_cap(1000.0, 1e-14, 2e-11, 1.0, t)
            assert v1 == pytest.approx(v, rel=1e-12)
            assert v2 == pytest.approx(v, rel=1e-12)

    def test_steady_state(self):
        pi = PiModel(2e-15, 8e-15, 3000.0)
        v1, v2 = ramp_response_pi(1000.0, pi, 2e-11, 1.0, 5e-9)
        assert v1 == pytest.approx(1.0, rel=1e-9)
        assert v2 == pytest.approx(1.0, rel=1e-9)

    def test_matches_transient_sim(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            c1 = float(10 ** rng.uniform(-16, -15))
            c2 = float(10 ** rng.uniform(-14.7, -14))  # keep c2 > c1
            r_pi = float(10 ** rng.uniform(2.5, 4))
            rd = float(10 ** rng.uniform(2.5, 3.5))
            slew = float(10 ** rng.uniform(-11.5, -10.5))
            driver = DriverParams(rd, slew)
            net = pi_circuit_net(c1, c2, r_pi, driver)
            res = simulate(net)
            pi = PiModel(c1, c2, r_pi)
            for frac in (0.2, 0.5, 0.8):
                # compare on simulator grid points so only integration
                # error (not linear interpolation) enters the tolerance
                k = int(frac * (len(res.times) - 1))
                t = float(res.times[k])
                v1s = float(res.node_voltages[k, 0])
                v2s = float(res.node_voltages[k, 1])
                v1, v2 = ramp_response_pi(rd, pi, slew, driver.vdd, t)
                assert abs(v1 - v1s) < 1e-3 * driver.vdd
                assert abs(v2 - v2s) < 1e-3 * driver.vdd

    def test_near_end_leads_far_end(self):
        pi = PiModel(1e-15, 9e-15, 5000.0)
        for t in (1e-12, 5e-12, 2e-11):
            v1, v2 = ramp_response_pi(1000.0, pi, 5e-12, 1.0, t)
            assert v1 >= v2 >= 0.0


class TestComputeCeffDartu:
    def test_no_shielding_one_iteration(self):
        res = compute_ceff_dartu(PiModel(1e-15, 9e-15, 0.0), DriverParams(1000.0, 5e-12))
        assert res.ceff == pytest.approx(1e-14, rel=1e-12)
        assert res.converged and not res.failed
        assert res.iterations == 1
        assert res.method is CeffMethod.DARTU

    def test_slow_ramp_limit(self):
        # slew = 100 * r_pi * c2: shielding washed out by the slow input
        c1, c2, r_pi, rd = 7e-15, 3e-15, 5000.0, 1000.0
        res = compute_ceff_dartu(
            PiModel(c1, c2, r_pi), DriverParams(rd, 100.0 * r_pi * c2)
        )
        assert res.converged
        assert abs(res.ceff - (c1 + c2)) < 0.01 * (c1 + c2)

    def test_reference_pi_against_simulation_oracle(self):
        from effcap.sim import oracle_ceff

        c1, c2, r_pi, rd, slew = 1e-15, 9e-15, 5000.0, 1000.0, 5e-12
        driver = DriverParams(rd, slew)
        res = compute_ceff_dartu(PiModel(c1, c2, r_pi), driver)
        assert res.converged
        assert c1 < res.ceff < c1 + c2  # strict shielding bracket
        assert res.ceff == pytest.approx(1.2399054328555338e-15, rel=1e-9)
        oracle = oracle_ceff(pi_circuit_net(c1, c2, r_pi, driver))
        assert oracle.ceff == pytest.approx(1.4077431049438801e-15, rel=1e-4)
        assert abs(res.ceff - oracle.ceff) < 0.10 * (c1 + c2)

    def test_monotone_decreasing_in_r_pi(self):
        driver = DriverParams(1000.0, 5e-12)
        prev = None
        for r_pi in (100.0, 300.0, 1e3, 3e3, 1e4, 3e4, 1e5):
            res = compute_ceff_dartu(PiModel(1e-15, 9e-15, r_pi), driver)
            assert res.converged
            if prev is not None:
                assert res.ceff <= prev + 1e-21
            prev = res.ceff

    def test_limit_low_shielding(self):
        # r_pi*c2 = (rd*c_total)/100 -> ceff within 2% of c_total
        c1, c2, rd = 1e-15, 9e-15, 1000.0
        r_pi = rd * (c1 + c2) / c2 / 100.0
        res = compute_ceff_dartu(PiModel(c1, c2, r_pi), DriverParams(rd, 5e-12))
        assert abs(res.ceff - (c1 + c2)) < 0.02 * (c1 + c2)

    def test_limit_strong_shielding(self):
        # r_pi*c2 = 100 * rd*c_total, slew ~ 0 -> ceff within 2% of c1
        c1, c2, rd = 1e-15, 9e-15, 1000.0
        r_pi = 100.0 * rd * (c1 + c2) / c2
        res = compute_ceff_dartu(PiModel(c1, c2, r_pi), DriverParams(rd, 1e-13))
        assert abs(res.ceff - c1) < 0.02 * c1

    def test_stress_family_failures(self):
        """Heavily shielded 2-node nets: the fixed-point map's slope nears
        1 and the iteration cap trips on a known subset."""
        fails = 0
        total = 0
        for cp in (1e-12, 2e-12, 2.5e-12, 3e-12, 4e-12):
            for r_w in (3000.0, 4000.0):
                for rd in (8000.0, 10000.0):
                    total += 1
                    net = RcNetwork(
                        nodes=(
                            RcNode(0, NodeKind.DRIVER),
                            RcNode(1, NodeKind.FANOUT, cp),
                        ),
                        segments=(WireSegment(0, 0, 1, r_w, 1e-18),),
                        driver=DriverParams(rd, 1.5e-11, 1.0),
                    )
                    pi = reduce_network(net)
                    res = compute_ceff_dartu(pi, net.driver)
                    if res.failed:
                        fails += 1
                        assert res.method is CeffMethod.LUMPED_FALLBACK
                        assert res.ceff == pytest.approx(pi.c_total, rel=1e-12)
                        assert not res.converged
        assert fails == 10 and total == 20

    def test_determinism(self):
        pi = PiModel(1e-15, 9e-15, 5000.0)
        driver = DriverParams(1000.0, 5e-12)
        a = compute_ceff_dartu(pi, driver)
        b = compute_ceff_dartu(pi, driver)
        assert a == b


@given(
    c1=st.floats(1e-16, 5e-15),
    c2=st.floats(1e-15, 2e-14),
    r_pi=st.floats(0.0, 2e4),
    rd=st.floats(100.0, 8000.0),
    slew=st.floats(1e-12, 1e-10),
)
@settings(max_examples=40, deadline=None)
def test_property_result_range(c1, c2, r_pi, rd, slew):
    """Non-failed results stay in (0, c1+c2]; failed ones report the
    lumped fallback."""
    res = compute_ceff_dartu(PiModel(c1, c2, r_pi), DriverParams(rd, slew))
    assert 0.0 < res.ceff <= (c1 + c2) * (1 + 1e-12)
    if res.failed:
        assert res.method is CeffMethod.LUMPED_FALLBACK
        assert res.ceff == pytest.approx(c1 + c2, rel=1e-12)
    else:
        assert res.converged
