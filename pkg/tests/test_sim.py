"""Transient simulator and the simulation-based Ceff oracle."""
import math

import numpy as np
import pytest

from effcap.dartu import CeffMethod, compute_ceff_dartu, ramp_response_pi
from effcap.errors import NoCrossing
from effcap.network import (
    DriverParams,
    NodeKind,
    RcNetwork,
    RcNode,
    WireSegment,
    total_capacitance,
)
from effcap.pimodel import PiModel, reduce_network
from effcap.sim import delivered_charge, oracle_ceff, simulate, spice_deck

from conftest import random_tree_net
from test_dartu import pi_circuit_net


def lumped_net(rd, c, slew, vdd=1.0):
    return RcNetwork(
        nodes=(RcNode(0, NodeKind.DRIVER), RcNode(1, NodeKind.FANOUT, c)),
        segments=(WireSegment(0, 0, 1, 0.0, 0.0),),
        driver=DriverParams(rd, slew, vdd),
    )


class TestSimulate:
    def test_one_pole_step_t50(self):
        rd, c = 1000.0, 1e-14
        # near-step input: slew far below the RC time constant
        net = lumped_net(rd, c, 1e-16)
        res = simulate(net)
        assert res.t50_root == pytest.approx(rd * c * math.log(2.0), rel=1e-3)

    def test_pi_circuit_matches_closed_form(self):
        c1, c2, r_pi = 2e-15, 9e-15, 3000.0
        driver = DriverParams(800.0, 2e-11)
        net = pi_circuit_net(c1, c2, r_pi, driver)
        res = simulate(net)
        pi = PiModel(c1, c2, r_pi)
        for k in range(1, len(res.times), max(1, len(res.times) // 16)):
            v1, v2 = ramp_response_pi(
                driver.drive_resistance, pi, driver.input_slew, driver.vdd,
                float(res.times[k]),
            )
            assert abs(v1 - res.node_voltages[k, 0]) < 1e-3 * driver.vdd
            assert abs(v2 - res.node_voltages[k, 1]) < 1e-3 * driver.vdd

    def test_steady_state_at_horizon(self):
        rng = np.random.default_rng(41)
        for _ in range(5):
            net = random_tree_net(rng, int(rng.integers(3, 10)))
            res = simulate(net)
            assert np.all(np.abs(res.node_voltages[-1] - net.driver.vdd)
                          < 0.01 * net.driver.vdd)

    def test_no_crossing_raises(self):
        net = lumped_net(1000.0, 1e-14, 1e-11)
        with pytest.raises(NoCrossing):
            simulate(net, horizon=1e-13)

    def test_charge_conservation(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            net = random_tree_net(rng, int(rng.integers(3, 10)))
            res = simulate(net)
            q_in, q_stored = delivered_charge(net, res)
            # at the horizon the net is settled; all delivered charge is stored
            assert q_in == pytest.approx(q_stored, rel=0.02)
            assert q_stored == pytest.approx(
                total_capacitance(net) * net.driver.vdd, rel=0.02
            )


class TestOracleCeff:
    def test_pure_capacitive_net(self):
        rng = np.random.default_rng(43)
        for _ in range(5):
            net = random_tree_net(rng, int(rng.integers(3, 8)))
            # zero out wire resistance: no shielding at all
            segs = tuple(
                WireSegment(s.id, s.from_node, s.to_node, 0.0, s.capacitance)
                for s in net.segments
            )
            net = RcNetwork(net.nodes, segs, net.driver, name="pure_cap")
            res = oracle_ceff(net)
            assert res.method is CeffMethod.ORACLE
            assert res.ceff == pytest.approx(total_capacitance(net), rel=1e-6)

    def test_shielding_sweep_ordering(self):
        driver = DriverParams(1000.0, 5e-12)
        c1, c2 = 1e-15, 9e-15
        prev_oracle = prev_dartu = None
        for r_pi in (300.0, 1e3, 3e3, 1e4, 3e4):
            net = pi_circuit_net(c1, c2, r_pi, driver)
            o = oracle_ceff(net).ceff
            d = compute_ceff_dartu(PiModel(c1, c2, r_pi), driver).ceff
            if prev_oracle is not None:
                assert o <= prev_oracle * (1 + 1e-9)
                assert d <= prev_dartu * (1 + 1e-9)
            prev_oracle, prev_dartu = o, d

    def test_high_shielding_ratio(self):
        # r_pi*c2 >> slew: most of the far-end cap is hidden at t50
        driver = DriverParams(1000.0, 1e-12)
        net = pi_circuit_net(1e-15, 9e-15, 1e5, driver)
        res = oracle_ceff(net)
        assert res.ceff / total_capacitance(net) < 0.5

    def test_oracle_bounded_by_total(self):
        rng = np.random.default_rng(44)
        for _ in range(5):
            net = random_tree_net(rng, int(rng.integers(3, 10)))
            res = oracle_ceff(net)
            assert 0.0 < res.ceff <= total_capacitance(net) * (1 + 1e-12)


class TestSpiceDeck:
    def test_deck_structure(self):
        rng = np.random.default_rng(45)
        net = random_tree_net(rng, 6, name="decknet")
        deck = spice_deck(net)
        lines = deck.strip().splitlines()
        assert lines[0].startswith("* net")
        assert any(l.startswith("Vin in 0 PWL") for l in lines)
        assert any(l.startswith("Rd in") for l in lines)
        assert sum(l.startswith("Rw") for l in lines) == len(net.segments)
        assert lines[-1] == ".end"
        assert any(l.startswith(".tran") for l in lines)
