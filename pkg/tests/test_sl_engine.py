import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sidelink_sim.errors import InvalidInputError
from sidelink_sim.l2s import L2sTable
from sidelink_sim.scenario import ScenarioConfig, Topology, base_station_positions, build_topology
from sidelink_sim.sl_engine import (
    Drop, assign_resources, build_drop, drop_sinr, interference_power_dbm, link_budgets,
    min_cochannel_distance, prr_campaign, prr_from_counts, prr_rule_steps, prr_single_drop,
    random_assignment, resource_units, results_csv, sinr_db, spectral_efficiency,
    target_spectral_efficiency, ue_supported,
)

CFG = ScenarioConfig()
SNR = np.arange(-10.0, 21.0)


def synthetic_table():
    fast = np.clip(10 ** (-(SNR + 1) / 2), 0, 1)
    slow = np.clip(10 ** (-(SNR - 3) / 3), 0, 1)
    return L2sTable(SNR, [100.0, 500.0], [fast, slow], {"kind": "synthetic"})


def line_topology(xs):
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    return Topology(xs, np.zeros(n), np.zeros(n, int), np.ones(n, int), np.full(n, 100.0),
                    base_station_positions(CFG))


# ---- load and capacity -----------------------------------------------------------

def test_spectral_efficiency_examples():
    assert spectral_efficiency(2048, 100, 10, 10e6) == pytest.approx(0.2048)
    assert spectral_efficiency(2048, 0, 10, 10e6) == 0
    assert spectral_efficiency(2048, 100, 20, 10e6) == pytest.approx(2 * 0.2048)


def test_ue_supported_examples():
    assert ue_supported(0.2048, 10e6, 2048, 10) == 100
    se = target_spectral_efficiency()
    assert se == pytest.approx(2 / 3 * 13 / 14 * 46 / 48)
    assert round(se, 3) == 0.593
    assert ue_supported(se, 10e6, 2048, 10) == 289
    assert ue_supported(se, 10e6, 2048, 20) == 144
    with pytest.raises(InvalidInputError):
        ue_supported(0, 10e6, 2048, 10)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 100_000), st.integers(1, 4096), st.floats(0.5, 100),
       st.floats(1e5, 1e9))
def test_ue_supported_inverts_spectral_efficiency(n_ue, packet_bytes, period, bw):
    bits = 8 * packet_bytes
    assert ue_supported(spectral_efficiency(bits, n_ue, period, bw), bw, bits, period) == n_ue


def test_resource_units_default():
    assert resource_units(CFG, target_spectral_efficiency()) == 289


# ---- resource assignment ---------------------------------------------------------

def test_assignment_without_reuse():
    topo = line_topology(np.arange(10) * 30.0)
    unit = assign_resources(topo, 12)
    assert len(set(unit.tolist())) == 10
    assert min_cochannel_distance(topo, unit) == math.inf
    assert interference_power_dbm(3, 0, unit, np.zeros((10, 10))) == -math.inf


def test_two_tx_one_unit():
    topo = line_topology([0.0, 50.0])
    unit = assign_resources(topo, 1)
    assert unit.tolist() == [0, 0]
    assert min_cochannel_distance(topo, unit) == 50.0


def test_greedy_reuse_beats_random_assignment():
    wins, trials = 0, 40
    for seed in range(trials):
        topo = build_topology(CFG.replace(ivd_m=20), seed)
        units = 120
        greedy = min_cochannel_distance(topo, assign_resources(topo, units))
        rand = min_cochannel_distance(topo, random_assignment(topo, units, np.random.default_rng(seed)))
        wins += greedy >= rand
    assert wins / trials >= 0.95


def test_assignment_is_deterministic():
    topo = build_topology(CFG.replace(ivd_m=30), 5)
    assert np.array_equal(assign_resources(topo, 50), assign_resources(topo, 50))


# ---- interference and SINR ---------------------------------------------------------

def test_interference_sums_linearly():
    power = np.full((4, 4), -70.0)
    one = interference_power_dbm(3, 0, np.array([0, 0, 1, 1]), power)
    two = interference_power_dbm(3, 0, np.array([0, 0, 0, 1]), power)
    assert one == pytest.approx(-70.0)
    assert two - one == pytest.approx(10 * math.log10(2))
    # The receiver itself never counts as an interferer.
    assert interference_power_dbm(1, 0, np.array([0, 0, 1, 1]), power) == -math.inf


def test_sinr_examples():
    assert sinr_db(-60, -math.inf, -95) == pytest.approx(35.0)
    assert sinr_db(-40, -40, -140) == pytest.approx(0.0, abs=1e-9)
    # -60 - 10 log10(1e-7 + 10^-9.5) in linear arithmetic.
    assert sinr_db(-60, -70, -95) == pytest.approx(-60 - 10 * math.log10(1e-7 + 10 ** -9.5), abs=1e-12)
    assert round(sinr_db(-60, -70, -95), 2) == 9.99
    with pytest.raises(InvalidInputError):
        sinr_db(-math.inf, -70, -95)


def test_equal_interferer_gives_zero_db_sinr():
    power = np.array([[0, -50.0, 0], [0, 0, 0], [0, -50.0, 0]])
    i = interference_power_dbm(1, 0, np.array([0, 1, 0]), power)
    assert sinr_db(power[0, 1], i, -174.0) == pytest.approx(0.0, abs=1e-6)


def test_sinr_decomposition_matches_vectorised_path():
    cfg = CFG.replace(ivd_m=25)
    drop = build_drop(cfg, 3, 80)
    noise = -95.0
    txs = np.arange(0, drop.topo.n_vehicles, 17)
    for (t, rxs, s) in drop_sinr(drop, noise, txs):
        budgets = link_budgets(drop, t, noise)
        assert [b.rx_id for b in budgets] == rxs.tolist()
        for b, v in zip(budgets, s):
            assert b.sinr_db == pytest.approx(v, abs=1e-9)
            assert sinr_db(b.wanted_power_dbm, b.interference_power_dbm, b.noise_power_dbm) == \
                pytest.approx(b.sinr_db, abs=1e-9)


# ---- PRR rule ----------------------------------------------------------------------

def hand_drop():
    """Tx 0 with receivers 1..3 on separate units; vehicle 4 reuses tx 0's unit."""
    topo = line_topology([0.0, 10.0, 20.0, 30.0, 2000.0])
    p = np.full((5, 5), -200.0)
    p[0, 1], p[0, 2], p[0, 3] = -64.0, -87.0, -96.0
    p[4, 1], p[4, 2], p[4, 3] = -200.0, -200.0, -99.0
    in_range = np.zeros((5, 5), bool)
    in_range[0, 1:4] = True
    return Drop(topo, p, np.array([0, 1, 2, 3, 0]), in_range, seed=0)


def forcing_table():
    # Flat plateaus give BLER 0.5 up to 2 dB, 0.005 from 6 to 10 dB, 0 beyond 20 dB.
    return L2sTable([-30, 2, 6, 10, 20, 40], [100.0], [[0.5, 0.5, 0.005, 0.005, 0.0, 0.0]])


def test_prr_steps_on_hand_built_drop():
    drop, table = hand_drop(), forcing_table()
    u = np.array([0.3, 0.7, 0.9])
    res = prr_single_drop(drop, 0, table, CFG, seed=0, uniforms=u, supported=289)

    noise_mw = 10 ** (-95 / 10)
    sinr = [-64 + 95, -87 + 95, -96 - 10 * math.log10(10 ** (-9.9) + noise_mw)]
    assert res.rx_id.tolist() == [1, 2, 3]
    assert np.allclose(res.sinr_db, sinr, atol=1e-9)
    assert np.allclose(res.bler, [0.0, 0.005, 0.5], rtol=1e-12, atol=0)
    assert res.passed_threshold.tolist() == [True, True, False]
    assert res.random_test_pass.tolist() == [True, True, False]
    assert res.counter_success == 2 and res.n_ue_in_range == 3
    assert res.prr == 2 / 3 * min(1.0, 289 / 3)

    res = prr_single_drop(drop, 0, table, CFG, seed=0, uniforms=[0.3, 0.004, 0.9], supported=2)
    assert res.counter_success == 1
    assert res.prr == (1 / 3) * (2 / 3)
    product = prr_single_drop(drop, 0, table, CFG.replace(prr_rule="product_clamped"), seed=0,
                              uniforms=u, supported=2)
    assert product.prr == min(1.0, (2 / 3) * (2 / 3))


def test_prr_all_clear_and_all_blocked():
    table = synthetic_table()
    sinr = np.full(5, 30.0)
    u = np.full(5, 1e-9)
    prr, counter, *_ = prr_rule_steps(sinr, table, 100, 0.01, u, 3)
    assert counter == 5 and prr == pytest.approx(3 / 5)
    prr, counter, *_ = prr_rule_steps(np.full(5, -10.0), table, 100, 0.01, np.full(5, 0.99), 289)
    assert counter == 0 and prr == 0.0


@given(st.lists(st.tuples(st.floats(-15, 25), st.floats(0, 1, exclude_max=True)), min_size=1, max_size=40),
       st.integers(1, 400), st.sampled_from(["ratio_clamped", "product_clamped"]))
def test_prr_bounds_and_threshold_consistency(links, supported, rule):
    sinr, u = map(np.array, zip(*links))
    prr, counter, bler, passed, ok = prr_rule_steps(sinr, synthetic_table(), 100, 0.01, u, supported, rule)
    assert 0.0 <= prr <= 1.0
    assert not np.any(ok & (bler >= 0.01))
    assert counter == ok.sum()


def test_prr_undefined_without_receivers():
    with pytest.raises(InvalidInputError):
        prr_from_counts(0, 0, 10)
    drop = hand_drop()
    with pytest.raises(InvalidInputError):
        prr_single_drop(drop, 4, forcing_table(), CFG, seed=0)


# ---- campaign -----------------------------------------------------------------------

def test_campaign_is_reproducible_and_worker_independent():
    table = synthetic_table()
    args = (CFG, table, [80, 100], [100, 500], [10, 20], 3, 42)
    a = results_csv(prr_campaign(*args, workers=1))
    b = results_csv(prr_campaign(*args, workers=1))
    c = results_csv(prr_campaign(*args, workers=2))
    assert a == b == c


def test_campaign_rejects_unknown_velocity():
    with pytest.raises(InvalidInputError, match="available"):
        prr_campaign(CFG, synthetic_table(), [100], [260], [10], 1, 0)
