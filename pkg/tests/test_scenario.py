"""Scenario loading, path loss, ring arithmetic."""

import math

import pytest
from hypothesis import given, strategies as st

import bdris_dfrc
from bdris_dfrc.scenario import (
    Scenario, ScenarioError, dbm_to_watt, load_scenario, pathloss,
)

MINI = """
[system]
n_tx = 2
n_cells = 4
n_rx = 2
code_len = 2
psk_order = 4
power_budget_w = 10
noise_comm_dbm = -100
noise_radar_dbm = -100
qos_db = 6
groups = 2
arch = CW-GC
sample_rate_hz = 150e6
rng_seed = 7
bs_ris_distance_m = 20

[users]
u1 = side=T, distance_m=16

[targets]
t1 = side=T, range_m=10, azimuth_deg=30, rcs_db=10
t2 = side=T, range_m=19, azimuth_deg=-20, rcs_db=10

[clutters]
c1 = side=T, count=5, range_m=5, azimuth_deg=[-15:-25], rcs_db=25
"""


def test_pathloss_reference_values():
    # hand-evaluated: 10^(-3 - 2.2*log10(20)) = 10^-5.86227 = 1.3732e-6
    assert pathloss(1.0, 2.2) == pytest.approx(1e-3)
    assert pathloss(20.0, 2.2) == pytest.approx(1.3732e-6, rel=1e-4)
    assert pathloss(5.0, 0.0) == pytest.approx(1e-3)


@given(st.floats(0.5, 50), st.floats(0.1, 4), st.floats(0.5, 8))
def test_pathloss_homogeneous(d, ell, alpha):
    # pathloss(alpha*d) = alpha^-ell * pathloss(d)
    lhs = pathloss(alpha * d, ell)
    rhs = alpha ** (-ell) * pathloss(d, ell)
    assert lhs == pytest.approx(rhs, rel=1e-9)
    if ell > 0 and alpha > 1:
        assert lhs < pathloss(d, ell)


def test_pathloss_rejects_nonpositive_distance():
    with pytest.raises(ScenarioError):
        pathloss(0.0, 2.0)


def test_dbm_conversion():
    assert dbm_to_watt(-100.0) == pytest.approx(1e-13)
    assert dbm_to_watt(30.0) == pytest.approx(1.0)


def test_mini_scenario_rings_and_window():
    sc = load_scenario(MINI)
    # targets at 10/19 m, 1 m resolution cells -> rings {0, 9}, window 2+9
    assert [t.ring for t in sc.targets] == [0, 9]
    assert sc.l_obs["T"] == 11
    # clutter at 5 m sits 5 cells before the first target echo
    assert all(c.ring == -5 for c in sc.clutters)
    # side with no targets falls back to the bare code length
    assert sc.l_obs["R"] == 2


def test_interval_expansion():
    sc = load_scenario(MINI)
    azis = [c.azimuth_deg for c in sc.clutters]
    assert azis == pytest.approx([-15, -17.5, -20, -22.5, -25])
    assert all(c.range_m == 5 for c in sc.clutters)


def test_propagation_power_composition():
    sc = load_scenario(MINI)
    # zeta^2 = rcs * oneway(d_BR, 2.2) * twoway(range, 2)
    want = 10.0 * pathloss(20, 2.2) * pathloss(10, 2.0) ** 2
    assert sc.targets[0].zeta_sq == pytest.approx(want, rel=1e-12)
    # ratio between the 10 m and 19 m targets is (10/19)^4
    ratio = sc.targets[1].zeta_sq / sc.targets[0].zeta_sq
    assert ratio == pytest.approx((10 / 19) ** 4, rel=1e-9)


def test_full_default_scenario():
    sc = load_scenario(bdris_dfrc.bundled_scenario("full_default"))
    assert (sc.n_tx, sc.n_cells, sc.n_rx, sc.code_len) == (8, 16, 8, 16)
    assert len(sc.users) == 4 and len(sc.targets) == 4 and len(sc.clutters) == 60
    assert sc.l_obs == {"T": 25, "R": 21}
    # stated propagation-coefficient ratios: 1:0.0767 and 1:0.1975
    t = {k: t for k, t in enumerate(sc.targets)}
    assert t[1].zeta_sq / t[0].zeta_sq == pytest.approx(0.0767, rel=1e-2)
    assert t[3].zeta_sq / t[2].zeta_sq == pytest.approx(0.1975, rel=1e-2)
    # every side's earliest target defines ring 0
    for side in "TR":
        rings = [x.ring for x in sc.targets if x.side == side]
        assert min(rings) == 0
    # negative rings are allowed and present (5 m clutter group)
    assert min(c.ring for c in sc.clutters) == -5


def test_desk_default_scenario():
    sc = load_scenario(bdris_dfrc.bundled_scenario("desk_default"))
    assert (sc.n_tx, sc.n_cells, sc.n_rx, sc.code_len) == (4, 8, 4, 8)
    assert len(sc.targets) == 4 and len(sc.clutters) == 8
    # all clutter rings inside [0, L_obs - L] so range-map probes can see them
    for side in "TR":
        lo = sc.l_obs[side] - sc.code_len
        for _, c in sc.clutters_on(side):
            assert 0 <= c.ring <= lo


def test_arch_group_resolution():
    sc = load_scenario(MINI.replace("arch = CW-GC", "arch = CW-FC"))
    assert sc.groups == 1 and sc.block_size == 4
    sc = load_scenario(MINI.replace("arch = CW-GC", "arch = CW-SC"))
    assert sc.groups == 4 and sc.block_size == 1
    sc = load_scenario(MINI)
    assert sc.groups == 2 and sc.block_size == 2


def test_bad_configs_rejected():
    with pytest.raises(ScenarioError):
        load_scenario(MINI.replace("groups = 2", "groups = 3"))
    with pytest.raises(ScenarioError):
        load_scenario(MINI.replace("arch = CW-GC", "arch = TRIANGLE"))
    # losing the [targets] entries entirely
    head, _, _ = MINI.partition("[targets]")
    with pytest.raises(ScenarioError):
        load_scenario(head)


def test_per_user_qos_override():
    txt = MINI.replace("u1 = side=T, distance_m=16",
                       "u1 = side=T, distance_m=16, qos_db=12")
    sc = load_scenario(txt)
    assert sc.users[0].gamma_linear == pytest.approx(10 ** 1.2)
    assert load_scenario(MINI).users[0].gamma_linear == pytest.approx(10 ** 0.6)
