"""Shared fixtures and small-instance builders."""

import numpy as np
import pytest

from bdris_dfrc.channel import generate_channels
from bdris_dfrc.quadforms import SceneGeometry
from bdris_dfrc.scenario import load_scenario

TINY_TEMPLATE = """
[system]
n_tx = {n_tx}
n_cells = {n_cells}
n_rx = {n_rx}
code_len = {code_len}
psk_order = 4
power_budget_w = 10
noise_comm_dbm = -20
noise_radar_dbm = {noise_radar_dbm}
qos_db = 3
groups = {groups}
arch = {arch}
sample_rate_hz = 150e6
rng_seed = {seed}
bs_ris_distance_m = 5

[pathloss]
ref_gain_db = 0

[users]
{users}

[targets]
{targets}

[clutters]
{clutters}
"""


def tiny_scenario(n_tx=2, n_cells=2, n_rx=2, code_len=2, groups=1, arch="CW-FC",
                  seed=3, noise_radar_dbm=-20,
                  users=("u1 = side=T, distance_m=8",),
                  targets=("t1 = side=T, range_m=10, azimuth_deg=25, rcs_db=10",
                           "t2 = side=T, range_m=12, azimuth_deg=-35, rcs_db=10"),
                  clutters=("c1 = side=T, range_m=11, azimuth_deg=55, rcs_db=20",)):
    txt = TINY_TEMPLATE.format(
        n_tx=n_tx, n_cells=n_cells, n_rx=n_rx, code_len=code_len,
        groups=groups, arch=arch, seed=seed, noise_radar_dbm=noise_radar_dbm,
        users="\n".join(users), targets="\n".join(targets),
        clutters="\n".join(clutters))
    return load_scenario(txt)


def make_setup(scenario):
    channels = generate_channels(scenario)
    return channels, SceneGeometry(scenario, channels.g_mat)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_blockdiag(rng, groups, block):
    n_s = groups * block
    phi = np.zeros((n_s, n_s), dtype=complex)
    for g in range(groups):
        sl = slice(g * block, (g + 1) * block)
        phi[sl, sl] = random_complex(rng, block, block)
    return phi


def random_state(rng, scenario):
    """Random (W, phi dict, filters dict) with consistent shapes."""
    w_mat = random_complex(rng, scenario.n_tx, scenario.code_len)
    phi = {s: random_blockdiag(rng, scenario.groups, scenario.block_size)
           for s in ("T", "R")}
    filters = {}
    for side in ("T", "R"):
        for k, _ in scenario.targets_on(side):
            filters[k] = random_complex(rng, scenario.n_rx, scenario.n_obs(side))
    return w_mat, phi, filters


@pytest.fixture
def tiny():
    sc = tiny_scenario()
    channels, geom = make_setup(sc)
    return sc, channels, geom
