"""Propagation objects: ULA steering, radar channels, Rician fading, shifts.

Everything here is a pure function of its arguments; channel generation is a
pure function of (scenario, seed), so repeated calls reproduce bit-identical
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import Scenario, db_to_linear


def steering_vector(angle_deg: float, n: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Unit-norm ULA steering vector; entry i has phase 2*pi*(d/lambda)*i*sin(angle)."""
    if n < 1:
        raise ValueError("steering vector needs n >= 1")
    phase = 2.0 * np.pi * spacing_ratio * np.sin(np.deg2rad(angle_deg))
    return np.exp(1j * phase * np.arange(n)) / np.sqrt(n)


def radar_channel(angle_deg: float, n_rx: int, n_cells: int,
                  spacing_ratio: float = 0.5) -> np.ndarray:
    """Rank-1 effective radar channel a_R(angle) a_T(angle)^H, unit Frobenius norm.

    The "transmit" aperture of the radar path is the RIS itself (n_cells
    elements); the receive aperture is the colocated radar array (n_rx).
    """
    a_r = steering_vector(angle_deg, n_rx, spacing_ratio)
    a_t = steering_vector(angle_deg, n_cells, spacing_ratio)
    return np.outer(a_r, a_t.conj())


def shift_matrix(r: int, code_len: int, n_obs: int) -> np.ndarray:
    """L x L_obs selection matrix J_r: (J_r)[i, j] = 1 iff j = i + r in-window.

    For 0 <= r <= n_obs - code_len this is the block form [0 | I_L | 0];
    offsets outside that range (early/late scatterers) get their
    out-of-window rows clipped to zero.
    """
    if n_obs < code_len:
        raise ValueError("observation window shorter than the code")
    j = np.zeros((code_len, n_obs))
    for i in range(code_len):
        col = i + r
        if 0 <= col < n_obs:
            j[i, col] = 1.0
    return j


def rician_channel(rows: int, cols: int, k_factor_db: float,
                   los_component: np.ndarray, rng: np.random.Generator,
                   pl_gain: float = 1.0) -> np.ndarray:
    """Rician fading matrix sqrt(pl) * (sqrt(k/(1+k)) LoS + sqrt(1/(1+k)) NLoS).

    `los_component` must be (rows, cols) with unit-modulus entries (outer
    product of un-normalized endpoint steering vectors), so E||H||_F^2 =
    rows * cols * pl_gain regardless of k. NLoS entries are i.i.d. CN(0,1).
    """
    los = np.asarray(los_component)
    if los.shape != (rows, cols):
        raise ValueError(f"LoS shape {los.shape} != ({rows}, {cols})")
    if np.isinf(k_factor_db):
        return np.sqrt(pl_gain) * los
    k = db_to_linear(k_factor_db)
    nlos = (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2.0)
    return np.sqrt(pl_gain) * (np.sqrt(k / (1 + k)) * los + np.sqrt(1.0 / (1 + k)) * nlos)


@dataclass
class CommChannels:
    """DFBS->RIS matrix and per-user RIS->user vectors (scenario user order)."""
    g_mat: np.ndarray                 # N_S x N_T
    h_users: list[np.ndarray]         # each N_S
    user_angles_deg: list[float]


def generate_channels(scenario: Scenario, rng: np.random.Generator | None = None) -> CommChannels:
    """Draw all communication channels for a scenario.

    Draw order is fixed (G first, then per user: angle, NLoS vector) so the
    output is a pure function of the seed. User angles are uniform in
    (-60, 60) degrees on their own side; the DFBS sits broadside to the RIS.
    """
    if rng is None:
        rng = np.random.default_rng(scenario.rng_seed)
    ns, nt = scenario.n_cells, scenario.n_tx

    los_g = np.outer(_flat_steering(0.0, ns), _flat_steering(0.0, nt).conj())
    g_pl = scenario.pathloss.gain(scenario.bs_ris_distance_m, scenario.pathloss.exp_bs_ris)
    g_mat = rician_channel(ns, nt, scenario.rician_k_db, los_g, rng, g_pl)

    h_users: list[np.ndarray] = []
    angles: list[float] = []
    for user in scenario.users:
        ang = float(rng.uniform(-60.0, 60.0))
        angles.append(ang)
        los_h = _flat_steering(ang, ns).reshape(ns, 1)
        h = rician_channel(ns, 1, scenario.rician_k_db, los_h, rng, user.pl_gain)
        h_users.append(h[:, 0])
    return CommChannels(g_mat=g_mat, h_users=h_users, user_angles_deg=angles)


def _flat_steering(angle_deg: float, n: int) -> np.ndarray:
    # unit-modulus entries (no 1/sqrt(n)) for Rician LoS components
    return steering_vector(angle_deg, n) * np.sqrt(n)


def save_channels(channels: CommChannels, path: str) -> None:
    """Binary dump for reproducibility audits (numpy .npz)."""
    np.savez(path, g_mat=channels.g_mat,
             h_users=np.stack(channels.h_users),
             user_angles_deg=np.asarray(channels.user_angles_deg))


def load_channels(path: str) -> CommChannels:
    with np.load(path) as blob:
        return CommChannels(
            g_mat=blob["g_mat"],
            h_users=[h for h in blob["h_users"]],
            user_angles_deg=[float(a) for a in blob["user_angles_deg"]],
        )
