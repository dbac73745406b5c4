"""Detection probability, BER simulation, and beampattern tests."""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import i0e
from scipy.stats import ncx2, norm

from bdris_dfrc.admm import Waveform, update_filters
from bdris_dfrc.channel import steering_vector
from bdris_dfrc.metrics import (BeampatternGrid, detection_probability,
                                marcum_q1, simulate_ber,
                                space_range_beampattern, transmit_beampattern)
from bdris_dfrc.quadforms import (SceneGeometry, _response,
                                  build_filter_forms)

from conftest import tiny_scenario


def q1_quadrature(a: float, b: float) -> float:
    # Q1(a,b) = int_b^inf x I0(ax) exp(-(x^2+a^2)/2) dx, written with the
    # scaled Bessel i0e so the integrand never overflows
    f = lambda x: x * i0e(a * x) * math.exp(-0.5 * (x - a) ** 2)
    hi = max(a, b) + 40.0
    pts = [a] if b < a < hi else None
    val, _ = quad(f, b, hi, limit=400, epsabs=1e-13, epsrel=1e-13, points=pts)
    return val


GRID = [0.0, 0.3, 1.0, 2.5, 5.0, 8.0]


def test_marcum_matches_quadrature_oracle():
    for a in GRID:
        for b in GRID:
            assert abs(marcum_q1(a, b) - q1_quadrature(a, b)) <= 1e-10


def test_marcum_matches_ncx2_survival():
    # sqrt of a noncentral chi-square(2, a^2) draw exceeds b with prob Q1(a,b)
    for a in GRID:
        for b in GRID:
            assert abs(marcum_q1(a, b) - ncx2.sf(b * b, 2, a * a)) <= 1e-9


def test_marcum_equal_argument_identity():
    # Q1(a,a) = (1 + exp(-a^2) I0(a^2)) / 2
    for a in [0.5, 1.0, 2.0, 3.0]:
        ref = 0.5 * (1.0 + math.exp(-a * a) * i0e(a * a) * math.exp(a * a))
        assert abs(marcum_q1(a, a) - ref) <= 1e-12
    assert abs(marcum_q1(1.0, 1.0) - 0.7328798037968202) <= 1e-12
    # coarse figure quoted from a 1e7-sample Monte Carlo; only MC-accurate
    assert abs(marcum_q1(1.0, 1.0) - 0.733235) <= 5e-4


def test_marcum_edges_and_domain():
    assert marcum_q1(0.0, 2.0) == pytest.approx(math.exp(-2.0), abs=0)
    assert marcum_q1(3.0, 0.0) == 1.0
    assert marcum_q1(0.0, 0.0) == 1.0
    out = marcum_q1(np.array([0.0, 1.0]), np.array([2.0, 1.0]))
    assert out.shape == (2,)
    with pytest.raises(ValueError):
        marcum_q1(-0.1, 1.0)
    with pytest.raises(ValueError):
        marcum_q1(1.0, -1e-12)


def test_detection_probability_zero_scnr_exact():
    for pfa in [1e-6, 1e-4, 0.3]:
        assert detection_probability(0.0, pfa) == pfa
    out = detection_probability(np.array([0.0, 2.0]), 1e-4)
    assert out[0] == 1e-4 and 1e-4 < out[1] < 1.0


def test_detection_probability_monotone():
    pfa = 1e-4
    scnrs = np.linspace(0.0, 60.0, 30)
    pd = detection_probability(scnrs, pfa)
    assert np.all(np.diff(pd) > 0)
    assert pd[-1] > 0.999999
    pfas = np.array([1e-8, 1e-6, 1e-4, 1e-2, 0.1])
    pd2 = detection_probability(4.0, pfas)
    assert np.all(np.diff(pd2) > 0)


def test_detection_probability_domain():
    with pytest.raises(ValueError):
        detection_probability(-1.0, 1e-4)
    for bad in [0.0, 1.0, -0.2, 1.3]:
        with pytest.raises(ValueError):
            detection_probability(1.0, bad)


# -- BER ----------------------------------------------------------------------

def _ber_setup(noise_w: float, z_point: complex):
    """One user, one slot, identity front end, clean receive point z_point."""
    sc = tiny_scenario(n_tx=2, n_cells=2, n_rx=2, code_len=1,
                       users=("u1 = side=T, distance_m=8",))
    sc.noise_comm = noise_w
    rng = np.random.default_rng(0)
    from bdris_dfrc.channel import CommChannels
    h = np.array([1.0 + 0j, 0.0])
    channels = CommChannels(g_mat=np.eye(2, dtype=complex), h_users=[h],
                            user_angles_deg=[0.0])
    phi = {"T": np.eye(2, dtype=complex), "R": np.eye(2, dtype=complex)}
    sym = np.exp(2j * np.pi * np.array([[1]]) / sc.psk_order)  # symbol index 1
    # h_eff = h^H Phi G = e_1, so w = z * s places the clean point at z * s
    w = np.array([[z_point * sym[0, 0]], [0.0]])
    return sc, channels, Waveform(w_mat=w, symbols=sym, gamma=1.0), phi


def test_ber_noiseless_zero():
    sc, channels, wave, phi = _ber_setup(0.0, 3.0 + 0.0j)
    per_user, avg = simulate_ber(sc, channels, wave, phi, n_trials=500,
                                 rng=np.random.default_rng(1))
    assert per_user.shape == (1,)
    assert avg == 0.0 and per_user[0] == 0.0


def test_ber_boundary_point_matches_gaussian_tail():
    # clean point on the +45 deg decision boundary, r/sigma_axis = 4: crossing
    # that line has probability 1/2, the far line Q(4); adjacent quadrants
    # flip one Gray bit of two
    r, ratio = 1.0, 4.0
    sig_axis = r / ratio
    noise_w = 2.0 * sig_axis ** 2
    z = r * np.exp(1j * np.pi / 4.0)
    sc, channels, wave, phi = _ber_setup(noise_w, z)
    n = 200_000
    per_user, avg = simulate_ber(sc, channels, wave, phi, n_trials=n,
                                 rng=np.random.default_rng(7))
    q_far = norm.sf(ratio)
    ber_pred = 0.5 * (0.5 + q_far)
    mc_sigma = math.sqrt(0.0625 / n)
    assert abs(avg - ber_pred) <= 3.0 * mc_sigma + 1e-4


def test_ber_error_rate_shrinks_as_sqrt_n():
    sc, channels, wave, phi = _ber_setup(0.125, 1.0 * np.exp(1j * np.pi / 4.0))
    reps = 24
    master = np.random.default_rng(42)
    est = {n: [] for n in (500, 8000)}
    for n in est:
        for _ in range(reps):
            _, avg = simulate_ber(sc, channels, wave, phi, n_trials=n,
                                  rng=np.random.default_rng(master.integers(2**32)))
            est[n].append(avg)
    s_small, s_big = np.std(est[500]), np.std(est[8000])
    # 16x the trials should shrink the spread about 4x
    assert 2.0 <= s_small / s_big <= 8.0


def test_ber_rejects_bad_trials_and_is_reproducible():
    sc, channels, wave, phi = _ber_setup(0.125, 1.0 + 0.0j)
    with pytest.raises(ValueError):
        simulate_ber(sc, channels, wave, phi, n_trials=0)
    a = simulate_ber(sc, channels, wave, phi, n_trials=300,
                     rng=np.random.default_rng(9))
    b = simulate_ber(sc, channels, wave, phi, n_trials=300,
                     rng=np.random.default_rng(9))
    assert a[1] == b[1] and np.array_equal(a[0], b[0])


# -- beampatterns -------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(ValueError):
        BeampatternGrid(np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        BeampatternGrid(np.array([0.0, 0.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        BeampatternGrid(np.array([0.0, 1.0]), np.array([0.0, np.nan]))


def _tx_setup(theta0=20.0):
    sc = tiny_scenario(n_tx=4, n_cells=4, n_rx=2, code_len=2)
    geom = SceneGeometry(sc, np.eye(4, dtype=complex))
    a0 = steering_vector(theta0, 4)
    w = np.stack([a0, a0], axis=1)
    return sc, geom, w


def test_transmit_beampattern_peak_at_matched_angle():
    theta0 = 20.0
    _, geom, w = _tx_setup(theta0)
    angles = np.arange(-90.0, 90.5, 0.5)
    bp = transmit_beampattern(geom, w, np.eye(4, dtype=complex), angles)
    assert bp.values.max() == 0.0
    assert angles[int(np.argmax(bp.values))] == pytest.approx(theta0)
    assert np.all(bp.values >= -120.0)


def test_transmit_beampattern_global_phase_invariant():
    _, geom, w = _tx_setup()
    angles = np.linspace(-60, 60, 41)
    phi = np.eye(4, dtype=complex)
    bp1 = transmit_beampattern(geom, w, phi, angles)
    bp2 = transmit_beampattern(geom, np.exp(1j * 0.7) * w,
                               np.exp(1j * 1.3) * phi, angles)
    np.testing.assert_allclose(bp1.values, bp2.values, atol=1e-12)


def test_transmit_beampattern_empty_grid_and_zero_w():
    _, geom, w = _tx_setup()
    with pytest.raises(ValueError):
        transmit_beampattern(geom, w, np.eye(4, dtype=complex), [])
    bp = transmit_beampattern(geom, 0.0 * w, np.eye(4, dtype=complex),
                              np.linspace(-10, 10, 5))
    assert np.all(bp.values == -120.0)


def _sr_setup(matched=False):
    sc = tiny_scenario(n_tx=4, n_cells=4, n_rx=4, code_len=4,
                       targets=("t1 = side=T, range_m=10, azimuth_deg=25, "
                                "rcs_db=0",),
                       clutters=())
    rng = np.random.default_rng(5)
    geom = SceneGeometry(sc, np.eye(4, dtype=complex))
    if matched:
        a0 = steering_vector(25.0, 4)
        w = np.stack([a0] * 4, axis=1)
    else:
        w = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    phi = {"T": np.eye(4, dtype=complex), "R": np.eye(4, dtype=complex)}
    filters = update_filters(build_filter_forms(geom, w, phi), sc.n_rx)
    return sc, geom, w, phi, filters


def test_space_range_mainlobe_at_own_cell():
    # transmit beam on the target so the peak cell is unambiguous
    sc, geom, w, phi, filters = _sr_setup(matched=True)
    k = next(iter(filters))
    angles = np.arange(-90.0, 91.0, 1.0)
    bp = space_range_beampattern(geom, w, phi, filters[k], k, angles)
    assert bp.rings.size == sc.n_obs("T") - sc.code_len + 1
    i, j = np.unravel_index(np.argmax(bp.values), bp.values.shape)
    assert angles[i] == pytest.approx(geom.targets[k].angle_deg)
    assert bp.rings[j] == geom.targets[k].ring
    assert bp.values[i, j] == 0.0


def test_space_range_matches_direct_trace():
    sc, geom, w, phi, filters = _sr_setup()
    k = next(iter(filters))
    s = geom.targets[k]
    off = s.angle_deg - 10.0
    bp = space_range_beampattern(geom, w, phi, filters[k], k,
                                 np.array([off, s.angle_deg]))
    j = int(np.flatnonzero(bp.rings == s.ring)[0])
    # raw cell powers straight from |Tr(U^H A(theta) Phi G W J_r)|^2
    from bdris_dfrc.channel import shift_matrix
    p_ref = {}
    for i, th in enumerate([off, s.angle_deg]):
        x = np.outer(steering_vector(th, sc.n_rx),
                     (steering_vector(th, sc.n_cells).conj()
                      @ phi["T"] @ geom.g_mat @ w)
                     @ shift_matrix(s.ring, sc.code_len, sc.n_obs("T")))
        p_ref[i] = abs(np.vdot(filters[k], x)) ** 2
    # at the target cell the response helper must give the same number
    p_resp = abs(np.vdot(filters[k], _response(s, phi["T"], geom.g_mat, w))) ** 2
    np.testing.assert_allclose(p_ref[1], p_resp, rtol=1e-12)
    # dB differences survive the peak normalization
    want_db = 10.0 * np.log10(p_ref[1] / p_ref[0])
    np.testing.assert_allclose(bp.values[1, j] - bp.values[0, j], want_db,
                               atol=1e-9)


def test_space_range_zero_waveform_floor():
    sc, geom, w, phi, filters = _sr_setup()
    k = next(iter(filters))
    bp = space_range_beampattern(geom, 0.0 * w, phi, filters[k], k,
                                 np.linspace(-30, 30, 7))
    assert np.all(bp.values == -120.0)
