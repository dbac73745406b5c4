"""Conic solver checks against closed forms and scipy's LP oracle."""

import numpy as np
import pytest
from scipy.optimize import linprog

from bdris_dfrc.conic import (
    SocConstraint, SocpProblem, embed_cvec, herm_row, imag_herm_row,
    kkt_residuals, lift_cvec, psd_factor, real_block, rotated_soc, solve_socp,
)


def ball_lp(c, x0, r):
    n = len(c)
    return SocpProblem(c=np.asarray(c, float),
                       socs=[SocConstraint(a_mat=np.eye(n), b_vec=-np.asarray(x0, float),
                                           c_row=np.zeros(n), d=float(r))])


def test_ball_lp_closed_form():
    rng = np.random.default_rng(0)
    for _ in range(8):
        n = rng.integers(2, 9)
        c = rng.normal(size=n)
        x0 = rng.normal(size=n)
        r = rng.uniform(0.5, 3.0)
        sol = solve_socp(ball_lp(c, x0, r))
        assert sol.status == "optimal"
        want = x0 - r * c / np.linalg.norm(c)
        np.testing.assert_allclose(sol.x, want, atol=1e-8)


def test_lp_against_scipy():
    rng = np.random.default_rng(7)
    for _ in range(6):
        n, k, p = 6, 8, 2
        x0 = rng.normal(size=n)
        g = rng.normal(size=(k, n))
        h = g @ x0 + rng.uniform(0.3, 1.5, size=k)
        a = rng.normal(size=(p, n))
        b = a @ x0
        c = rng.normal(size=n)
        box_g = np.vstack([np.eye(n), -np.eye(n)])
        box_h = np.full(2 * n, 10.0)
        prob = SocpProblem(c=c, a_eq=a, b_eq=b,
                           g_lin=np.vstack([g, box_g]),
                           h_lin=np.concatenate([h, box_h]))
        sol = solve_socp(prob)
        ref = linprog(c, A_ub=np.vstack([g, box_g]), b_ub=np.concatenate([h, box_h]),
                      A_eq=a, b_eq=b, bounds=(None, None), method="highs")
        assert sol.status == "optimal" and ref.success
        assert sol.objective == pytest.approx(ref.fun, abs=1e-6, rel=1e-6)


def random_socp(rng, n=8, k=5, p=2, n_soc=2):
    x0 = rng.normal(size=n)
    g = rng.normal(size=(k, n))
    h = g @ x0 + rng.uniform(0.3, 1.5, size=k)
    a = rng.normal(size=(p, n))
    b = a @ x0
    socs = []
    for _ in range(n_soc):
        mi = rng.integers(2, 5)
        am = rng.normal(size=(mi, n))
        bv = rng.normal(size=mi)
        cr = rng.normal(size=n)
        d = np.linalg.norm(am @ x0 + bv) + rng.uniform(0.2, 1.0) - cr @ x0
        socs.append(SocConstraint(a_mat=am, b_vec=bv, c_row=cr, d=float(d)))
    box_g = np.vstack([np.eye(n), -np.eye(n)])
    box_h = np.full(2 * n, 10.0)
    return SocpProblem(c=rng.normal(size=n), a_eq=a, b_eq=b,
                       g_lin=np.vstack([g, box_g]),
                       h_lin=np.concatenate([h, box_h]), socs=socs)


def test_random_socp_kkt_residuals():
    rng = np.random.default_rng(3)
    for _ in range(10):
        prob = random_socp(rng)
        sol = solve_socp(prob)
        assert sol.status == "optimal"
        res = kkt_residuals(prob, sol)
        for name in ("stationarity", "primal_eq", "primal_cone", "dual_cone", "comp_slack"):
            assert res[name] <= 1e-7, (name, res)


def test_equality_constrained_projection():
    # min ||x - p||^2 s.t. sum x = s0  ->  x = p - (sum p - s0)/n
    rng = np.random.default_rng(4)
    n = 7
    p = rng.normal(size=n)
    s0 = float(np.sum(p) + 2.0)
    c = np.zeros(n + 1)
    c[-1] = 1.0
    a_pad = np.hstack([np.eye(n), np.zeros((n, 1))])
    t_row = np.zeros(n + 1)
    t_row[-1] = 1.0
    prob = SocpProblem(c=c,
                       a_eq=np.concatenate([np.ones(n), [0.0]])[None, :],
                       b_eq=np.array([s0]),
                       socs=[rotated_soc(a_pad, -p, t_row, 0.0)])
    sol = solve_socp(prob)
    assert sol.status == "optimal"
    want = p - (np.sum(p) - s0) / n
    np.testing.assert_allclose(sol.x[:n], want, atol=1e-7)
    assert sol.x[-1] == pytest.approx(np.sum((want - p) ** 2), abs=1e-7)


def test_infeasible_detection():
    # x >= 1 and x <= 0
    prob = SocpProblem(c=np.array([1.0]),
                       g_lin=np.array([[-1.0], [1.0]]),
                       h_lin=np.array([-1.0, 0.0]))
    sol = solve_socp(prob)
    assert sol.status == "infeasible"
    assert sol.x is None


def test_unbounded_detection():
    prob = SocpProblem(c=np.array([1.0, 0.0]),
                       g_lin=np.array([[1.0, 0.0]]), h_lin=np.array([0.0]))
    sol = solve_socp(prob)
    assert sol.status == "unbounded"


def test_row_scaling_invariance():
    rng = np.random.default_rng(11)
    prob = random_socp(rng, n_soc=1)
    base = solve_socp(prob).x
    scaled = SocpProblem(c=prob.c, a_eq=prob.a_eq, b_eq=prob.b_eq,
                         g_lin=prob.g_lin.copy(), h_lin=prob.h_lin.copy(),
                         socs=list(prob.socs))
    scaled.g_lin[0] *= 1e3
    scaled.h_lin[0] *= 1e3
    np.testing.assert_allclose(solve_socp(scaled).x, base, atol=1e-9)


def test_determinism():
    rng = np.random.default_rng(5)
    prob = random_socp(rng)
    x1 = solve_socp(prob).x
    x2 = solve_socp(prob).x
    assert np.array_equal(x1, x2)


def test_ball_lp_duals():
    # stationarity by hand: c - z1 = 0 and z0 = ||z1|| at an optimal face
    c = np.array([1.0, -2.0, 0.5])
    sol = solve_socp(ball_lp(c, np.zeros(3), 2.0))
    z = sol.z_socs[0]
    np.testing.assert_allclose(z[1:], c, atol=1e-7)
    assert z[0] == pytest.approx(np.linalg.norm(c), abs=1e-7)


def test_embedding_helpers():
    rng = np.random.default_rng(2)
    w = rng.normal(size=5) + 1j * rng.normal(size=5)
    a = rng.normal(size=5) + 1j * rng.normal(size=5)
    f = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    x = embed_cvec(w)
    np.testing.assert_allclose(lift_cvec(x), w)
    assert herm_row(a) @ x == pytest.approx(np.vdot(a, w).real, rel=1e-12)
    assert imag_herm_row(a) @ x == pytest.approx(np.vdot(a, w).imag, rel=1e-12)
    np.testing.assert_allclose(lift_cvec(real_block(f) @ x), f @ w, atol=1e-12)
    assert np.linalg.norm(real_block(f) @ x) == pytest.approx(np.linalg.norm(f @ w))


def test_psd_factor_clamps_noise():
    rng = np.random.default_rng(6)
    b = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    q = b.conj().T @ b  # rank 3 PSD
    r = psd_factor(q)
    assert r.shape[0] == 3
    np.testing.assert_allclose(r.conj().T @ r, q, atol=1e-10)


def test_problem_dump_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    prob = random_socp(rng, n_soc=1)
    path = tmp_path / "prob.npz"
    prob.save(path)
    again = SocpProblem.load(path)
    np.testing.assert_allclose(solve_socp(again).x, solve_socp(prob).x, atol=1e-10)
