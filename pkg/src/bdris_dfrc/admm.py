"""Max-min SCNR block-coordinate solver (filters / waveform / phases / duals).

The design variables are the transmit waveform W (N_T x L), the grouped
BD-RIS matrices Phi_T, Phi_R (block-diagonal, jointly semi-unitary per group)
and one receive filter U_k per target.  Semi-unitarity is split off onto
auxiliary blocks Theta_g via scaled-dual ADMM; one outer iteration runs

    U_k    <- principal generalized eigenvector, closed form
    W      <- max-gamma SOCP (SCA-linearized SCNR cones, CI rows, power)
    Phi    <- same structure over the stacked non-zero blocks, plus the
              quadratic consensus penalty (rho/2)||Phi_g - Theta_g + L_g/rho||^2
    Theta_g<- orthogonal Procrustes polar factor, closed form
    Lambda_g += rho (Phi_g - Theta_g)

until the min-SCNR stalls and the consensus residual is small.  The returned
Phi is hard-projected onto the constraint pattern and the waveform re-polished
against it, so the result is exactly feasible (not just feasible in the limit).

Communication QoS is symbol-level constructive interference: for every user u
and slot l the noiseless receive point, derotated by the intended PSK symbol,
must lie in the cone of half-angle Omega = pi/M around the real axis at depth
sqrt(sigma_C^2 Gamma_u).  Both half-plane forms are enforced; slacks are
evaluated (and reported) in the original ratio form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CommChannels, generate_channels
from .conic import (SocConstraint, SocpProblem, embed_cvec, herm_row,
                    lift_cvec, real_block, rotated_soc, solve_socp)
from .quadforms import (SceneGeometry, ScnrForm, build_filter_forms,
                        build_phase_forms, build_waveform_forms,
                        de_diagonalize_form, group_map, scnr_trace, unvec,
                        vec)
from .scenario import Scenario

_GAMMA_EPS = 1e-14      # SCA reference floor; below this the block is stuck
_CI_CUSHION = 1e-4      # relative QoS headroom held during the inner loop


class QosInfeasibleError(RuntimeError):
    """QoS thresholds unreachable within the power budget.

    gamma_feasible is the largest common (linear) threshold the initializer
    could certify; rerunning with qos_db <= 10*log10(gamma_feasible) succeeds.
    """

    def __init__(self, gamma_feasible: float):
        self.gamma_feasible = float(gamma_feasible)
        db = (10.0 * math.log10(gamma_feasible) if gamma_feasible > 0
              else float("-inf"))
        super().__init__(
            f"QoS infeasible at the configured threshold; largest feasible "
            f"common threshold ~ {db:.2f} dB")


@dataclass
class SolverConfig:
    penalty: float = 0.03           # dimensionless rho, scaled by the SCNR ceiling
    max_iters: int = 200
    tol_scnr: float = 1e-4          # relative min-SCNR change, 3-iter window
    tol_feas: float = 1e-4          # max_g ||Phi_g - Theta_g||_F
    sca_inner_iters: int = 1
    rng_seed: int | None = None     # None -> scenario seed
    adaptive_penalty: bool = False  # residual-balancing rho (off: reproducible)
    solver_tol: float = 1e-8

    def validate(self) -> None:
        if self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.tol_scnr <= 0 or self.tol_feas <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 1 <= self.sca_inner_iters <= 5:
            raise ValueError("sca_inner_iters must be in 1..5")


@dataclass
class Waveform:
    w_mat: np.ndarray               # N_T x L
    symbols: np.ndarray             # U x L unit-modulus PSK symbols
    gamma: float = 0.0              # subproblem optimum (linear)


@dataclass
class BdRisState:
    arch: str
    groups: int
    block: int
    phi: dict[str, np.ndarray]      # side -> N_S x N_S block-diagonal
    thetas: list[np.ndarray]        # per group, 2M x M, orthonormal columns
    duals: list[np.ndarray]         # per group, 2M x M
    active: dict[str, np.ndarray]   # side -> bool over stacked coords (M*N_S)
    penalty: float = 1.0

    @property
    def n_cells(self) -> int:
        return self.groups * self.block

    def group(self, g: int) -> np.ndarray:
        """Stacked variable [Phi_{T,g}; Phi_{R,g}] of group g."""
        m = self.block
        sl = slice(g * m, (g + 1) * m)
        return np.vstack([self.phi["T"][sl, sl], self.phi["R"][sl, sl]])

    def set_group(self, g: int, stacked: np.ndarray) -> None:
        m = self.block
        sl = slice(g * m, (g + 1) * m)
        self.phi["T"][sl, sl] = stacked[:m]
        self.phi["R"][sl, sl] = stacked[m:]

    def consensus_residual(self) -> float:
        return max(float(np.linalg.norm(self.group(g) - self.thetas[g]))
                   for g in range(self.groups))

    def unitarity_residual(self) -> float:
        eye = np.eye(self.block)
        return max(float(np.linalg.norm(
            self.group(g).conj().T @ self.group(g) - eye))
            for g in range(self.groups))


@dataclass
class SolveState:
    """Everything the block updates need besides their own quadratic forms."""
    scenario: Scenario
    channels: CommChannels
    geom: SceneGeometry
    bdris: BdRisState
    waveform: Waveform
    filters: dict[int, np.ndarray]
    solver_tol: float = 1e-8


@dataclass
class SolveResult:
    waveform: Waveform
    bdris_state: BdRisState
    filter_bank: dict[int, np.ndarray]
    scnr_history: np.ndarray        # iterations x K, linear
    feasibility_history: np.ndarray  # iterations,
    status: str                     # "converged" | "max_iters"
    scnr_final: np.ndarray          # per-target, on the projected state
    iterations: int
    target_keys: list[int]
    info: dict = field(default_factory=dict)


# -- initialization ----------------------------------------------------------

def _double_ris_masks(n_s: int) -> dict[str, np.ndarray]:
    cells = np.arange(n_s)
    return {"T": cells < n_s // 2, "R": cells >= n_s // 2}


def init_bdris(groups: int, block: int, arch: str,
               rng: np.random.Generator) -> BdRisState:
    """Random feasible BD-RIS start: per group an orthonormal 2M x M stack."""
    n_s = groups * block
    phi = {"T": np.zeros((n_s, n_s), dtype=complex),
           "R": np.zeros((n_s, n_s), dtype=complex)}
    state = BdRisState(arch=arch, groups=groups, block=block, phi=phi,
                       thetas=[], duals=[],
                       active={"T": np.ones(block * n_s, dtype=bool),
                               "R": np.ones(block * n_s, dtype=bool)})
    if arch == "DOUBLE-RIS":
        # two ordinary (diagonal) surfaces, one per side, half the cells each
        state.active = _double_ris_masks(n_s)
        angles = rng.uniform(0.0, 2.0 * np.pi, size=n_s)
        for g in range(n_s):
            side = "T" if g < n_s // 2 else "R"
            phi[side][g, g] = np.exp(1j * angles[g])
    else:
        for g in range(groups):
            z = (rng.standard_normal((2 * block, block))
                 + 1j * rng.standard_normal((2 * block, block)))
            q, _ = np.linalg.qr(z)
            state.set_group(g, q)
    state.thetas = [state.group(g) for g in range(groups)]
    state.duals = [np.zeros((2 * block, block), dtype=complex)
                   for _ in range(groups)]
    return state


def _psk_symbols(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    m = scenario.psk_order
    idx = rng.integers(0, m, size=(len(scenario.users), scenario.code_len))
    return np.exp(2j * np.pi * idx / m)


def _ci_rows_waveform(scenario, channels, phi, symbols, cushion=0.0):
    """CI half-plane rows on vec(W): (real row, rhs) with row @ x >= rhs.

    Each row is Re{c^H w[l]} with c = s_ul (sin O +- j cos O) h~_u, scaled so
    the threshold is O(1) regardless of the physical noise floor.  cushion
    inflates the threshold multiplicatively; the inner loop runs with a small
    cushion so the exact-threshold restoration after the final manifold
    projection keeps a strictly feasible region to work in.
    """
    n_t, l_len = scenario.n_tx, scenario.code_len
    om = np.pi / scenario.psk_order
    rows, rhss = [], []
    for u, usr in enumerate(scenario.users):
        h_eff = channels.g_mat.conj().T @ phi[usr.side].conj().T @ channels.h_users[u]
        thr = (math.sqrt(scenario.noise_comm * usr.gamma_linear)
               * math.sin(om) * (1.0 + cushion))
        for l in range(l_len):
            for pm in (1.0, -1.0):
                c = symbols[u, l] * (math.sin(om) + 1j * pm * math.cos(om)) * h_eff
                full = np.zeros(n_t * l_len, dtype=complex)
                full[l * n_t:(l + 1) * n_t] = c
                nrm = max(thr, float(np.linalg.norm(c)))
                rows.append(herm_row(full) / nrm)
                rhss.append(thr / nrm)
    return np.asarray(rows), np.asarray(rhss)


def init_waveform(phi: dict[str, np.ndarray], channels: CommChannels,
                  scenario: Scenario, symbols: np.ndarray | None = None,
                  rng: np.random.Generator | None = None) -> Waveform:
    """Margin-maximizing start: max t s.t. CI holds at t-scaled depth, power.

    The achieved common threshold is t*^2 times the configured one (CI depth
    scales as sqrt(Gamma)); t* >= 1 certifies QoS feasibility.  Without users
    (or in RADAR-ONLY mode) the start is an isotropic random waveform at full
    power.
    """
    if rng is None:
        rng = np.random.default_rng(scenario.rng_seed)
    if symbols is None:
        symbols = _psk_symbols(scenario, rng)
    n_t, l_len = scenario.n_tx, scenario.code_len
    energy = scenario.power_budget
    if energy == 0.0:
        return Waveform(np.zeros((n_t, l_len), dtype=complex), symbols, 0.0)
    if not scenario.users or scenario.arch == "RADAR-ONLY":
        w = (rng.standard_normal((n_t, l_len))
             + 1j * rng.standard_normal((n_t, l_len)))
        w *= math.sqrt(energy) / np.linalg.norm(w)
        return Waveform(w, symbols, 0.0)

    n = 2 * n_t * l_len + 1                       # [w embedded; t]
    rows, rhss = _ci_rows_waveform(scenario, channels, phi, symbols)
    g_lin = np.zeros((rows.shape[0], n))
    g_lin[:, :-1] = -rows
    g_lin[:, -1] = rhss                           # -row.w + t*rhs <= 0
    h_lin = np.zeros(rows.shape[0])
    a_pow = np.zeros((2 * n_t * l_len, n))
    a_pow[:, :-1] = np.eye(2 * n_t * l_len)
    power = SocConstraint(a_mat=a_pow, b_vec=np.zeros(a_pow.shape[0]),
                          c_row=np.zeros(n), d=math.sqrt(energy))
    c = np.zeros(n)
    c[-1] = -1.0
    prob = SocpProblem(c=c, g_lin=g_lin, h_lin=h_lin, socs=[power])
    sol = solve_socp(prob, tol=1e-8)
    if sol.status != "optimal" or sol.x is None:
        raise RuntimeError(f"initial margin problem ended with {sol.status}")
    t_star = max(float(sol.x[-1]), 0.0)
    w = unvec(lift_cvec(sol.x[:-1]), n_t, l_len)
    nrm = np.linalg.norm(w)
    if nrm > math.sqrt(energy):                   # defensive power clamp
        w *= math.sqrt(energy) / nrm
    return Waveform(w, symbols, t_star ** 2 * scenario.qos_linear)


# -- block updates -----------------------------------------------------------

def update_filters(forms: dict[int, ScnrForm], n_rx: int) -> dict[int, np.ndarray]:
    """Per-target receive filters: u_k = (Psi_C + sigma^2 I)^-1 psi_k, unit norm.

    The interference-plus-noise matrix is sigma^2 I plus a short sum of rank-1
    terms, so the solve goes through the matrix-inversion lemma on the small
    (n_terms x n_terms) system instead of the full N_R L_obs one.
    """
    out: dict[int, np.ndarray] = {}
    for k in sorted(forms):
        form = forms[k]
        sig = form.noise_quad
        psi = form.numerator.factors[0]
        f = form.interference.cone_factor()       # r x d, Psi_C = F^H F
        if f.shape[0]:
            small = sig * np.eye(f.shape[0]) + f @ f.conj().T
            u = (psi - f.conj().T @ np.linalg.solve(small, f @ psi)) / sig
        else:
            u = psi / sig
        u /= np.linalg.norm(u)
        out[k] = unvec(u, n_rx, u.size // n_rx)
    return out


def minorizer(w, gamma, w_ref, gamma_ref, upsilon) -> float:
    """Linear surrogate of f(w, gamma) = w^H Upsilon w / gamma, tangent at
    (w_ref, gamma_ref) and below f everywhere on gamma > 0 (Upsilon PSD)."""
    if gamma_ref <= 0:
        raise ValueError("reference gamma must be positive")
    a = (upsilon.matvec(w_ref) if hasattr(upsilon, "matvec")
         else np.asarray(upsilon) @ w_ref)
    lin = float(np.real(np.vdot(a, w)))           # Re{w_ref^H U w}
    quad_ref = float(np.real(np.vdot(w_ref, a)))
    return 2.0 * lin / gamma_ref - gamma * quad_ref / gamma_ref ** 2


def _sca_cone(f_c, a_vec, qbar, s_k, gamma_ref, gscale, n, gamma_col):
    """Rotated-cone form of one SCA'd SCNR constraint, scaled by 1/s_k:

        ||F_C x||^2/s_k <= 2 Re{a^H x}/(g^n s_k) - ghat gscale qbar/((g^n)^2 s_k) - 1

    where x occupies the leading complex block of the variable vector.
    """
    a_re = real_block(f_c) / math.sqrt(s_k)
    a_mat = np.zeros((a_re.shape[0], n))
    a_mat[:, :a_re.shape[1]] = a_re
    lin = np.zeros(n)
    lin[:a_re.shape[1]] = herm_row(a_vec) * (2.0 / (gamma_ref * s_k))
    lin[gamma_col] = -gscale * qbar / (gamma_ref ** 2 * s_k)
    return rotated_soc(a_mat, np.zeros(a_mat.shape[0]), lin, -1.0)


def update_waveform(state: SolveState, forms: dict[int, ScnrForm],
                    sca_iters: int = 1, ci_cushion: float = 0.0) -> Waveform:
    """Waveform block: max gamma s.t. SCA'd per-target SCNR cones at the
    common reference gamma^n = min_k SCNR, CI rows, transmit power."""
    sc = state.scenario
    n_t, l_len = sc.n_tx, sc.code_len
    n = 2 * n_t * l_len + 1                       # [w embedded; gamma_hat]
    gcol = n - 1
    keys = sorted(forms)
    w_ref = vec(state.waveform.w_mat)
    gamma_val = min(forms[k].scnr(w_ref) for k in keys)

    with_ci = bool(sc.users) and sc.arch != "RADAR-ONLY"
    g_lin = h_lin = None
    if with_ci:
        rows, rhss = _ci_rows_waveform(sc, state.channels, state.bdris.phi,
                                       state.waveform.symbols, ci_cushion)
        g_lin = np.zeros((rows.shape[0], n))
        g_lin[:, :-1] = -rows
        h_lin = -rhss

    a_pow = np.zeros((2 * n_t * l_len, n))
    a_pow[:, :-1] = np.eye(2 * n_t * l_len)
    power = SocConstraint(a_mat=a_pow, b_vec=np.zeros(a_pow.shape[0]),
                          c_row=np.zeros(n), d=math.sqrt(sc.power_budget))
    c = np.zeros(n)

    for _ in range(sca_iters):
        if gamma_val <= _GAMMA_EPS:
            break                                 # SCA has no usable reference
        socs = [power]
        for k in keys:
            form = forms[k]
            a_vec = form.numerator.matvec(w_ref)
            qbar = form.numerator.quad(w_ref)
            socs.append(_sca_cone(form.interference.cone_factor(), a_vec, qbar,
                                  form.noise_const, gamma_val, gamma_val,
                                  n, gcol))
        c[gcol] = -1.0                            # max gamma_hat
        prob = SocpProblem(c=c, g_lin=g_lin, h_lin=h_lin, socs=socs)
        sol = solve_socp(prob, tol=state.solver_tol)
        if sol.status != "optimal" or sol.x is None:
            break                                 # keep the last good iterate
        w_new = lift_cvec(sol.x[:-1])
        gamma_new = min(forms[k].scnr(w_new) for k in keys)
        if not np.isfinite(gamma_new):
            break
        w_ref, gamma_val = w_new, gamma_new
    return Waveform(unvec(w_ref, n_t, l_len), state.waveform.symbols, gamma_val)


def _stacked_center(state: BdRisState, side: str) -> np.ndarray:
    """vec of the stacked per-group blocks of Theta - Lambda/rho on one side."""
    m = state.block
    off = 0 if side == "T" else m
    parts = [vec(state.thetas[g][off:off + m]
                 - state.duals[g][off:off + m] / state.penalty)
             for g in range(state.groups)]
    return np.concatenate(parts)


def update_phases(state: SolveState, forms: dict[int, ScnrForm],
                  sca_iters: int = 1,
                  ci_cushion: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Phase block over the stacked non-zero entries of Phi_T, Phi_R:

        max  eta - (rho/2) sum_g ||Phi_g - Theta_g + Lambda_g/rho||_F^2
        s.t. SCA'd SCNR cones (reference eta^n = min_k SCNR), CI trace rows.

    Inactive coordinates (DOUBLE-RIS) are excluded from the variable.
    """
    sc = state.scenario
    ris = state.bdris
    groups, m = ris.groups, ris.block
    n_s = ris.n_cells
    idx = group_map(groups, m)
    act_idx = {s: np.flatnonzero(ris.active[s]) for s in ("T", "R")}
    n_act = {s: act_idx[s].size for s in ("T", "R")}
    n_phi = n_act["T"] + n_act["R"]
    seg = {"T": slice(0, n_act["T"]), "R": slice(n_act["T"], n_phi)}
    n = 2 * n_phi + 2                             # [phi embedded; eta_hat; t]
    ecol, tcol = n - 2, n - 1

    # current iterate and per-target restricted forms
    phi_vecs = {s: vec(ris.phi[s])[idx][act_idx[s]] for s in ("T", "R")}
    x_ref = np.concatenate([phi_vecs["T"], phi_vecs["R"]])
    rforms = {}
    for k in sorted(forms):
        f = de_diagonalize_form(forms[k], idx)
        rforms[k] = ScnrForm(
            k=f.k, side=f.side,
            numerator=f.numerator.reindex(act_idx[f.side]),
            interference=f.interference.reindex(act_idx[f.side]),
            noise_quad=f.noise_quad, noise_const=f.noise_const)
    keys = sorted(rforms)
    eta_val = min(rforms[k].scnr(x_ref[seg[rforms[k].side]]) for k in keys)

    # CI trace rows
    g_lin = h_lin = None
    if sc.users and sc.arch != "RADAR-ONLY":
        om = np.pi / sc.psk_order
        gw = state.channels.g_mat @ state.waveform.w_mat
        rows, rhss = [], []
        for u, usr in enumerate(sc.users):
            thr = (math.sqrt(sc.noise_comm * usr.gamma_linear) * math.sin(om)
                   * (1.0 + ci_cushion))
            h_u = state.channels.h_users[u]
            for l in range(sc.code_len):
                hbar = (np.conj(state.waveform.symbols[u, l])
                        * np.outer(gw[:, l], h_u.conj()))
                tvec = vec(hbar.T)[idx][act_idx[usr.side]]
                for pm in (1.0, -1.0):
                    b = np.conj((math.sin(om) - 1j * pm * math.cos(om)) * tvec)
                    full = np.zeros(n_phi, dtype=complex)
                    full[seg[usr.side]] = b
                    nrm = max(thr, float(np.linalg.norm(b)))
                    row = np.zeros(n)
                    row[:2 * n_phi] = herm_row(full) / nrm
                    rows.append(row)
                    rhss.append(thr / nrm)
        g_lin = -np.asarray(rows)
        h_lin = -np.asarray(rhss)

    # consensus center, epigraph of the quadratic penalty
    center = np.concatenate([_stacked_center(ris, "T")[act_idx["T"]],
                             _stacked_center(ris, "R")[act_idx["R"]]])
    a_pen = np.zeros((2 * n_phi, n))
    a_pen[:, :2 * n_phi] = np.eye(2 * n_phi)
    lin_t = np.zeros(n)
    lin_t[tcol] = 1.0
    pen_cone = rotated_soc(a_pen, -embed_cvec(center), lin_t, 0.0)

    # per-group Frobenius caps ||[Phi_Tg; Phi_Rg]||_F <= sqrt(M): the stacked
    # blocks live on that sphere, so the cap excludes nothing feasible while
    # keeping the relaxed subproblem bounded in amplitude
    caps = []
    for g in range(groups):
        sel = []
        for s, off in (("T", 0), ("R", n_act["T"])):
            inside = ((act_idx[s] >= g * m * m)
                      & (act_idx[s] < (g + 1) * m * m))
            sel.extend(off + p for p in np.flatnonzero(inside))
        rows_cap = np.array(sel + [n_phi + p for p in sel])
        a_cap = np.zeros((rows_cap.size, n))
        a_cap[np.arange(rows_cap.size), rows_cap] = 1.0
        caps.append(SocConstraint(a_mat=a_cap, b_vec=np.zeros(rows_cap.size),
                                  c_row=np.zeros(n), d=math.sqrt(m)))

    c = np.zeros(n)
    c[tcol] = 0.5 * ris.penalty

    for _ in range(sca_iters):
        if eta_val <= _GAMMA_EPS:
            break
        socs = [pen_cone] + caps
        for k in keys:
            form = rforms[k]
            x_side = x_ref[seg[form.side]]
            a_small = form.numerator.matvec(x_side)
            a_vec = np.zeros(n_phi, dtype=complex)
            a_vec[seg[form.side]] = a_small
            f_small = form.interference.cone_factor()
            f_c = np.zeros((f_small.shape[0], n_phi), dtype=complex)
            f_c[:, seg[form.side]] = f_small
            socs.append(_sca_cone(f_c, a_vec, form.numerator.quad(x_side),
                                  form.noise_const, eta_val, eta_val,
                                  n, ecol))
        c[ecol] = -eta_val                        # max eta = eta^n * eta_hat
        prob = SocpProblem(c=c, g_lin=g_lin, h_lin=h_lin, socs=socs)
        sol = solve_socp(prob, tol=state.solver_tol)
        if sol.status != "optimal" or sol.x is None:
            break
        x_new = lift_cvec(sol.x[:2 * n_phi])
        eta_new = min(rforms[k].scnr(x_new[seg[rforms[k].side]]) for k in keys)
        if not np.isfinite(eta_new):
            break
        x_ref, eta_val = x_new, eta_new

    out = {}
    for s in ("T", "R"):
        stacked = np.zeros(m * n_s, dtype=complex)
        stacked[act_idx[s]] = x_ref[seg[s]]
        full = np.zeros(n_s * n_s, dtype=complex)
        full[idx] = stacked
        out[s] = unvec(full, n_s, n_s)
    return out["T"], out["R"]


def project_theta(dual: np.ndarray, phi_g: np.ndarray, rho: float,
                  active_rows: np.ndarray | None = None) -> np.ndarray:
    """argmax_Theta Re Tr(Theta^H (Lambda + rho Phi)) s.t. Theta^H Theta = I:
    the polar factor of Lambda_g + rho Phi_g (Procrustes).  active_rows
    restricts the support (masked architectures); other rows stay zero."""
    z = dual + rho * phi_g
    if active_rows is None:
        b, _s, dh = np.linalg.svd(z, full_matrices=False)
        return b @ dh
    out = np.zeros_like(z)
    b, _s, dh = np.linalg.svd(z[active_rows], full_matrices=False)
    out[active_rows] = b @ dh
    return out


def update_duals(state: BdRisState) -> BdRisState:
    for g in range(state.groups):
        state.duals[g] = state.duals[g] + state.penalty * (
            state.group(g) - state.thetas[g])
    return state


def _theta_active_rows(state: BdRisState, g: int) -> np.ndarray | None:
    if state.arch != "DOUBLE-RIS":
        return None
    return np.array([0]) if g < state.groups // 2 else np.array([1])


def hard_project(state: BdRisState) -> None:
    """Snap Phi onto the semi-unitary pattern (zero-dual polar projection)."""
    zero = np.zeros((2 * state.block, state.block), dtype=complex)
    for g in range(state.groups):
        state.set_group(g, project_theta(
            zero, state.group(g), 1.0, _theta_active_rows(state, g)))


def ci_slacks(scenario: Scenario, channels: CommChannels, w_mat: np.ndarray,
              phi: dict[str, np.ndarray], symbols: np.ndarray) -> np.ndarray:
    """(U, L) CI slacks in the original ratio form, linearized:

        tan(Omega) * (Re z - sqrt(sigma^2 Gamma)) - |Im z| >= 0

    with z the symbol-derotated noiseless receive point, normalized by the
    threshold depth so the values are dimensionless.
    """
    n_u = len(scenario.users)
    out = np.zeros((n_u, scenario.code_len))
    om = np.pi / scenario.psk_order
    for u, usr in enumerate(scenario.users):
        h_eff = channels.h_users[u].conj() @ phi[usr.side] @ channels.g_mat
        z = np.conj(symbols[u]) * (h_eff @ w_mat)
        thr = math.sqrt(scenario.noise_comm * usr.gamma_linear)
        slack = math.tan(om) * (z.real - thr) - np.abs(z.imag)
        out[u] = slack / max(thr, math.sqrt(scenario.noise_comm))
    return out


# -- outer loop ---------------------------------------------------------------

def _scnr_ceiling(form: ScnrForm, norm2: float) -> float:
    """Largest SCNR of the form over the ball ||x||^2 <= norm2.

    Rayleigh bound through the same matrix-inversion-lemma route as the
    filter update; anchors the consensus penalty at the scale of the best
    value the relaxed phase step could ever claim.
    """
    cn = form.numerator.cone_factor()
    if not cn.shape[0]:
        return 0.0
    s = max(form.noise_quad + form.noise_const / norm2, 1e-300)
    f = form.interference.cone_factor()
    rhs = cn.conj().T
    if f.shape[0]:
        small = s * np.eye(f.shape[0]) + f @ f.conj().T
        sol = (rhs - f.conj().T @ np.linalg.solve(small, f @ rhs)) / s
    else:
        sol = rhs / s
    m_small = cn @ sol
    return float(np.linalg.eigvalsh((m_small + m_small.conj().T) / 2.0)[-1])


def _scnr_now(geom, w_mat, phi, filters) -> np.ndarray:
    keys = sorted(filters)
    return np.array([scnr_trace(geom, w_mat, phi[geom.targets[k].side],
                                filters[k], k) for k in keys])


def _balance_penalty(state: BdRisState, thetas_prev: list[np.ndarray]) -> None:
    # standard residual balancing; duals rescale to keep Lambda/rho invariant
    primal = state.consensus_residual()
    dual = state.penalty * max(
        float(np.linalg.norm(t - p))
        for t, p in zip(state.thetas, thetas_prev))
    if primal > 10.0 * dual:
        state.penalty *= 2.0
        state.duals = [d * 0.5 for d in state.duals]
    elif dual > 10.0 * primal:
        state.penalty *= 0.5
        state.duals = [d * 2.0 for d in state.duals]


def solve(scenario: Scenario, config: SolverConfig | None = None,
          channels: CommChannels | None = None) -> SolveResult:
    """Run the full splitting until the min-SCNR stalls and consensus holds.

    Deterministic for a fixed (scenario, config): channels, symbols and all
    random starts derive from spawned children of one seed sequence.
    """
    config = config or SolverConfig()
    config.validate()
    seed = scenario.rng_seed if config.rng_seed is None else config.rng_seed
    ch_ss, sym_ss, ris_ss, w_ss = np.random.SeedSequence(seed).spawn(4)
    if channels is None:
        channels = generate_channels(scenario, np.random.default_rng(ch_ss))
    geom = SceneGeometry(scenario, channels.g_mat)
    symbols = _psk_symbols(scenario, np.random.default_rng(sym_ss))

    ris = init_bdris(scenario.groups, scenario.block_size, scenario.arch,
                     np.random.default_rng(ris_ss))
    ris.penalty = config.penalty
    wave = init_waveform(ris.phi, channels, scenario, symbols,
                         np.random.default_rng(w_ss))
    gamma_init = wave.gamma
    if (scenario.users and scenario.arch != "RADAR-ONLY"
            and wave.gamma < scenario.qos_linear * (1.0 - 1e-9)):
        raise QosInfeasibleError(wave.gamma)

    state = SolveState(scenario=scenario, channels=channels, geom=geom,
                       bdris=ris, waveform=wave, filters={},
                       solver_tol=config.solver_tol)
    scnr_hist: list[np.ndarray] = []
    feas_hist: list[float] = []
    status = "max_iters"
    iters = 0
    rho_base = config.penalty

    def _cycle(pen_factor):
        state.filters = update_filters(
            build_filter_forms(geom, state.waveform.w_mat, ris.phi),
            scenario.n_rx)
        state.waveform = update_waveform(
            state, build_waveform_forms(geom, ris.phi, state.filters),
            config.sca_inner_iters, _CI_CUSHION)
        pforms = build_phase_forms(geom, state.waveform.w_mat, state.filters)
        # the consensus penalty must dominate the largest SCNR the relaxed
        # phase step could claim inside its norm ball, or the iterate buys
        # objective by drifting off the manifold; anchoring at that ceiling
        # also makes the splitting invariant to rescaled channel units
        norm2 = float(ris.groups * ris.block)
        ceil_val = max(_scnr_ceiling(f, norm2) for f in pforms.values())
        ris.penalty = rho_base * pen_factor * max(ceil_val, _GAMMA_EPS)
        phi_t, phi_r = update_phases(
            state, pforms, config.sca_inner_iters, _CI_CUSHION)
        ris.phi = {"T": phi_t, "R": phi_r}
        prev = ris.thetas
        ris.thetas = [project_theta(ris.duals[g], ris.group(g), ris.penalty,
                                    _theta_active_rows(ris, g))
                      for g in range(ris.groups)]
        update_duals(ris)
        return prev

    for _ in range(config.max_iters):
        thetas_prev = _cycle(1.0)
        scnr_hist.append(_scnr_now(geom, state.waveform.w_mat, ris.phi,
                                   state.filters))
        feas_hist.append(ris.consensus_residual())
        iters += 1
        if config.adaptive_penalty:
            pen_before = ris.penalty
            _balance_penalty(ris, thetas_prev)
            rho_base *= ris.penalty / pen_before
        if iters >= 3 and feas_hist[-1] <= config.tol_feas:
            window = [float(min(s)) for s in scnr_hist[-3:]]
            spread = max(window) - min(window)
            if spread <= config.tol_scnr * max(abs(window[-1]), _GAMMA_EPS):
                status = "converged"
                break

    # continuation on the penalty until the iterate sits on the manifold to
    # within projection accuracy, so the final snap moves nothing measurable
    boost, tighten = 1e2, 0
    while ris.consensus_residual() > 1e-8 and tighten < 8:
        _cycle(boost)
        boost = min(boost * 100.0, 1e8)
        tighten += 1

    # exact feasibility at return: project, then re-fit filters and waveform
    # against the projected matrices so CI/power hold where SCNR is reported
    hard_project(ris)
    state.filters = update_filters(
        build_filter_forms(geom, state.waveform.w_mat, ris.phi), scenario.n_rx)
    state.waveform = update_waveform(
        state, build_waveform_forms(geom, ris.phi, state.filters), 1)
    w_mat = state.waveform.w_mat
    nrm = np.linalg.norm(w_mat)
    if nrm ** 2 > scenario.power_budget > 0:
        w_mat = w_mat * math.sqrt(scenario.power_budget) / nrm
        state.waveform = Waveform(w_mat, symbols, state.waveform.gamma)
    state.filters = update_filters(
        build_filter_forms(geom, w_mat, ris.phi), scenario.n_rx)
    scnr_final = _scnr_now(geom, w_mat, ris.phi, state.filters)

    return SolveResult(
        waveform=state.waveform, bdris_state=ris, filter_bank=state.filters,
        scnr_history=np.asarray(scnr_hist),
        feasibility_history=np.asarray(feas_hist),
        status=status, scnr_final=scnr_final, iterations=iters,
        target_keys=sorted(state.filters),
        info={"gamma_init": gamma_init, "penalty_final": ris.penalty,
              "tighten_iters": tighten, "seed": seed, "channels": channels})
