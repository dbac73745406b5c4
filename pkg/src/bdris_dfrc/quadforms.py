"""The three equivalent quadratic-form views of a target's SCNR.

With X_p = A(angle_p) Phi G W J_{ring_p} the matched-filter output power of
scatterer p through filter U_k is |Tr(U_k^H X_p)|^2, and

    SCNR_k = zeta_k^2 |Tr(U_k^H X_k)|^2
             / (sum_{p in same-side targets, p != k} zeta_p^2 |Tr(U_k^H X_p)|^2
                + sum_{q in same-side clutter} xi_q^2 |Tr(U_k^H X_q)|^2
                + sigma_R^2 ||U_k||_F^2).

Using vec (column-major) identities

    Tr(U^H X)            = vec(U)^H vec(X)
    vec(A Phi G W J)     = (J^T kron A Phi G) vec(W)
                         = ((G W J)^T kron A) vec(Phi)

each |Tr|^2 is a rank-1 quadratic form in whichever block is being updated:

    filter form    factor m_p = vec(A_p Phi G W J_p)            dim N_R*L_obs
    waveform form  factor v_p = vec((A_p Phi G)^H U_k J_p^T)    dim N_T*L
    phase form     factor x_p = vec(A_p^H U_k (G W J_p)^H)      dim N_S^2

so every form family is a weighted sum of rank-1 terms; the Kronecker
matrices above are never materialized (A_p itself is rank-1, which the
builders exploit). Group architectures act on the stacked nonzero blocks
phi~ = vec([Phi_1 ... Phi_G]); `group_map` gives the row-selection index
realizing that restriction, and `de_diagonalize` re-indexes forms onto it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import radar_channel, shift_matrix, steering_vector
from .scenario import Scenario


def vec(x: np.ndarray) -> np.ndarray:
    """Column-major vectorization (math convention)."""
    return np.asarray(x).flatten(order="F")


def unvec(x: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.asarray(x).reshape((rows, cols), order="F")


# -- scene geometry ----------------------------------------------------------

@dataclass(frozen=True)
class Scatterer:
    kind: str                 # "target" | "clutter"
    index: int                # global index in its scenario list
    side: str
    weight: float             # zeta^2 or xi^2 (expected power incl. path loss)
    angle_deg: float
    ring: int
    a_tx: np.ndarray          # RIS-aperture steering, N_S
    a_rx: np.ndarray          # radar-receiver steering, N_R
    j_mat: np.ndarray         # L x L_obs shift matrix


class SceneGeometry:
    """Per-scatterer steering vectors and shift matrices, plus the BS->RIS G."""

    def __init__(self, scenario: Scenario, g_mat: np.ndarray):
        self.scenario = scenario
        self.g_mat = g_mat
        self.by_side: dict[str, list[Scatterer]] = {"T": [], "R": []}
        self.targets: dict[int, Scatterer] = {}
        for side in ("T", "R"):
            n_obs = scenario.n_obs(side)
            for k, t in scenario.targets_on(side):
                s = Scatterer(
                    "target", k, side, t.zeta_sq, t.azimuth_deg, t.ring,
                    steering_vector(t.azimuth_deg, scenario.n_cells),
                    steering_vector(t.azimuth_deg, scenario.n_rx),
                    shift_matrix(t.ring, scenario.code_len, n_obs))
                self.by_side[side].append(s)
                self.targets[k] = s
            for q, c in scenario.clutters_on(side):
                self.by_side[side].append(Scatterer(
                    "clutter", q, side, c.xi_sq, c.azimuth_deg, c.ring,
                    steering_vector(c.azimuth_deg, scenario.n_cells),
                    steering_vector(c.azimuth_deg, scenario.n_rx),
                    shift_matrix(c.ring, scenario.code_len, n_obs)))

    def a_mat(self, s: Scatterer) -> np.ndarray:
        return np.outer(s.a_rx, s.a_tx.conj())


# -- rank-1 sums -------------------------------------------------------------

@dataclass
class RankOneSum:
    """sum_i weights[i] * f_i f_i^H with f_i = factors[i] (rows)."""
    factors: np.ndarray       # (t, d) complex; t may be 0
    weights: np.ndarray       # (t,) nonnegative reals

    @classmethod
    def empty(cls, dim: int) -> "RankOneSum":
        return cls(np.zeros((0, dim), dtype=complex), np.zeros(0))

    @property
    def dim(self) -> int:
        return self.factors.shape[1]

    @property
    def n_terms(self) -> int:
        return self.factors.shape[0]

    def quad(self, x: np.ndarray) -> float:
        if self.n_terms == 0:
            return 0.0
        return float(self.weights @ np.abs(self.factors.conj() @ x) ** 2)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.n_terms == 0:
            return np.zeros(self.dim, dtype=complex)
        return self.factors.T @ (self.weights * (self.factors.conj() @ x))

    def dense(self) -> np.ndarray:
        if self.n_terms == 0:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return (self.factors.T * self.weights) @ self.factors.conj()

    def cone_factor(self) -> np.ndarray:
        """R with x^H (this) x = ||R x||^2 (R = sqrt(w) f^H stacked)."""
        return np.sqrt(self.weights)[:, None] * self.factors.conj()

    def reindex(self, idx: np.ndarray) -> "RankOneSum":
        return RankOneSum(self.factors[:, idx], self.weights)


@dataclass
class ScnrForm:
    """SCNR of one target as a ratio of quadratic forms in one variable block.

    scnr(x) = numerator.quad(x)
              / (interference.quad(x) + noise_quad*||x||^2 + noise_const)
    """
    k: int
    side: str
    numerator: RankOneSum
    interference: RankOneSum
    noise_quad: float = 0.0
    noise_const: float = 0.0

    def scnr(self, x: np.ndarray) -> float:
        x = vec(x) if x.ndim > 1 else x
        den = (self.interference.quad(x) + self.noise_quad * float(np.vdot(x, x).real)
               + self.noise_const)
        if den <= 0:
            raise ValueError("degenerate SCNR denominator")
        return self.numerator.quad(x) / den


# -- trace form --------------------------------------------------------------

def _response(s: Scatterer, phi: np.ndarray, g_mat: np.ndarray, w_mat: np.ndarray) -> np.ndarray:
    """X_p = A_p Phi G W J_p via the rank-1 structure of A_p."""
    row = (s.a_tx.conj() @ phi @ g_mat @ w_mat) @ s.j_mat   # 1 x L_obs
    return np.outer(s.a_rx, row)


def scnr_trace(geom: SceneGeometry, w_mat: np.ndarray, phi: np.ndarray,
               u_k: np.ndarray, k: int) -> float:
    """Direct trace-form SCNR of target k (phi is target k's side matrix)."""
    if np.linalg.norm(u_k) == 0:
        raise ValueError("zero filter")
    tgt = geom.targets[k]
    num = tgt.weight * abs(np.vdot(u_k, _response(tgt, phi, geom.g_mat, w_mat))) ** 2
    den = geom.scenario.noise_radar * np.linalg.norm(u_k) ** 2
    for s in geom.by_side[tgt.side]:
        if s.kind == "target" and s.index == k:
            continue
        den += s.weight * abs(np.vdot(u_k, _response(s, phi, geom.g_mat, w_mat))) ** 2
    return float(num / den)


# -- the three form families -------------------------------------------------

def build_filter_forms(geom: SceneGeometry, w_mat: np.ndarray,
                       phi: dict[str, np.ndarray]) -> dict[int, ScnrForm]:
    """Forms in u = vec(U_k); factor m_p = vec(A_p Phi G W J_p)."""
    sc = geom.scenario
    out: dict[int, ScnrForm] = {}
    for side in ("T", "R"):
        rows = {}
        for s in geom.by_side[side]:
            # m_p = vec(outer(a_rx, row_p)) = kron(row_p, a_rx)  (column-major)
            row = (s.a_tx.conj() @ phi[side] @ geom.g_mat @ w_mat) @ s.j_mat
            rows[(s.kind, s.index)] = np.kron(row, s.a_rx)
        for k, _t in sc.targets_on(side):
            own = rows[("target", k)]
            fac, wts = [], []
            for s in geom.by_side[side]:
                if (s.kind, s.index) == ("target", k):
                    continue
                fac.append(rows[(s.kind, s.index)])
                wts.append(s.weight)
            intf = (RankOneSum(np.array(fac), np.array(wts)) if fac
                    else RankOneSum.empty(own.size))
            out[k] = ScnrForm(
                k=k, side=side,
                numerator=RankOneSum(own[None, :], np.array([geom.targets[k].weight])),
                interference=intf,
                noise_quad=sc.noise_radar)
    return out


def build_waveform_forms(geom: SceneGeometry, phi: dict[str, np.ndarray],
                         filters: dict[int, np.ndarray]) -> dict[int, ScnrForm]:
    """Forms in w = vec(W); factor v_p = vec((A_p Phi G)^H U_k J_p^T)."""
    sc = geom.scenario
    out: dict[int, ScnrForm] = {}
    for side in ("T", "R"):
        # t_p = a_tx^H Phi G (1 x N_T), shared across filters
        t_rows = {id(s): s.a_tx.conj() @ phi[side] @ geom.g_mat
                  for s in geom.by_side[side]}
        for k, _t in sc.targets_on(side):
            u_k = filters[k]
            fac, wts = [], []
            own = None
            for s in geom.by_side[side]:
                # (A_p Phi G)^H U J_p^T = conj(t_p) outer (a_rx^H U J_p^T)
                row = (s.a_rx.conj() @ u_k) @ s.j_mat.T     # 1 x L
                v = np.kron(row, t_rows[id(s)].conj())
                if s.kind == "target" and s.index == k:
                    own = v
                else:
                    fac.append(v)
                    wts.append(s.weight)
            intf = (RankOneSum(np.array(fac), np.array(wts)) if fac
                    else RankOneSum.empty(own.size))
            out[k] = ScnrForm(
                k=k, side=side,
                numerator=RankOneSum(own[None, :], np.array([geom.targets[k].weight])),
                interference=intf,
                noise_const=sc.noise_radar * float(np.linalg.norm(u_k) ** 2))
    return out


def build_phase_forms(geom: SceneGeometry, w_mat: np.ndarray,
                      filters: dict[int, np.ndarray]) -> dict[int, ScnrForm]:
    """Forms in phi = vec(Phi_side); factor x_p = vec(A_p^H U_k (G W J_p)^H)."""
    sc = geom.scenario
    gw = geom.g_mat @ w_mat                                  # N_S x L
    out: dict[int, ScnrForm] = {}
    for side in ("T", "R"):
        c_mats = {id(s): gw @ s.j_mat for s in geom.by_side[side]}  # N_S x L_obs
        for k, _t in sc.targets_on(side):
            u_k = filters[k]
            fac, wts = [], []
            own = None
            for s in geom.by_side[side]:
                # A_p^H U C_p^H = a_tx outer ((a_rx^H U) C_p^H)
                row = (s.a_rx.conj() @ u_k) @ c_mats[id(s)].conj().T   # 1 x N_S
                x = np.kron(row, s.a_tx)
                if s.kind == "target" and s.index == k:
                    own = x
                else:
                    fac.append(x)
                    wts.append(s.weight)
            intf = (RankOneSum(np.array(fac), np.array(wts)) if fac
                    else RankOneSum.empty(own.size))
            out[k] = ScnrForm(
                k=k, side=side,
                numerator=RankOneSum(own[None, :], np.array([geom.targets[k].weight])),
                interference=intf,
                noise_const=sc.noise_radar * float(np.linalg.norm(u_k) ** 2))
    return out


# -- group mapping / de-diagonalization --------------------------------------

def group_map(groups: int, block: int) -> np.ndarray:
    """Index map realizing phi~ = vec([Phi_1 ... Phi_G]) = K_G vec(Phi).

    Returns idx of length M*N_S with phi~ = vec(Phi)[idx]; K_G's dense form is
    the 0/1 matrix with ones at (a, idx[a]).
    """
    n_s = groups * block
    idx = np.empty(block * n_s, dtype=int)
    for a in range(idx.size):
        col = a // block          # column of the stacked M x N_S matrix
        g = col // block          # owning group
        idx[a] = col * n_s + g * block + (a % block)
    return idx


def group_map_dense(groups: int, block: int) -> np.ndarray:
    idx = group_map(groups, block)
    k_g = np.zeros((idx.size, (groups * block) ** 2))
    k_g[np.arange(idx.size), idx] = 1.0
    return k_g


def de_diagonalize(obj: RankOneSum | np.ndarray, idx: np.ndarray):
    """Restrict a phase-form object onto the stacked-block coordinates.

    For a dense matrix Xi this is K_G Xi K_G^H = Xi[idx][:, idx]; for a
    RankOneSum it reindexes every factor (exact on the block-diagonal
    manifold since K_G^H K_G acts as identity there).
    """
    if isinstance(obj, RankOneSum):
        return obj.reindex(idx)
    m = np.asarray(obj)
    return m[np.ix_(idx, idx)]


def de_diagonalize_form(form: ScnrForm, idx: np.ndarray) -> ScnrForm:
    return ScnrForm(
        k=form.k, side=form.side,
        numerator=form.numerator.reindex(idx),
        interference=form.interference.reindex(idx),
        noise_quad=form.noise_quad, noise_const=form.noise_const)


def h_tilde(h_bar: np.ndarray, groups: int, block: int) -> np.ndarray:
    """Stack the G diagonal M x M blocks of H vertically into N_S x M, so that
    Tr(h_tilde @ Phi~) = Tr(h_bar @ Phi) for every block-diagonal Phi."""
    return np.vstack([h_bar[g * block:(g + 1) * block, g * block:(g + 1) * block]
                      for g in range(groups)])


def stack_blocks(phi: np.ndarray, groups: int, block: int) -> np.ndarray:
    """M x N_S matrix [Phi_1 ... Phi_G] of the diagonal blocks of Phi."""
    return np.hstack([phi[g * block:(g + 1) * block, g * block:(g + 1) * block]
                      for g in range(groups)])


def unstack_blocks(phi_tilde: np.ndarray, groups: int, block: int) -> np.ndarray:
    """Inverse of stack_blocks: scatter the blocks back on the diagonal."""
    n_s = groups * block
    phi = np.zeros((n_s, n_s), dtype=complex)
    for g in range(groups):
        phi[g * block:(g + 1) * block, g * block:(g + 1) * block] = \
            phi_tilde[:, g * block:(g + 1) * block]
    return phi
