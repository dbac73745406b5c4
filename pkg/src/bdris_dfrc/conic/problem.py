"""SOCP containers, KKT residuals, and complex->real embedding helpers.

Decision variables are always real; complex design variables enter
through the [Re; Im] stacking, which preserves Euclidean norms, so
Hermitian quadratics become plain two-norms of stacked residuals and
every constraint lands in one of the two primitive shapes the solver
accepts: linear rows ``g @ x <= h`` or cones ``||A x + b|| <= c @ x + d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SocConstraint", "SocpProblem", "SocpSolution", "kkt_residuals",
    "embed_cvec", "lift_cvec", "herm_row", "imag_herm_row", "real_block",
    "rotated_soc", "psd_factor",
]


@dataclass
class SocConstraint:
    """||a_mat @ x + b_vec|| <= c_row @ x + d."""

    a_mat: np.ndarray
    b_vec: np.ndarray
    c_row: np.ndarray
    d: float = 0.0

    @property
    def dim(self) -> int:
        return 1 + self.a_mat.shape[0]


@dataclass
class SocpProblem:
    """min c @ x  s.t.  a_eq x = b_eq,  g_lin x <= h_lin,  socs."""

    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    g_lin: np.ndarray | None = None
    h_lin: np.ndarray | None = None
    socs: list[SocConstraint] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def validate(self):
        n = self.n
        if (self.a_eq is None) != (self.b_eq is None):
            raise ValueError("a_eq and b_eq must be given together")
        if (self.g_lin is None) != (self.h_lin is None):
            raise ValueError("g_lin and h_lin must be given together")
        if self.a_eq is not None:
            if self.a_eq.shape != (self.b_eq.shape[0], n):
                raise ValueError("equality block shape mismatch")
        if self.g_lin is not None:
            if self.g_lin.shape != (self.h_lin.shape[0], n):
                raise ValueError("inequality block shape mismatch")
        for s in self.socs:
            if s.a_mat.shape[1] != n or s.b_vec.shape[0] != s.a_mat.shape[0]:
                raise ValueError("cone block shape mismatch")
            if s.c_row.shape[0] != n:
                raise ValueError("cone row length mismatch")
        parts = [self.c]
        if self.a_eq is not None:
            parts += [self.a_eq.ravel(), self.b_eq]
        if self.g_lin is not None:
            parts += [self.g_lin.ravel(), self.h_lin]
        for s in self.socs:
            parts += [s.a_mat.ravel(), s.b_vec, s.c_row, np.atleast_1d(s.d)]
        if not all(np.isfinite(p).all() for p in parts):
            raise ValueError("problem data must be finite")

    def stack(self):
        """Conic standard form (c, G, h, A, b, l, soc_dims) with s = h - Gx in K."""
        self.validate()
        n = self.n
        g_rows, h_rows = [], []
        l = 0
        if self.g_lin is not None:
            g_rows.append(np.asarray(self.g_lin, dtype=float))
            h_rows.append(np.asarray(self.h_lin, dtype=float))
            l = self.g_lin.shape[0]
        dims = []
        for s in self.socs:
            # s_cone = (c'x + d, Ax + b) lies in Q  <=>  ||Ax+b|| <= c'x+d
            g_rows.append(-np.vstack([s.c_row[None, :], s.a_mat]))
            h_rows.append(np.concatenate(([s.d], s.b_vec)))
            dims.append(1 + s.a_mat.shape[0])
        if not g_rows:
            raise ValueError("at least one inequality or cone is required")
        G = np.vstack(g_rows)
        h = np.concatenate(h_rows)
        if self.a_eq is not None:
            A = np.asarray(self.a_eq, dtype=float)
            b = np.asarray(self.b_eq, dtype=float)
        else:
            A = np.zeros((0, n))
            b = np.zeros(0)
        return np.asarray(self.c, dtype=float), G, h, A, b, l, dims

    def save(self, path):
        c, G, h, A, b, l, dims = self.stack()
        np.savez(path, c=c, g=G, h=h, a=A, b=b, l=l, dims=np.asarray(dims, int))

    @classmethod
    def load(cls, path):
        d = np.load(path)
        l = int(d["l"])
        prob = cls(c=d["c"])
        if d["a"].shape[0]:
            prob.a_eq, prob.b_eq = d["a"], d["b"]
        G, h = d["g"], d["h"]
        if l:
            prob.g_lin, prob.h_lin = G[:l], h[:l]
        off = l
        for q in d["dims"]:
            blk, hb = G[off:off + q], h[off:off + q]
            prob.socs.append(SocConstraint(a_mat=-blk[1:], b_vec=hb[1:],
                                           c_row=-blk[0], d=float(hb[0])))
            off += q
        return prob


@dataclass
class SocpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int
    y_eq: np.ndarray
    z_lin: np.ndarray
    z_socs: list[np.ndarray]
    info: dict = field(default_factory=dict)


def kkt_residuals(prob: SocpProblem, sol: SocpSolution) -> dict:
    """Normalized KKT residuals of a claimed optimal solution.

    All entries are dimensionless (inf-norms divided by max(1, data norm))
    so that a uniformly scaled problem reports the same numbers.
    """
    c, G, h, A, b, l, dims = prob.stack()
    x = sol.x
    z = np.concatenate([sol.z_lin] + [zb for zb in sol.z_socs]) if (l or dims) else np.zeros(0)
    y = sol.y_eq
    s = h - G @ x
    stat = np.linalg.norm(c + G.T @ z + (A.T @ y if A.size else 0.0), np.inf)
    out = {"stationarity": stat / max(1.0, np.linalg.norm(c, np.inf))}
    if A.shape[0]:
        out["primal_eq"] = np.linalg.norm(A @ x - b, np.inf) / max(1.0, np.linalg.norm(b, np.inf))
    else:
        out["primal_eq"] = 0.0
    pviol, dviol = 0.0, 0.0
    if l:
        pviol = max(pviol, float(np.maximum(-s[:l], 0.0).max(initial=0.0)))
        dviol = max(dviol, float(np.maximum(-z[:l], 0.0).max(initial=0.0)))
    off = l
    for q in dims:
        sb, zb = s[off:off + q], z[off:off + q]
        pviol = max(pviol, np.linalg.norm(sb[1:]) - sb[0])
        dviol = max(dviol, np.linalg.norm(zb[1:]) - zb[0])
        off += q
    scale = max(1.0, np.linalg.norm(h, np.inf))
    out["primal_cone"] = max(pviol, 0.0) / scale
    out["dual_cone"] = max(dviol, 0.0)
    out["comp_slack"] = abs(float(s @ z)) / max(1.0, abs(float(c @ x)))
    out["gap"] = float(s @ z)
    return out


# -- complex -> real embedding ------------------------------------------------

def embed_cvec(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w).ravel()
    return np.concatenate([w.real, w.imag])


def lift_cvec(x: np.ndarray) -> np.ndarray:
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]


def herm_row(a: np.ndarray) -> np.ndarray:
    """Row r with r @ embed(w) = Re(a^H w)."""
    a = np.asarray(a).ravel()
    return np.concatenate([a.real, a.imag])


def imag_herm_row(a: np.ndarray) -> np.ndarray:
    """Row r with r @ embed(w) = Im(a^H w)."""
    a = np.asarray(a).ravel()
    return np.concatenate([-a.imag, a.real])


def real_block(f: np.ndarray) -> np.ndarray:
    """2m x 2n real matrix acting as w -> Fw on embedded vectors (norm kept)."""
    f = np.atleast_2d(f)
    return np.block([[f.real, -f.imag], [f.imag, f.real]])


def rotated_soc(a_mat, b_vec, lin_row, lin_const) -> SocConstraint:
    """||a_mat x + b_vec||^2 <= lin_row @ x + lin_const as one SOC."""
    a_mat = np.atleast_2d(np.asarray(a_mat, float))
    b_vec = np.asarray(b_vec, float).ravel()
    lin_row = np.asarray(lin_row, float).ravel()
    return SocConstraint(
        a_mat=np.vstack([2.0 * a_mat, lin_row[None, :]]),
        b_vec=np.concatenate([2.0 * b_vec, [lin_const - 1.0]]),
        c_row=lin_row,
        d=lin_const + 1.0,
    )


def psd_factor(q_mat: np.ndarray, clamp: float = 1e-12) -> np.ndarray:
    """R with R^H R ~= Q for Hermitian PSD Q; eigenvalues below
    clamp * lambda_max are treated as rounding noise and dropped."""
    q_mat = 0.5 * (q_mat + q_mat.conj().T)
    lam, vec = np.linalg.eigh(q_mat)
    cut = clamp * max(float(lam[-1]), 0.0)
    keep = lam > cut
    return np.sqrt(lam[keep])[:, None] * vec[:, keep].conj().T
