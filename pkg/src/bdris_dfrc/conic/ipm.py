"""Dense primal-dual interior-point solver for SOCPs.

Homogeneous self-dual embedding of

    min c'x   s.t.   A x = b,   G x + s = h,   s in K,

with K a product of a nonnegative orthant and second-order cones,
following the conelp recipe: Nesterov-Todd scaling, Mehrotra
predictor-corrector steps, and termination on either an optimality
certificate or a primal/dual infeasibility certificate.  Each Newton
solve is reduced to the normal equations H = G' W^-2 G (plus a Schur
complement for equality rows); per second-order cone W^-2 is J plus a
rank-one update, so H assembly reuses a precomputed G' J G per cone and
stays cheap.  Two iterative-refinement passes per solve keep the KKT
residuals near 1e-8 even when the scaling degenerates at convergence.
Everything is deterministic: same problem bytes in, same solution
bytes out.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .problem import SocpProblem, SocpSolution

_STEP_FRAC = 0.99


# -- composite cone bookkeeping ------------------------------------------------

class _Cone:
    def __init__(self, l, dims):
        self.l = int(l)
        self.dims = [int(q) for q in dims]
        self.slices = []
        off = self.l
        for q in self.dims:
            self.slices.append(slice(off, off + q))
            off += q
        self.m = off
        self.degree = self.l + len(self.dims)

    def identity(self):
        e = np.zeros(self.m)
        e[: self.l] = 1.0
        for sl in self.slices:
            e[sl.start] = 1.0
        return e

    def margin(self, u):
        # > 0 iff u lies in the interior of K
        vals = [np.inf]
        if self.l:
            vals.append(float(u[: self.l].min()))
        for sl in self.slices:
            blk = u[sl]
            vals.append(float(blk[0] - np.linalg.norm(blk[1:])))
        return min(vals)

    def max_step(self, u, du):
        t = np.inf
        if self.l:
            neg = du[: self.l] < 0
            if neg.any():
                t = min(t, float(np.min(-u[: self.l][neg] / du[: self.l][neg])))
        for sl in self.slices:
            t = min(t, _soc_step(u[sl], du[sl]))
        return t


def _soc_step(u, d):
    # largest t >= 0 keeping u + t d inside the second-order cone
    a = d[0] * d[0] - d[1:] @ d[1:]
    b = u[0] * d[0] - u[1:] @ d[1:]
    c = max(u[0] * u[0] - u[1:] @ u[1:], 0.0)
    if abs(a) < 1e-300:
        return np.inf if b >= 0 else c / (-2.0 * b)
    disc = b * b - a * c
    if a > 0 and (b >= 0 or disc <= 0):
        return np.inf
    sq = np.sqrt(max(disc, 0.0))
    if a > 0:  # b < 0: smallest positive root, cancellation-free form
        return c / (-b + sq)
    return (b + sq) / (-a)  # concave case: single crossing


def _jmul(u):
    out = -u.copy()
    out[0] = u[0]
    return out


# -- Nesterov-Todd scaling -----------------------------------------------------

class _Scaling:
    """W per block: diag(w) on the orthant, beta*(2 v v' - J) per cone.

    q = v o v is kept as well since W^2 = beta^2 (2 q q' - J) exactly,
    which is what the normal-equations assembly wants.
    """

    def __init__(self, cone, w_lp, betas, vs, qs, lam):
        self.cone = cone
        self.w_lp = w_lp
        self.betas = betas
        self.vs = vs
        self.qs = qs
        self.lam = lam

    @classmethod
    def identity(cls, cone):
        w = np.ones(cone.l)
        betas = [1.0] * len(cone.dims)
        vs, qs = [], []
        for q in cone.dims:
            e = np.zeros(q)
            e[0] = 1.0
            vs.append(e)
            qs.append(e.copy())
        return cls(cone, w, betas, vs, qs, cone.identity())

    @classmethod
    def nt(cls, cone, s, z):
        l = cone.l
        w = np.sqrt(s[:l] / z[:l])
        lam = np.empty(cone.m)
        lam[:l] = np.sqrt(s[:l] * z[:l])
        betas, vs, qs = [], [], []
        for sl in cone.slices:
            sb, zb = s[sl], z[sl]
            # relative floors keep the scaled points representable when a
            # block grazes the boundary at machine precision
            sj = np.sqrt(max(sb[0] ** 2 - sb[1:] @ sb[1:],
                             1e-28 * sb[0] ** 2, 1e-300))
            zj = np.sqrt(max(zb[0] ** 2 - zb[1:] @ zb[1:],
                             1e-28 * zb[0] ** 2, 1e-300))
            ss, zz = sb / sj, zb / zj
            gamma = np.sqrt(max((1.0 + ss @ zz) / 2.0, 1e-300))
            q = (ss + _jmul(zz)) / (2.0 * gamma)
            v = q.copy()
            v[0] += 1.0
            v /= np.sqrt(2.0 * (q[0] + 1.0))
            beta = np.sqrt(sj / zj)
            betas.append(beta)
            vs.append(v)
            qs.append(q)
            lam[sl] = beta * (2.0 * v * (v @ zb) - _jmul(zb))
        return cls(cone, w, betas, vs, qs, lam)

    def apply(self, x, mode):
        """mode in {w, winv, w2, w2inv}: W x, W^-1 x, W^2 x, W^-2 x."""
        out = np.empty_like(x)
        l = self.cone.l
        if l:
            lp = x[:l]
            if mode == "w":
                out[:l] = self.w_lp * lp
            elif mode == "winv":
                out[:l] = lp / self.w_lp
            elif mode == "w2":
                out[:l] = self.w_lp ** 2 * lp
            else:
                out[:l] = lp / self.w_lp ** 2
        for i, sl in enumerate(self.cone.slices):
            blk = x[sl]
            b, v, q = self.betas[i], self.vs[i], self.qs[i]
            if mode == "w":
                out[sl] = b * (2.0 * v * (v @ blk) - _jmul(blk))
            elif mode == "winv":
                jv = _jmul(v)
                out[sl] = (2.0 * jv * (jv @ blk) - _jmul(blk)) / b
            elif mode == "w2":
                out[sl] = b * b * (2.0 * q * (q @ blk) - _jmul(blk))
            else:
                jq = _jmul(q)
                out[sl] = (2.0 * jq * (jq @ blk) - _jmul(blk)) / (b * b)
        return out


def _jprod(cone, u, v):
    out = np.empty_like(u)
    l = cone.l
    out[:l] = u[:l] * v[:l]
    for sl in cone.slices:
        ub, vb = u[sl], v[sl]
        out[sl.start] = ub @ vb
        out[sl.start + 1: sl.stop] = ub[0] * vb[1:] + vb[0] * ub[1:]
    return out


def _jdiv(cone, lam, v):
    # solve lam o u = v
    out = np.empty_like(v)
    l = cone.l
    out[:l] = v[:l] / lam[:l]
    for sl in cone.slices:
        lb, vb = lam[sl], v[sl]
        det = lb[0] ** 2 - lb[1:] @ lb[1:]
        u0 = (lb[0] * vb[0] - lb[1:] @ vb[1:]) / det
        out[sl.start] = u0
        out[sl.start + 1: sl.stop] = (vb[1:] - u0 * lb[1:]) / lb[0]
    return out


# -- reduced KKT solver ----------------------------------------------------------

class _Kkt:
    """Solves [0 A' G'; A 0 0; G 0 -W^2] u = rhs via normal equations."""

    def __init__(self, G, A, cone):
        self.G, self.A, self.cone = G, A, cone
        self.n = G.shape[1]
        self.g_lp = G[: cone.l]
        self.g_soc = [G[sl] for sl in cone.slices]
        # G' J G per cone is scaling-independent: precompute once
        self.gjg = [np.outer(gb[0], gb[0]) - gb[1:].T @ gb[1:] for gb in self.g_soc]
        self.scal = None

    def factor(self, scal):
        self.scal = scal
        H = np.zeros((self.n, self.n))
        if self.cone.l:
            H += (self.g_lp / scal.w_lp[:, None] ** 2).T @ self.g_lp
        for gb, gjg, b, q in zip(self.g_soc, self.gjg, scal.betas, scal.qs):
            p = gb.T @ _jmul(q)
            H += (2.0 * np.outer(p, p) - gjg) / (b * b)
        delta = 1e-13 * (np.trace(H) / self.n + 1.0)
        for _ in range(4):
            try:
                self.h_fac = sla.cho_factor(H + delta * np.eye(self.n), lower=True)
                break
            except np.linalg.LinAlgError:
                delta *= 1e4
        else:  # pragma: no cover - pathological data
            raise np.linalg.LinAlgError("normal equations not factorizable")
        if self.A.shape[0]:
            aht = sla.cho_solve(self.h_fac, self.A.T)
            S = self.A @ aht
            ds = 1e-13 * (np.trace(S) / S.shape[0] + 1.0)
            self.s_fac = sla.cho_factor(S + ds * np.eye(S.shape[0]), lower=True)

    def _raw(self, bx, by, bz):
        r = bx + self.G.T @ self.scal.apply(bz, "w2inv")
        if self.A.shape[0]:
            t = sla.cho_solve(self.h_fac, r)
            dy = sla.cho_solve(self.s_fac, self.A @ t - by)
            dx = sla.cho_solve(self.h_fac, r - self.A.T @ dy)
        else:
            dx = sla.cho_solve(self.h_fac, r)
            dy = np.zeros(0)
        dz = self.scal.apply(self.G @ dx - bz, "w2inv")
        return dx, dy, dz

    def solve(self, bx, by, bz, refine=2):
        dx, dy, dz = self._raw(bx, by, bz)
        for _ in range(refine):
            r1 = bx - (self.A.T @ dy if self.A.shape[0] else 0.0) - self.G.T @ dz
            r2 = by - self.A @ dx if self.A.shape[0] else by
            r3 = bz - self.G @ dx + self.scal.apply(dz, "w2")
            cx, cy, cz = self._raw(r1, r2, r3)
            dx, dy, dz = dx + cx, dy + cy, dz + cz
        return dx, dy, dz


# -- equilibration ---------------------------------------------------------------

def _equilibrate(c, G, h, A, b, cone):
    d = np.ones(cone.m)
    if cone.l:
        mags = np.maximum(np.abs(G[: cone.l]).max(axis=1, initial=0.0),
                          np.abs(h[: cone.l]))
        d[: cone.l] = 1.0 / np.maximum(mags, 1e-12)
    for sl in cone.slices:
        mag = max(np.abs(G[sl]).max(initial=0.0), np.abs(h[sl]).max(initial=0.0))
        d[sl] = 1.0 / max(mag, 1e-12)
    e = np.ones(A.shape[0])
    if A.shape[0]:
        e = 1.0 / np.maximum(np.abs(A).max(axis=1, initial=0.0), 1e-12)
    sc = 1.0 / max(np.abs(c).max(initial=0.0), 1.0)
    return sc * c, d[:, None] * G, d * h, e[:, None] * A, e * b, d, e, sc


# -- main solver -------------------------------------------------------------------

def solve_socp(prob: SocpProblem, tol: float = 1e-8, max_iters: int = 200) -> SocpSolution:
    c0, G0, h0, A0, b0, l, dims = prob.stack()
    cone = _Cone(l, dims)
    c, G, h, A, b, dcone, deq, csc = _equilibrate(c0, G0, h0, A0, b0, cone)
    n, m, p = G.shape[1], cone.m, A.shape[0]
    feastol, abstol, reltol = tol, 0.1 * tol, tol

    kkt = _Kkt(G, A, cone)
    kkt.factor(_Scaling.identity(cone))
    e = cone.identity()

    # primal init: min-norm s with Ax=b, Gx+s=h; dual init: min-norm dual point
    x, _, zh = kkt.solve(np.zeros(n), b, h)
    s = -zh
    alpha = -cone.margin(s)
    if alpha >= 0:
        s = s + (1.0 + alpha) * e
    _, y, z = kkt.solve(-c, np.zeros(p), np.zeros(m))
    alpha = -cone.margin(z)
    if alpha >= 0:
        z = z + (1.0 + alpha) * e
    tau, kappa = 1.0, 1.0

    def _unscale(xs, ys, zs, ss):
        return xs, deq * ys / csc, dcone * zs / csc, ss / dcone

    def _split_z(zv):
        return zv[: cone.l], [zv[sl] for sl in cone.slices]

    best = None
    best_score = np.inf
    status, it = "max_iters", 0
    info = {}
    for it in range(max_iters):
        rx = (A.T @ y if p else 0.0) + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rt = c @ x + b @ y + h @ z + kappa
        mu = (s @ z + tau * kappa) / (cone.degree + 1)

        # -- convergence bookkeeping on the normalized iterate
        xc, yc, zc, sc_ = x / tau, y / tau, z / tau, s / tau
        pres = np.linalg.norm(G @ xc + sc_ - h) / max(1.0, np.linalg.norm(h))
        if p:
            pres = max(pres, np.linalg.norm(A @ xc - b) / max(1.0, np.linalg.norm(b)))
        dres = np.linalg.norm((A.T @ yc if p else 0.0) + G.T @ zc + c) / max(1.0, np.linalg.norm(c))
        pcost, dcost = c @ xc, -(b @ yc + h @ zc)
        gap = sc_ @ zc
        relgap = gap / max(1.0, abs(pcost), abs(dcost))
        score = pres + dres + max(relgap, 0.0)
        if score < best_score:
            best_score = score
            best = (xc.copy(), yc.copy(), zc.copy(), sc_.copy())
        info = {"pres": pres, "dres": dres, "gap": gap, "relgap": relgap}
        if pres <= feastol and dres <= feastol and (gap <= abstol or relgap <= reltol):
            status = "optimal"
            best = (xc, yc, zc, sc_)
            break

        # -- infeasibility certificates
        omega = b @ y + h @ z
        if it > 0 and omega < 0:
            resid = np.linalg.norm((A.T @ y if p else 0.0) + G.T @ z, np.inf) / (-omega)
            if resid <= feastol:
                status = "infeasible"
                zc = z / (-omega)
                info["certificate"] = {"y": deq * (y / (-omega)), "z": dcone * zc,
                                       "residual": resid}
                break
        if it > 0 and c @ x < 0:
            wd = -(c @ x)
            xr = x / wd
            resid = np.linalg.norm(G @ xr + s / wd, np.inf)
            if p:
                resid = max(resid, np.linalg.norm(A @ xr, np.inf))
            if resid <= feastol:
                status = "unbounded"
                info["ray"] = xr
                break

        if cone.margin(s) <= 0.0 or cone.margin(z) <= 0.0:
            break  # boundary reached at machine precision: keep best iterate
        scal = _Scaling.nt(cone, s, z)
        lam = scal.lam
        try:
            kkt.factor(scal)
            vx, vy, vz = kkt.solve(-c, b, h)
        except (ValueError, np.linalg.LinAlgError):
            break  # scaling overflowed the KKT assembly
        dg_den = c @ vx + b @ vy + h @ vz - kappa / tau
        if not np.isfinite(vx).all() or not np.isfinite(dg_den) \
                or abs(dg_den) < 1e-300:
            break

        def newton(bx, by, bz, btau, bs_lam, bkap):
            bs_t = _jdiv(cone, lam, bs_lam)
            bz_t = bz - scal.apply(bs_t, "w")
            ux, uy, uz = kkt.solve(bx, by, bz_t)
            dtau = (btau - bkap / tau - (c @ ux + b @ uy + h @ uz)) / dg_den
            dx = ux + dtau * vx
            dy = uy + dtau * vy
            dz = uz + dtau * vz
            ds = scal.apply(bs_t, "w") - scal.apply(dz, "w2")
            dkap = (bkap - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkap

        # predictor
        try:
            da = newton(-rx, -ry, -rz, -rt, -_jprod(cone, lam, lam), -tau * kappa)
        except (ValueError, np.linalg.LinAlgError):
            break
        if not all(np.isfinite(v).all() for v in da[:4]):
            break
        amax = min(cone.max_step(s, da[3]), cone.max_step(z, da[2]))
        if da[4] < 0:
            amax = min(amax, -tau / da[4])
        if da[5] < 0:
            amax = min(amax, -kappa / da[5])
        a_aff = min(1.0, amax)
        mu_aff = ((s + a_aff * da[3]) @ (z + a_aff * da[2])
                  + (tau + a_aff * da[4]) * (kappa + a_aff * da[5])) / (cone.degree + 1)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector (combined direction)
        corr = _jprod(cone, scal.apply(da[3], "winv"), scal.apply(da[2], "w"))
        bs_lam = -(_jprod(cone, lam, lam) + corr - sigma * mu * e)
        bkap = -(tau * kappa + da[4] * da[5] - sigma * mu)
        f = 1.0 - sigma
        try:
            d = newton(-f * rx, -f * ry, -f * rz, -f * rt, bs_lam, bkap)
        except (ValueError, np.linalg.LinAlgError):
            break
        if not all(np.isfinite(v).all() for v in d[:4]):
            break
        amax = min(cone.max_step(s, d[3]), cone.max_step(z, d[2]))
        if d[4] < 0:
            amax = min(amax, -tau / d[4])
        if d[5] < 0:
            amax = min(amax, -kappa / d[5])
        alpha = min(1.0, _STEP_FRAC * amax)
        if not np.isfinite(alpha) or alpha <= 1e-10:
            break
        x = x + alpha * d[0]
        y = y + alpha * d[1]
        z = z + alpha * d[2]
        s = s + alpha * d[3]
        tau += alpha * d[4]
        kappa += alpha * d[5]
        if tau <= 1e-300 or not np.isfinite(tau):
            break

    if status in ("infeasible", "unbounded"):
        return SocpSolution(status=status, x=None, objective=np.nan,
                            iterations=it + 1, y_eq=np.zeros(p),
                            z_lin=np.zeros(cone.l), z_socs=[np.zeros(q) for q in dims],
                            info=info)

    xb, yb, zb, sb = best
    xb, yb, zb, sb = _unscale(xb, yb, zb, sb)
    z_lin, z_socs = _split_z(zb)
    return SocpSolution(status=status, x=xb, objective=float(c0 @ xb),
                        iterations=it + 1, y_eq=yb, z_lin=z_lin, z_socs=z_socs,
                        info=info)
