"""Primal-dual interior-point method for linear + second-order cone programs.

The standard-form program ``min c'x s.t. Ax = b, x in K`` is embedded as

    min c'x  s.t.  A x = b,  G x + s = h,  s in K',   G = -P,  h = 0

where ``P`` picks the cone-constrained variables, and solved through the
homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector. The embedding yields Farkas certificates when the
program is infeasible or unbounded.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import qdldl
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .. import _accel
from .program import ConicProgram

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    PRIMAL_INFEASIBLE = "PrimalInfeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-7
    max_iterations: int = 200
    infeasibility_tolerance: float = 1e-8
    regularization: float = 1e-9
    refinement_steps: int = 20
    step_fraction: float = 0.99
    verbose: bool = False

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    gap: float

    def max(self) -> float:
        return max(self.primal, self.dual, self.gap)


@dataclass(frozen=True)
class ConicSolution:
    """Solver output.

    ``x`` is the primal point (or an unboundedness ray), ``y`` the equality
    multipliers (or an infeasibility certificate) and ``z`` the dual cone
    slack ``c - A'y``. Objective values include the program offset.
    """

    status: Status
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    dual_objective: float
    residuals: Residuals
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


class _Cones:
    """Cone K' of the slack vector s: nonnegatives first, then SOC blocks."""

    def __init__(self, program: ConicProgram):
        spec = program.cones
        nn = spec.nonneg_indices
        soc_vars = [np.arange(st, st + d) for st, d in spec.soc_blocks]
        self.index = np.concatenate([nn] + soc_vars).astype(np.int64)
        self.m_l = nn.size
        dims = np.array([d for _, d in spec.soc_blocks], dtype=np.int64)
        self.dims = dims
        self.starts = (self.m_l + np.concatenate([[0], np.cumsum(dims)[:-1]])).astype(np.int64) \
            if dims.size else np.zeros(0, dtype=np.int64)
        self.rel_starts = self.starts - self.m_l
        self.m = self.index.size
        self.degree = self.m_l + dims.size
        self.e = np.zeros(self.m)
        self.e[:self.m_l] = 1.0
        self.e[self.starts] = 1.0

    def _split(self, v):
        return v[:self.m_l], v[self.m_l:]

    def interior_shift(self, v):
        """Smallest alpha with v + alpha*e in the cone (negative if interior)."""
        alpha = -np.inf
        if self.m_l:
            alpha = max(alpha, float(np.max(-v[:self.m_l])))
        for st, d in zip(self.starts, self.dims):
            alpha = max(alpha, float(np.linalg.norm(v[st + 1:st + d]) - v[st]))
        return alpha

    def max_step(self, v, dv):
        a = np.inf
        if self.m_l:
            neg = dv[:self.m_l] < 0
            if np.any(neg):
                a = float(np.min(-v[:self.m_l][neg] / dv[:self.m_l][neg]))
        if self.dims.size:
            _, vq = self._split(v)
            _, dq = self._split(dv)
            a = min(a, _accel.soc_max_step(vq, dq, self.rel_starts, self.dims))
        return a

    def scaling(self, s, z):
        sl, sq = self._split(s)
        zl, zq = self._split(z)
        w_l = np.sqrt(sl / zl)
        if self.dims.size:
            wbar, eta, lam_q = _accel.soc_nt_scaling(sq, zq, self.rel_starts, self.dims)
        else:
            wbar, eta, lam_q = np.zeros(0), np.zeros(0), np.zeros(0)
        lam = np.concatenate([np.sqrt(sl * zl), lam_q])
        return _Scaling(self, w_l, wbar, eta, lam)

    def jprod(self, u, v):
        ul, uq = self._split(u)
        vl, vq = self._split(v)
        q = _accel.soc_jordan_prod(uq, vq, self.rel_starts, self.dims) if self.dims.size else uq
        return np.concatenate([ul * vl, q])

    def jdiv(self, u, v):
        ul, uq = self._split(u)
        vl, vq = self._split(v)
        q = _accel.soc_jordan_div(uq, vq, self.rel_starts, self.dims) if self.dims.size else uq
        return np.concatenate([vl / ul, q])


class _Scaling:
    def __init__(self, cones: _Cones, w_l, wbar, eta, lam):
        self.cones = cones
        self.w_l = w_l
        self.wbar = wbar
        self.eta = eta
        self.lam = lam

    def apply(self, v, inverse=False):
        c = self.cones
        vl, vq = c._split(v)
        ol = vl / self.w_l if inverse else vl * self.w_l
        if c.dims.size:
            oq = _accel.soc_apply_w(self.wbar, self.eta, vq, c.rel_starts, c.dims, inverse)
        else:
            oq = vq
        return np.concatenate([ol, oq])

    def hess_inv(self, v):
        return self.apply(self.apply(v, True), True)


class _KKT:
    """Augmented system in ``(x, y, W z)``.

    [[d, A', M'], [A, -d, 0], [M, 0, -I]] with ``M = W^-1 G``. Keeping ``W z``
    as an unknown means only ``W^-1`` enters the matrix, not ``W^-2``, which
    roughly halves the exponent of the condition number near the optimum.
    """

    def __init__(self, A: sp.csr_matrix, cones: _Cones, n: int, settings: SolverSettings):
        self.A = A
        self.At = A.T.tocsr()
        self.n = n
        self.m = A.shape[0]
        self.cones = cones
        self.delta = settings.regularization
        self.refine = settings.refinement_steps
        mc = cones.m
        N = n + self.m + mc
        self.N = N
        Acoo = A.tocoo()
        zoff = n + self.m
        self._rows_static = np.concatenate([Acoo.col, Acoo.row + n, np.arange(N)])
        self._cols_static = np.concatenate([Acoo.row + n, Acoo.col, np.arange(N)])
        self._vals_static = np.concatenate([Acoo.data, Acoo.data])
        # pattern of M: cone row r touches the variables of its block
        idx = cones.index
        mr = [np.arange(cones.m_l)]
        mcol = [idx[:cones.m_l]]
        for st, d in zip(cones.starts, cones.dims):
            rows = np.arange(st, st + d)
            mr.append(np.repeat(rows, d))
            mcol.append(np.tile(idx[st:st + d], d))
        self._m_rows = np.concatenate(mr).astype(np.int64)
        self._m_cols = np.concatenate(mcol).astype(np.int64)
        self._zoff = zoff
        self.dense = N <= 400
        self._lu = None
        self._ldl = None
        self._M = None
        self._Mt = None

    def factor(self, scaling: _Scaling | None):
        c = self.cones
        if scaling is None:
            ml = -np.ones(c.m_l)
            blocks = [-np.eye(d).ravel() for d in c.dims]
            mq = np.concatenate(blocks) if blocks else np.zeros(0)
        else:
            ml = -1.0 / scaling.w_l
            mq = -_accel.soc_inv_w_blocks(scaling.wbar, scaling.eta, c.rel_starts, c.dims) \
                if c.dims.size else np.zeros(0)
        mvals = np.concatenate([ml, mq])
        if not np.all(np.isfinite(mvals)):
            raise np.linalg.LinAlgError("non-finite cone scaling")
        self._M = sp.csr_matrix((mvals, (self._m_rows, self._m_cols)), shape=(c.m, self.n))
        self._Mt = self._M.T.tocsr()
        zoff = self._zoff
        rows = np.concatenate([self._rows_static, self._m_rows + zoff, self._m_cols])
        cols = np.concatenate([self._cols_static, self._m_cols, self._m_rows + zoff])
        delta = self.delta
        for _ in range(6):
            diag = np.concatenate([np.full(self.n, delta), np.full(self.m, -delta),
                                   np.full(c.m, -1.0)])
            vals = np.concatenate([self._vals_static, diag, mvals, mvals])
            try:
                if self.dense:
                    K = sp.coo_matrix((vals, (rows, cols)), shape=(self.N, self.N)).toarray()
                    lu = sla.lu_factor(K, check_finite=True)
                    if np.min(np.abs(np.diag(lu[0]))) == 0.0:
                        raise RuntimeError("singular factor")
                    self._lu = ("dense", lu)
                else:
                    self._lu = self._sparse_factor(sp.csc_matrix((vals, (rows, cols)),
                                                                 shape=(self.N, self.N)))
                return
            except RuntimeError:
                delta *= 100.0
        raise np.linalg.LinAlgError("KKT factorization failed")

    def _sparse_factor(self, K):
        # the pattern never changes, so the LDL' symbolic analysis is reused
        try:
            if self._ldl is None:
                self._ldl = qdldl.Solver(K)
            else:
                self._ldl.update(K)
            return ("ldl", self._ldl)
        except RuntimeError:
            # zero pivot in the unpivoted LDL'; fall back to a pivoting LU
            self._ldl = None
            return ("sparse", spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01,
                                        options={"SymmetricMode": True}))

    def _raw_solve(self, rhs):
        kind, lu = self._lu
        if kind == "dense":
            return sla.lu_solve(lu, rhs, check_finite=False)
        return lu.solve(rhs)

    def _matvec(self, v):
        n, zoff = self.n, self._zoff
        x, y, zt = v[:n], v[n:zoff], v[zoff:]
        return np.concatenate([self.At @ y + self._Mt @ zt, self.A @ x, self._M @ x - zt])

    def solve_reduced(self, rhs):
        sol = self._raw_solve(rhs)
        scale = 1.0 + np.max(np.abs(rhs))
        res = rhs - self._matvec(sol)
        err = np.max(np.abs(res))
        for _ in range(self.refine):
            if err <= 1e-14 * scale:
                break
            cand = sol + self._raw_solve(res)
            cres = rhs - self._matvec(cand)
            cerr = np.max(np.abs(cres))
            if cerr >= err:
                break
            sol, res, err = cand, cres, cerr
        return sol

    def solve(self, r1, r2, r3, scaling: _Scaling | None):
        """Solve [[0, A', G'], [A, 0, 0], [G, 0, -W'W]] [x; y; z] = [r1; r2; r3]."""
        winv = (lambda v: scaling.apply(v, True)) if scaling is not None else (lambda v: v)
        sol = self.solve_reduced(np.concatenate([r1, r2, winv(r3)]))
        n, zoff = self.n, self._zoff
        return sol[:n], sol[n:zoff], winv(sol[zoff:])


def _inf_norm(v) -> float:
    return float(np.max(np.abs(v))) if v.size else 0.0


def solve(program: ConicProgram, settings: SolverSettings | None = None) -> ConicSolution:
    """Solve a conic program to optimality or certified infeasibility."""
    settings = settings or SolverSettings()
    return _IPM(program, settings).run()


def _equilibrate(A: sp.csr_matrix, program: ConicProgram, passes: int = 15):
    """Ruiz scaling: row factors ``D`` and variable factors ``E`` (uniform per SOC block)."""
    m, n = A.shape
    D = np.ones(m)
    E = np.ones(n)
    if A.nnz == 0:
        return D, E
    soc = program.cones.soc_blocks
    M = abs(A).tocsr()
    for _ in range(passes):
        S = sp.diags(D) @ M @ sp.diags(E)
        rows = S.max(axis=1).toarray().ravel()
        cols = S.max(axis=0).toarray().ravel()
        for st, d in soc:
            cols[st:st + d] = cols[st:st + d].max()
        rows[rows == 0] = 1.0
        cols[cols == 0] = 1.0
        if max(abs(rows - 1).max(), abs(cols - 1).max()) < 1e-3:
            break
        D /= np.sqrt(rows)
        E /= np.sqrt(cols)
    return np.clip(D, 1e-4, 1e4), np.clip(E, 1e-4, 1e4)


class _IPM:
    """Iterates live in an equilibrated copy of the program.

    Scaled data: ``A' = D A E``, ``b' = D b / bs``, ``c' = E c / cs``, so that
    ``x = bs E x'``, ``y = cs D y'`` and cone duals ``z = cs z' / E``.
    Termination uses residuals of the original program.
    """

    def __init__(self, program: ConicProgram, settings: SolverSettings):
        self.p = program
        self.st = settings
        A0 = program.A.tocsr()
        self.A0 = A0
        self.At0 = A0.T.tocsr()
        self.b0 = np.array(program.b)
        self.c0 = np.array(program.c)
        D, E = _equilibrate(A0, program)
        self.D, self.E = D, E
        b = D * self.b0
        c = E * self.c0
        self.bs = max(1.0, _inf_norm(b))
        self.cs = max(1.0, _inf_norm(c))
        self.A = (sp.diags(D) @ A0 @ sp.diags(E)).tocsr()
        self.At = self.A.T.tocsr()
        self.b = b / self.bs
        self.c = c / self.cs
        self.n = self.c.size
        self.cones = _Cones(program)
        self.Econe = E[self.cones.index]
        self.kkt = _KKT(self.A, self.cones, self.n, settings)

    def _unscale(self, x, y, s, z):
        return (self.bs * self.E * x, self.cs * self.D * y,
                self.bs * self.Econe * s, self.cs * z / self.Econe)

    # G x = -x[idx], G' z = scatter(-z)
    def _Gx(self, x):
        return -x[self.cones.index]

    def _Gtz(self, z):
        out = np.zeros(self.n)
        np.add.at(out, self.cones.index, -z)
        return out

    def _finish(self, status, x, y, s, z, tau, kappa, it, res=None, info=None):
        idx = self.cones.index
        if status is Status.PRIMAL_INFEASIBLE:
            scale = -self.bs * float(self.b @ y)
            xs = self.E * x
            ye = self.D * y / scale
            ze = z / self.Econe / scale
        elif status is Status.UNBOUNDED:
            scale = -self.cs * float(self.c @ x)
            xs = self.E * x / scale
            ye = self.D * y
            ze = z / self.Econe
        else:
            xs, ye, _, ze = self._unscale(x / tau, y / tau, s / tau, z / tau)
        zstd = np.zeros(self.n)
        np.add.at(zstd, idx, ze)
        ystd = -ye
        if status is Status.PRIMAL_INFEASIBLE:
            pobj, dobj = np.inf, np.inf
        elif status is Status.UNBOUNDED:
            pobj, dobj = -np.inf, -np.inf
        else:
            pobj = float(self.c0 @ xs) + self.p.offset
            dobj = float(self.b0 @ ystd) + self.p.offset
        res = res or Residuals(np.inf, np.inf, np.inf)
        info = dict(info or {})
        info.update(tau=float(tau), kappa=float(kappa))
        return ConicSolution(status, xs, ystd, zstd, pobj, dobj, res, it, info)

    def _cone_ok(self, x, tau, tol):
        # the reported x must itself lie in the cone, not only the slack s
        return self.p.cones.cone_violation(self.bs * self.E * x / tau) <= tol

    def _residual_report(self, x, y, s, z, tau):
        xo, yo, so, zo = self._unscale(x / tau, y / tau, s / tau, z / tau)
        idx = self.cones.index
        Ax = self.A0 @ xo if self.b0.size else np.zeros(0)
        pres = max(_inf_norm(Ax - self.b0) / (1.0 + max(_inf_norm(Ax), _inf_norm(self.b0))),
                   _inf_norm(so - xo[idx]) / (1.0 + _inf_norm(xo[idx])))
        Aty = self.At0 @ yo
        Gtz = np.zeros(self.n)
        np.add.at(Gtz, idx, -zo)
        dres = _inf_norm(Aty + Gtz + self.c0) / (
            1.0 + max(_inf_norm(Aty), _inf_norm(Gtz), _inf_norm(self.c0)))
        pobj = float(self.c0 @ xo)
        dobj = float(-self.b0 @ yo)
        gap = abs(pobj - dobj) / max(1.0, min(abs(pobj), abs(dobj)))
        return Residuals(pres, dres, gap)

    def _initial_point(self):
        c, cones = self.c, self.cones
        self.kkt.factor(None)
        zeros_m = np.zeros(cones.m)
        # primal: least-squares slack
        x, _, zt = self.kkt.solve(np.zeros(self.n), self.b, zeros_m, None)
        s = -zt
        a = cones.interior_shift(s)
        if a >= 0:
            s = s + (1.0 + a) * cones.e
        # dual
        _, y, z = self.kkt.solve(-c, np.zeros(self.b.size), zeros_m, None)
        a = cones.interior_shift(z)
        if a >= 0:
            z = z + (1.0 + a) * cones.e
        return x, y, s, z, 1.0, 1.0

    def run(self) -> ConicSolution:
        st, cones = self.st, self.cones
        A, At, b, c = self.A, self.At, self.b, self.c
        tol = st.tolerance
        try:
            x, y, s, z, tau, kappa = self._initial_point()
        except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
            zero = np.zeros(self.n)
            return self._finish(Status.NUMERICAL_FAILURE, zero, np.zeros(b.size), np.zeros(cones.m),
                                np.zeros(cones.m), 1.0, 0.0, 0, info={"error": str(exc)})
        best = None
        res = None
        for it in range(st.max_iterations + 1):
            rx = -(At @ y + self._Gtz(z) + c * tau)
            ry = A @ x - b * tau
            rz = s + self._Gx(x)
            rt = kappa + c @ x + b @ y
            mu = (s @ z + tau * kappa) / (cones.degree + 1)

            res = self._residual_report(x, y, s, z, tau)
            if best is None or res.max() < best[0].max():
                best = (res, x.copy(), y.copy(), s.copy(), z.copy(), tau, kappa)
            if st.verbose:
                log.info("it %3d pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e mu %.2e",
                         it, res.primal, res.dual, res.gap, tau, kappa, mu)
            if res.primal <= tol and res.dual <= tol and res.gap <= tol and self._cone_ok(x, tau, tol):
                return self._finish(Status.OPTIMAL, x, y, s, z, tau, kappa, it, res)

            by = float(b @ y)
            if by < 0:
                cert = _inf_norm(At @ y + self._Gtz(z)) / (-by)
                if cert <= st.infeasibility_tolerance:
                    return self._finish(Status.PRIMAL_INFEASIBLE, x, y / -by, s, z / -by,
                                        tau, kappa, it, res)
            cx = float(c @ x)
            if cx < 0:
                ray = max(_inf_norm(A @ x) if b.size else 0.0, _inf_norm(s + self._Gx(x))) / (-cx)
                if ray <= st.infeasibility_tolerance:
                    return self._finish(Status.UNBOUNDED, x / -cx, y, s / -cx, z, tau, kappa,
                                        it, res)
            if it == st.max_iterations:
                break

            try:
                step = self._step(x, y, s, z, tau, kappa, rx, ry, rz, rt, mu)
            except (RuntimeError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                return self._stall(Status.NUMERICAL_FAILURE, best, it, str(exc))
            if step is None:
                return self._stall(Status.NUMERICAL_FAILURE, best, it, "step failure")
            x, y, s, z, tau, kappa = step
            if not (np.isfinite(tau) and np.isfinite(kappa)):
                return self._stall(Status.NUMERICAL_FAILURE, best, it, "non-finite iterate")
        return self._stall(Status.ITERATION_LIMIT, best, st.max_iterations, "iteration limit")

    def _stall(self, status, best, it, msg):
        res, x, y, s, z, tau, kappa = best
        return self._finish(status, x, y, s, z, tau, kappa, it, res, {"message": msg})

    def _step(self, x, y, s, z, tau, kappa, rx, ry, rz, rt, mu):
        cones, c, b = self.cones, self.c, self.b
        W = cones.scaling(s, z)
        lam = W.lam
        self.kkt.factor(W)
        x1, y1, z1 = self.kkt.solve(-c, b, np.zeros(cones.m), W)
        denom_base = c @ x1 + b @ y1

        def direction(dx, dy, dz, dt, ds, dk):
            t = W.apply(cones.jdiv(lam, ds))
            x2, y2, z2 = self.kkt.solve(dx, -dy, -dz - t, W)
            dtau = (-dt - dk / tau - (c @ x2 + b @ y2)) / (denom_base - kappa / tau)
            Dx = x2 + dtau * x1
            Dy = y2 + dtau * y1
            Dz = z2 + dtau * z1
            # from G Dx + Ds = -dz rather than the complementarity row, so the
            # coupling residual s - x decays exactly even when W is extreme
            Ds = -dz + Dx[self.cones.index]
            Dk = (dk - kappa * dtau) / tau
            return Dx, Dy, Dz, dtau, Ds, Dk

        def max_alpha(Ds, Dz, Dt, Dk):
            a = min(cones.max_step(s, Ds), cones.max_step(z, Dz))
            if Dt < 0:
                a = min(a, -tau / Dt)
            if Dk < 0:
                a = min(a, -kappa / Dk)
            return a

        # predictor
        ds_a = -cones.jprod(lam, lam)
        dk_a = -tau * kappa
        Dxa, Dya, Dza, Dta, Dsa, Dka = direction(rx, ry, rz, rt, ds_a, dk_a)
        alpha_a = min(1.0, max_alpha(Dsa, Dza, Dta, Dka))
        sigma = min(1.0, max(0.0, (1.0 - alpha_a))) ** 3

        # corrector
        corr = cones.jprod(W.apply(Dsa, inverse=True), W.apply(Dza))
        ds = ds_a + sigma * mu * cones.e - corr
        dk = dk_a + sigma * mu - Dta * Dka
        f = 1.0 - sigma
        Dx, Dy, Dz, Dt, Ds, Dk = direction(f * rx, f * ry, f * rz, f * rt, ds, dk)
        alpha = min(1.0, self.st.step_fraction * max_alpha(Ds, Dz, Dt, Dk))
        if not np.isfinite(alpha) or alpha <= 1e-12:
            return None
        return (x + alpha * Dx, y + alpha * Dy, s + alpha * Ds, z + alpha * Dz,
                tau + alpha * Dt, kappa + alpha * Dk)
