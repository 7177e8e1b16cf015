"""Fix variables and propagate the consequences through singleton and forcing rows.

Fixing a binary at a bound leaves rows such as ``u + s = 1`` with a single
free entry, or ``p + s = 0`` with ``p, s >= 0``. Interior-point methods do
poorly on such implicit equalities, so they are eliminated before solving.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .program import ConeKind, ConeSpec, ConicProgram
from .solver import ConicSolution, Residuals, SolverSettings, Status, solve

_FREE, _NONNEG, _SOC = 0, 1, 2


@dataclass(frozen=True, eq=False)
class FixedProgram:
    """A program with some variables substituted out.

    ``program`` is None when propagation alone proved infeasibility.
    """

    original: ConicProgram
    program: ConicProgram | None
    kept_vars: np.ndarray
    kept_rows: np.ndarray
    values: np.ndarray
    reason: str = ""

    @property
    def infeasible(self) -> bool:
        return self.program is None

    def lift(self, x_reduced) -> np.ndarray:
        x = self.values.copy()
        x[self.kept_vars] = x_reduced
        return x


def _infeasible(program, values, reason):
    empty = np.zeros(0, dtype=np.int64)
    return FixedProgram(program, None, empty, empty, values, reason)


def fix_variables(program: ConicProgram, idx, vals, tol: float = 1e-9) -> FixedProgram:
    """Substitute ``x[idx] = vals`` and propagate implied fixings."""
    n = program.n_vars
    kind = program.cones.kind_of
    values = np.full(n, np.nan)
    idx = np.asarray(idx, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if np.any(kind[idx] == _SOC):
        raise ValueError("cannot fix second-order cone variables")
    values[idx] = vals
    if np.any((kind[idx] == _NONNEG) & (vals < -tol)):
        return _infeasible(program, values, "fixed value outside nonnegative cone")
    A = program.A.tocsc()
    b = program.b
    rows_alive = np.ones(program.n_rows, dtype=bool)

    while True:
        fixed = ~np.isnan(values)
        rhs = b - A[:, fixed] @ values[fixed]
        Au = (A[:, ~fixed]).tocsr()
        Au.eliminate_zeros()
        cols = np.flatnonzero(~fixed)
        cnt = np.diff(Au.indptr)
        scale = tol * (1.0 + np.abs(b))

        empty = rows_alive & (cnt == 0)
        if np.any(np.abs(rhs[empty]) > 1e3 * scale[empty]):
            return _infeasible(program, values, "row with no free variables violated")
        rows_alive &= cnt > 0

        progress = False
        entry_row = np.repeat(np.arange(Au.shape[0]), cnt)
        entry_var = cols[Au.indices]
        # singleton rows; a variable hit by several keeps the first and the
        # rest are re-checked as empty rows on the next pass
        single = np.flatnonzero(rows_alive & (cnt == 1))
        if single.size:
            k = Au.indptr[single]
            js = entry_var[k]
            ok = kind[js] != _SOC
            single, k, js = single[ok], k[ok], js[ok]
            js, first = np.unique(js, return_index=True)
            single, k = single[first], k[first]
            v = rhs[single] / Au.data[k]
            nonneg = kind[js] == _NONNEG
            bad = nonneg & (v < -1e3 * scale[single])
            if np.any(bad):
                r = int(single[np.argmax(bad)])
                return _infeasible(program, values, f"singleton row {r} forces negative value")
            v = np.where(nonneg, np.maximum(v, 0.0), v)
            values[js] = v
            rows_alive[single] = False
            progress = js.size > 0
        # forcing rows: all nonnegative vars with one coefficient sign and rhs 0
        alive = rows_alive & (cnt > 1)
        if np.any(alive):
            m_rows = Au.shape[0]
            not_nn = np.bincount(entry_row, weights=(kind[entry_var] != _NONNEG), minlength=m_rows)
            n_pos = np.bincount(entry_row, weights=(Au.data > 0), minlength=m_rows)
            sign = np.where(n_pos == cnt, 1.0, np.where(n_pos == 0, -1.0, 0.0))
            cand = alive & (not_nn == 0) & (sign != 0)
            srhs = sign * rhs
            if np.any(cand & (srhs < -1e3 * scale)):
                r = int(np.flatnonzero(cand & (srhs < -1e3 * scale))[0])
                return _infeasible(program, values, f"forcing row {r} infeasible")
            force = cand & (srhs <= scale)
            if np.any(force):
                values[entry_var[force[entry_row]]] = 0.0
                rows_alive[force] = False
                progress = True
        if not progress:
            break

    fixed = ~np.isnan(values)
    kept_vars = np.flatnonzero(~fixed)
    rhs = b - A[:, fixed] @ values[fixed]
    # rows whose free part vanished were checked above; drop them
    Au = A[:, kept_vars].tocsr()
    Au.eliminate_zeros()
    cnt = np.diff(Au.indptr)
    bad = (cnt == 0) & (np.abs(rhs) > 1e3 * tol * (1.0 + np.abs(b)))
    if np.any(bad):
        return _infeasible(program, values, "row with no free variables violated")
    kept_rows = np.flatnonzero(cnt > 0)

    pairs = []
    for k, blk in enumerate(program.cones.blocks):
        lo, hi = program.cones.offsets[k], program.cones.offsets[k + 1]
        keep = int(np.count_nonzero(~fixed[lo:hi]))
        if blk.kind is ConeKind.SOC:
            pairs.append((blk.kind, blk.dim))
        elif keep:
            pairs.append((blk.kind, keep))
    names = None
    if program.names is not None:
        names = tuple(program.names[j] for j in kept_vars)
    offset = program.offset + float(program.c[fixed] @ values[fixed])
    reduced = ConicProgram(
        program.c[kept_vars],
        sp.csr_matrix(Au[kept_rows]),
        rhs[kept_rows],
        ConeSpec.merged(pairs) if pairs else ConeSpec(()),
        names,
        offset,
    )
    return FixedProgram(program, reduced, kept_vars, kept_rows, values)


def solve_fixed(program: ConicProgram, idx, vals,
                settings: SolverSettings | None = None) -> ConicSolution:
    """Solve ``program`` with ``x[idx] = vals``; the solution is in full coordinates."""
    fp = fix_variables(program, idx, vals)
    m = program.n_rows
    if fp.infeasible:
        nan = np.full(program.n_vars, np.nan)
        return ConicSolution(Status.PRIMAL_INFEASIBLE, nan, np.zeros(m), np.zeros(program.n_vars),
                             np.inf, np.inf, Residuals(np.inf, np.inf, np.inf), 0,
                             {"presolve": fp.reason})
    red = fp.program
    if red.n_vars == 0:
        x = fp.values.copy()
        obj = program.objective(x)
        return ConicSolution(Status.OPTIMAL, x, np.zeros(m), program.c.copy(), obj, obj,
                             Residuals(0.0, 0.0, 0.0), 0, {"presolve": "all fixed"})
    sol = solve(red, settings)
    x = fp.lift(sol.x)
    y = np.zeros(m)
    y[fp.kept_rows] = sol.y
    z = program.c - program.A.T @ y
    info = dict(sol.info)
    info["reduced_vars"] = red.n_vars
    return ConicSolution(sol.status, x, y, z, sol.objective, sol.dual_objective,
                         sol.residuals, sol.iterations, info)
