"""Branch-and-bound over conic relaxations for programs with binary variables."""

from __future__ import annotations

import enum
import heapq
import itertools
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProgram, ConicSolution, SolverSettings, Status, solve
from .conic.presolve import solve_fixed

MAX_BRUTE_FORCE_BINARIES = 25


class MipStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    TIME_LIMIT = "TimeLimit"
    NODE_LIMIT = "NodeLimit"
    INFEASIBLE = "Infeasible"


def _has_unit_upper_bound(program: ConicProgram, j: int) -> bool:
    """True if some row reads ``a*x_j + (same-sign nonneg terms) = a``."""
    A = program.A
    col = A.getcol(j).tocoo()
    kind = program.cones.kind_of
    for r, a in zip(col.row, col.data):
        if abs(program.b[r] - a) > 1e-12 * max(1.0, abs(a)):
            continue
        lo, hi = A.indptr[r], A.indptr[r + 1]
        others = [(c, v) for c, v in zip(A.indices[lo:hi], A.data[lo:hi]) if c != j]
        if all(kind[c] == 1 and v * a > 0 for c, v in others):
            return True
    return False


@dataclass(frozen=True, eq=False)
class MixedIntegerConicProgram:
    """A conic program plus the indices of its binary variables.

    Each binary must be a nonnegative variable whose upper bound of one is
    already written into the base program as a row ``x + slack = 1``.
    """

    base: ConicProgram
    binaries: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.binaries, dtype=np.int64).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= self.base.n_vars):
            raise ValueError("binary index out of range")
        if np.unique(idx).size != idx.size:
            raise ValueError("duplicate binary index")
        kind = self.base.cones.kind_of
        for j in idx:
            if kind[j] != 1:
                raise ValueError(f"binary variable {j} must lie in a nonnegative block")
            if not _has_unit_upper_bound(self.base, int(j)):
                raise ValueError(f"binary variable {j} has no x <= 1 row in the base program")
        idx.setflags(write=False)
        object.__setattr__(self, "binaries", idx)

    @property
    def n_binaries(self) -> int:
        return int(self.binaries.size)


@dataclass(frozen=True)
class BnbSettings:
    time_limit: float | None = None
    gap_tolerance: float = 1e-6
    integrality_tolerance: float = 1e-6
    node_limit: int | None = None
    branching: str = "most_fractional"
    seed: int = 0
    conic: SolverSettings = field(default_factory=SolverSettings)
    trace_path: str | None = None

    def __post_init__(self):
        if self.gap_tolerance < 0:
            raise ValueError("gap tolerance must be >= 0")
        if self.time_limit is not None and self.time_limit < 0:
            raise ValueError("time limit must be >= 0")
        if not 0 < self.integrality_tolerance < 0.5:
            raise ValueError("integrality tolerance must lie in (0, 0.5)")
        if self.branching != "most_fractional":
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.node_limit is not None and self.node_limit < 1:
            raise ValueError("node limit must be >= 1")


def relative_gap(upper: float, lower: float) -> float:
    if not np.isfinite(upper) or not np.isfinite(lower):
        return float("inf")
    return (upper - lower) / max(abs(upper), 1e-9)


@dataclass
class BnbResult:
    status: MipStatus
    assignment: np.ndarray | None
    x: np.ndarray | None
    upper_bound: float
    lower_bound: float
    gap: float
    nodes: int
    wall_time: float
    root_bound: float = float("nan")
    warm_start_accepted: bool | None = None
    diagnostics: list[str] = field(default_factory=list)
    incumbent_history: list[tuple[int, float]] = field(default_factory=list)
    bound_history: list[tuple[int, float]] = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.upper_bound


def evaluate_assignment(mip: MixedIntegerConicProgram, assignment,
                        settings: SolverSettings | None = None) -> ConicSolution:
    """Solve the base program with every binary fixed to ``assignment``."""
    values = np.asarray(assignment, dtype=float).ravel()
    if values.size != mip.n_binaries:
        raise ValueError(f"assignment has {values.size} entries, expected {mip.n_binaries}")
    if np.any((values != 0.0) & (values != 1.0)):
        raise ValueError("assignment entries must be 0 or 1")
    return solve_fixed(mip.base, mip.binaries, values, settings)


class _PureSplit:
    """Binaries that touch nothing but rows of binaries and private slacks.

    Such a binary changes only the cost and the feasibility of those rows,
    so every assignment of the remaining (coupled) binaries needs one conic
    solve: the one with the cheapest feasible completion of the pure part.
    """

    def __init__(self, mip: "MixedIntegerConicProgram"):
        P = mip.base
        n = P.n_vars
        binaries = np.asarray(mip.binaries)
        is_bin = np.zeros(n, dtype=bool)
        is_bin[binaries] = True
        csc = P.A.tocsc()
        col_count = np.diff(csc.indptr)
        private = (P.cones.kind_of == 1) & (col_count == 1) & (P.c == 0) & ~is_bin
        csr = P.A.tocsr()
        n_rows = csr.shape[0]
        pure_row = np.ones(n_rows, dtype=bool)
        for r in range(n_rows):
            cols = csr.indices[csr.indptr[r]:csr.indptr[r + 1]]
            other = cols[~is_bin[cols]]
            pure_row[r] = bool(np.all(private[other]))
        coupled = np.zeros(n, dtype=bool)
        coupled[binaries[P.cones.kind_of[binaries] != 1]] = True
        for r in np.flatnonzero(~pure_row):
            cols = csr.indices[csr.indptr[r]:csr.indptr[r + 1]]
            coupled[cols[is_bin[cols]]] = True
        pos = np.arange(binaries.size)
        self.coupled = pos[coupled[binaries]]
        self.pure = pos[~coupled[binaries]]
        rows = np.flatnonzero(pure_row)
        sub = csr[rows]
        self.rhs = P.b[rows]
        self.a_coupled = sub[:, binaries[self.coupled]].toarray()
        self.a_pure = sub[:, binaries[self.pure]].toarray()
        self.cost_pure = P.c[binaries[self.pure]]
        # slack sign pattern per row: 0 none, 1 all +, -1 all -, 2 mixed
        slack = sub.multiply(private[None, :]).tocsr()
        self.sign = np.zeros(rows.size, dtype=np.int8)
        for k in range(rows.size):
            vals = slack.data[slack.indptr[k]:slack.indptr[k + 1]]
            vals = vals[vals != 0]
            if vals.size:
                self.sign[k] = 1 if np.all(vals > 0) else (-1 if np.all(vals < 0) else 2)

    def cheapest_completion(self, coupled_bits: np.ndarray, tol: float = 1e-9):
        if self.pure.size == 0:
            resid = self.rhs - self.a_coupled @ coupled_bits
            return np.zeros(0) if self._ok(resid[None, :], tol)[0] else None
        base = self.rhs - self.a_coupled @ coupled_bits
        best, best_cost = None, np.inf
        p = self.pure.size
        chunk = 1 << min(p, 16)
        for lo in range(0, 1 << p, chunk):
            codes = np.arange(lo, min(lo + chunk, 1 << p))
            bits = ((codes[:, None] >> np.arange(p - 1, -1, -1)) & 1).astype(float)
            ok = self._ok(base[None, :] - bits @ self.a_pure.T, tol)
            if not ok.any():
                continue
            costs = np.where(ok, bits @ self.cost_pure, np.inf)
            k = int(np.argmin(costs))
            if costs[k] < best_cost:
                best, best_cost = bits[k], costs[k]
        return best

    def _ok(self, resid: np.ndarray, tol: float) -> np.ndarray:
        scale = tol * (1.0 + np.abs(self.rhs))
        sign = self.sign[None, :]
        ok = np.where(sign == 0, np.abs(resid) <= scale, True)
        ok &= np.where(sign == 1, resid >= -scale, True)
        ok &= np.where(sign == -1, resid <= scale, True)
        return ok.all(axis=1)


def brute_force(mip: MixedIntegerConicProgram,
                settings: SolverSettings | None = None) -> BnbResult:
    """Best of all binary assignments; exponential, for testing only.

    Assignments that differ only in pure binaries (see :class:`_PureSplit`)
    share one conic solve, which keeps the enumeration exact and cheap.
    """
    n = mip.n_binaries
    if n > MAX_BRUTE_FORCE_BINARIES:
        raise ValueError(f"{n} binaries exceeds the enumeration guard of {MAX_BRUTE_FORCE_BINARIES}")
    t0 = time.perf_counter()
    split = _PureSplit(mip)
    best, best_sol, best_assign = np.inf, None, None
    for bits in itertools.product((0.0, 1.0), repeat=split.coupled.size):
        coupled = np.array(bits)
        pure = split.cheapest_completion(coupled)
        if pure is None:
            continue
        assign = np.zeros(n)
        assign[split.coupled] = coupled
        assign[split.pure] = pure
        sol = evaluate_assignment(mip, assign, settings)
        if sol.status is Status.OPTIMAL and sol.objective < best:
            best, best_sol, best_assign = sol.objective, sol, assign
    elapsed = time.perf_counter() - t0
    count = 1 << n
    if best_sol is None:
        return BnbResult(MipStatus.INFEASIBLE, None, None, np.inf, np.inf, np.inf, count, elapsed)
    return BnbResult(MipStatus.OPTIMAL, best_assign, best_sol.x, best, best, 0.0, count, elapsed)


@dataclass(order=True)
class _Node:
    key: tuple
    id: int = field(compare=False)
    depth: int = field(compare=False)
    bound: float = field(compare=False)
    fixed: dict = field(compare=False)
    x: np.ndarray | None = field(compare=False)


class _Search:
    def __init__(self, mip, settings, warm_start):
        self.mip = mip
        self.settings = settings
        self.t0 = time.perf_counter()
        self.upper = np.inf
        self.best_lower = -np.inf
        self.best_x = None
        self.best_assign = None
        self.nodes = 0
        self.next_id = 0
        self.heap: list[_Node] = []
        self.diagnostics: list[str] = []
        self.incumbents: list[tuple[int, float]] = []
        self.bounds: list[tuple[int, float]] = []
        self.trace = open(settings.trace_path, "w") if settings.trace_path else None
        self.warm_accepted = None
        if warm_start is not None:
            self._try_warm_start(warm_start)

    def _emit(self, node_id, depth, bound, event):
        if self.trace is None:
            return
        rec = {"node": node_id, "depth": depth, "lower_bound": _num(bound),
               "incumbent": _num(self.upper), "event": event,
               "elapsed_s": time.perf_counter() - self.t0}
        self.trace.write(json.dumps(rec) + "\n")

    def _try_warm_start(self, warm_start):
        values = np.asarray(warm_start, dtype=float).ravel()
        if values.size != self.mip.n_binaries:
            raise ValueError(f"warm start has {values.size} entries, expected {self.mip.n_binaries}")
        sol = evaluate_assignment(self.mip, np.round(values), self.settings.conic)
        if sol.status is Status.OPTIMAL:
            self.warm_accepted = True
            self._accept(np.round(values), sol)
            self._emit(-1, 0, np.nan, "warm_start")
        else:
            self.warm_accepted = False
            self.diagnostics.append(f"warm start discarded: {sol.status.value}")

    def _accept(self, assign, sol):
        if sol.objective < self.upper:
            self.upper = sol.objective
            self.best_x = sol.x
            self.best_assign = assign.astype(float)
            self.incumbents.append((self.nodes, self.upper))

    def _elapsed(self):
        return time.perf_counter() - self.t0

    def _out_of_budget(self):
        s = self.settings
        if s.time_limit is not None and self._elapsed() >= s.time_limit:
            return MipStatus.TIME_LIMIT
        if s.node_limit is not None and self.nodes >= s.node_limit:
            return MipStatus.NODE_LIMIT
        return None

    def _prunable(self, bound):
        if not np.isfinite(self.upper):
            return False
        return bound >= self.upper - self.settings.gap_tolerance * max(abs(self.upper), 1e-9)

    def _solve_node(self, fixed):
        idx = np.fromiter(fixed.keys(), dtype=np.int64, count=len(fixed))
        vals = np.fromiter(fixed.values(), dtype=float, count=len(fixed))
        self.nodes += 1
        return solve_fixed(self.mip.base, idx, vals, self.settings.conic)

    def _branch_index(self, x, fixed):
        """Most fractional free binary (lowest index on ties), or None if integral."""
        tol = self.settings.integrality_tolerance
        best_j, best_frac = None, tol
        for j in self.mip.binaries:
            if j in fixed:
                continue
            v = x[j]
            frac = 0.5 if not np.isfinite(v) else min(v - np.floor(v), np.ceil(v) - v)
            if frac > best_frac + 1e-15:
                best_j, best_frac = int(j), frac
        return best_j

    def _process(self, fixed, depth, parent_bound):
        """Solve one node and either fathom it or queue it for branching."""
        node_id = self.next_id
        self.next_id += 1
        sol = self._solve_node(fixed)
        if sol.status is Status.PRIMAL_INFEASIBLE:
            self._emit(node_id, depth, np.inf, "infeasible")
            return sol
        if sol.status is Status.OPTIMAL:
            bound = max(parent_bound, sol.objective)
            x = sol.x
        elif sol.status is Status.UNBOUNDED:
            bound, x = -np.inf, sol.x
            self.diagnostics.append(f"node {node_id}: relaxation unbounded")
        else:
            bound = parent_bound
            x = sol.x if np.all(np.isfinite(sol.x)) else np.full(self.mip.base.n_vars, np.nan)
            self.diagnostics.append(f"node {node_id}: {sol.status.value}, using parent bound")
        if self._prunable(bound):
            self._emit(node_id, depth, bound, "pruned")
            return sol
        j = self._branch_index(x, fixed)
        if j is None and sol.status is Status.OPTIMAL:
            assign = np.round(x[self.mip.binaries]) + 0.0
            check = evaluate_assignment(self.mip, assign, self.settings.conic)
            if check.status is Status.OPTIMAL:
                self._accept(assign, check)
                self._emit(node_id, depth, bound, "integral")
                return sol
            self.diagnostics.append(f"node {node_id}: rounded solution failed re-verification")
            j = next((int(k) for k in self.mip.binaries if int(k) not in fixed), None)
        elif j is None:
            j = next((int(k) for k in self.mip.binaries if int(k) not in fixed), None)
        if j is None:
            self._emit(node_id, depth, bound, "dropped")
            return sol
        heapq.heappush(self.heap, _Node((bound, -depth, node_id), node_id, depth, bound, fixed, x))
        self._emit(node_id, depth, bound, "queued")
        return sol

    def lower_bound(self):
        current = min(self.upper, self.heap[0].bound) if self.heap else self.upper
        # re-verified incumbents can land a solver tolerance below their node
        # bound, so keep the reported bound monotone
        self.best_lower = max(self.best_lower, current)
        return self.best_lower

    def run(self) -> BnbResult:
        root = self._process({}, 0, -np.inf)
        root_bound = root.objective if root.status is Status.OPTIMAL else np.nan
        if root.status is Status.PRIMAL_INFEASIBLE and self.best_x is None:
            return self._result(MipStatus.INFEASIBLE, root_bound)
        self.bounds.append((self.nodes, self.lower_bound()))
        status = None
        while self.heap:
            if relative_gap(self.upper, self.lower_bound()) <= self.settings.gap_tolerance:
                break
            status = self._out_of_budget()
            if status is not None:
                break
            node = heapq.heappop(self.heap)
            if self._prunable(node.bound):
                continue
            j = self._branch_index(node.x, node.fixed)
            if j is None:
                j = next(int(k) for k in self.mip.binaries if int(k) not in node.fixed)
            for val in (0.0, 1.0):
                child = dict(node.fixed)
                child[j] = val
                self._process(child, node.depth + 1, node.bound)
            self.bounds.append((self.nodes, self.lower_bound()))
        if status is None:
            status = MipStatus.OPTIMAL if self.best_x is not None else MipStatus.INFEASIBLE
        return self._result(status, root_bound)

    def _result(self, status, root_bound):
        if self.trace is not None:
            self.trace.close()
        lb = min(self.lower_bound(), self.upper) if self.best_x is not None or self.heap else np.inf
        return BnbResult(status, self.best_assign, self.best_x, self.upper, lb,
                         relative_gap(self.upper, lb), self.nodes, self._elapsed(), root_bound,
                         self.warm_accepted, self.diagnostics, self.incumbents, self.bounds)


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def solve_mip(mip: MixedIntegerConicProgram, settings: BnbSettings | None = None,
              warm_start=None) -> BnbResult:
    """Best-bound branch-and-bound; ``warm_start`` seeds the incumbent if feasible."""
    return _Search(mip, settings or BnbSettings(), warm_start).run()


def root_relaxation(mip: MixedIntegerConicProgram, settings: SolverSettings | None = None):
    return solve(mip.base, settings)
