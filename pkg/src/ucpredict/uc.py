"""Relaxed mixed-integer SOCP unit commitment.

Variables are stored relative to their lower bounds so that fixing a
commitment to zero turns the capacity rows into forcing rows:

* active output ``p = p_min * u + p_above`` with ``0 <= p_above <= (p_max - p_min) u``
* reactive output ``q = q_min * u + q_above`` likewise
* squared voltage ``nu = v_min^2 + nu_above`` with ``nu_above <= v_max^2 - v_min^2``
* line products ``e = e_shift - E`` and ``f = f_shift - E`` with ``E = v_max_i v_max_j``

One (e, f) pair exists per line and hour. Seen from the far end, e keeps its
sign and f flips. Units start off with zero output before the first hour.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bnb import MixedIntegerConicProgram
from .conic import ProgramBuilder
from .grid import GridSpec, ScenarioInput, Strategy


@dataclass(frozen=True)
class UcOptions:
    corrective_slacks: bool = False
    penalty: float | None = None  # default: 10x the largest production cost

    def penalty_for(self, grid: GridSpec) -> float:
        top = max((g.cost for g in grid.generators), default=0.0)
        pen = 10.0 * top if self.penalty is None else float(self.penalty)
        if self.corrective_slacks and not pen > top:
            raise ValueError(f"slack penalty {pen} must exceed the largest production cost {top}")
        return pen


@dataclass(frozen=True)
class UcVariableMap:
    """Index ranges of each variable family; ``aux`` holds slacks and cone copies."""

    ranges: dict
    n_units: int
    n_buses: int
    n_lines: int
    horizon: int
    n_vars: int
    p_min: np.ndarray
    q_min: np.ndarray
    nu_min: np.ndarray
    ef_bound: np.ndarray
    family_rows: dict = field(default_factory=dict)

    def block(self, x, name: str) -> np.ndarray:
        lo, hi, shape = self.ranges[name]
        return np.asarray(x[lo:hi]).reshape(shape)

    def index(self, name: str) -> np.ndarray:
        lo, hi, shape = self.ranges[name]
        return np.arange(lo, hi).reshape(shape)

    def commitment(self, x) -> np.ndarray:
        return self.block(x, "u")

    def startup(self, x) -> np.ndarray:
        return self.block(x, "v")

    def active_power(self, x) -> np.ndarray:
        return self.p_min[:, None] * self.block(x, "u") + self.block(x, "p_above")

    def reactive_power(self, x) -> np.ndarray:
        return self.q_min[:, None] * self.block(x, "u") + self.block(x, "q_above")

    def squared_voltage(self, x) -> np.ndarray:
        return self.nu_min[:, None] + self.block(x, "nu_above")

    def line_products(self, x) -> tuple[np.ndarray, np.ndarray]:
        e = self.block(x, "e_shift") - self.ef_bound[:, None]
        f = self.block(x, "f_shift") - self.ef_bound[:, None]
        return e, f

    @property
    def binaries(self) -> np.ndarray:
        return np.concatenate([self.index("u").ravel(), self.index("v").ravel()])


@dataclass(frozen=True, eq=False)
class UcModel:
    mip: MixedIntegerConicProgram
    varmap: UcVariableMap
    grid: GridSpec
    options: UcOptions

    def summary(self) -> str:
        return model_summary(self)


class _Families:
    """Counts rows added per constraint family."""

    def __init__(self, builder):
        self.builder = builder
        self.rows: dict[str, int] = {}

    def add(self, family: str, *args, **kw):
        before = self.builder.n_rows
        out = self.builder.add_constraint(*args, **kw) if family != "cone" else None
        self.rows[family] = self.rows.get(family, 0) + self.builder.n_rows - before
        return out

    def cone(self, family: str, terms):
        before = self.builder.n_rows
        out = self.builder.add_soc_constraint(terms, family)
        self.rows[family] = self.rows.get(family, 0) + self.builder.n_rows - before
        return out


def _commitment_windows(horizon: int, length: int):
    """(t, tau) pairs with tau in (t, t + length - 1] clipped to the horizon."""
    for t in range(horizon):
        for tau in range(t + 1, min(t + length, horizon)):
            yield t, tau


def build_uc(grid: GridSpec, scenario: ScenarioInput, opts: UcOptions | None = None) -> UcModel:
    opts = opts or UcOptions()
    scenario.check_grid(grid)
    penalty = opts.penalty_for(grid)
    M, N, L, T = grid.n_units, grid.n_buses, grid.n_lines, grid.horizon
    gens, lines = grid.generators, grid.lines
    bus_of = {b.id: k for k, b in enumerate(grid.buses)}

    p_min = np.array([g.p_min for g in gens])
    p_max = np.array([g.p_max for g in gens])
    q_min = np.array([g.q_min for g in gens])
    q_max = np.array([g.q_max for g in gens])
    v_lo = np.array([b.v_min for b in grid.buses])
    v_hi = np.array([b.v_max for b in grid.buses])
    nu_min = v_lo ** 2
    ef_bound = np.array([v_hi[bus_of[ln.from_bus]] * v_hi[bus_of[ln.to_bus]] for ln in lines])

    B = ProgramBuilder()
    ranges = {}

    def family(name, shape, kind="nonneg"):
        idx = B.add_variables(int(np.prod(shape)), kind, name)
        ranges[name] = (int(idx[0]) if idx.size else B.n_vars, B.n_vars, shape)
        return idx.reshape(shape)

    u = family("u", (M, T))
    v = family("v", (M, T))
    p_up = family("p_above", (M, T))
    q_up = family("q_above", (M, T))
    nu_up = family("nu_above", (N, T))
    e_sh = family("e_shift", (L, T))
    f_sh = family("f_shift", (L, T))
    if opts.corrective_slacks:
        shed = family("shed", (N, T))
        surplus = family("surplus", (N, T))
        q_pos = family("q_slack_pos", (N, T))
        q_neg = family("q_slack_neg", (N, T))
    structural_end = B.n_vars

    for g, gen in enumerate(gens):
        B.add_cost(u[g], gen.cost * gen.p_min)
        B.add_cost(p_up[g], gen.cost)
        B.add_cost(v[g], gen.startup_cost)
    if opts.corrective_slacks:
        for arr in (shed, surplus, q_pos, q_neg):
            B.add_cost(arr.ravel(), penalty)

    F = _Families(B)
    for g, gen in enumerate(gens):
        for t in range(T):
            F.add("binary_bounds", u[g, t], 1.0, "<=", 1.0)
            F.add("binary_bounds", v[g, t], 1.0, "<=", 1.0)
            F.add("active_capacity", [p_up[g, t], u[g, t]], [1.0, -(p_max[g] - p_min[g])], "<=", 0.0)
            F.add("reactive_capacity", [q_up[g, t], u[g, t]], [1.0, -(q_max[g] - q_min[g])], "<=", 0.0)
            # start-up indicator; u before the horizon is 0
            if t == 0:
                F.add("state_transition", [u[g, 0], v[g, 0]], [1.0, -1.0], "<=", 0.0)
            else:
                F.add("state_transition", [u[g, t], u[g, t - 1], v[g, t]], [1.0, -1.0, -1.0], "<=", 0.0)
        for t, tau in _commitment_windows(T, gen.min_up):
            if t == 0:
                F.add("min_up", [u[g, 0], u[g, tau]], [1.0, -1.0], "<=", 0.0)
            else:
                F.add("min_up", [u[g, t - 1], u[g, t], u[g, tau]], [-1.0, 1.0, -1.0], "<=", 0.0)
        for t, tau in _commitment_windows(T, gen.min_down):
            if t == 0:
                continue  # off before the horizon, so no shut-down at the first hour
            F.add("min_down", [u[g, t - 1], u[g, t], u[g, tau]], [1.0, -1.0, 1.0], "<=", 1.0)
        ramp_gap_up = gen.ramp_up - gen.ramp_startup
        ramp_gap_dn = gen.ramp_down - gen.ramp_startup
        for t in range(T):
            # p_t - p_{t-1} <= r_up u_{t-1} + r_su (1 - u_{t-1})
            idx = [p_up[g, t], u[g, t]]
            coef = [1.0, p_min[g]]
            if t > 0:
                idx += [p_up[g, t - 1], u[g, t - 1]]
                coef += [-1.0, -p_min[g] - ramp_gap_up]
            F.add("ramp_up", idx, coef, "<=", gen.ramp_startup)
            # p_{t-1} - p_t <= r_down u_t + r_su (1 - u_t)
            idx = [p_up[g, t], u[g, t]]
            coef = [-1.0, -p_min[g] - ramp_gap_dn]
            if t > 0:
                idx += [p_up[g, t - 1], u[g, t - 1]]
                coef += [1.0, p_min[g]]
            F.add("ramp_down", idx, coef, "<=", gen.ramp_startup)

    for i in range(N):
        for t in range(T):
            F.add("voltage_bounds", nu_up[i, t], 1.0, "<=", v_hi[i] ** 2 - nu_min[i])
    for k in range(L):
        for t in range(T):
            F.add("product_bounds", e_sh[k, t], 1.0, "<=", 2.0 * ef_bound[k])
            F.add("product_bounds", f_sh[k, t], 1.0, "<=", 2.0 * ef_bound[k])

    units_at = [[g for g, gen in enumerate(gens) if bus_of[gen.bus] == i] for i in range(N)]
    incident = [[] for _ in range(N)]  # (line index, far bus, f sign)
    for k, ln in enumerate(lines):
        a, b = bus_of[ln.from_bus], bus_of[ln.to_bus]
        incident[a].append((k, b, 1.0))
        incident[b].append((k, a, -1.0))

    for t in range(T):
        for i, bus in enumerate(grid.buses):
            # sum p - G_ii nu - sum_j (G_ij e_ij - B_ij f_ij) = p_demand - p_wind
            idx, coef = [], []
            rhs = scenario.p_demand[i, t] - scenario.p_wind[i, t]
            for g in units_at[i]:
                idx += [p_up[g, t], u[g, t]]
                coef += [1.0, p_min[g]]
            idx.append(nu_up[i, t])
            coef.append(-bus.g_diag)
            rhs += bus.g_diag * nu_min[i]
            for k, _, sgn in incident[i]:
                ln = lines[k]
                idx += [e_sh[k, t], f_sh[k, t]]
                coef += [-ln.g, sgn * ln.b]
                rhs += -ln.g * ef_bound[k] + sgn * ln.b * ef_bound[k]
            if opts.corrective_slacks:
                idx += [shed[i, t], surplus[i, t]]
                coef += [1.0, -1.0]
            F.add("active_balance", idx, coef, "==", rhs)

            # sum q + B_ii nu + sum_j (B_ij e_ij + G_ij f_ij) = q_demand - q_wind
            idx, coef = [], []
            rhs = scenario.q_demand[i, t] - scenario.q_wind[i, t]
            for g in units_at[i]:
                idx += [q_up[g, t], u[g, t]]
                coef += [1.0, q_min[g]]
            idx.append(nu_up[i, t])
            coef.append(bus.b_diag)
            rhs -= bus.b_diag * nu_min[i]
            for k, _, sgn in incident[i]:
                ln = lines[k]
                idx += [e_sh[k, t], f_sh[k, t]]
                coef += [ln.b, sgn * ln.g]
                rhs += ln.b * ef_bound[k] + sgn * ln.g * ef_bound[k]
            if opts.corrective_slacks:
                idx += [q_pos[i, t], q_neg[i, t]]
                coef += [1.0, -1.0]
            F.add("reactive_balance", idx, coef, "==", rhs)

        for k, ln in enumerate(lines):
            a, b = bus_of[ln.from_bus], bus_of[ln.to_bus]
            E = ef_bound[k]
            e_term = (e_sh[k, t], 1.0, -E)
            f_term = (f_sh[k, t], 1.0, -E)
            # (nu_a + nu_b, 2e, 2f, nu_a - nu_b) in the second-order cone
            F.cone("voltage_product_cone", [
                ([nu_up[a, t], nu_up[b, t]], [1.0, 1.0], nu_min[a] + nu_min[b]),
                (e_term[0], 2.0, -2.0 * E),
                (f_term[0], 2.0, -2.0 * E),
                ([nu_up[a, t], nu_up[b, t]], [1.0, -1.0], nu_min[a] - nu_min[b]),
            ])
            # from-end flows: P = -G nu_a + G e - B f,  Q = (B - B_sh) nu_a - B e - G f
            F.cone("line_capacity_cone", [
                ([], [], ln.capacity),
                ([nu_up[a, t], e_sh[k, t], f_sh[k, t]], [-ln.g, ln.g, -ln.b],
                 -ln.g * nu_min[a] - ln.g * E + ln.b * E),
                ([nu_up[a, t], e_sh[k, t], f_sh[k, t]], [ln.b - ln.shunt_b, -ln.b, -ln.g],
                 (ln.b - ln.shunt_b) * nu_min[a] + ln.b * E + ln.g * E),
            ])

    if opts.corrective_slacks:
        for i in range(N):
            for t in range(T):
                F.add("slack_bounds", shed[i, t], 1.0, "<=", scenario.p_demand[i, t])

    program = B.build()
    ranges["aux"] = (structural_end, program.n_vars, (program.n_vars - structural_end,))
    varmap = UcVariableMap(ranges, M, N, L, T, program.n_vars, p_min, q_min, nu_min, ef_bound,
                           dict(F.rows))
    mip = MixedIntegerConicProgram(program, varmap.binaries)
    return UcModel(mip, varmap, grid, opts)


def model_summary(model: UcModel) -> str:
    vm = model.varmap
    prog = model.mip.base
    lines = [f"variables {prog.n_vars} (binary {model.mip.n_binaries}, "
             f"continuous {prog.n_vars - model.mip.n_binaries})",
             f"rows {prog.n_rows}",
             f"cone blocks {len(prog.cones.soc_blocks)}"]
    for fam, count in sorted(vm.family_rows.items()):
        lines.append(f"  {fam}: {count}")
    return "\n".join(lines)


def extract_strategy(x, varmap: UcVariableMap, tol: float = 1e-6) -> Strategy:
    u = varmap.commitment(x)
    r = np.round(u)
    bad = np.abs(u - r) > tol
    if np.any(bad):
        g, t = np.argwhere(bad)[0]
        raise ValueError(f"commitment u[{g},{t}] = {u[g, t]:.6g} is not integral")
    return Strategy.from_matrix(r.astype(np.uint8))


def startup_from_commitment(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    prev = np.concatenate([np.zeros((u.shape[0], 1)), u[:, :-1]], axis=1)
    return np.maximum(0.0, u - prev)


def binary_assignment(strategy: Strategy) -> np.ndarray:
    """Full (u, v) assignment for a commitment, with the cheapest start-ups."""
    u = strategy.matrix().astype(float)
    return np.concatenate([u.ravel(), startup_from_commitment(u).ravel()])


def system_cost(x, model: UcModel) -> float:
    """Production + start-up cost, plus slack penalties when enabled."""
    return model.mip.base.objective(np.asarray(x, dtype=float))


def check_min_updown(strategy: Strategy, grid: GridSpec) -> list[tuple[int, int, str]]:
    """(unit, hour, "min_up" | "min_down") for every switch that breaks a minimum time."""
    u = strategy.matrix()
    T = strategy.horizon
    out = []
    for g, gen in enumerate(grid.generators):
        row = u[g]
        for t in range(T):
            prev = row[t - 1] if t > 0 else 0
            if prev == 0 and row[t] == 1:
                end = min(t + gen.min_up, T)
                if not np.all(row[t:end] == 1):
                    out.append((g, t, "min_up"))
            elif t > 0 and prev == 1 and row[t] == 0:
                end = min(t + gen.min_down, T)
                if not np.all(row[t:end] == 0):
                    out.append((g, t, "min_down"))
    return out
