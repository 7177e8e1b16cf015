"""Standard-form conic programs.

A program is ``min c'x + offset  s.t.  A x = b,  x in K`` where ``K`` is a
product of free, nonnegative and second-order cone blocks laid out over
consecutive variables.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class ConeKind(str, enum.Enum):
    FREE = "free"
    NONNEG = "nonneg"
    SOC = "soc"


@dataclass(frozen=True)
class ConeBlock:
    kind: ConeKind
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ConeKind(self.kind))
        if self.dim < 1:
            raise ValueError(f"cone block dimension must be >= 1, got {self.dim}")
        if self.kind is ConeKind.SOC and self.dim < 2:
            raise ValueError("second-order cone blocks need dimension >= 2")


@dataclass(frozen=True)
class ConeSpec:
    """Ordered cone blocks covering every variable exactly once."""

    blocks: tuple[ConeBlock, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @classmethod
    def from_pairs(cls, pairs) -> "ConeSpec":
        return cls(tuple(ConeBlock(ConeKind(k), int(d)) for k, d in pairs))

    @property
    def size(self) -> int:
        return sum(b.dim for b in self.blocks)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([b.dim for b in self.blocks])]).astype(np.int64)

    def _indices(self, kind: ConeKind) -> np.ndarray:
        out = [np.arange(self.offsets[k], self.offsets[k + 1])
               for k, b in enumerate(self.blocks) if b.kind is kind]
        return np.concatenate(out).astype(np.int64) if out else np.zeros(0, dtype=np.int64)

    @cached_property
    def free_indices(self) -> np.ndarray:
        return self._indices(ConeKind.FREE)

    @cached_property
    def nonneg_indices(self) -> np.ndarray:
        return self._indices(ConeKind.NONNEG)

    @cached_property
    def soc_blocks(self) -> list[tuple[int, int]]:
        """(first variable, dimension) of every SOC block."""
        return [(int(self.offsets[k]), b.dim) for k, b in enumerate(self.blocks)
                if b.kind is ConeKind.SOC]

    @cached_property
    def kind_of(self) -> np.ndarray:
        """Per-variable cone kind code: 0 free, 1 nonneg, 2 soc."""
        codes = {ConeKind.FREE: 0, ConeKind.NONNEG: 1, ConeKind.SOC: 2}
        return np.repeat([codes[b.kind] for b in self.blocks],
                         [b.dim for b in self.blocks]).astype(np.int8)

    def cone_violation(self, x: np.ndarray) -> float:
        """Largest amount by which ``x`` leaves the cone (0 when inside)."""
        worst = 0.0
        nn = self.nonneg_indices
        if nn.size:
            worst = max(worst, float(np.max(-x[nn])))
        for st, d in self.soc_blocks:
            worst = max(worst, float(np.linalg.norm(x[st + 1:st + d]) - x[st]))
        return worst

    @staticmethod
    def merged(kinds_dims) -> "ConeSpec":
        """Build a spec from (kind, dim) pairs, merging adjacent free/nonneg runs."""
        blocks: list[list] = []
        for kind, dim in kinds_dims:
            kind = ConeKind(kind)
            if blocks and kind is not ConeKind.SOC and blocks[-1][0] is kind:
                blocks[-1][1] += dim
            else:
                blocks.append([kind, dim])
        return ConeSpec(tuple(ConeBlock(k, d) for k, d in blocks))


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float).ravel()
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ConicProgram:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    cones: ConeSpec
    names: tuple[str, ...] | None = None
    offset: float = 0.0

    def __post_init__(self):
        c = _frozen(self.c)
        b = _frozen(self.b)
        A = sp.csr_matrix(self.A, dtype=float)
        A.sum_duplicates()
        for arr in (A.data, A.indices, A.indptr):
            arr.setflags(write=False)
        if A.shape != (b.size, c.size):
            raise ValueError(f"A has shape {A.shape}, expected ({b.size}, {c.size})")
        if self.cones.size != c.size:
            raise ValueError(
                f"cone blocks cover {self.cones.size} variables, program has {c.size}")
        if self.names is not None and len(self.names) != c.size:
            raise ValueError("names must have one entry per variable")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(b)) and np.all(np.isfinite(A.data))):
            raise ValueError("program data must be finite")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.offset

    def replace(self, **changes) -> "ConicProgram":
        kw = dict(c=self.c, A=self.A, b=self.b, cones=self.cones, names=self.names,
                  offset=self.offset)
        kw.update(changes)
        return ConicProgram(**kw)


@dataclass(frozen=True)
class ResidualReport:
    max_equality_residual: float
    max_cone_violation: float
    tolerance: float

    @property
    def feasible(self) -> bool:
        return (self.max_equality_residual <= self.tolerance
                and self.max_cone_violation <= self.tolerance)


def validate(program: ConicProgram, candidate, tolerance: float = 1e-7) -> ResidualReport:
    """Exact residuals of a candidate primal point."""
    x = np.asarray(candidate, dtype=float).ravel()
    if x.size != program.n_vars:
        raise ValueError(f"candidate has {x.size} entries, program has {program.n_vars} variables")
    eq = float(np.max(np.abs(program.A @ x - program.b))) if program.n_rows else 0.0
    return ResidualReport(eq, program.cones.cone_violation(x), tolerance)


def dump(program: ConicProgram) -> str:
    """Plain-text canonical form, stable under repeated calls (for diffing)."""
    names = program.names or tuple(f"x{j}" for j in range(program.n_vars))
    lines = [f"# vars {program.n_vars} rows {program.n_rows}"]
    terms = [f"{v!r}*{names[j]}" for j, v in enumerate(program.c) if v != 0.0]
    lines.append("min " + (" + ".join(terms) if terms else "0") + f" + {program.offset!r}")
    A = program.A
    for r in range(program.n_rows):
        lo, hi = A.indptr[r], A.indptr[r + 1]
        order = np.argsort(A.indices[lo:hi], kind="stable")
        row = " + ".join(f"{A.data[lo + k]!r}*{names[A.indices[lo + k]]}" for k in order)
        lines.append(f"r{r}: {row or '0'} == {program.b[r]!r}")
    for k, blk in enumerate(program.cones.blocks):
        first = program.cones.offsets[k]
        lines.append(f"cone {blk.kind.value} {names[first]}..{names[first + blk.dim - 1]} ({blk.dim})")
    return "\n".join(lines) + "\n"


@dataclass
class ProgramBuilder:
    """Incremental construction of a standard-form program.

    Inequalities get a nonnegative slack; second-order cone constraints on
    affine expressions get a cone block tied to the expressions by equalities.
    """

    _kinds: list = field(default_factory=list)
    _names: list = field(default_factory=list)
    _cost: dict = field(default_factory=dict)
    _rows: list = field(default_factory=list)
    _cols: list = field(default_factory=list)
    _vals: list = field(default_factory=list)
    _rhs: list = field(default_factory=list)
    offset: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_rows(self) -> int:
        return len(self._rhs)

    def add_variables(self, count: int, kind: str = "free", name: str = "x") -> np.ndarray:
        kind = ConeKind(kind)
        if kind is ConeKind.SOC:
            return self.add_cone(count, name)
        first = self.n_vars
        self._kinds.append((kind, count))
        self._names.extend(f"{name}[{k}]" for k in range(count))
        return np.arange(first, first + count)

    def add_cone(self, dim: int, name: str = "cone") -> np.ndarray:
        first = self.n_vars
        self._kinds.append((ConeKind.SOC, dim))
        self._names.extend(f"{name}[{k}]" for k in range(dim))
        return np.arange(first, first + dim)

    def add_cost(self, idx, coef) -> None:
        for j, v in zip(np.atleast_1d(idx), np.broadcast_to(coef, np.shape(np.atleast_1d(idx)))):
            self._cost[int(j)] = self._cost.get(int(j), 0.0) + float(v)

    def add_constraint(self, idx, coef, sense: str, rhs: float, slack_name: str = "slack") -> int:
        """Add ``sum coef*x[idx] (sense) rhs``; returns the row index."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape).copy()
        if sense == "<=":
            s = self.add_variables(1, "nonneg", slack_name)
            idx, coef = np.append(idx, s), np.append(coef, 1.0)
        elif sense == ">=":
            s = self.add_variables(1, "nonneg", slack_name)
            idx, coef = np.append(idx, s), np.append(coef, -1.0)
        elif sense != "==":
            raise ValueError(f"unknown sense {sense!r}")
        row = self.n_rows
        self._rows.append(np.full(idx.size, row, dtype=np.int64))
        self._cols.append(idx)
        self._vals.append(coef)
        self._rhs.append(float(rhs))
        return row

    def add_soc_constraint(self, terms, name: str = "cone") -> np.ndarray:
        """Constrain affine expressions ``(head, tail_1, ..., tail_k)`` to a SOC.

        ``terms`` is a list of ``(idx, coef, const)`` triples, head first.
        """
        cone = self.add_cone(len(terms), name)
        for var, (idx, coef, const) in zip(cone, terms):
            idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
            coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
            self.add_constraint(np.append(idx, var), np.append(-coef, 1.0), "==", const)
        return cone

    def build(self) -> ConicProgram:
        n = self.n_vars
        c = np.zeros(n)
        for j, v in self._cost.items():
            c[j] = v
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        A = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, n))
        return ConicProgram(c, A, np.array(self._rhs), ConeSpec.merged(self._kinds),
                            tuple(self._names), self.offset)
