"""Hinge-loss classifiers (linear and Gaussian-kernel) trained through the conic solver.

Both trainers minimize the mean hinge loss plus ``lam`` times a squared norm,
the regularized form of a Wasserstein distributionally robust SVM. The
squared norm enters through a rotated-cone epigraph, so every training
problem is a single second-order cone program (a linear program when
``lam == 0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .conic import ProgramBuilder, SolverSettings, Status, solve

# training programs are small, so they are solved well past the usual tolerance
TRAIN_SETTINGS = SolverSettings(tolerance=1e-10)
DEFAULT_LAMBDAS = tuple(np.logspace(-4, 1, 7))
DEFAULT_GAMMAS = tuple(np.logspace(-3, 2, 6))
EIGEN_FLOOR = 1e-10


class TrainingError(RuntimeError):
    """The conic solver did not return an optimal training solution."""


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Feature rows with labels in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        y = np.asarray(self.labels, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"{X.shape[0]} feature rows but {y.size} labels")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.size

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledSet":
        return LabeledSet(self.features[idx], self.labels[idx])

    def single_class(self) -> float | None:
        """The shared label when only one class is present."""
        vals = np.unique(self.labels)
        return float(vals[0]) if vals.size == 1 else None


@dataclass
class LinearModel:
    w: np.ndarray
    b: float
    lam: float
    objective: float
    degenerate: bool = False
    duality_gap: float = 0.0

    kind = "linear"

    def scores(self, X) -> np.ndarray:
        X = _check_dim(X, self.w.size)
        return X @ self.w + self.b


@dataclass
class KernelModel:
    support: np.ndarray
    beta: np.ndarray
    gamma: float
    lam: float
    objective: float
    degenerate: bool = False
    duality_gap: float = 0.0
    constant: float = 1.0

    kind = "kernel"

    def scores(self, X) -> np.ndarray:
        X = _check_dim(X, self.support.shape[1])
        if self.degenerate:
            return np.full(X.shape[0], self.constant)
        return gaussian_kernel_matrix(X, self.support, self.gamma) @ self.beta


def _check_dim(X, dim: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != dim:
        raise ValueError(f"feature dimension {X.shape[1]} does not match the model ({dim})")
    return X


def hinge(label, score):
    """max(0, 1 - label * score), elementwise."""
    return np.maximum(0.0, 1.0 - np.asarray(label, dtype=float) * np.asarray(score, dtype=float))


def gaussian_kernel(x, z, gamma: float) -> float:
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.size != z.size:
        raise ValueError(f"dimension mismatch: {x.size} vs {z.size}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d = x - z
    return float(np.exp(-gamma * (d @ d)))


def gaussian_kernel_matrix(X, Y, gamma: float) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return _accel.gaussian_kernel(np.ascontiguousarray(X), np.ascontiguousarray(Y), float(gamma))


def kernel_matrix(X, gamma: float) -> np.ndarray:
    K = gaussian_kernel_matrix(X, X, gamma)
    return 0.5 * (K + K.T)


def psd_sqrt(K, floor: float = EIGEN_FLOOR) -> np.ndarray:
    """Symmetric square root with eigenvalues floored at ``floor``."""
    vals, vecs = np.linalg.eigh(0.5 * (K + K.T))
    root = np.sqrt(np.maximum(vals, floor))
    return (vecs * root) @ vecs.T


def _add_square_epigraph(builder: ProgramBuilder, rows) -> int:
    """Variable t with ||sum_k rows[i, k] x_k||^2 <= t, as (t+1, t-1, 2 r) in a SOC."""
    t = int(builder.add_variables(1, "nonneg", "t")[0])
    terms = [([t], [1.0], 1.0), ([t], [1.0], -1.0)]
    terms += [(idx, 2.0 * np.asarray(coef), 0.0) for idx, coef in rows]
    builder.add_soc_constraint(terms, "epigraph")
    return t


def _solve_training(builder: ProgramBuilder, settings: SolverSettings | None):
    program = builder.build()
    sol = solve(program, settings or TRAIN_SETTINGS)
    if sol.status is not Status.OPTIMAL:
        raise TrainingError(f"training solve ended with status {sol.status.value}")
    return sol


def train_linear(data: LabeledSet, lam: float, settings: SolverSettings | None = None) -> LinearModel:
    """min mean(zeta) + lam ||w||^2  s.t.  y_h (w'x_h + b) >= 1 - zeta_h, zeta >= 0."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    const = data.single_class()
    if const is not None:
        return LinearModel(np.zeros(data.dim), const, float(lam), 0.0, degenerate=True)
    H, d = data.features.shape
    bld = ProgramBuilder()
    w = bld.add_variables(d, "free", "w")
    b = int(bld.add_variables(1, "free", "b")[0])
    zeta = bld.add_variables(H, "nonneg", "zeta")
    bld.add_cost(zeta, 1.0 / H)
    for h in range(H):
        y = data.labels[h]
        bld.add_constraint(np.r_[w, b, zeta[h]], np.r_[y * data.features[h], y, 1.0], ">=", 1.0)
    if lam > 0:
        t = _add_square_epigraph(bld, [([j], [1.0]) for j in w])
        bld.add_cost(t, lam)
    sol = _solve_training(bld, settings)
    wv = sol.x[w].copy()
    bv = float(sol.x[b])
    model = LinearModel(wv, bv, float(lam), 0.0, duality_gap=sol.residuals.gap)
    # report the objective of the returned point so in-sample bounds are exact
    model.objective = float(np.mean(hinge(data.labels, model.scores(data.features))) + lam * (wv @ wv))
    return model


def train_kernel(data: LabeledSet, lam: float, gamma: float,
                 settings: SolverSettings | None = None) -> KernelModel:
    """min mean(zeta) + lam ||K^1/2 beta||^2  s.t.  y_h sum_k K[h, k] beta_k >= 1 - zeta_h."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    X = data.features
    H = X.shape[0]
    const = data.single_class()
    if const is not None:
        return KernelModel(X.copy(), np.zeros(H), float(gamma), float(lam), 0.0,
                           degenerate=True, constant=const)
    K = kernel_matrix(X, gamma)
    bld = ProgramBuilder()
    beta = bld.add_variables(H, "free", "beta")
    zeta = bld.add_variables(H, "nonneg", "zeta")
    bld.add_cost(zeta, 1.0 / H)
    for h in range(H):
        y = data.labels[h]
        bld.add_constraint(np.r_[beta, zeta[h]], np.r_[y * K[h], 1.0], ">=", 1.0)
    if lam > 0:
        R = psd_sqrt(K)
        t = _add_square_epigraph(bld, [(beta, R[i]) for i in range(H)])
        bld.add_cost(t, lam)
    sol = _solve_training(bld, settings)
    bv = sol.x[beta].copy()
    model = KernelModel(X.copy(), bv, float(gamma), float(lam), 0.0, duality_gap=sol.residuals.gap)
    scores = K @ bv
    reg = float(bv @ K @ bv) if lam > 0 else 0.0
    model.objective = float(np.mean(hinge(data.labels, scores)) + lam * max(reg, 0.0))
    return model


def decision_scores(model, X) -> np.ndarray:
    return model.scores(X)


def predict(model, x) -> tuple[int, float]:
    """Label in {-1, +1} (zero scores map to +1) and the raw score of one point."""
    score = float(model.scores(np.atleast_2d(np.asarray(x, dtype=float)))[0])
    return (1 if score >= 0 else -1), score


def predict_labels(model, X) -> np.ndarray:
    return np.where(model.scores(X) >= 0, 1, -1)


def expected_hinge(model, data: LabeledSet) -> float:
    if len(data) == 0:
        return 0.0
    return float(np.mean(hinge(data.labels, model.scores(data.features))))


@dataclass(frozen=True)
class GuaranteeCheck:
    holds: bool
    lhs: float
    bound: float


def check_guarantee(model, test: LabeledSet, slack: float = 0.0) -> GuaranteeCheck:
    """Compare the test-set mean hinge against the training optimum (plus ``slack``)."""
    lhs = expected_hinge(model, test)
    bound = model.objective + slack
    return GuaranteeCheck(bool(lhs <= bound), lhs, bound)


def train(data: LabeledSet, kind: str, lam: float, gamma: float | None = None,
          settings: SolverSettings | None = None):
    if kind == "linear":
        return train_linear(data, lam, settings)
    if kind == "kernel":
        if gamma is None:
            raise ValueError("kernel training needs gamma")
        return train_kernel(data, lam, gamma, settings)
    raise ValueError(f"unknown classifier kind {kind!r}")


@dataclass(frozen=True)
class CvConfig:
    folds: int = 4
    lambdas: tuple = DEFAULT_LAMBDAS
    gammas: tuple = DEFAULT_GAMMAS
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")
        if not self.lambdas or not self.gammas:
            raise ValueError("hyperparameter grids must be non-empty")
        if any(lam < 0 for lam in self.lambdas) or any(g <= 0 for g in self.gammas):
            raise ValueError("lambdas must be >= 0 and gammas > 0")


@dataclass
class CvResult:
    lam: float
    gamma: float | None
    losses: dict = field(default_factory=dict)


def fold_assignment(n: int, folds: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def cross_validate(data: LabeledSet, cv: CvConfig, kind: str,
                   settings: SolverSettings | None = None) -> CvResult:
    """Pick the grid point with the lowest mean held-out hinge loss.

    Ties go to the larger lambda, then to the smaller gamma.
    """
    if len(data) < cv.folds:
        raise ValueError(f"{len(data)} samples cannot fill {cv.folds} folds")
    parts = fold_assignment(len(data), cv.folds, cv.seed)
    gammas = cv.gammas if kind == "kernel" else (None,)
    losses = {}
    for gamma in gammas:
        for lam in cv.lambdas:
            fold_losses = []
            for k in range(cv.folds):
                train_idx = np.concatenate([parts[j] for j in range(cv.folds) if j != k])
                model = train(data.subset(train_idx), kind, lam, gamma, settings)
                fold_losses.append(expected_hinge(model, data.subset(parts[k])))
            losses[(float(lam), None if gamma is None else float(gamma))] = float(np.mean(fold_losses))
    best = min(losses.items(), key=lambda kv: (kv[1], -kv[0][0], kv[0][1] or 0.0))
    (lam, gamma), _ = best
    return CvResult(lam, gamma, losses)


def _transport_polish(C, plan, a, b, tol=1e-9):
    """Move an optimal transport plan to a vertex and recompute it exactly.

    Cycles in the support are cancelled in the direction that does not raise
    the cost; the remaining forest then fixes the plan through the marginals.
    """
    n, m = C.shape
    plan = np.where(plan > tol * plan.max(), plan, 0.0)
    # union-find over row nodes 0..n-1 and column nodes n..n+m-1
    parent = list(range(n + m))

    def root(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    adj: dict[int, set] = {u: set() for u in range(n + m)}
    order = np.dstack(np.unravel_index(np.argsort(-plan, axis=None), plan.shape))[0]
    for i, j in order:
        if plan[i, j] <= 0:
            break
        u, v = int(i), n + int(j)
        if root(u) != root(v):
            parent[root(u)] = root(v)
            adj[u].add(v)
            adj[v].add(u)
            continue
        # path v -> u in the forest closes a cycle with edge (u, v)
        prev = {v: None}
        stack = [v]
        while stack:
            x = stack.pop()
            if x == u:
                break
            for y in adj[x]:
                if y not in prev:
                    prev[y] = x
                    stack.append(y)
        path = [u]
        while prev[path[-1]] is not None:
            path.append(prev[path[-1]])
        # cycle edges: (u, v) with sign +, then path edges alternating -, +, ...
        edges = [(u, v)] + list(zip(path[:-1], path[1:]))
        cells = [(min(p, q), max(p, q) - n) for p, q in edges]
        signs = np.array([1.0 if k % 2 == 0 else -1.0 for k in range(len(cells))])
        cost = sum(s * C[r, c] for s, (r, c) in zip(signs, cells))
        if cost > 0:
            signs = -signs
        minus = [cells[k] for k in range(len(cells)) if signs[k] < 0]
        theta = min(plan[r, c] for r, c in minus)
        for s, (r, c) in zip(signs, cells):
            plan[r, c] += s * theta
        # drop the edge that hit zero from the forest, keep the new one
        for r, c in minus:
            if plan[r, c] <= tol * theta:
                plan[r, c] = 0.0
                if (r, c) != (int(i), int(j)):
                    adj[r].discard(n + c)
                    adj[n + c].discard(r)
                break
        if plan[i, j] > 0:
            adj[u].add(v)
            adj[v].add(u)
    # recompute flows on the forest by peeling leaves
    supply = np.concatenate([a, b]).astype(float)
    exact = np.zeros_like(plan)
    deg = {x: len(adj[x]) for x in adj}
    leaves = [x for x in adj if deg[x] == 1]
    while leaves:
        x = leaves.pop()
        if deg[x] != 1:
            continue
        (y,) = adj[x]
        r, c = (x, y - n) if x < n else (y, x - n)
        flow = max(supply[x], 0.0)
        exact[r, c] = flow
        supply[y] -= flow
        supply[x] = 0.0
        adj[x].discard(y)
        adj[y].discard(x)
        deg[x] = 0
        deg[y] -= 1
        if deg[y] == 1:
            leaves.append(y)
    return exact


def wasserstein2(A, B, settings: SolverSettings | None = None) -> float:
    """2-Wasserstein distance between two uniform empirical distributions.

    The transport LP is solved by the interior-point method and its plan is
    then pushed to a vertex, so exact cases (identical sets, single points)
    come out exact instead of at solver tolerance.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[0] == 0 or B.shape[0] == 0:
        raise ValueError("empty point set")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    n, m = A.shape[0], B.shape[0]
    C = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    if n == 1 or m == 1:
        plan = np.outer(a, b)
        return float(np.sqrt(max((C * plan).sum(), 0.0)))
    bld = ProgramBuilder()
    pi = bld.add_variables(n * m, "nonneg", "plan").reshape(n, m)
    bld.add_cost(pi.ravel(), C.ravel())
    for i in range(n):
        bld.add_constraint(pi[i], 1.0, "==", a[i])
    # one column marginal is implied by the others and the total mass
    for j in range(m - 1):
        bld.add_constraint(pi[:, j], 1.0, "==", b[j])
    sol = solve(bld.build(), settings or TRAIN_SETTINGS)
    if sol.status is not Status.OPTIMAL:
        raise TrainingError(f"transport solve ended with status {sol.status.value}")
    plan = _transport_polish(C, np.maximum(sol.x[pi], 0.0), a, b)
    value = float((C * plan).sum())
    if not np.isclose(plan.sum(), 1.0, atol=1e-9) or value > sol.objective + 1e-7 * (1 + abs(sol.objective)):
        value = sol.objective
    return float(np.sqrt(max(value, 0.0)))
