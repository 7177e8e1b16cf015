import clarabel
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from ucpredict import _accel, _ckernels, _pykernels
from ucpredict.conic import (
    ConeSpec,
    ConicProgram,
    ProgramBuilder,
    SolverSettings,
    Status,
    dump,
    fix_variables,
    solve,
    validate,
)


def _one_var_program():
    b = ProgramBuilder()
    x = b.add_variables(1, "free", "x")
    b.add_cost(x, 1.0)
    b.add_constraint(x, 1.0, ">=", 1.0)
    return b.build()


def test_min_x_with_slack():
    sol = solve(_one_var_program())
    assert sol.status is Status.OPTIMAL
    assert sol.x[0] == pytest.approx(1.0, abs=1e-7)
    assert sol.objective == pytest.approx(1.0, abs=1e-7)


def test_norm_epigraph():
    b = ProgramBuilder()
    cone = b.add_cone(3)
    b.add_cost(cone[0], 1.0)
    b.add_constraint(cone[1], 1.0, "==", 3.0)
    b.add_constraint(cone[2], 1.0, "==", 4.0)
    sol = solve(b.build())
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(5.0, abs=1e-6)


def test_infeasible_bounds():
    b = ProgramBuilder()
    x = b.add_variables(1, "free")
    b.add_constraint(x, 1.0, ">=", 1.0)
    b.add_constraint(x, 1.0, "<=", 0.0)
    assert solve(b.build()).status is Status.PRIMAL_INFEASIBLE


def test_unbounded():
    b = ProgramBuilder()
    x = b.add_variables(1, "free")
    b.add_cost(x, 1.0)
    b.add_constraint(x, 1.0, "<=", 0.0)
    assert solve(b.build()).status is Status.UNBOUNDED


def test_iteration_limit_reported():
    sol = solve(_one_var_program(), SolverSettings(max_iterations=1))
    assert sol.status in (Status.ITERATION_LIMIT, Status.OPTIMAL)


def test_validate_examples():
    prog = _one_var_program()  # x - s = 1
    ok = validate(prog, [1.0, 0.0])
    assert ok.feasible and ok.max_equality_residual == 0 and ok.max_cone_violation == 0
    bad = validate(prog, [0.0, 0.0])
    assert not bad.feasible and bad.max_equality_residual == 1.0
    with pytest.raises(ValueError):
        validate(prog, [1.0])


def test_soc_violation():
    spec = ConeSpec.from_pairs([("soc", 3)])
    assert spec.cone_violation(np.array([4.0, 3.0, 4.0])) == pytest.approx(1.0)


def test_program_shape_checks():
    with pytest.raises(ValueError):
        ConicProgram(np.zeros(2), sp.csr_matrix((1, 3)), np.zeros(1), ConeSpec.from_pairs([("free", 2)]))
    with pytest.raises(ValueError):
        ConeSpec.from_pairs([("soc", 1)])


def test_dump_is_stable():
    prog = _one_var_program()
    assert dump(prog) == dump(prog)
    assert "min" in dump(prog)


def test_deterministic():
    prog, _ = _random_program(7)
    a, b = solve(prog), solve(prog)
    assert a.status is b.status
    assert a.objective == b.objective
    assert np.array_equal(a.x, b.x)


# ---------------------------------------------------------------- random programs vs an external solver


def _interior(spec, rng):
    x = np.zeros(spec.size)
    for k, blk in enumerate(spec.blocks):
        lo, hi = spec.offsets[k], spec.offsets[k + 1]
        if blk.kind.value == "free":
            x[lo:hi] = rng.normal(size=hi - lo)
        elif blk.kind.value == "nonneg":
            x[lo:hi] = rng.uniform(0.1, 2.0, size=hi - lo)
        else:
            tail = rng.normal(size=hi - lo - 1)
            x[lo + 1:hi] = tail
            x[lo] = np.linalg.norm(tail) + rng.uniform(0.1, 1.0)
    return x


def _random_program(seed):
    """Primal and dual strictly feasible by construction, so an optimum exists."""
    rng = np.random.default_rng(seed)
    pairs = [(str(rng.choice(["free", "nonneg", "soc"])), int(rng.integers(2, 6)))
             for _ in range(rng.integers(1, 6))]
    spec = ConeSpec.merged(pairs)
    n = spec.size
    m = int(rng.integers(1, n + 1))
    A = sp.random(m, n, density=0.6, random_state=seed, format="csr") + sp.eye(m, n, format="csr")
    x0 = _interior(spec, rng)
    z0 = _interior(spec, rng)
    z0[spec.free_indices] = 0.0
    y0 = rng.normal(size=m)
    return ConicProgram(A.T @ y0 + z0, A.tocsr(), A @ x0, spec), x0


def _clarabel(prog):
    n, m = prog.n_vars, prog.n_rows
    rows, rhs, cones = [prog.A], [prog.b], [clarabel.ZeroConeT(m)]
    eye = sp.eye(n, format="csr")
    for k, blk in enumerate(prog.cones.blocks):
        lo, hi = prog.cones.offsets[k], prog.cones.offsets[k + 1]
        if blk.kind.value == "free":
            continue
        rows.append(-eye[lo:hi])
        rhs.append(np.zeros(hi - lo))
        cones.append(clarabel.NonnegativeConeT(hi - lo) if blk.kind.value == "nonneg"
                     else clarabel.SecondOrderConeT(hi - lo))
    opts = clarabel.DefaultSettings()
    opts.verbose = False
    return clarabel.DefaultSolver(sp.csc_matrix((n, n)), prog.c, sp.vstack(rows).tocsc(),
                                  np.concatenate(rhs), cones, opts).solve()


@pytest.mark.parametrize("seed", range(40))
def test_matches_clarabel(seed):
    prog, x0 = _random_program(seed)
    sol = solve(prog)
    ref = _clarabel(prog)
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(ref.obj_val, rel=1e-6, abs=1e-6)
    # optimal value never exceeds the constructed interior point's value
    assert sol.objective <= prog.objective(x0) + 1e-7
    assert max(sol.residuals.primal, sol.residuals.dual, sol.residuals.gap) <= 1e-7
    assert abs(sol.objective - sol.dual_objective) <= 1e-7 * max(1.0, abs(sol.objective))
    assert prog.cones.cone_violation(sol.x) <= 1e-7
    assert prog.cones.cone_violation(sol.z) <= 1e-7


def test_fix_variables_propagates():
    b = ProgramBuilder()
    x = b.add_variables(2, "nonneg")
    b.add_constraint(x, [1.0, 1.0], "==", 1.0)
    b.add_cost(x, [1.0, 2.0])
    fp = fix_variables(b.build(), [x[0]], [1.0])
    assert not fp.infeasible
    assert fp.values[x[1]] == 0.0


# ---------------------------------------------------------------- cone kernels


def _soc_blocks(draw, max_blocks=4, max_dim=6):
    dims = draw(st.lists(st.integers(2, max_dim), min_size=1, max_size=max_blocks))
    dims = np.array(dims, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(np.int64)
    return starts, dims


@st.composite
def cone_pair(draw):
    starts, dims = _soc_blocks(draw)
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    spec = ConeSpec.merged([("soc", int(d)) for d in dims])
    return starts, dims, _interior(spec, rng), _interior(spec, rng), rng.normal(size=int(dims.sum()))


def _in_cone(v, starts, dims, tol=1e-9):
    return all(v[s] >= np.linalg.norm(v[s + 1:s + d]) - tol * (1 + abs(v[s])) for s, d in zip(starts, dims))


@given(cone_pair())
def test_nt_scaling_maps_z_to_s(data):
    starts, dims, s, z, _ = data
    wbar, eta, lam = _accel.soc_nt_scaling(s, z, starts, dims)
    back = _accel.soc_apply_w(wbar, eta, s, starts, dims, True)
    assert np.allclose(lam, back, rtol=1e-8, atol=1e-10)
    assert _in_cone(lam, starts, dims)


@given(cone_pair())
def test_jordan_div_inverts_prod(data):
    starts, dims, s, z, _ = data
    prod = _accel.soc_jordan_prod(s, z, starts, dims)
    assert np.allclose(_accel.soc_jordan_div(s, prod, starts, dims), z, rtol=1e-7, atol=1e-9)


@given(cone_pair())
def test_max_step_stays_in_cone(data):
    starts, dims, s, _, d = data
    alpha = _accel.soc_max_step(s, d, starts, dims)
    assert alpha >= 0
    step = min(alpha, 1e6) * 0.999
    assert _in_cone(s + step * d, starts, dims, tol=1e-7)


@given(cone_pair())
def test_inv_w_blocks_match_apply(data):
    starts, dims, s, z, d = data
    wbar, eta, _ = _accel.soc_nt_scaling(s, z, starts, dims)
    flat = _accel.soc_inv_w_blocks(wbar, eta, starts, dims)
    pos = 0
    expect = _accel.soc_apply_w(wbar, eta, d, starts, dims, True)
    for st_, dim in zip(starts, dims):
        block = flat[pos:pos + dim * dim].reshape(dim, dim)
        pos += dim * dim
        assert np.allclose(block @ d[st_:st_ + dim], expect[st_:st_ + dim], rtol=1e-8, atol=1e-10)


@given(cone_pair())
def test_compiled_matches_python(data):
    starts, dims, s, z, d = data
    for name, args in [("soc_nt_scaling", (s, z, starts, dims)),
                       ("soc_jordan_prod", (s, z, starts, dims)),
                       ("soc_jordan_div", (s, z, starts, dims)),
                       ("soc_max_step", (s, d, starts, dims))]:
        a = getattr(_pykernels, name)(*args)
        b = getattr(_ckernels, name)(*args)
        for u, v in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            assert np.allclose(u, v, rtol=1e-10, atol=1e-12)


def test_compiled_kernel_matches_python_on_distances():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(7, 3))
    assert np.allclose(_pykernels.gaussian_kernel(X, X, 0.7), _ckernels.gaussian_kernel(X, X, 0.7))
    cat = rng.integers(0, 2, size=(9, 12)).astype(np.uint8)
    assert np.array_equal(_pykernels.hamming_distances(cat, cat[3]), _ckernels.hamming_distances(cat, cat[3]))
