import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ucpredict.bnb import MipStatus, evaluate_assignment, root_relaxation, solve_mip
from ucpredict.conic import Status
from ucpredict.grid import Bus, Generator, GridSpec, ScenarioInput, Strategy
from ucpredict.sampler import SamplerConfig, ScenarioLaw, draw_scenario
from ucpredict.toy import small_grid, small_scenario
from ucpredict.uc import (
    UcOptions,
    binary_assignment,
    build_uc,
    check_min_updown,
    extract_strategy,
    model_summary,
    system_cost,
)


def one_bus(min_up=1, min_down=1, horizon=1, ramp=1.0, startup=5.0):
    gen = Generator(1, 1.0, 0.1, 1.0, -1.0, ramp, ramp, ramp, min_up, min_down, 10.0, startup)
    return GridSpec((Bus(1, 0.95, 1.05, True),), (), (gen,), horizon)


def test_six_bus_binary_count(six_bus):
    grid, scenario = six_bus
    model = build_uc(grid, scenario)
    assert model.mip.n_binaries == 144
    text = model_summary(model)
    for family in ("min_up", "min_down", "state_transition", "active_capacity", "ramp_up",
                   "active_balance", "reactive_balance", "voltage_product_cone", "line_capacity_cone"):
        assert family in text


def test_single_unit_hand_solution():
    grid = one_bus()
    scenario = ScenarioInput.from_active(np.zeros((1, 1)), np.array([[0.6]]))
    model = build_uc(grid, scenario)
    res = solve_mip(model.mip)
    assert res.status is MipStatus.OPTIMAL
    assert extract_strategy(res.x, model.varmap).bits.tolist() == [1]
    assert model.varmap.active_power(res.x)[0, 0] == pytest.approx(0.6, abs=1e-6)
    assert system_cost(res.x, model) == pytest.approx(10.0 * 0.6 + 5.0, abs=1e-5)


def test_zero_demand_means_all_off():
    grid = one_bus(horizon=3)
    scenario = ScenarioInput.from_active(np.zeros((1, 3)), np.zeros((1, 3)))
    model = build_uc(grid, scenario)
    res = solve_mip(model.mip)
    assert extract_strategy(res.x, model.varmap).bits.tolist() == [0, 0, 0]
    assert res.objective == pytest.approx(0.0, abs=1e-6)


def test_rounding_guard():
    grid = one_bus()
    model = build_uc(grid, ScenarioInput.from_active(np.zeros((1, 1)), np.array([[0.5]])))
    x = np.zeros(model.varmap.n_vars)
    x[model.varmap.index("u")[0]] = 0.4
    with pytest.raises(ValueError, match="not integral"):
        extract_strategy(x, model.varmap)


@pytest.mark.parametrize("pattern,min_up,min_down,count", [
    ((0, 1, 0, 0), 2, 1, 1),
    ((1, 1, 0, 0), 2, 2, 0),
    ((1, 0, 0, 1), 1, 3, 1),
])
def test_min_updown_examples(pattern, min_up, min_down, count):
    grid = one_bus(min_up, min_down, horizon=4)
    assert len(check_min_updown(Strategy(np.array(pattern), 1, 4), grid)) == count


def test_min_updown_agrees_with_model():
    """A pattern passes the checker exactly when the fixed program's binary rows are satisfiable."""
    grid = one_bus(2, 2, horizon=4)
    scenario = ScenarioInput.from_active(np.zeros((1, 4)), np.full((1, 4), 0.3))
    mip = build_uc(grid, scenario, UcOptions(corrective_slacks=True)).mip
    for code in range(16):
        bits = np.array([(code >> k) & 1 for k in range(4)])
        s = Strategy(bits, 1, 4)
        ok = not check_min_updown(s, grid)
        status = evaluate_assignment(mip, binary_assignment(s)).status
        assert ok == (status is Status.OPTIMAL), bits


def test_ramp_violation_is_infeasible():
    grid = one_bus(horizon=2, ramp=0.2)
    scenario = ScenarioInput.from_active(np.zeros((1, 2)), np.array([[0.0, 0.9]]))
    model = build_uc(grid, scenario)
    sol = evaluate_assignment(model.mip, binary_assignment(Strategy(np.array([0, 1]), 1, 2)))
    assert sol.status is Status.PRIMAL_INFEASIBLE


def test_slack_penalty_validation():
    grid = one_bus()
    with pytest.raises(ValueError):
        UcOptions(corrective_slacks=True, penalty=1.0).penalty_for(grid)


def _solved_small(seed):
    rng = np.random.default_rng(seed)
    grid = small_grid(rng)
    model = build_uc(grid, small_scenario(rng, grid))
    return grid, model, solve_mip(model.mip)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_optimum_properties(seed):
    grid, model, res = _solved_small(seed)
    assert res.status is MipStatus.OPTIMAL
    vm = model.varmap
    x = res.x
    # cone feasibility of the voltage-product relaxation
    e, f = vm.line_products(x)
    nu = vm.squared_voltage(x)
    for k, ln in enumerate(grid.lines):
        a, b = grid.bus_index(ln.from_bus), grid.bus_index(ln.to_bus)
        assert np.all(e[k] ** 2 + f[k] ** 2 <= nu[a] * nu[b] + 1e-6)
    # fixing the optimal commitment reproduces the objective
    strategy = extract_strategy(x, vm)
    fixed = evaluate_assignment(model.mip, binary_assignment(strategy))
    assert fixed.objective == pytest.approx(res.objective, rel=1e-6)
    # start-up indicators equal the switch-ons when start-up costs are positive
    u, v = vm.commitment(x), vm.startup(x)
    prev = np.concatenate([np.zeros((u.shape[0], 1)), u[:, :-1]], axis=1)
    for g, gen in enumerate(grid.generators):
        assert np.all(v[g] >= u[g] - prev[g] - 1e-6)
        if gen.startup_cost > 0:
            assert np.allclose(v[g], np.maximum(0, u[g] - prev[g]), atol=1e-6)
    assert not check_min_updown(strategy, grid)


@given(st.integers(0, 2**6 - 1), st.integers(0, 50))
def test_corrective_slacks_make_any_valid_pattern_feasible(code, seed):
    rng = np.random.default_rng(seed)
    grid = small_grid(rng)
    scenario = small_scenario(rng, grid)
    bits = np.array([(code >> k) & 1 for k in range(6)])
    s = Strategy(bits, 2, 3)
    if check_min_updown(s, grid):
        return
    model = build_uc(grid, scenario, UcOptions(corrective_slacks=True))
    assert evaluate_assignment(model.mip, binary_assignment(s)).status is Status.OPTIMAL


def test_dimension_mismatch(six_bus):
    grid, _ = six_bus
    with pytest.raises(Exception):
        build_uc(grid, ScenarioInput.from_active(np.zeros((2, 24)), np.zeros((2, 24))))


def test_six_bus_feasible_without_wind(six_bus):
    # units start the day off, so the first hour has to be reachable on start-up ramps alone
    grid, base = six_bus
    calm = draw_scenario(np.random.default_rng(0), ScenarioLaw(grid, base, SamplerConfig(wind_scale=0.0)))
    assert root_relaxation(build_uc(grid, calm).mip).status is Status.OPTIMAL
