import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ucpredict.grid import (
    FeatureSchema,
    GridError,
    ParseError,
    SampleSet,
    ScenarioInput,
    Strategy,
    load_grid,
    load_samples,
    load_scenario,
    save_grid,
    save_samples,
    save_scenario,
    scenario_to_features,
    strategy_encode,
)


def test_six_bus_fixture(six_bus):
    grid, scenario = six_bus
    assert grid.n_buses == 6 and grid.n_units == 3 and grid.horizon == 24
    assert len(grid.wind_farms) == 2
    assert sum(1 for row in scenario.p_demand if row.max() > 0) == 3


def test_grid_round_trip(tmp_path, six_bus):
    grid, _ = six_bus
    path = tmp_path / "g.json"
    save_grid(grid, path)
    assert load_grid(path) == grid


def test_bad_generator_limits(tmp_path, six_bus):
    d = six_bus[0].to_dict()
    d["generators"][0]["p_min"] = 5.0
    path = tmp_path / "g.json"
    path.write_text(json.dumps(d))
    with pytest.raises(GridError, match="p_min"):
        load_grid(path)


def test_empty_and_broken_files(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    with pytest.raises(ParseError):
        load_grid(empty)
    broken = tmp_path / "broken.json"
    broken.write_text('{"buses": [')
    with pytest.raises(ParseError, match="line 1"):
        load_grid(broken)
    missing = tmp_path / "missing.json"
    missing.write_text('{"buses": []}')
    with pytest.raises(ParseError, match="lines"):
        load_grid(missing)


def test_scenario_round_trip(tmp_path, six_bus):
    _, scenario = six_bus
    path = tmp_path / "s.json"
    save_scenario(scenario, path)
    back = load_scenario(path)
    for q in ("p_wind", "q_wind", "p_demand", "q_demand"):
        assert np.array_equal(getattr(back, q), getattr(scenario, q))


def test_scenario_rejects_negative():
    with pytest.raises(GridError):
        ScenarioInput.from_active(-np.ones((1, 2)), np.ones((1, 2)))


def test_full_schema_length(six_bus):
    grid, scenario = six_bus
    schema = FeatureSchema.full(grid.n_buses, grid.horizon)
    fv = scenario_to_features(scenario, schema)
    assert len(fv) == 576
    assert np.array_equal(fv.values, scenario_to_features(scenario, schema).values)


def test_levels_schema_has_two_features(six_bus):
    grid, scenario = six_bus
    schema = FeatureSchema.levels(grid, 12)
    assert len(scenario_to_features(scenario, schema)) == 2


def test_schema_range_checked():
    with pytest.raises(GridError):
        FeatureSchema("bad", (("p_wind", 3, 0),), 2, 1)
    with pytest.raises(GridError):
        FeatureSchema("bad", (("voltage", 0, 0),), 2, 1)


def test_encode_examples():
    assert strategy_encode([1, 0, 1]).tolist() == [1, -1, 1]
    assert strategy_encode([1, -1], "zero_one").tolist() == [1, 0]
    with pytest.raises(GridError):
        strategy_encode([2, 0])
    with pytest.raises(GridError):
        strategy_encode([0, 1], "zero_one")


@given(st.lists(st.integers(0, 1), min_size=1, max_size=60))
def test_encode_round_trip(bits):
    back = strategy_encode(strategy_encode(bits, "plus_minus"), "zero_one")
    assert back.tolist() == bits


def test_strategy_shape_checks():
    with pytest.raises(GridError):
        Strategy(np.zeros(5), 2, 3)
    s = Strategy.from_matrix(np.array([[1, 0, 1], [0, 0, 1]]))
    assert s.bits.tolist() == [1, 0, 1, 0, 0, 1]
    assert s == Strategy(s.bits.copy(), 2, 3)


def test_samples_round_trip(tmp_path, six_bus):
    grid, _ = six_bus
    schema = FeatureSchema.levels(grid, 12)
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(5, 2)) / 3.0
    Y = rng.integers(0, 2, size=(5, 72))
    samples = SampleSet(schema, X, Y, 3, 24, grid, {"note": 1})
    path = tmp_path / "s.jsonl"
    save_samples(samples, path)
    back = load_samples(path)
    assert np.array_equal(back.features, samples.features)
    assert np.array_equal(back.strategies, samples.strategies)
    assert back.grid == grid and back.meta == {"note": 1}
    assert sum(c for _, c in back.catalog()) == 5


def test_samples_schema_mismatch(tmp_path, six_bus):
    grid, _ = six_bus
    schema = FeatureSchema.levels(grid, 12)
    path = tmp_path / "s.jsonl"
    save_samples(SampleSet(schema, np.zeros((1, 2)), np.zeros((1, 72)), 3, 24, grid), path)
    path.write_text(path.read_text().replace('"levels"', '"other"'))
    with pytest.raises(ParseError, match="schema"):
        load_samples(path)


def test_catalog_order():
    schema = FeatureSchema("one", (("p_wind", 0, 0),), 1, 1)
    Y = np.array([[0, 1], [1, 0], [0, 1], [1, 1]])
    cat = SampleSet(schema, np.zeros((4, 1)), Y, 1, 2).catalog()
    assert [c for _, c in cat] == [2, 1, 1]
    assert cat[0][0].bits.tolist() == [0, 1]
    assert cat[1][0].bits.tolist() == [1, 0]
