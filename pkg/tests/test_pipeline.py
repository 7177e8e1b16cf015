import json

import numpy as np
import pytest

from ucpredict.bnb import evaluate_assignment
from ucpredict.conic import Status
from ucpredict.grid import Bus, FeatureSchema, Generator, GridSpec, Line, SampleSet, Strategy, WindFarm
from ucpredict.pipeline import (
    REPORT_COLUMNS,
    EvalConfig,
    PredictorBundle,
    RecoveryError,
    TrainConfig,
    TriagePolicy,
    evaluate,
    hamming,
    knn_recover,
    load_bundle,
    predict_strategy,
    read_report,
    save_bundle,
    train_all,
    triage,
)
from ucpredict.sampler import SamplerConfig, run_sampling
from ucpredict.svm import CvConfig, LinearModel
from ucpredict.toy import small_scenario
from ucpredict.uc import binary_assignment, build_uc, check_min_updown


def sticky_grid():
    """Two cheap-to-start units on two buses; unit 0 must stay on two hours once started."""
    buses = [Bus(1, 0.95, 1.05, True), Bus(2, 0.95, 1.05)]
    lines = [Line(1, 2, -0.5, 10.0, 0.01, 2.0)]
    gens = [Generator(1, 1.0, 0.1, 0.8, -0.5, 1.0, 1.0, 1.0, 2, 1, 12.0, 3.0),
            Generator(2, 0.9, 0.2, 0.8, -0.5, 0.9, 0.9, 0.9, 1, 1, 25.0, 8.0)]
    return GridSpec.from_lines(buses, lines, gens, 3, [WindFarm(2, 0.3)], "sticky")


@pytest.fixture(scope="module")
def setup():
    grid = sticky_grid()
    rng = np.random.default_rng(3)
    base = small_scenario(rng, grid)
    res = run_sampling(grid, SamplerConfig(delta=0.05, seed=1, max_samples=10, schema="levels",
                                           load_sigma=0.2, load_clip=0.5), base)
    bundle = train_all(res.samples, TrainConfig("linear", cv=None, lam=1e-2), workers=1)
    cases = [small_scenario(np.random.default_rng(100 + k), grid) for k in range(3)]
    return grid, base, res.samples, bundle, cases


def _constant_bundle(n_units, horizon, sign=1.0):
    schema = FeatureSchema("one", (("p_wind", 0, 0),), 1, 1)
    models = [LinearModel(np.zeros(1), sign, 0.1, 0.0, degenerate=True) for _ in range(n_units * horizon)]
    return PredictorBundle("linear", schema, n_units, horizon, models, np.zeros((1, 1)),
                           np.ones((1, n_units * horizon)))


def test_degenerate_bundle_commits_everything():
    assert predict_strategy(_constant_bundle(3, 24), [0.7]).bits.tolist() == [1] * 72


def test_entries_compose_unit_major():
    schema = FeatureSchema("one", (("p_wind", 0, 0),), 1, 1)
    models = [LinearModel(np.array([1.0]), 0.0, 0.1, 0.0), LinearModel(np.array([-1.0]), 0.0, 0.1, 0.0)]
    bundle = PredictorBundle("linear", schema, 1, 2, models, np.zeros((1, 1)), np.zeros((1, 2)))
    s = predict_strategy(bundle, [2.0])
    assert s.bits.tolist() == [1, 0] and s.matrix().shape == (1, 2)
    with pytest.raises(ValueError):
        predict_strategy(bundle, [1.0, 2.0])


def test_train_all_counts_and_flags(setup):
    _, _, samples, bundle, _ = setup
    assert len(bundle.models) == 6
    assert bundle.meta["distinct_fits"] <= 6
    for k, model in enumerate(bundle.models):
        col = samples.strategies[:, k]
        if col.min() == col.max():
            assert model.degenerate
            assert model.b == (1.0 if col[0] else -1.0)


def test_train_all_72_models(six_bus):
    grid, _ = six_bus
    schema = FeatureSchema.levels(grid, 12)
    rng = np.random.default_rng(0)
    samples = SampleSet(schema, rng.uniform(size=(6, 2)), rng.integers(0, 2, size=(6, 72)), 3, 24, grid)
    bundle = train_all(samples, TrainConfig("linear", cv=None), workers=1)
    assert len(bundle.models) == 72
    assert bundle.model(2, 23) is bundle.models[71]


def test_bundle_round_trip(tmp_path, setup):
    *_, bundle, _ = setup
    path = tmp_path / "b.json"
    save_bundle(bundle, path)
    back = load_bundle(path)
    assert back.to_dict() == bundle.to_dict()
    x = bundle.features[0]
    assert predict_strategy(back, x) == predict_strategy(bundle, x)


def test_kernel_bundle_round_trip(tmp_path, setup):
    _, _, samples, _, _ = setup
    bundle = train_all(samples, TrainConfig("kernel", cv=CvConfig(folds=2, lambdas=(1e-2, 1.0), gammas=(1.0,))),
                       workers=1)
    path = tmp_path / "k.json"
    save_bundle(bundle, path)
    back = load_bundle(path)
    for x in samples.features:
        assert np.array_equal(predict_strategy(back, x).bits, predict_strategy(bundle, x).bits)


def test_hamming_and_empty_catalog(setup):
    grid, base, *_ = setup
    a, b = Strategy(np.array([1, 0, 1, 0, 0, 1]), 2, 3), Strategy(np.array([1, 1, 1, 0, 0, 0]), 2, 3)
    assert hamming(a, b) == 2
    with pytest.raises(ValueError):
        knn_recover(a, [], grid, base)


def _independent_feasible(grid, mip, s):
    return not check_min_updown(s, grid) and evaluate_assignment(mip, binary_assignment(s)).status is Status.OPTIMAL


def test_knn_recover_is_nearest_feasible(setup):
    grid, base, *_ = setup
    mip = build_uc(grid, base).mip
    rng = np.random.default_rng(7)
    catalog = [(Strategy(np.array([(c >> k) & 1 for k in range(6)], dtype=np.uint8), 2, 3), int(rng.integers(1, 4)))
               for c in range(64)]
    feasible = [(s, n) for s, n in catalog if _independent_feasible(grid, mip, s)]
    assert feasible
    for code in (0, 21, 42, 63):
        pred = catalog[code][0]
        got, dist = knn_recover(pred, catalog, grid, base, mip=mip)
        best = min(feasible, key=lambda sn: (hamming(pred, sn[0]), -sn[1], sn[0].bits.tobytes()))
        assert got == best[0] and dist == hamming(pred, best[0])


def test_knn_recover_raises_when_nothing_fits(setup):
    grid, base, *_ = setup
    off = Strategy(np.zeros(6, dtype=np.uint8), 2, 3)
    with pytest.raises(RecoveryError):
        knn_recover(off, [(off, 5)], grid, base)


def test_triage_paths(setup):
    grid, base, samples, bundle, _ = setup
    mip = build_uc(grid, base).mip
    good = next(s for s, _ in bundle.catalog() if _independent_feasible(grid, mip, s))
    out = triage(good, grid, base, bundle, TriagePolicy(bound=1e9), mip=mip)
    assert out.decision == "UseDirectly" and out.strategy == good and out.warm_start
    out = triage(good, grid, base, bundle, TriagePolicy(bound=-1.0), mip=mip)
    assert out.decision == "WarmStart" and out.strategy == good and not out.guarantee_holds
    # unit 0 on for a single hour breaks its two-hour minimum up time
    broken = Strategy(np.array([0, 1, 0, 1, 1, 1], dtype=np.uint8), 2, 3)
    assert check_min_updown(broken, grid)
    out = triage(broken, grid, base, bundle, mip=mip)
    assert out.decision == "RecoveredWarmStart"
    assert not check_min_updown(out.strategy, grid)
    assert out.knn_distance == hamming(broken, out.strategy)


def test_triage_discards_unrecoverable_prediction(setup):
    grid, base, samples, _, _ = setup
    off = np.zeros((1, 6))
    bundle = PredictorBundle("linear", samples.schema, 2, 3, _constant_bundle(2, 3, -1.0).models,
                             samples.features[:1], off)
    out = triage(Strategy(np.zeros(6, dtype=np.uint8), 2, 3), grid, base, bundle)
    assert out.decision == "WarmStart" and not out.warm_start and not out.feasible
    assert "corrective" in out.diagnostics[0]


def test_evaluate_report(tmp_path, setup):
    grid, _, _, bundle, cases = setup
    report = evaluate(bundle, None, cases, EvalConfig(), workers=1)
    assert len(report.rows) == 3 * len(cases)
    by_case = {}
    for r in report.rows:
        by_case.setdefault(r.case_id, {})[r.baseline] = r
    for rows in by_case.values():
        cold, warm, fixed = rows["cold"], rows["warm"], rows["fixed"]
        assert cold.status == "Optimal"
        assert warm.cost == pytest.approx(cold.cost, rel=1e-6)
        assert fixed.cost >= cold.cost - 1e-6 * abs(cold.cost)
        assert warm.triage_decision in ("UseDirectly", "WarmStart", "RecoveredWarmStart")
    path = tmp_path / "r.csv"
    sidecar = report.write(path)
    rows = read_report(path)
    assert tuple(rows[0]) == REPORT_COLUMNS and len(rows) == len(report.rows)
    meta = json.loads(sidecar.read_text())
    assert meta["aggregates"]["cold"]["cases"] == len(cases)
    assert meta["config"]["case_ids"] == ["case0000", "case0001", "case0002"]


def test_time_limit_zero(setup):
    grid, _, _, bundle, cases = setup
    report = evaluate(bundle, grid, cases[:1], EvalConfig("time_limited", 0.0, ("cold",)), workers=1)
    row = report.rows[0]
    assert row.status == "TimeLimit" and row.gap > 0


def test_evaluate_needs_grid(setup):
    *_, cases = setup
    bundle = _constant_bundle(2, 3)
    with pytest.raises(ValueError):
        evaluate(bundle, None, cases)
    with pytest.raises(ValueError):
        EvalConfig(baselines=("magic",))


def test_corrective_slacks_in_evaluation(setup):
    grid, _, _, bundle, cases = setup
    cfg = EvalConfig(baselines=("fixed",), corrective_slacks=True)
    report = evaluate(bundle, grid, cases[:2], cfg, workers=1)
    assert all(np.isfinite(r.cost) for r in report.rows)
