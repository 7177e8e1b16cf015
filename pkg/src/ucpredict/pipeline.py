"""Commitment prediction, triage, nearest-neighbor recovery and the evaluation harness."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import _accel
from .bnb import BnbSettings, evaluate_assignment, solve_mip
from .conic import Status
from .grid import FeatureSchema, FeatureVector, GridSpec, SampleSet, ScenarioInput, Strategy
from .svm import (
    CvConfig,
    KernelModel,
    LabeledSet,
    LinearModel,
    check_guarantee,
    cross_validate,
    train,
)
from .uc import UcOptions, binary_assignment, build_uc, check_min_updown, extract_strategy

log = logging.getLogger(__name__)

BUNDLE_FORMAT = 1
THREADS_ENV = "UCPREDICT_THREADS"
REPORT_COLUMNS = ("case_id", "baseline", "cost", "wall_time_s", "nodes", "gap", "status",
                  "triage_decision", "knn_distance")
DECISIONS = ("UseDirectly", "WarmStart", "RecoveredWarmStart")


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV}={raw!r} is not an integer") from None


# ---------------------------------------------------------------- bundle


@dataclass
class PredictorBundle:
    """One classifier per commitment entry (unit-major), plus the training replay."""

    kind: str
    schema: FeatureSchema
    n_units: int
    horizon: int
    models: list
    features: np.ndarray
    strategies: np.ndarray
    meta: dict = field(default_factory=dict)
    grid: GridSpec | None = None

    def __post_init__(self):
        if len(self.models) != self.n_units * self.horizon:
            raise ValueError(f"{len(self.models)} models for {self.n_units}x{self.horizon} entries")
        self.features = np.asarray(self.features, dtype=float).reshape(-1, len(self.schema))
        self.strategies = np.asarray(self.strategies, dtype=np.uint8).reshape(self.features.shape[0], -1)

    def model(self, g: int, t: int):
        return self.models[g * self.horizon + t]

    def labels(self, k: int) -> np.ndarray:
        return self.strategies[:, k].astype(float) * 2.0 - 1.0

    def catalog(self) -> list[tuple[Strategy, int]]:
        return SampleSet(self.schema, self.features, self.strategies, self.n_units, self.horizon).catalog()

    def to_dict(self) -> dict:
        models = []
        for m in self.models:
            rec = {"lambda": m.lam, "J": m.objective, "degenerate": m.degenerate,
                   "duality_gap": m.duality_gap}
            if isinstance(m, LinearModel):
                rec.update(w=m.w.tolist(), b=m.b)
            else:
                # support rows are the bundle's training features
                rec.update(beta=m.beta.tolist(), gamma=m.gamma, constant=m.constant, support="features")
            models.append(rec)
        return {"format": BUNDLE_FORMAT, "kind": self.kind, "schema": self.schema.to_dict(),
                "n_units": self.n_units, "horizon": self.horizon,
                "features": self.features.tolist(), "strategies": self.strategies.tolist(),
                "models": models, "meta": self.meta,
                "grid": self.grid.to_dict() if self.grid is not None else None}

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorBundle":
        if d.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"unsupported bundle format {d.get('format')!r}")
        schema = FeatureSchema.from_dict(d["schema"])
        X = np.asarray(d["features"], dtype=float).reshape(-1, len(schema))
        models = []
        for rec in d["models"]:
            if d["kind"] == "linear":
                models.append(LinearModel(np.asarray(rec["w"], dtype=float), float(rec["b"]), rec["lambda"],
                                          rec["J"], rec["degenerate"], rec["duality_gap"]))
            else:
                models.append(KernelModel(X, np.asarray(rec["beta"], dtype=float), rec["gamma"], rec["lambda"],
                                          rec["J"], rec["degenerate"], rec["duality_gap"], rec["constant"]))
        return cls(d["kind"], schema, int(d["n_units"]), int(d["horizon"]), models, X,
                   np.asarray(d["strategies"], dtype=np.uint8), d.get("meta", {}),
                   GridSpec.from_dict(d["grid"]) if d.get("grid") else None)


def save_bundle(bundle: PredictorBundle, path) -> None:
    Path(path).write_text(json.dumps(bundle.to_dict()) + "\n")


def load_bundle(path) -> PredictorBundle:
    return PredictorBundle.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "linear"
    cv: CvConfig | None = CvConfig()
    lam: float = 1e-3
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "kernel"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")


def _fit_entry(args):
    data, cv_data, config = args
    if data.single_class() is not None:
        return train(data, config.kind, config.lam, config.gamma), None
    lam, gamma = config.lam, config.gamma
    choice = None
    if config.cv is not None and cv_data.single_class() is None and len(cv_data) >= config.cv.folds:
        choice = cross_validate(cv_data, config.cv, config.kind)
        lam, gamma = choice.lam, choice.gamma if choice.gamma is not None else gamma
    return train(data, config.kind, lam, gamma), choice


def train_all(samples: SampleSet, config: TrainConfig | None = None,
              cv_samples: SampleSet | None = None, workers: int | None = None) -> PredictorBundle:
    """Fit one classifier per (unit, hour) entry of the commitment.

    Hyperparameters come from cross-validation on ``cv_samples`` (the training
    set itself by default). Entries whose label columns coincide share a fit.
    """
    config = config or TrainConfig()
    if len(samples) == 0:
        raise ValueError("no samples to train on")
    if cv_samples is not None and cv_samples.schema != samples.schema:
        raise ValueError("cross-validation samples use a different feature schema")
    cv_src = cv_samples or samples
    X = samples.features
    n_entries = samples.n_units * samples.horizon
    jobs, job_of = {}, []
    for k in range(n_entries):
        key = samples.strategies[:, k].tobytes() + cv_src.strategies[:, k].tobytes()
        if key not in jobs:
            y = samples.strategies[:, k].astype(float) * 2 - 1
            cy = cv_src.strategies[:, k].astype(float) * 2 - 1
            jobs[key] = (LabeledSet(X, y), LabeledSet(cv_src.features, cy), config)
        job_of.append(key)
    keys = list(jobs)
    workers = workers or default_workers()
    if workers > 1 and len(keys) > 1:
        with ProcessPoolExecutor(workers) as pool:
            fitted = dict(zip(keys, pool.map(_fit_entry, [jobs[k] for k in keys])))
    else:
        fitted = {k: _fit_entry(jobs[k]) for k in keys}
    models, hyper = [], []
    for key in job_of:
        model, choice = fitted[key]
        models.append(model)
        hyper.append(None if choice is None else {"lambda": choice.lam, "gamma": choice.gamma})
    meta = {"n_samples": len(samples), "distinct_fits": len(keys), "hyperparameters": hyper,
            "cv": None if config.cv is None else {"folds": config.cv.folds, "seed": config.cv.seed,
                                                  "lambdas": list(config.cv.lambdas),
                                                  "gammas": list(config.cv.gammas)},
            "cv_on": "training" if cv_samples is None else "separate",
            "sampler": samples.meta.get("sampler")}
    return PredictorBundle(config.kind, samples.schema, samples.n_units, samples.horizon, models,
                           X, samples.strategies, meta, samples.grid)


# ---------------------------------------------------------------- prediction


def _features(bundle: PredictorBundle, x) -> np.ndarray:
    if isinstance(x, ScenarioInput):
        x = bundle.schema.extract(x)
    if isinstance(x, FeatureVector):
        if x.schema != bundle.schema.name:
            raise ValueError(f"feature schema {x.schema!r} does not match bundle schema {bundle.schema.name!r}")
        x = x.values
    x = np.asarray(x, dtype=float).ravel()
    if x.size != len(bundle.schema):
        raise ValueError(f"feature vector has {x.size} entries, bundle schema has {len(bundle.schema)}")
    return x


def entry_scores(bundle: PredictorBundle, x) -> np.ndarray:
    x = _features(bundle, x)[None, :]
    return np.array([float(m.scores(x)[0]) for m in bundle.models])


def predict_strategy(bundle: PredictorBundle, x) -> Strategy:
    """Commitment with entry (g, t) from classifier (g, t); zero scores commit."""
    scores = entry_scores(bundle, x)
    return Strategy((scores >= 0).astype(np.uint8), bundle.n_units, bundle.horizon)


# ---------------------------------------------------------------- triage and recovery


class RecoveryError(RuntimeError):
    """No catalog strategy is feasible for the scenario."""


def _feasible(grid: GridSpec, mip, strategy: Strategy) -> bool:
    if check_min_updown(strategy, grid):
        return False
    return evaluate_assignment(mip, binary_assignment(strategy)).status is Status.OPTIMAL


def hamming(a: Strategy, b: Strategy) -> int:
    return int(np.count_nonzero(a.bits != b.bits))


def knn_recover(strategy: Strategy, catalog, grid: GridSpec, scenario: ScenarioInput,
                options: UcOptions | None = None, mip=None) -> tuple[Strategy, int]:
    """Nearest feasible catalog strategy by Hamming distance.

    ``catalog`` holds (strategy, count) pairs. Candidates are scanned outward
    from the prediction; ties go to the higher count, then lexicographic bits.
    """
    catalog = list(catalog)
    if not catalog:
        raise ValueError("empty strategy catalog")
    if mip is None:
        mip = build_uc(grid, scenario, options).mip
    dist = _accel.hamming_distances(np.array([sc[0].bits for sc in catalog]), strategy.bits)
    order = sorted(range(len(catalog)), key=lambda k: (dist[k], -catalog[k][1], catalog[k][0].bits.tobytes()))
    for k in order:
        if _feasible(grid, mip, catalog[k][0]):
            return catalog[k][0], int(dist[k])
    raise RecoveryError("no catalog strategy is feasible for this scenario; "
                        "rerun with corrective slacks enabled (--corrective-slacks)")


@dataclass(frozen=True)
class TriagePolicy:
    """Thresholds for adopting a prediction without branch-and-bound.

    Each classifier passes when its mean hinge on the training replay plus
    the new point (labelled by the triaged strategy) stays within its
    training optimum plus ``slack``. A set ``bound`` replaces that threshold.
    ``aggregate`` compares the summed losses against the summed thresholds.
    """

    slack: float = 0.0
    bound: float | None = None
    aggregate: bool = False


@dataclass
class TriageOutcome:
    decision: str
    strategy: Strategy
    warm_start: bool
    feasible: bool
    guarantee_holds: bool
    knn_distance: int | None = None
    lhs: np.ndarray | None = None
    bounds: np.ndarray | None = None
    diagnostics: list[str] = field(default_factory=list)


def guarantee_report(bundle: PredictorBundle, strategy: Strategy, x, policy: TriagePolicy):
    x = _features(bundle, x)
    X = np.vstack([bundle.features, x])
    new_labels = strategy.bits.astype(float) * 2 - 1
    lhs, bounds = [], []
    for k, model in enumerate(bundle.models):
        data = LabeledSet(X, np.append(bundle.labels(k), new_labels[k]))
        check = check_guarantee(model, data, policy.slack)
        lhs.append(check.lhs)
        bounds.append(check.bound if policy.bound is None else policy.bound)
    lhs, bounds = np.array(lhs), np.array(bounds)
    holds = lhs.sum() <= bounds.sum() if policy.aggregate else bool(np.all(lhs <= bounds))
    return bool(holds), lhs, bounds


def triage(strategy: Strategy, grid: GridSpec, scenario: ScenarioInput, bundle: PredictorBundle,
           policy: TriagePolicy | None = None, options: UcOptions | None = None, mip=None) -> TriageOutcome:
    """Adopt, warm-start from, or repair a predicted commitment."""
    policy = policy or TriagePolicy()
    if mip is None:
        mip = build_uc(grid, scenario, options).mip
    feasible = _feasible(grid, mip, strategy)
    holds, lhs, bounds = guarantee_report(bundle, strategy, scenario, policy)
    if feasible and holds:
        return TriageOutcome("UseDirectly", strategy, True, True, True, None, lhs, bounds)
    if feasible:
        bad = int(np.count_nonzero(lhs > bounds))
        return TriageOutcome("WarmStart", strategy, True, True, False, None, lhs, bounds,
                             [f"guarantee check fails on {bad} classifiers"])
    try:
        recovered, dist = knn_recover(strategy, bundle.catalog(), grid, scenario, options, mip)
    except RecoveryError as exc:
        # the infeasible prediction is discarded; the solve starts cold
        return TriageOutcome("WarmStart", strategy, False, False, holds, None, lhs, bounds, [str(exc)])
    rhold, rlhs, rbounds = guarantee_report(bundle, recovered, scenario, policy)
    return TriageOutcome("RecoveredWarmStart", recovered, True, True, rhold, dist, rlhs, rbounds,
                         [f"prediction infeasible, recovered catalog strategy at distance {dist}"])


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class EvalConfig:
    mode: str = "unlimited"
    time_limit: float | None = None
    baselines: tuple = ("cold", "warm", "fixed")
    gap_tolerance: float = 1e-6
    corrective_slacks: bool = False
    policy: TriagePolicy = TriagePolicy()

    def __post_init__(self):
        if self.mode not in ("unlimited", "time_limited"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "time_limited" and (self.time_limit is None or self.time_limit < 0):
            raise ValueError("time_limited mode needs a nonnegative time_limit")
        unknown = set(self.baselines) - {"cold", "warm", "fixed"}
        if unknown or not self.baselines:
            raise ValueError(f"unknown baselines {sorted(unknown)}")

    def bnb_settings(self) -> BnbSettings:
        limit = self.time_limit if self.mode == "time_limited" else None
        return BnbSettings(time_limit=limit, gap_tolerance=self.gap_tolerance)


@dataclass
class ReportRow:
    case_id: str
    baseline: str
    cost: float
    wall_time_s: float
    nodes: int
    gap: float
    status: str
    triage_decision: str = ""
    knn_distance: int | None = None


def _row_from_mip(case_id, baseline, res, decision="", dist=None) -> ReportRow:
    return ReportRow(case_id, baseline, res.upper_bound, res.wall_time, res.nodes, res.gap,
                     res.status.value, decision, dist)


def run_case(bundle: PredictorBundle, grid: GridSpec, case_id: str, scenario: ScenarioInput,
             config: EvalConfig) -> list[ReportRow]:
    """All requested baselines on one scenario. Solver failures become row statuses."""
    options = UcOptions(corrective_slacks=config.corrective_slacks)
    model = build_uc(grid, scenario, options)
    settings = config.bnb_settings()
    rows = []
    outcome = None
    if "warm" in config.baselines or "fixed" in config.baselines:
        t0 = time.perf_counter()
        outcome = triage(predict_strategy(bundle, scenario), grid, scenario, bundle, config.policy,
                         options, model.mip)
        triage_time = time.perf_counter() - t0
    if "cold" in config.baselines:
        rows.append(_row_from_mip(case_id, "cold", solve_mip(model.mip, settings)))
    if "warm" in config.baselines:
        start = binary_assignment(outcome.strategy) if outcome.warm_start else None
        res = solve_mip(model.mip, settings, warm_start=start)
        row = _row_from_mip(case_id, "warm", res, outcome.decision, outcome.knn_distance)
        row.wall_time_s += triage_time
        rows.append(row)
    if "fixed" in config.baselines:
        t0 = time.perf_counter()
        sol = evaluate_assignment(model.mip, binary_assignment(outcome.strategy))
        elapsed = time.perf_counter() - t0
        cost = sol.objective if sol.status is Status.OPTIMAL else float("inf")
        rows.append(ReportRow(case_id, "fixed", cost, elapsed, 0, 0.0 if np.isfinite(cost) else float("inf"),
                              sol.status.value, outcome.decision, outcome.knn_distance))
    return rows


def _run_case_job(args):
    return run_case(*args)


@dataclass
class EvaluationReport:
    rows: list[ReportRow]
    config: dict = field(default_factory=dict)

    def baseline_rows(self, baseline: str) -> list[ReportRow]:
        return [r for r in self.rows if r.baseline == baseline]

    def aggregates(self) -> dict:
        out = {}
        for name in dict.fromkeys(r.baseline for r in self.rows):
            rows = self.baseline_rows(name)
            costs = np.array([r.cost for r in rows if np.isfinite(r.cost)])
            times = np.array([r.wall_time_s for r in rows])
            out[name] = {
                "cases": len(rows),
                "finite_cost_cases": int(costs.size),
                "mean_cost": float(costs.mean()) if costs.size else None,
                "mean_time_s": float(times.mean()),
                "p50_time_s": float(np.percentile(times, 50)),
                "p90_time_s": float(np.percentile(times, 90)),
                "mean_nodes": float(np.mean([r.nodes for r in rows])),
                "statuses": {s: sum(r.status == s for r in rows) for s in sorted({r.status for r in rows})},
            }
        return out

    def write(self, path) -> Path:
        """CSV rows at ``path`` and config plus aggregates at ``<path>.json``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(REPORT_COLUMNS)
            for r in self.rows:
                writer.writerow([r.case_id, r.baseline, repr(float(r.cost)), f"{r.wall_time_s:.6f}", r.nodes,
                                 repr(float(r.gap)), r.status, r.triage_decision,
                                 "" if r.knn_distance is None else r.knn_distance])
        sidecar = Path(str(path) + ".json")
        sidecar.write_text(json.dumps({"columns": list(REPORT_COLUMNS), "config": self.config,
                                       "aggregates": self.aggregates()}, indent=1, default=str) + "\n")
        return sidecar


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def evaluate(bundle: PredictorBundle, grid: GridSpec | None, cases, config: EvalConfig | None = None,
             workers: int | None = None) -> EvaluationReport:
    """Run every case; ``cases`` is a list of scenarios or (case_id, scenario) pairs."""
    config = config or EvalConfig()
    grid = grid or bundle.grid
    if grid is None:
        raise ValueError("no grid given and the bundle does not carry one")
    cases = [c if isinstance(c, tuple) else (f"case{i:04d}", c) for i, c in enumerate(cases)]
    for cid, sc in cases:
        sc.check_grid(grid)
        bundle.schema.extract(sc)
    workers = workers or default_workers()
    jobs = [(bundle, grid, cid, sc, config) for cid, sc in cases]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            per_case = list(pool.map(_run_case_job, jobs))
    else:
        per_case = [_run_case_job(j) for j in jobs]
    rows = [r for case_rows in per_case for r in case_rows]
    cfg = asdict(config)
    cfg.update(bundle_kind=bundle.kind, schema=bundle.schema.name, workers=workers,
               bundle_meta={k: bundle.meta.get(k) for k in ("n_samples", "cv", "sampler")},
               case_ids=[cid for cid, _ in cases])
    return EvaluationReport(rows, cfg)


def solve_case(grid: GridSpec, scenario: ScenarioInput, settings: BnbSettings | None = None,
               warm: Strategy | None = None, options: UcOptions | None = None):
    """Solve one UC instance; returns (result, strategy or None)."""
    model = build_uc(grid, scenario, options)
    start = binary_assignment(warm) if warm is not None else None
    res = solve_mip(model.mip, settings or BnbSettings(), warm_start=start)
    strategy = extract_strategy(res.x, model.varmap) if res.x is not None else None
    return res, strategy


__all__ = [
    "DECISIONS", "EvalConfig", "EvaluationReport", "PredictorBundle", "RecoveryError", "ReportRow",
    "TrainConfig", "TriageOutcome", "TriagePolicy", "default_workers", "entry_scores", "evaluate",
    "hamming", "knn_recover", "load_bundle", "predict_strategy", "read_report", "run_case",
    "save_bundle", "solve_case", "train_all", "triage",
]
