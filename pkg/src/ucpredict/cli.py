"""Command line entry point: generate, train, predict, solve, evaluate.

Failures print one JSON line ``{"error": ..., "message": ...}`` on stderr and
exit nonzero (2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bnb import BnbSettings
from .grid import (
    GridError,
    GridSpec,
    Strategy,
    fixture_path,
    load_grid,
    load_samples,
    load_scenario,
    save_samples,
)
from .pipeline import (
    EvalConfig,
    TrainConfig,
    TriagePolicy,
    evaluate,
    load_bundle,
    predict_strategy,
    save_bundle,
    solve_case,
    train_all,
    triage,
)
from .sampler import SamplerConfig, run_sampling
from .svm import DEFAULT_GAMMAS, DEFAULT_LAMBDAS, CvConfig
from .uc import UcOptions

log = logging.getLogger("ucpredict")

class UsageError(Exception):
    pass

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)

def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals

def _grid(arg: str) -> GridSpec:
    """A grid JSON path, or the name of a bundled fixture such as ``six_bus``."""
    path = Path(arg)
    if not path.exists() and fixture_path(f"{arg}.grid.json").exists():
        path = fixture_path(f"{arg}.grid.json")
    return load_grid(path)

def _strategy_text(s: Strategy) -> str:
    return "\n".join("".join(str(int(b)) for b in row) for row in s.matrix())

def _emit(obj) -> None:
    print(json.dumps(obj, default=float))

def cmd_generate(args) -> int:
    grid = _grid(args.grid)
    base = load_scenario(args.base) if args.base else None
    config = SamplerConfig(delta=args.delta, epsilon=args.epsilon, seed=args.seed, max_samples=args.max_samples,
                           load_sigma=args.load_sigma, schema=args.schema, time_limit=args.time_limit)
    res = run_sampling(grid, config, base)
    save_samples(res.samples, args.out)
    _emit({"status": res.status, "samples": len(res.samples), "distinct": res.state.n_distinct,
           "singletons": res.state.n_singletons, "bound": res.bound, "skipped": res.skipped, "out": args.out})
    return 0

def cmd_train(args) -> int:
    samples = load_samples(args.samples)
    cv = None
    if not args.no_cv:
        cv = CvConfig(folds=args.folds, lambdas=args.lambda_grid, gammas=args.gamma_grid, seed=args.seed)
    config = TrainConfig(kind=args.kind, cv=cv, lam=args.lam, gamma=args.gamma)
    cv_samples = load_samples(args.cv_samples) if args.cv_samples else None
    bundle = train_all(samples, config, cv_samples, workers=args.workers)
    if bundle.grid is None and args.grid:
        bundle.grid = _grid(args.grid)
    save_bundle(bundle, args.out)
    degenerate = sum(m.degenerate for m in bundle.models)
    _emit({"kind": bundle.kind, "models": len(bundle.models), "degenerate": degenerate,
           "distinct_fits": bundle.meta["distinct_fits"], "out": args.out})
    return 0

def _bundle_grid(bundle, grid_arg):
    if grid_arg:
        return _grid(grid_arg)
    if bundle.grid is None:
        raise ValueError("bundle carries no grid; pass --grid")
    return bundle.grid

def cmd_predict(args) -> int:
    bundle = load_bundle(args.bundle)
    grid = _bundle_grid(bundle, args.grid)
    scenario = load_scenario(args.scenario)
    strategy = predict_strategy(bundle, scenario)
    policy = TriagePolicy(slack=args.policy_slack)
    outcome = triage(strategy, grid, scenario, bundle, policy, UcOptions(corrective_slacks=args.corrective_slacks))
    print(_strategy_text(strategy))
    _emit({"decision": outcome.decision, "feasible": outcome.feasible,
           "guarantee_holds": outcome.guarantee_holds, "knn_distance": outcome.knn_distance,
           "strategy": "".join(map(str, outcome.strategy.bits)), "diagnostics": outcome.diagnostics})
    return 0

def cmd_solve(args) -> int:
    grid = _grid(args.grid)
    scenario = load_scenario(args.scenario)
    warm = None
    if args.bundle:
        warm = predict_strategy(load_bundle(args.bundle), scenario)
    settings = BnbSettings(time_limit=args.time_limit, node_limit=args.node_limit, gap_tolerance=args.gap,
                           trace_path=args.trace)
    res, strategy = solve_case(grid, scenario, settings, warm, UcOptions(corrective_slacks=args.corrective_slacks))
    if strategy is not None and args.show_strategy:
        print(_strategy_text(strategy))
    _emit({"cost": res.upper_bound, "gap": res.gap, "status": res.status.value, "nodes": res.nodes,
           "wall_time_s": res.wall_time, "lower_bound": res.lower_bound,
           "warm_start_accepted": res.warm_start_accepted})
    return 0

def cmd_evaluate(args) -> int:
    bundle = load_bundle(args.bundle)
    grid = _bundle_grid(bundle, args.grid)
    case_dir = Path(args.cases)
    if not case_dir.is_dir():
        raise FileNotFoundError(f"case directory {case_dir} not found")
    files = sorted(case_dir.glob("*.json"))
    if not files:
        raise FileNotFoundError(f"no *.json scenarios in {case_dir}")
    cases = [(f.stem, load_scenario(f)) for f in files]
    baselines = tuple(b.strip() for b in args.baselines.split(",") if b.strip())
    config = EvalConfig(mode=args.mode, time_limit=args.time_limit, baselines=baselines,
                        corrective_slacks=args.corrective_slacks, policy=TriagePolicy(slack=args.policy_slack))
    report = evaluate(bundle, grid, cases, config, workers=args.workers)
    sidecar = report.write(args.out)
    _emit({"rows": len(report.rows), "out": args.out, "sidecar": str(sidecar), "aggregates": report.aggregates()})
    return 0

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ucpredict", description="Learn unit-commitment decisions and use them to warm-start "
                                                "a branch-and-bound MISOCP solver.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample scenarios, solve them and record optimal commitments")
    g.add_argument("--grid", required=True, help="grid JSON file or bundled fixture name (six_bus)")
    g.add_argument("--base", help="base scenario JSON giving the daily shapes (default: the fixture's)")
    g.add_argument("--delta", type=float, default=0.4, help="stop once the novelty bound is <= delta")
    g.add_argument("--epsilon", type=float, default=0.1, help="confidence parameter of the novelty bound")
    g.add_argument("--seed", type=int, default=0, help="scenario RNG seed")
    g.add_argument("--max-samples", type=int, default=1000, help="hard cap on recorded samples")
    g.add_argument("--load-sigma", type=float, default=0.0, help="std of the truncated-normal load factor")
    g.add_argument("--schema", choices=("full", "levels"), default="full", help="feature schema")
    g.add_argument("--time-limit", type=float, help="per-scenario solver time limit in seconds")
    g.add_argument("--out", required=True, help="output SampleSet (JSON lines plus .schema.json sidecar)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit one classifier per (unit, hour)")
    t.add_argument("--samples", required=True, help="SampleSet written by generate")
    t.add_argument("--kind", choices=("linear", "kernel"), default="linear", help="classifier family")
    t.add_argument("--folds", type=int, default=4, help="cross-validation folds")
    t.add_argument("--lambda-grid", type=_float_list, default=DEFAULT_LAMBDAS,
                   help="comma-separated regularization weights to cross-validate")
    t.add_argument("--gamma-grid", type=_float_list, default=DEFAULT_GAMMAS,
                   help="comma-separated kernel widths to cross-validate")
    t.add_argument("--seed", type=int, default=0, help="fold assignment seed")
    t.add_argument("--no-cv", action="store_true", help="skip cross-validation, use --lambda/--gamma")
    t.add_argument("--lambda", dest="lam", type=float, default=1e-3, help="regularization weight without CV")
    t.add_argument("--gamma", type=float, default=1.0, help="kernel width without CV")
    t.add_argument("--cv-samples", help="cross-validate on this SampleSet instead of the training data")
    t.add_argument("--grid", help="grid to store in the bundle when the samples carry none")
    t.add_argument("--workers", type=int, help="worker processes (default: $UCPREDICT_THREADS or 1)")
    t.add_argument("--out", required=True, help="output bundle JSON")
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("predict", help="predict a commitment and triage it")
    r.add_argument("--bundle", required=True, help="bundle JSON written by train")
    r.add_argument("--scenario", required=True, help="scenario JSON")
    r.add_argument("--grid", help="grid JSON (default: the grid stored in the bundle)")
    r.add_argument("--policy-slack", type=float, default=0.0, help="per-classifier guarantee slack")
    r.add_argument("--corrective-slacks", action="store_true", help="add load-shedding and curtailment slacks")
    r.set_defaults(func=cmd_predict)

    s = sub.add_parser("solve", help="solve one UC instance by branch and bound")
    s.add_argument("--grid", required=True, help="grid JSON file or bundled fixture name")
    s.add_argument("--scenario", required=True, help="scenario JSON")
    s.add_argument("--bundle", help="warm-start from this bundle's prediction")
    s.add_argument("--time-limit", type=float, help="wall-clock limit in seconds")
    s.add_argument("--node-limit", type=int, help="maximum number of nodes")
    s.add_argument("--gap", type=float, default=1e-6, help="relative optimality gap tolerance")
    s.add_argument("--trace", help="write a per-node JSON-lines trace here")
    s.add_argument("--corrective-slacks", action="store_true", help="add load-shedding and curtailment slacks")
    s.add_argument("--show-strategy", action="store_true", help="print the commitment matrix")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="run cold / warm / fixed baselines over a directory of scenarios")
    e.add_argument("--bundle", required=True, help="bundle JSON written by train")
    e.add_argument("--cases", required=True, help="directory of scenario JSON files")
    e.add_argument("--grid", help="grid JSON (default: the grid stored in the bundle)")
    e.add_argument("--mode", choices=("unlimited", "time_limited"), default="unlimited", help="solver budget mode")
    e.add_argument("--time-limit", type=float, help="per-solve limit in seconds for time_limited mode")
    e.add_argument("--baselines", default="cold,warm,fixed", help="comma-separated subset of cold,warm,fixed")
    e.add_argument("--policy-slack", type=float, default=0.0, help="per-classifier guarantee slack")
    e.add_argument("--corrective-slacks", action="store_true", help="add load-shedding and curtailment slacks")
    e.add_argument("--workers", type=int, help="worker processes (default: $UCPREDICT_THREADS or 1)")
    e.add_argument("--out", default="report.csv", help="report CSV; the JSON sidecar goes next to it")
    e.set_defaults(func=cmd_evaluate)
    return p

def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code

def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail("file_not_found", str(exc), 1)
    except GridError as exc:
        return _fail("bad_input", str(exc), 1)
    except (ValueError, KeyError) as exc:
        return _fail("invalid", str(exc), 1)
    except RuntimeError as exc:
        return _fail("runtime", str(exc), 1)

if __name__ == "__main__":
    sys.exit(main())
