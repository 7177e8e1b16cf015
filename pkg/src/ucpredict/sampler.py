"""Training-data generation with a missing-mass stopping rule.

Scenarios are drawn around fixed daily shapes, each one is solved as a
mixed-integer program, and the optimal commitment is recorded. Sampling stops
once the Good-Turing style bound on the chance of meeting an unseen strategy
falls below the requested level.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import truncnorm

from .bnb import BnbSettings, MipStatus, solve_mip
from .grid import FeatureSchema, GridSpec, SampleSet, ScenarioInput, Strategy, load_fixture_scenario
from .uc import UcOptions, binary_assignment, build_uc, check_min_updown, extract_strategy

log = logging.getLogger(__name__)

# constant of the concentration term: 2*sqrt(2) + sqrt(3)
NOVELTY_TAU = 2.0 * math.sqrt(2.0) + math.sqrt(3.0)


def novelty_term(n_samples: int, epsilon: float) -> float:
    """The concentration part of the bound, tau * sqrt(ln(3/eps) / H)."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    return NOVELTY_TAU * math.sqrt(math.log(3.0 / epsilon) / n_samples)


def novelty_bound(n_samples: int, n_singletons: int, epsilon: float) -> float:
    """Upper bound on the probability that the next scenario yields an unseen strategy.

    Holds with confidence ``1 - epsilon``; clamped to [0, 1].
    """
    if not 0 <= n_singletons <= n_samples:
        raise ValueError("need 0 <= n_singletons <= n_samples")
    raw = n_singletons / n_samples + novelty_term(n_samples, epsilon)
    return min(1.0, max(0.0, raw))


class NoveltyState:
    """Strategy multiset with an exact count of strategies seen once."""

    def __init__(self):
        self.counts: Counter[bytes] = Counter()
        self.n_samples = 0
        self.n_singletons = 0

    def add(self, strategy: Strategy) -> bool:
        """Record one observation; returns True when the strategy is new."""
        key = strategy.bits.tobytes()
        before = self.counts[key]
        if before == 0:
            self.n_singletons += 1
        elif before == 1:
            self.n_singletons -= 1
        self.counts[key] = before + 1
        self.n_samples += 1
        return before == 0

    @property
    def n_distinct(self) -> int:
        return len(self.counts)

    def bound(self, epsilon: float) -> float:
        if self.n_samples == 0:
            return 1.0
        return novelty_bound(self.n_samples, self.n_singletons, epsilon)

    def most_common(self) -> bytes | None:
        if not self.counts:
            return None
        # highest count, then lexicographic, so the choice is reproducible
        return min(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


@dataclass(frozen=True)
class SamplerConfig:
    """Stopping targets, scenario law and solver budget for one sampling run.

    Wind at each farm is a uniform level on [0, capacity] times the base daily
    shape normalized to a unit peak. A set ``wind_scale`` replaces that draw by
    the base profiles times a constant. With ``load_sigma > 0`` every load bus
    is also scaled by a Gaussian factor truncated to ``1 +/- load_clip``.
    """

    delta: float = 0.4
    epsilon: float = 0.1
    seed: int = 0
    max_samples: int = 1000
    load_sigma: float = 0.0
    load_clip: float = 0.2
    schema: str = "full"
    time_limit: float | None = None
    gap_tolerance: float = 1e-6
    warm_from_catalog: bool = True
    wind_scale: float | None = None

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.max_samples < 1:
            raise ValueError("max_samples must be at least 1")
        if self.load_sigma < 0 or not 0 <= self.load_clip < 1:
            raise ValueError("load_sigma must be >= 0 and load_clip in [0, 1)")
        if self.schema not in ("full", "levels"):
            raise ValueError(f"unknown schema {self.schema!r}")
        if self.wind_scale is not None and self.wind_scale < 0:
            raise ValueError("wind_scale must be nonnegative")


class ScenarioLaw:
    """Base profiles plus the random scaling applied by :func:`draw_scenario`."""

    def __init__(self, grid: GridSpec, base: ScenarioInput, config: SamplerConfig):
        base.check_grid(grid)
        self.grid = grid
        self.base = base
        self.config = config
        self.farm_rows = [grid.bus_index(f.bus) for f in grid.wind_farms]
        self.capacity = np.array([f.capacity for f in grid.wind_farms])
        shapes = []
        for row in self.farm_rows:
            prof = base.p_wind[row]
            peak = prof.max()
            if peak <= 0:
                raise ValueError(f"wind farm at bus row {row} has an all-zero base profile")
            shapes.append(prof / peak)
        self.wind_shape = np.array(shapes).reshape(len(self.farm_rows), grid.horizon)
        self.load_rows = np.flatnonzero(base.p_demand.max(axis=1) > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(base.p_wind > 0, base.q_wind / base.p_wind, np.nan)
        ratio = ratio[np.isfinite(ratio)]
        self.wind_q_ratio = float(np.median(ratio)) if ratio.size else 0.0


def draw_scenario(rng: np.random.Generator, law: ScenarioLaw) -> ScenarioInput:
    """One scenario: random wind levels (and optional load factors) on the base shapes."""
    cfg = law.config
    base = law.base
    p_wind = np.array(base.p_wind, dtype=float)
    q_wind = np.array(base.q_wind, dtype=float)
    if cfg.wind_scale is not None:
        p_wind[law.farm_rows] *= cfg.wind_scale
        q_wind[law.farm_rows] *= cfg.wind_scale
    else:
        levels = rng.uniform(0.0, 1.0, size=len(law.farm_rows)) * law.capacity
        for k, row in enumerate(law.farm_rows):
            p_wind[row] = levels[k] * law.wind_shape[k]
            q_wind[row] = p_wind[row] * law.wind_q_ratio
    p_demand = np.array(base.p_demand, dtype=float)
    q_demand = np.array(base.q_demand, dtype=float)
    if cfg.load_sigma > 0 and law.load_rows.size:
        bound = cfg.load_clip / cfg.load_sigma
        factors = 1.0 + cfg.load_sigma * truncnorm.rvs(-bound, bound, size=law.load_rows.size,
                                                       random_state=rng)
        p_demand[law.load_rows] *= factors[:, None]
        q_demand[law.load_rows] *= factors[:, None]
    return ScenarioInput(p_wind, q_wind, p_demand, q_demand)


def feature_schema(grid: GridSpec, base: ScenarioInput, kind: str) -> FeatureSchema:
    if kind == "full":
        return FeatureSchema.full(grid.n_buses, grid.horizon)
    if not grid.wind_farms:
        raise ValueError("the levels schema needs at least one wind farm")
    # the hour where the summed wind shape peaks carries every farm's level
    hour = int(np.argmax(base.p_wind.sum(axis=0)))
    return FeatureSchema.levels(grid, hour)


@dataclass
class SamplingResult:
    samples: SampleSet
    state: NoveltyState
    converged: bool
    bound: float
    skipped: int = 0
    diagnostics: list[str] = field(default_factory=list)
    bound_history: list[float] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "converged" if self.converged else "sample_cap_reached"


def solve_scenario(grid: GridSpec, scenario: ScenarioInput, settings: BnbSettings,
                   warm: Strategy | None = None, options: UcOptions | None = None):
    """Build and solve one UC instance; returns (model, result)."""
    model = build_uc(grid, scenario, options)
    start = binary_assignment(warm) if warm is not None else None
    return model, solve_mip(model.mip, settings, warm_start=start)


def run_sampling(grid: GridSpec, config: SamplerConfig, base: ScenarioInput | None = None,
                 progress=None) -> SamplingResult:
    """Draw, solve and record scenarios until the novelty bound reaches ``delta``."""
    if base is None:
        try:
            base = load_fixture_scenario(grid.name)
        except FileNotFoundError:
            raise ValueError(f"grid {grid.name!r} has no bundled base scenario; pass one explicitly") from None
    law = ScenarioLaw(grid, base, config)
    schema = feature_schema(grid, base, config.schema)
    rng = np.random.default_rng(config.seed)
    settings = BnbSettings(time_limit=config.time_limit, gap_tolerance=config.gap_tolerance)
    state = NoveltyState()
    xs, ys, diags, history = [], [], [], []
    skipped = 0
    bound = 1.0
    converged = False
    for draw in range(config.max_samples):
        scenario = draw_scenario(rng, law)
        warm = None
        if config.warm_from_catalog and state.n_samples:
            key = state.most_common()
            warm = Strategy(np.frombuffer(key, dtype=np.uint8), grid.n_units, grid.horizon)
        model, res = solve_scenario(grid, scenario, settings, warm)
        if res.status is not MipStatus.OPTIMAL:
            skipped += 1
            diags.append(f"draw {draw}: solver returned {res.status.value}, sample skipped")
            log.warning(diags[-1])
            continue
        strategy = extract_strategy(res.x, model.varmap)
        broken = check_min_updown(strategy, grid)
        if broken:
            skipped += 1
            diags.append(f"draw {draw}: strategy breaks {broken[0][2]} at unit {broken[0][0]}")
            log.warning(diags[-1])
            continue
        state.add(strategy)
        xs.append(schema.extract(scenario).values)
        ys.append(strategy.bits)
        bound = state.bound(config.epsilon)
        history.append(bound)
        if progress is not None:
            progress(state, bound)
        if bound <= config.delta:
            converged = True
            break
    if not converged:
        log.warning("sample cap %d reached with bound %.4f > %.4f", config.max_samples, bound, config.delta)
    meta = {"sampler": asdict(config), "n_samples": state.n_samples,
            "n_singletons": state.n_singletons, "bound": bound, "skipped": skipped}
    samples = SampleSet(schema, np.array(xs).reshape(len(xs), len(schema)),
                        np.array(ys, dtype=np.uint8).reshape(len(ys), grid.n_units * grid.horizon),
                        grid.n_units, grid.horizon, grid, meta)
    return SamplingResult(samples, state, converged, bound, skipped, diags, history)
