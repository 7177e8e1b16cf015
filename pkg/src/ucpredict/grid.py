"""Static grid data, hourly scenarios, feature schemas, strategies and sample files.

Electrical quantities are per-unit. ``G_ij``/``B_ij`` on a line are the
off-diagonal entries of the bus admittance matrix (the negated series
admittance), and ``shunt_b`` is the charging susceptance at each line end.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

QUANTITIES = ("p_wind", "q_wind", "p_demand", "q_demand")


class GridError(ValueError):
    """A grid, scenario or sample file violates an invariant."""


class ParseError(GridError):
    pass


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise GridError(message)


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float
    v_max: float
    reference: bool = False
    g_diag: float = 0.0
    b_diag: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    g: float
    b: float
    shunt_b: float
    capacity: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_max: float
    p_min: float
    q_max: float
    q_min: float
    ramp_up: float
    ramp_down: float
    ramp_startup: float
    min_up: int
    min_down: int
    cost: float
    startup_cost: float


@dataclass(frozen=True)
class WindFarm:
    bus: int
    capacity: float


@dataclass(frozen=True)
class GridSpec:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    horizon: int
    wind_farms: tuple[WindFarm, ...] = ()
    name: str = "grid"

    def __post_init__(self):
        for attr in ("buses", "lines", "generators", "wind_farms"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        _require(len(self.buses) > 0, "buses: at least one bus required")
        _require(self.horizon >= 1, "horizon: must be >= 1")
        ids = [b.id for b in self.buses]
        _require(len(set(ids)) == len(ids), "buses.id: duplicate bus id")
        _require(sum(b.reference for b in self.buses) == 1, "buses.reference: exactly one reference bus required")
        for k, b in enumerate(self.buses):
            _require(0 < b.v_min <= b.v_max, f"buses[{k}].v_min: need 0 < v_min <= v_max")
        known = set(ids)
        for k, ln in enumerate(self.lines):
            _require(ln.from_bus in known and ln.to_bus in known, f"lines[{k}]: unknown bus")
            _require(ln.from_bus != ln.to_bus, f"lines[{k}]: self loop")
            _require(ln.capacity > 0, f"lines[{k}].capacity: must be > 0")
        for k, g in enumerate(self.generators):
            _require(g.bus in known, f"generators[{k}].bus: unknown bus")
            _require(g.p_min <= g.p_max, f"generators[{k}].p_min: p_min > p_max")
            _require(g.q_min <= g.q_max, f"generators[{k}].q_min: q_min > q_max")
            _require(g.min_up >= 1, f"generators[{k}].min_up: must be >= 1")
            _require(g.min_down >= 1, f"generators[{k}].min_down: must be >= 1")
            _require(g.cost >= 0 and g.startup_cost >= 0, f"generators[{k}].cost: costs must be >= 0")
            _require(min(g.ramp_up, g.ramp_down, g.ramp_startup) >= 0, f"generators[{k}].ramp: must be >= 0")
        for k, w in enumerate(self.wind_farms):
            _require(w.bus in known, f"wind_farms[{k}].bus: unknown bus")
            _require(w.capacity >= 0, f"wind_farms[{k}].capacity: must be >= 0")

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def n_units(self) -> int:
        return len(self.generators)

    def bus_index(self, bus_id: int) -> int:
        for k, b in enumerate(self.buses):
            if b.id == bus_id:
                return k
        raise KeyError(bus_id)

    @classmethod
    def from_lines(cls, buses, lines, generators, horizon, wind_farms=(), name="grid",
                   bus_shunts=None) -> "GridSpec":
        """Fill each bus's diagonal admittance from the incident lines."""
        bus_shunts = bus_shunts or {}
        diag = {b.id: [0.0, 0.0] for b in buses}
        for ln in lines:
            for end in (ln.from_bus, ln.to_bus):
                diag[end][0] -= ln.g
                diag[end][1] += -ln.b + ln.shunt_b
        out = []
        for b in buses:
            gs, bs = bus_shunts.get(b.id, (0.0, 0.0))
            out.append(Bus(b.id, b.v_min, b.v_max, b.reference, diag[b.id][0] + gs, diag[b.id][1] + bs))
        return cls(tuple(out), tuple(lines), tuple(generators), horizon, tuple(wind_farms), name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "horizon": self.horizon,
            "buses": [dict(vars(b)) for b in self.buses],
            "lines": [dict(vars(ln)) for ln in self.lines],
            "generators": [dict(vars(g)) for g in self.generators],
            "wind_farms": [dict(vars(w)) for w in self.wind_farms],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        try:
            buses = [Bus(int(b["id"]), float(b["v_min"]), float(b["v_max"]), bool(b.get("reference", False)),
                         float(b.get("g_diag", 0.0)), float(b.get("b_diag", 0.0))) for b in d["buses"]]
            lines = [Line(int(ln["from_bus"]), int(ln["to_bus"]), float(ln["g"]), float(ln["b"]),
                          float(ln.get("shunt_b", 0.0)), float(ln["capacity"])) for ln in d["lines"]]
            gens = [Generator(int(g["bus"]), *(float(g[k]) for k in (
                "p_max", "p_min", "q_max", "q_min", "ramp_up", "ramp_down", "ramp_startup")),
                int(g["min_up"]), int(g["min_down"]), float(g["cost"]), float(g["startup_cost"]))
                for g in d["generators"]]
            farms = [WindFarm(int(w["bus"]), float(w["capacity"])) for w in d.get("wind_farms", [])]
            horizon = int(d["horizon"])
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad field value: {exc}") from None
        return cls(tuple(buses), tuple(lines), tuple(gens), horizon, tuple(farms), d.get("name", "grid"))


def _read_json(path) -> dict:
    text = Path(path).read_text()
    if not text.strip():
        raise ParseError(f"{path}: empty file")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def load_grid(path) -> GridSpec:
    d = _read_json(path)
    if not isinstance(d, dict):
        raise ParseError(f"{path}: expected a JSON object")
    return GridSpec.from_dict(d)


def save_grid(grid: GridSpec, path) -> None:
    Path(path).write_text(json.dumps(grid.to_dict(), indent=1) + "\n")


@dataclass(frozen=True, eq=False)
class ScenarioInput:
    """Per-bus, per-hour wind injections and demands, each N x T."""

    p_wind: np.ndarray
    q_wind: np.ndarray
    p_demand: np.ndarray
    q_demand: np.ndarray

    def __post_init__(self):
        shape = None
        for name in QUANTITIES:
            arr = np.array(getattr(self, name), dtype=float)
            _require(arr.ndim == 2, f"{name}: expected an N x T array")
            shape = shape or arr.shape
            _require(arr.shape == shape, f"{name}: shape {arr.shape} differs from {shape}")
            _require(bool(np.all(np.isfinite(arr))), f"{name}: non-finite entry")
            _require(bool(np.all(arr >= 0)), f"{name}: negative entry")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self) -> tuple[int, int]:
        return self.p_wind.shape

    @classmethod
    def from_active(cls, p_wind, p_demand, power_factor: float = 0.95) -> "ScenarioInput":
        ratio = math.tan(math.acos(power_factor))
        p_wind = np.asarray(p_wind, dtype=float)
        p_demand = np.asarray(p_demand, dtype=float)
        return cls(p_wind, p_wind * ratio, p_demand, p_demand * ratio)

    def check_grid(self, grid: GridSpec) -> None:
        if self.shape != (grid.n_buses, grid.horizon):
            raise GridError(f"scenario shape {self.shape} does not match grid "
                            f"({grid.n_buses} buses, {grid.horizon} hours)")

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in QUANTITIES}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioInput":
        try:
            return cls(*(d[name] for name in QUANTITIES))
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}") from None


def load_scenario(path) -> ScenarioInput:
    return ScenarioInput.from_dict(_read_json(path))


def save_scenario(scenario: ScenarioInput, path) -> None:
    Path(path).write_text(json.dumps(scenario.to_dict()) + "\n")


@dataclass(frozen=True)
class FeatureSchema:
    """Named, ordered list of (quantity, bus index, hour index) entries."""

    name: str
    entries: tuple[tuple[str, int, int], ...]
    n_buses: int
    horizon: int
    power_factor: float = 0.95

    def __post_init__(self):
        entries = tuple((str(q), int(i), int(t)) for q, i, t in self.entries)
        object.__setattr__(self, "entries", entries)
        for k, (q, i, t) in enumerate(entries):
            if q not in QUANTITIES:
                raise GridError(f"schema entry {k}: unknown quantity {q!r}")
            if not (0 <= i < self.n_buses and 0 <= t < self.horizon):
                raise GridError(f"schema entry {k}: bus {i} / hour {t} out of range")
        if not 0 < self.power_factor <= 1:
            raise GridError("power_factor must lie in (0, 1]")

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def full(cls, n_buses: int, horizon: int, power_factor: float = 0.95) -> "FeatureSchema":
        """Every quantity at every bus and hour, hour-major: 4 N T entries."""
        entries = tuple((q, i, t) for t in range(horizon) for q in QUANTITIES for i in range(n_buses))
        return cls("full", entries, n_buses, horizon, power_factor)

    @classmethod
    def levels(cls, grid: GridSpec, hour: int, load_buses=(), name: str = "levels",
               power_factor: float = 0.95) -> "FeatureSchema":
        """One wind entry per farm plus one demand entry per listed load bus at ``hour``.

        With fixed daily shapes a single hour carries the whole scaling level.
        """
        entries = [("p_wind", grid.bus_index(w.bus), hour) for w in grid.wind_farms]
        entries += [("p_demand", grid.bus_index(b), hour) for b in load_buses]
        return cls(name, tuple(entries), grid.n_buses, grid.horizon, power_factor)

    def extract(self, scenario: ScenarioInput) -> "FeatureVector":
        if scenario.shape != (self.n_buses, self.horizon):
            raise GridError(f"scenario shape {scenario.shape} does not fit schema {self.name!r}")
        values = np.array([getattr(scenario, q)[i, t] for q, i, t in self.entries])
        return FeatureVector(values, self.name)

    def to_dict(self) -> dict:
        return {"name": self.name, "entries": [list(e) for e in self.entries],
                "n_buses": self.n_buses, "horizon": self.horizon, "power_factor": self.power_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(d["name"], tuple(tuple(e) for e in d["entries"]), int(d["n_buses"]),
                   int(d["horizon"]), float(d.get("power_factor", 0.95)))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    schema: str

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def scenario_to_features(scenario: ScenarioInput, schema: FeatureSchema) -> FeatureVector:
    return schema.extract(scenario)


@dataclass(frozen=True, eq=False)
class Strategy:
    """Commitments u[g, t] flattened unit-major (index g*T + t), stored as 0/1."""

    bits: np.ndarray
    n_units: int
    horizon: int

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.size != self.n_units * self.horizon:
            raise GridError(f"strategy has {b.size} entries, expected {self.n_units * self.horizon}")
        if not np.all((b == 0) | (b == 1)):
            raise GridError("strategy entries must be 0 or 1")
        b = b.astype(np.uint8).ravel()
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    def __eq__(self, other):
        return (isinstance(other, Strategy) and self.shape == other.shape
                and bool(np.array_equal(self.bits, other.bits)))

    def __hash__(self):
        return hash((self.shape, self.bits.tobytes()))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_units, self.horizon)

    def matrix(self) -> np.ndarray:
        return self.bits.reshape(self.n_units, self.horizon)

    @classmethod
    def from_matrix(cls, u) -> "Strategy":
        u = np.asarray(u)
        return cls(u.ravel(), u.shape[0], u.shape[1])

    def encode(self, target: str = "plus_minus") -> np.ndarray:
        return strategy_encode(self.bits, target)


def strategy_encode(values, target: str = "plus_minus") -> np.ndarray:
    """0/1 -> -1/+1 (``plus_minus``) or -1/+1 -> 0/1 (``zero_one``)."""
    v = np.asarray(values)
    if target == "plus_minus":
        if not np.all((v == 0) | (v == 1)):
            raise GridError("expected 0/1 values")
        return (2 * v.astype(np.int8) - 1).astype(np.int8)
    if target == "zero_one":
        if not np.all((v == -1) | (v == 1)):
            raise GridError("expected -1/+1 values")
        return ((v.astype(np.int8) + 1) // 2).astype(np.uint8)
    raise GridError(f"unknown encoding {target!r}")


@dataclass(eq=False)
class SampleSet:
    schema: FeatureSchema
    features: np.ndarray
    strategies: np.ndarray
    n_units: int
    horizon: int
    grid: GridSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float).reshape(-1, len(self.schema))
        self.strategies = np.asarray(self.strategies, dtype=np.uint8).reshape(-1, self.n_units * self.horizon)
        if self.features.shape[0] != self.strategies.shape[0]:
            raise GridError("feature and strategy counts differ")

    def __len__(self) -> int:
        return self.features.shape[0]

    def strategy(self, h: int) -> Strategy:
        return Strategy(self.strategies[h], self.n_units, self.horizon)

    def catalog(self) -> list[tuple[Strategy, int]]:
        """Distinct strategies with counts, most frequent first, then lexicographic."""
        counts = Counter(row.tobytes() for row in self.strategies)
        items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return [(Strategy(np.frombuffer(k, dtype=np.uint8), self.n_units, self.horizon), c)
                for k, c in items]

    def labels(self, g: int, t: int) -> np.ndarray:
        """Labels of classifier (g, t) in -1/+1."""
        return strategy_encode(self.strategies[:, g * self.horizon + t], "plus_minus")


def _sidecar(path) -> Path:
    return Path(str(path) + ".schema.json")


def save_samples(samples: SampleSet, path) -> None:
    """JSON lines plus a ``<path>.schema.json`` sidecar holding schema, sizes and grid."""
    with open(path, "w") as fh:
        for x, y in zip(samples.features, samples.strategies):
            fh.write(json.dumps({"x": x.tolist(), "y": y.tolist(), "schema": samples.schema.name}) + "\n")
    side = {"schema": samples.schema.to_dict(), "n_units": samples.n_units, "horizon": samples.horizon,
            "grid": samples.grid.to_dict() if samples.grid else None, "meta": samples.meta}
    _sidecar(path).write_text(json.dumps(side, indent=1) + "\n")


def load_samples(path) -> SampleSet:
    side_path = _sidecar(path)
    if not side_path.exists():
        raise ParseError(f"{path}: missing sidecar {side_path.name}")
    side = _read_json(side_path)
    schema = FeatureSchema.from_dict(side["schema"])
    xs, ys = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                x, y = rec["x"], rec["y"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from None
            if rec.get("schema") != schema.name:
                raise ParseError(f"{path}: line {lineno}: schema {rec.get('schema')!r} != {schema.name!r}")
            if len(x) != len(schema):
                raise ParseError(f"{path}: line {lineno}: x has {len(x)} entries, schema has {len(schema)}")
            xs.append(x)
            ys.append(y)
    grid = GridSpec.from_dict(side["grid"]) if side.get("grid") else None
    return SampleSet(schema, np.array(xs, dtype=float).reshape(-1, len(schema)),
                     np.array(ys, dtype=np.uint8).reshape(len(ys), -1) if ys else np.zeros((0, side["n_units"] * side["horizon"])),
                     int(side["n_units"]), int(side["horizon"]), grid, side.get("meta", {}))


def fixture_path(name: str) -> Path:
    return Path(__file__).parent / "data" / name


def load_fixture_grid(name: str = "six_bus") -> GridSpec:
    return load_grid(fixture_path(f"{name}.grid.json"))


def load_fixture_scenario(name: str = "six_bus") -> ScenarioInput:
    return load_scenario(fixture_path(f"{name}.base.json"))
