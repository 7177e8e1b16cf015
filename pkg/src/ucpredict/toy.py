"""Small random UC instances for tests, smoke runs and the brute-force oracle."""

from __future__ import annotations

import numpy as np

from .grid import Bus, Generator, GridSpec, Line, ScenarioInput, WindFarm


def small_grid(rng: np.random.Generator, n_units: int = 2, horizon: int = 3, name: str = "small") -> GridSpec:
    """Two buses joined by one line; unit g sits at bus g % 2, the wind farm at bus 2."""
    buses = [Bus(1, 0.95, 1.05, True), Bus(2, 0.95, 1.05)]
    lines = [Line(1, 2, -0.5, 10.0, 0.01, 2.0)]
    gens = []
    for g in range(n_units):
        p_max = float(rng.uniform(0.6, 1.2))
        p_min = float(rng.uniform(0.05, 0.3))
        gens.append(Generator(
            bus=1 + g % 2, p_max=p_max, p_min=p_min, q_max=0.8, q_min=-0.5,
            ramp_up=p_max, ramp_down=p_max, ramp_startup=p_max,
            min_up=int(rng.integers(1, 3)), min_down=int(rng.integers(1, 3)),
            cost=float(rng.uniform(10.0, 40.0)), startup_cost=float(rng.uniform(0.0, 30.0))))
    return GridSpec.from_lines(buses, lines, gens, horizon, [WindFarm(2, 0.3)], name)


def small_scenario(rng: np.random.Generator, grid: GridSpec, demand=(0.4, 1.1)) -> ScenarioInput:
    """Random demand at the last bus and wind below the smallest demand."""
    N, T = grid.n_buses, grid.horizon
    p_demand = np.zeros((N, T))
    p_demand[-1] = rng.uniform(*demand, size=T)
    p_wind = np.zeros((N, T))
    for farm in grid.wind_farms:
        p_wind[grid.bus_index(farm.bus)] += rng.uniform(0.0, farm.capacity, size=T)
    return ScenarioInput.from_active(p_wind, p_demand)
