"""Regenerate the bundled 6-bus grid and base scenario files."""

import numpy as np

from ucpredict.grid import (Bus, Generator, GridSpec, Line, ScenarioInput, WindFarm,
                            fixture_path, save_grid, save_scenario)

# (from, to, r, x, charging per end, capacity)
LINES = [
    (1, 2, 0.005, 0.170, 0.010, 2.0),
    (1, 4, 0.003, 0.258, 0.010, 1.0),
    (2, 4, 0.007, 0.197, 0.010, 1.0),
    (5, 6, 0.002, 0.140, 0.010, 1.0),
    (3, 6, 0.0005, 0.018, 0.005, 1.0),
    (2, 3, 0.001, 0.037, 0.005, 1.0),
    (4, 5, 0.001, 0.037, 0.005, 1.0),
]

GENERATORS = [
    Generator(1, 2.2, 0.5, 2.0, -0.8, 0.55, 0.55, 1.3, 4, 4, 13.5, 100.0),
    Generator(2, 1.0, 0.1, 0.7, -0.4, 0.5, 0.5, 0.5, 2, 3, 32.6, 200.0),
    Generator(6, 0.6, 0.1, 0.5, -0.4, 0.3, 0.3, 0.3, 1, 1, 17.7, 30.0),
]

LOAD_SHARE = {3: 0.2, 4: 0.4, 5: 0.4}
LOAD_SHAPE = np.array([0.66, 0.63, 0.61, 0.60, 0.61, 0.64, 0.71, 0.79, 0.86, 0.91, 0.95, 0.97,
                       0.98, 0.97, 0.96, 0.95, 0.96, 0.99, 1.00, 0.98, 0.93, 0.85, 0.77, 0.70])
PEAK_LOAD = 2.6
WIND_SHAPE = np.array([0.82, 0.85, 0.88, 0.90, 0.89, 0.86, 0.80, 0.72, 0.63, 0.55, 0.48, 0.43,
                       0.40, 0.41, 0.45, 0.51, 0.58, 0.64, 0.70, 0.74, 0.78, 0.80, 0.81, 0.82])
# total wind stays below (minimum load - sum of unit minimum outputs), so no
# commitment forces surplus power that only relaxation losses could absorb
FARMS = [WindFarm(4, 0.45), WindFarm(5, 0.45)]
# units start the day off, so the summed start-up ramps must cover the first
# hour's load even with no wind


def build():
    buses = [Bus(i, 0.95, 1.05, reference=(i == 1)) for i in range(1, 7)]
    lines = []
    for a, b, r, x, sh, cap in LINES:
        z2 = r * r + x * x
        # admittance-matrix off-diagonal entries are the negated series admittance
        lines.append(Line(a, b, -r / z2, x / z2, sh, cap))
    grid = GridSpec.from_lines(buses, lines, GENERATORS, 24, FARMS, name="six_bus")
    N, T = grid.n_buses, grid.horizon
    p_demand = np.zeros((N, T))
    for bus, share in LOAD_SHARE.items():
        p_demand[grid.bus_index(bus)] = PEAK_LOAD * share * LOAD_SHAPE
    p_wind = np.zeros((N, T))
    for farm in FARMS:
        p_wind[grid.bus_index(farm.bus)] = farm.capacity * WIND_SHAPE
    return grid, ScenarioInput.from_active(p_wind, p_demand)


if __name__ == "__main__":
    grid, base = build()
    save_grid(grid, fixture_path("six_bus.grid.json"))
    save_scenario(base, fixture_path("six_bus.base.json"))
