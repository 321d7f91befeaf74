"""Compare the four non-learning controllers on the two-intersection corridor.

Runs each controller over a handful of seeds on the bundled corridor
scenario with a triangular (low - peak - low) demand profile, and prints
the mean travel time each achieves. Max-pressure and Webster's method are
adaptive and should clearly beat both the fixed-time plan and SOTL here.
"""

import importlib.resources as ir

import numpy as np

from tscbench.classic import (MaxPressureController, SotlController,
                              UniformController, WebsterController)
from tscbench.network import load_network
from tscbench.simulation import load_demand, run_episode

DATA = ir.files("tscbench") / "data"
SEEDS = range(4)

CONTROLLERS = {
    "uniform (u=15)": lambda: UniformController(u=15),
    "webster (W=120)": lambda: WebsterController(W=120),
    "maxpressure (g_min=10)": lambda: MaxPressureController(g_min=10),
    "sotl (theta=50)": lambda: SotlController(g_min=10, theta=50),
}


def main():
    net = load_network(str(DATA / "double.net"))
    demand = load_demand(str(DATA / "double_demand.json"))
    print(f"Corridor: {len(net.intersections)} intersections, "
          f"{demand.horizon:.0f} s demand profile\n")

    results = {}
    for label, make in CONTROLLERS.items():
        per_seed = []
        for seed in SEEDS:
            controllers = {ix.id: make() for ix in net.intersections}
            log = run_episode(net, demand, controllers, seed)
            per_seed.append(np.mean(log.travel_time_values))
        results[label] = (np.mean(per_seed), np.std(per_seed))

    print(f"{'controller':<26} {'mean tt (s)':>12} {'std':>8}")
    for label, (mu, sd) in sorted(results.items(), key=lambda kv: kv[1][0]):
        print(f"{label:<26} {mu:>12.2f} {sd:>8.2f}")


if __name__ == "__main__":
    main()
