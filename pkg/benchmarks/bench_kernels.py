"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 3] [--n-mu 201] [--n-beta 64]
                                       [--expectation exact|quadrature]

Times one continuation sweep over the full (μ, β) mesh in both expectation
modes and one complete subproblem solve (the heavy feature of the 100-feature
basis instance), and checks that both backends agree.
"""

import argparse
import time

import numpy as np

from infofilter.core import ProjectionDistribution
from infofilter.dp import (
    EXPECTATIONS,
    QuadratureRule,
    SolverSettings,
    SubproblemSpec,
    solve_subproblem,
)
from infofilter.kernels import BACKENDS


def best_time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--n-mu", type=int, default=201)
    parser.add_argument("--n-beta", type=int, default=64)
    parser.add_argument("--expectation", choices=EXPECTATIONS, default="exact",
                        help="expectation mode for the full solve")
    parser.add_argument("--skip-solve", action="store_true")
    args = parser.parse_args(argv)

    if "compiled" not in BACKENDS:
        print("compiled extension not built; only the numpy backend is available")
    spec = SubproblemSpec(0.3, 0.9, 0.1,
                          ProjectionDistribution(np.array([0.0, 1.0]),
                                                 np.array([99 / 199, 100 / 199])))
    settings = SolverSettings(n_mu=args.n_mu, n_beta=args.n_beta,
                              expectation=args.expectation)
    config = settings.grid_for(spec, 0.3, 0.3, 1.0)

    mu = np.linspace(config.mu_min, config.mu_max, config.n_mu)
    beta = np.geomspace(config.beta_min, config.beta_max, config.n_beta)
    W = np.ascontiguousarray(np.maximum(mu[:, None] - 0.3, 0.0) * np.ones(beta.size))
    mu_mesh, beta_mesh = np.repeat(mu, beta.size), np.tile(beta, mu.size)
    quad = QuadratureRule.gauss_hermite(config.n_quad)

    print(f"grid {config.n_mu} x {config.n_beta}")
    for mode, nodes, weights in [("exact", None, None),
                                 (f"{config.n_quad}-node", quad.nodes, quad.weights)]:
        results = {}
        for name, kern in sorted(BACKENDS.items()):
            t, out = best_time(lambda: kern.continuation(
                W, mu, np.log(beta), mu_mesh, beta_mesh, 1.0, 0.1, nodes, weights,
                0.3, spec.slope), args.repeat)
            results[name] = out
            print(f"  continuation {mode:9s} {name:9s} {t * 1e3:9.2f} ms")
        if len(results) == 2:
            diff = np.max(np.abs(results["compiled"] - results["python"]))
            print(f"  max |compiled - python| = {diff:.2e}")

    if args.skip_solve:
        return
    grids, secs = {}, {}
    for name in sorted(BACKENDS):
        t, grid = best_time(lambda: solve_subproblem(spec, config, backend=name), 1)
        grids[name], secs[name] = grid, t
        print(f"  solve ({args.expectation}) {name:9s} {t:9.2f} s  "
              f"({grid.iterations} sweep equivalents)")
    if len(grids) == 2:
        a, b = grids["compiled"], grids["python"]
        print(f"  max |V_compiled - V_python| = {np.max(np.abs(a.values - b.values)):.2e}")
        print(f"  solve speedup {secs['python'] / secs['compiled']:.1f}x")


if __name__ == "__main__":
    main()
