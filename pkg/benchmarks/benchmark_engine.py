"""
Timing benchmarks for the surface solver and the path simulator.

Covers:
1: Backward PIDE sweep at three grid sizes, with and without jumps
2: Self-consistent closure (zeta fixed point inside every step)
3: Path simulation throughput against the worker cap
4: Replication of four policies on common random numbers

Target: the 400 x 400 reference solve under 10 s on one core.
"""

import time

from impactjd import GridSpec, ModelParams, Payoff, StrategyClosure, solve_pide
from impactjd.core import PricingEngine
from impactjd.simulate import simulate_coupled_system

CALL = Payoff("call", 100.0)
BS_MARKET = ModelParams(mu=0.05, sigma=0.2, r=0.05)
JUMP_MARKET = ModelParams(mu=0.05, sigma=0.2, r=0.05, rho=0.5, a=0.5)


def _timed(fn, repeats=1):
    start = time.perf_counter()
    for _ in range(repeats):
        result = fn()
    return result, (time.perf_counter() - start) / repeats


def benchmark_solver():
    """Benchmark the backward sweep (1)."""
    print("\n=== Benchmark 1: PIDE Solve ===")

    results = {}
    for n in (100, 200, 400):
        grid = GridSpec(s_max=300.0, n_space=n, n_time=n)
        for name, params in (("no jumps", BS_MARKET), ("jumps", JUMP_MARKET)):
            surface, seconds = _timed(lambda: solve_pide(params, StrategyClosure(), grid, CALL))
            results[(n, name)] = seconds
            print(f"  {n}x{n} {name:<9} f(0, 100) = {surface.spot_price():.6f}  time: {seconds:.3f} s")

    reference = results[(400, "jumps")]
    print(f"  Target: <10 s for 400x400 with jumps")
    print(f"  Status: {'✅ PASS' if reference < 10.0 else '❌ FAIL'}")
    return results


def benchmark_self_consistent():
    """Benchmark the self-consistent closure (2)."""
    print("\n=== Benchmark 2: Self-Consistent Closure ===")

    params = ModelParams(mu=0.08, sigma=0.2, r=0.05, lambda_impact=0.05, rho=0.5, a=0.3, b=0.5)
    grid = GridSpec(s_max=300.0, n_space=200, n_time=200)
    surface, seconds = _timed(lambda: solve_pide(params, StrategyClosure(mode="self-consistent"), grid, CALL))
    diag = surface.diagnostics.summary()

    print(f"  Grid: 200x200, lambda = 0.05, a = 0.3, b = 0.5")
    print(f"  f(0, 100) = {surface.spot_price():.6f}")
    print(f"  Picard max: {diag['picard_max']}, zeta max: {diag['zeta_max']}")
    print(f"  Time: {seconds:.3f} s")
    return seconds


def benchmark_simulation():
    """Benchmark path simulation against the worker cap (3)."""
    print("\n=== Benchmark 3: Path Simulation ===")

    n_paths, n_steps = 20_000, 200
    results = {}
    for workers in (1, 2, 4, 8):
        _, seconds = _timed(
            lambda: simulate_coupled_system(JUMP_MARKET, StrategyClosure(), n_paths, n_steps, 7, workers=workers)
        )
        results[workers] = seconds
        rate = n_paths * n_steps / seconds / 1e6
        print(f"  workers={workers}: {seconds:.3f} s ({rate:.2f} M steps/s)")

    speedup = results[1] / results[4]
    print(f"  Speedup 1 -> 4 workers: {speedup:.2f}x")
    return results


def benchmark_replication():
    """Benchmark four-policy replication (4)."""
    print("\n=== Benchmark 4: Replication ===")

    engine = PricingEngine(JUMP_MARKET, grid=GridSpec(s_max=300.0, n_space=200, n_time=200), payoff=CALL)
    _, solve_seconds = _timed(lambda: engine.surface)
    reports, seconds = _timed(lambda: engine.replicate(10_000, 200, seed=7))

    print(f"  Solve: {solve_seconds:.3f} s")
    for report in reports:
        print(f"  {report.strategy:<16} E[Pi^2] = {report.estimate:.4f} +/- {report.stderr:.4f}")
    print(f"  Replication time: {seconds:.3f} s")
    return seconds


def main():
    """Run all benchmarks and print summary."""
    print("=" * 70)
    print("impactjd Benchmarks")
    print("=" * 70)

    solver = benchmark_solver()
    self_consistent = benchmark_self_consistent()
    simulation = benchmark_simulation()
    replication = benchmark_replication()

    print("\n" + "=" * 70)
    print("SUMMARY")
    print("=" * 70)
    print(f"\n400x400 solve with jumps: {solver[(400, 'jumps')]:.3f} s")
    print(f"Self-consistent 200x200 solve: {self_consistent:.3f} s")
    print(f"Simulation 20000x200, 4 workers: {simulation[4]:.3f} s")
    print(f"Replication 10000x200, 4 policies: {replication:.3f} s")
    print("=" * 70)


if __name__ == "__main__":
    main()
