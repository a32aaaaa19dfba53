"""Time one D3Q19 step with the compiled kernel and the numpy fallback.

Usage::

    python benchmarks/bench_lbm.py --sizes 24 32 48 64 --steps 50

Both backends advance the same random porous cell from the same state; the
script reports milliseconds per step, million lattice updates per second
(MLUPS) and the largest population difference after a few parity steps.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from wickopt.lbm import _fallback
from wickopt.lbm.solver import equilibrium, population_array

try:
    from wickopt.lbm._kernel import step as compiled_step
except ImportError:
    compiled_step = None


def initial_state(n: int, porosity: float, seed: int):
    rng = np.random.default_rng(seed)
    solid = (rng.random((n, n, n)) > porosity).astype(np.uint8)
    rho = np.broadcast_to(np.linspace(1.0005, 0.9995, n), solid.shape)
    f = population_array(solid.shape)
    f[...] = equilibrium(rho, np.zeros((3,) + solid.shape))
    f[:, solid.astype(bool)] = 0.0
    return solid, f


def time_backend(step, solid, f0, steps: int, warmup: int) -> tuple[float, np.ndarray]:
    f = population_array(solid.shape)
    f[...] = f0
    g = population_array(solid.shape)
    for _ in range(warmup):
        step(f, g, solid, 1.0, 1.0005, 0.9995)
        f, g = g, f
    t0 = time.perf_counter()
    for _ in range(steps):
        step(f, g, solid, 1.0, 1.0005, 0.9995)
        f, g = g, f
    return (time.perf_counter() - t0) / steps, np.array(f)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[24, 32, 48, 64])
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--warmup", type=int, default=5)
    ap.add_argument("--porosity", type=float, default=0.7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = [("numpy", _fallback.step)]
    if compiled_step is not None:
        backends.insert(0, ("compiled", compiled_step))
    else:
        print("compiled kernel not built; timing the numpy fallback only")

    print(f"{'N':>4} {'backend':>9} {'ms/step':>9} {'MLUPS':>8} {'speedup':>8} {'max|df|':>9}")
    for n in args.sizes:
        solid, f0 = initial_state(n, args.porosity, args.seed)
        ref = time_backend(_fallback.step, solid, f0, 3, 0)[1]
        timings = {}
        for name, step in backends:
            steps = args.steps if name == "compiled" else max(3, args.steps // 10)
            sec = time_backend(step, solid, f0, steps, args.warmup)[0]
            diff = float(np.abs(time_backend(step, solid, f0, 3, 0)[1] - ref).max())
            timings[name] = (sec, diff)
        base = timings["numpy"][0]
        for name, (sec, diff) in timings.items():
            print(f"{n:>4} {name:>9} {sec * 1e3:9.2f} {n ** 3 / sec / 1e6:8.2f} {base / sec:8.1f} {diff:9.2e}")


if __name__ == "__main__":
    main()
