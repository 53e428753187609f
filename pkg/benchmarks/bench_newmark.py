"""Compiled vs NumPy Newmark recurrence.

Usage: python benchmarks/bench_newmark.py [--preset bridge1] [--seconds 256] [--repeat 3]
"""
import argparse
import time

import numpy as np

from sst.integrate import available_backends, newmark
from sst.structures import ExcitationSpec, gaussian_excitation, load_matrix, preset


def bench(backend, model, forces, dt, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = newmark(model.mass_matrix(), model.damping_matrix(), model.stiffness_matrix(),
                      forces, dt, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out[2]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--preset", default="bridge1")
    parser.add_argument("--seconds", type=float, default=256.0)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    model = preset(args.preset)
    spec = ExcitationSpec(duration_s=args.seconds)
    forces = load_matrix(gaussian_excitation(spec), model.dof_count)
    dt = 1.0 / spec.sample_rate_hz
    results = {b: bench(b, model, forces, dt, args.repeat) for b in available_backends()}
    print(f"{args.preset}: {model.dof_count} DOF, {forces.shape[0]} steps")
    for name, (t, _) in results.items():
        print(f"  {name:7s} {t * 1e3:9.1f} ms  {forces.shape[0] / t:12.0f} steps/s")
    if len(results) == 2:
        (tc, ac), (tp, ap) = results["cython"], results["python"]
        print(f"  speedup {tp / tc:.1f}x, max |diff| {np.max(np.abs(ac - ap)):.2e}")


if __name__ == "__main__":
    main()
