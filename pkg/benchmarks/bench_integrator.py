#!/usr/bin/env python3
"""Benchmark the jitted RK4 kernel against the pure-numpy fallback.

Integrates the closed loop for the bundled 30-bus network (93 states)
with both kernel variants and reports wall times and the speedup.  The
two paths execute identical source, so the traces are compared bit for
bit as a sanity check.

Run from a checkout:  python benchmarks/bench_integrator.py
"""

import argparse
import time

import numpy as np

from gridpi import (
    ControllerSpec,
    DIST_PI,
    close_loop,
    gamma_bar,
    load_network,
    swing_to_lti,
)
from gridpi._kernels import HAVE_NUMBA, rk4_affine_jit, rk4_affine_numpy

try:
    from importlib.resources import files

    NET30 = files("gridpi") / "data" / "net30.grid"
except ImportError:  # pragma: no cover
    NET30 = None


def build_problem():
    net = load_network(NET30).net
    n = net.n_buses
    probe = ControllerSpec(kind=DIST_PI, kp=np.full(n, 80000.0),
                           ki=np.full(n, 40000.0), gamma=None,
                           comm=net.coupling_graph())
    gamma = gamma_bar(net, probe).gamma_bar / 2.0
    ctrl = ControllerSpec(kind=DIST_PI, kp=probe.kp, ki=probe.ki,
                          gamma=gamma, comm=net.coupling_graph())
    loop = close_loop(swing_to_lti(net), ctrl)
    return loop.system_matrix, loop.forcing_dev


def run_kernel(kernel, mat, offset, h, n_steps, repeats):
    out = np.zeros((n_steps + 1, mat.shape[0]))
    times = []
    for _ in range(repeats):
        out[:] = 0.0
        start = time.perf_counter()
        kernel(mat, offset, h, n_steps, out)
        times.append(time.perf_counter() - start)
    return min(times), out.copy()


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=40000,
                        help="RK4 steps per run (default 40000 = 200 s at 5 ms)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed repetitions; the minimum is reported")
    args = parser.parse_args()

    mat, offset = build_problem()
    h = 5.0e-3
    print(f"problem: {mat.shape[0]} states, {args.steps} steps of {h} s, "
          f"best of {args.repeats}")

    t_plain, out_plain = run_kernel(rk4_affine_numpy, mat, offset, h,
                                    args.steps, args.repeats)
    print(f"numpy fallback : {t_plain:8.3f} s")

    if not HAVE_NUMBA:
        print("jitted kernel  : unavailable (numba not importable or "
              "GRIDPI_DISABLE_NUMBA set)")
        return

    # First call pays for compilation; time it separately, then measure.
    warm = np.zeros((2, mat.shape[0]))
    start = time.perf_counter()
    rk4_affine_jit(mat, offset, h, 1, warm)
    compile_s = time.perf_counter() - start
    t_jit, out_jit = run_kernel(rk4_affine_jit, mat, offset, h,
                                args.steps, args.repeats)
    print(f"jitted kernel  : {t_jit:8.3f} s   (first-call overhead {compile_s:.2f} s)")
    print(f"speedup        : {t_plain / t_jit:8.2f} x")
    print(f"traces identical: {np.array_equal(out_plain, out_jit)}")


if __name__ == "__main__":
    main()
