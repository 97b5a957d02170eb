"""Shared helpers for the test suite: bundled data paths, random systems."""

from importlib.resources import files

import numpy as np

import gridpi


def bundled(name):
    """Filesystem path of a bundled data file as a string."""
    return str(files("gridpi").joinpath("data", name))


def random_network(rng, n_min=3, n_max=10):
    """Connected random network with O(1) coupling weights.

    Spanning tree plus a few extra edges; voltages fixed at 1 kV so a
    susceptance of b microsiemens gives a coupling of b W/rad.
    """
    n = int(rng.integers(n_min, n_max + 1))
    edges = set()
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges.add((u, v))
    for _ in range(int(rng.integers(0, n))):
        i, j = (int(k) for k in rng.integers(0, n, 2))
        if i != j:
            edges.add((min(i, j), max(i, j)))
    lines = tuple((i, j, float(rng.uniform(0.5, 5.0)) * 1e-6) for (i, j) in sorted(edges))
    return gridpi.PowerNetwork(
        inertia=rng.uniform(0.5, 2.0, n),
        damping=rng.uniform(0.2, 1.5, n),
        voltage=np.full(n, 1.0e3),
        power=rng.uniform(-500.0, 500.0, n),
        lines=lines,
    )


def random_dist_controller(rng, net, gamma=None):
    """DIST_PI controller with random positive gains over the coupling graph."""
    n = net.n_buses
    return gridpi.ControllerSpec(
        kind=gridpi.DIST_PI,
        kp=rng.uniform(0.5, 5.0, n),
        ki=rng.uniform(0.5, 5.0, n),
        gamma=gamma,
        comm=net.coupling_graph(),
    )


def two_bus_network(power=(0.0, 0.0)):
    """The unit two-machine network: m = d = 1, coupling k_12 = 1."""
    return gridpi.PowerNetwork(
        inertia=np.ones(2),
        damping=np.ones(2),
        voltage=np.array([1.0e3, 1.0e3]),
        power=np.asarray(power, dtype=float),
        lines=((0, 1, 1.0e-6),),
    )
