"""Shared test fixtures: random swing networks and lossless systems."""

import numpy as np

from losslim.numlin import StateSpace
from losslim.swing import Bus, Line, PowerNetwork, swing_model


def random_network(rng, n_gen, n_internal=0, M=None, extra_edges=2, angle=0.4):
    """Connected random network: a random tree plus a few chords."""
    n = n_gen + n_internal
    if M is None:
        M = 10.0 ** rng.uniform(-3, 1, size=n_gen)
    kinds = ("conventional", "hydro", "wind_solar")
    buses = [Bus(k, kinds[k % 3], 1.0, float(M[k]), (float(k), 0.0), 0) for k in range(n_gen)]
    buses += [Bus(n_gen + k, "load", -1.0, None, (0.0, float(k)), 0) for k in range(n_internal)]
    order = rng.permutation(n)
    edges = set()
    for pos in range(1, n):
        a, b = int(order[pos]), int(order[rng.integers(pos)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(extra_edges if n > 2 else 0):
        a, b = rng.choice(n, size=2, replace=False)
        edges.add((int(min(a, b)), int(max(a, b))))
    lines = [Line(i, j, float(rng.uniform(0.5, 2.0)), float(rng.uniform(-angle, angle)))
             for i, j in sorted(edges)]
    return PowerNetwork(tuple(buses), tuple(lines))


def random_swing(rng, n_gen, n_internal=None, M=None):
    if n_internal is None:
        n_internal = int(rng.integers(0, 4))
    net = random_network(rng, n_gen, n_internal, M=M)
    return swing_model(net), net


def random_lossless(rng, n, m, skew_d=False):
    """Random lossless realization with certificate P = T^T T."""
    S = rng.standard_normal((n, n))
    J = S - S.T
    B0 = rng.standard_normal((n, m))
    T = rng.standard_normal((n, n)) + n * np.eye(n)
    Tinv = np.linalg.inv(T)
    # in x0 coordinates: A0 skew, C0 = B0^T, P0 = I; x = T^-1 x0
    A = Tinv @ J @ T
    B = Tinv @ B0
    C = B0.T @ T
    D = np.zeros((m, m))
    if skew_d:
        E = rng.standard_normal((m, m))
        D = E - E.T
    return StateSpace(A, B, C, D), T.T @ T


def skew_example():
    return StateSpace([[0.0, -1.0], [1.0, 0.0]], [[1.0], [0.0]], [[1.0, 0.0]], [[0.0]])


def trapezoid_h2(sys, wmax=1e4, points=200001):
    """Squared H2 norm by the trapezoid rule on a log-spaced grid over [0, wmax]."""
    w = np.concatenate([[0.0], np.geomspace(1e-6, wmax, points)])
    G = sys.freqresp(w)
    f = np.sum(np.abs(G) ** 2, axis=(1, 2))
    return float(np.trapezoid(f, w) / np.pi) if hasattr(np, "trapezoid") \
        else float(np.trapz(f, w) / np.pi)
