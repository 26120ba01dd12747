"""Per-bus disturbance gains of the optimally controlled swing model.

For bus ``k`` the disturbance pair is ``w~_k = (w_u,k, w_y,k)`` and for bus
``i`` the monitored pair is ``z~_i = (theta_dot_i, u_i)``.  Entry ``(i, k)``
of a gain matrix is the H2 or H-infinity norm of the closed-loop map
``w~_k -> z~_i``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleSizing, NonzeroFeedthrough, NotHurwitz
from .netgen import EnsembleConfig, generate_network
from .numlin import LyapunovSolver, StateSpace, hinf_norm, is_hurwitz
from .swing import PowerNetwork, h2_limit_swing, lump, swing_model
from .synth import (
    Controller,
    build_generalized_plant,
    close_loop,
    static_hinf_controller,
    structured_h2_controller,
)

log = logging.getLogger(__name__)

METRICS = ("H2", "Hinf")
_GRID_POINTS = 64


def _metric(metric: str) -> str:
    key = metric.replace("∞", "inf").replace("-", "").lower()
    for m in METRICS:
        if m.lower() == key:
            return m
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass(frozen=True, eq=False)
class GainMatrix:
    """Sub-block gains; rows are monitored buses, columns disturbed buses."""

    values: np.ndarray
    metric: str
    bus_ids: list = field(default_factory=list)
    clusters: list = field(default_factory=list)
    log_transformed: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("gain matrix must be square")
        if not self.log_transformed and np.any(v < 0):
            raise ValueError("gains must be nonnegative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "metric", _metric(self.metric))
        if not self.bus_ids:
            object.__setattr__(self, "bus_ids", list(range(v.shape[0])))
        if len(self.bus_ids) != v.shape[0]:
            raise ValueError("one bus id per row is required")
        if self.clusters and len(self.clusters) != v.shape[0]:
            raise ValueError("one cluster id per row is required")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def cluster_boundaries(self) -> list[int]:
        """Start indices of each run of equal cluster ids, plus the end index."""
        if not self.clusters:
            return [0, self.n]
        cuts = [0] + [k for k in range(1, self.n) if self.clusters[k] != self.clusters[k - 1]]
        return cuts + [self.n]

    def log(self) -> "GainMatrix":
        if self.log_transformed:
            return self
        with np.errstate(divide="ignore"):
            return GainMatrix(np.log(self.values), self.metric, list(self.bus_ids),
                              list(self.clusters), True)

    def permuted(self, perm) -> "GainMatrix":
        perm = list(perm)
        return GainMatrix(self.values[np.ix_(perm, perm)], self.metric,
                          [self.bus_ids[k] for k in perm],
                          [self.clusters[k] for k in perm] if self.clusters else [],
                          self.log_transformed)


def _bus_channels(p, m, k):
    # w = (w_u, w_y) and z = (y, u): bus k owns column/row k and k + offset
    return [k, m + k], [k, p + k]


def _map(func, items, threads):
    items = list(items)
    if threads is None or threads == 1 or len(items) <= 1:
        return [func(x) for x in items]
    workers = None if threads == 0 else threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def closed_loop(plant: StateSpace, K: Controller) -> StateSpace:
    return close_loop(build_generalized_plant(plant), K)


def h2_gains(cl: StateSpace, p: int, m: int, threads=1) -> np.ndarray:
    """H2 sub-block gains of a closed loop ``w = (w_u, w_y) -> z = (y, u)``.

    One Lyapunov solve per disturbed bus against a shared Schur
    factorization; every monitored bus is then read off the Gramian.
    """
    n_bus = m
    for k in range(n_bus):
        cols, _ = _bus_channels(p, m, k)
        blk = cl.D[:, cols]
        for i in range(n_bus):
            _, rows = _bus_channels(p, m, i)
            if np.any(blk[rows, :] != 0):
                raise NonzeroFeedthrough(f"sub-block ({i}, {k}) has a direct term; "
                                         "H2 gain is infinite")
    solver = LyapunovSolver(cl.A)
    C = cl.C

    def column(k):
        cols, _ = _bus_channels(p, m, k)
        Bk = cl.B[:, cols]
        W = solver.solve(Bk @ Bk.T)
        d = np.einsum("ij,jk,ik->i", C, W, C)
        sq = d[:p] + d[p:]
        return np.sqrt(np.maximum(sq, 0.0))

    cols = _map(column, range(n_bus), threads)
    return np.column_stack(cols)


def _grid_lower_bounds(cl: StateSpace, p: int, m: int, eigenvalues) -> np.ndarray:
    mags = np.abs(eigenvalues[np.abs(eigenvalues) > 0])
    lo, hi = (mags.min() / 10.0, mags.max() * 10.0) if mags.size else (1e-2, 1e2)
    grid = np.concatenate([[0.0], np.geomspace(lo, hi, _GRID_POINTS)])
    out = np.zeros((m, m))
    for G in cl.freqresp(grid):
        for k in range(m):
            cols, _ = _bus_channels(p, m, k)
            for i in range(m):
                _, rows = _bus_channels(p, m, i)
                out[i, k] = max(out[i, k], np.linalg.norm(G[np.ix_(rows, cols)], 2))
    return out


def hinf_gains(cl: StateSpace, p: int, m: int, tol=1e-6, threads=1) -> np.ndarray:
    """H-infinity sub-block gains, each entry seeded by a shared grid pass."""
    ev = np.linalg.eigvals(cl.A)
    if not is_hurwitz(cl.A, eigenvalues=ev):
        raise NotHurwitz("closed loop is not internally stable")
    lower = _grid_lower_bounds(cl, p, m, ev)

    def column(k):
        cols, _ = _bus_channels(p, m, k)
        out = np.empty(m)
        for i in range(m):
            _, rows = _bus_channels(p, m, i)
            sub = StateSpace(cl.A, cl.B[:, cols], cl.C[rows, :], cl.D[np.ix_(rows, cols)])
            out[i] = hinf_norm(sub, tol=tol, lower_bound=lower[i, k], check_stability=False)
        return out

    return np.column_stack(_map(column, range(m), threads))


def subblock_gains(plant: StateSpace, K: Controller, metric: str, bus_ids=None,
                   clusters=None, tol=1e-6, threads=1) -> GainMatrix:
    """Gain matrix of ``plant`` under controller ``K``.

    Parameters
    ----------
    plant : StateSpace
        Square plant (one input and one output per bus), e.g. a swing model.
    K : Controller
    metric : {"H2", "Hinf"}
    threads : int
        Worker threads over disturbed buses (0 picks automatically).  The
        result does not depend on it.
    """
    metric = _metric(metric)
    cl = closed_loop(plant, K)
    p, m = plant.p, plant.m
    if metric == "H2":
        values = h2_gains(cl, p, m, threads=threads)
    else:
        values = hinf_gains(cl, p, m, tol=tol, threads=threads)
    return GainMatrix(values, metric, list(bus_ids) if bus_ids is not None else [],
                      list(clusters) if clusters is not None else [])


def optimal_controller(plant: StateSpace, metric: str) -> Controller:
    """The metric's optimal controller: dynamic for H2, ``-sqrt(2) I`` for H-infinity."""
    if _metric(metric) == "H2":
        return structured_h2_controller(plant)
    return static_hinf_controller(plant)


def network_gains(net: PowerNetwork, metric: str, controller: str | None = None,
                  tol=1e-6, threads=1) -> GainMatrix:
    """Gain matrix of a network's swing model.

    ``controller`` overrides the metric's default pairing with
    ``"structured_h2"`` or ``"static_hinf"``; note the static gain makes
    every H2 diagonal block infinite.
    """
    model = swing_model(net)
    if controller is None:
        K = optimal_controller(model.sys, metric)
    elif controller == "structured_h2":
        K = structured_h2_controller(model.sys)
    elif controller == "static_hinf":
        K = static_hinf_controller(model.sys)
    else:
        raise ValueError(f"unknown controller {controller!r}")
    clusters = [net.bus(b).cluster for b in model.generator_ids]
    return subblock_gains(model.sys, K, metric, model.generator_ids, clusters,
                          tol=tol, threads=threads)


@dataclass
class EnsembleResult:
    gains: GainMatrix
    seeds: list
    resampled: int


def ensemble_average(cfg: EnsembleConfig, n_runs: int, metric: str, tol=1e-6,
                     threads=1, seeds=None, max_resamples=100) -> EnsembleResult:
    """Entrywise mean gain matrix over ``n_runs`` networks.

    Seeds run ``cfg.seed, cfg.seed + 1, ...``; a seed whose network cannot
    be sized is skipped in favour of the next unused seed and counted in
    ``resampled``, up to ``max_resamples`` times.  Take ``.gains.log()``
    for the log of the average.
    """
    if cfg.fixed_cluster_sizes is None:
        raise ValueError("ensemble averaging needs fixed_cluster_sizes")
    candidates = list(seeds) if seeds is not None else None
    next_seed = cfg.seed
    used, nets, resampled = [], [], 0
    while len(nets) < n_runs:
        if candidates is not None:
            if not candidates:
                raise ValueError("ran out of seeds")
            s = candidates.pop(0)
        else:
            s = next_seed
            next_seed += 1
        try:
            nets.append(generate_network(replace(cfg, seed=s)))
            used.append(s)
        except InfeasibleSizing:
            resampled += 1
            log.info("seed %d failed sizing; resampling", s)
            if resampled > max_resamples:
                raise

    def run(net):
        return network_gains(net, metric, tol=tol).values

    # run-level parallelism; the sum is taken in seed order
    results = _map(run, nets, threads)
    total = np.zeros_like(results[0])
    for v in results:
        if v.shape != total.shape:
            raise ValueError("ensemble members have different generator counts")
        total += v
    model_ids = [b.id for b in nets[0].generators]
    clusters = [b.cluster for b in nets[0].generators]
    return EnsembleResult(GainMatrix(total / n_runs, metric, model_ids, clusters), used, resampled)


def jensen_report(M) -> dict:
    """Heterogeneity gap in ``sum 1/M_k >= n^2 / M_tot``."""
    M = np.atleast_1d(np.asarray(M, dtype=float))
    h2_limit_swing(M)  # validates positivity
    n = M.size
    total = M.sum()
    lhs = float(np.sum(1.0 / M))
    rhs = float(n * n / total)
    gap = lhs - rhs
    return {"lhs": lhs, "rhs": rhs, "gap": gap, "heterogeneity_index": gap * total / n**2}


def aggregate_by_cluster(g: GainMatrix) -> GainMatrix:
    """Cluster-to-cluster view of a bus-level gain matrix.

    H2 entries are root-sum-squares over the cluster block, which is exactly
    the H2 norm of the block.  H-infinity entries are the largest bus-level
    entry in the block, a lower bound on the block norm.
    """
    if g.log_transformed:
        raise ValueError("aggregate raw gains, not log values")
    if not g.clusters:
        raise ValueError("gain matrix has no cluster labels")
    ids = list(dict.fromkeys(g.clusters))
    idx = {c: [k for k, cc in enumerate(g.clusters) if cc == c] for c in ids}
    out = np.zeros((len(ids), len(ids)))
    for a, ca in enumerate(ids):
        for b, cb in enumerate(ids):
            blk = g.values[np.ix_(idx[ca], idx[cb])]
            out[a, b] = np.sqrt(np.sum(blk**2)) if g.metric == "H2" else blk.max()
    return GainMatrix(out, g.metric, ids, ids)


@dataclass
class LumpedComparison:
    full_gains: GainMatrix
    lumped_gains: GainMatrix
    limit_full: float
    limit_lumped: float
    full_bus_gains: GainMatrix | None = None


def compare_lumped(full: PowerNetwork, metric: str, tol=1e-6, threads=1) -> LumpedComparison:
    lumped = lump(full)
    bus_level = network_gains(full, metric, tol=tol, threads=threads)
    lumped_gains = network_gains(lumped, metric, tol=tol, threads=threads)
    return LumpedComparison(
        full_gains=aggregate_by_cluster(bus_level),
        lumped_gains=lumped_gains,
        limit_full=h2_limit_swing(full.inertia_vector()),
        limit_lumped=h2_limit_swing(lumped.inertia_vector()),
        full_bus_gains=bus_level,
    )
