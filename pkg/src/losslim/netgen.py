"""Seeded random generator of clustered transmission networks.

A network is built in five steps:

1. cluster centers are placed uniformly on a square map and bus counts per
   cluster are drawn (or fixed by the config);
2. buses scatter normally around their cluster center and draw a power
   magnitude that is larger near the center;
3. each cluster is wired by the Euclidean minimum spanning tree
   (sub-transmission tier);
4. the most eigenvector-central bus of every cluster is connected to every
   other cluster's central bus (transmission tier);
5. susceptances are scaled until all DC-power-flow load angles sit well
   below 45 degrees, including after any single transmission-line outage.

Randomness comes from numpy's PCG64.  ``SeedSequence(seed).spawn(k + 1)``
yields one stream for the map-level draws (centers, cluster sizes) followed
by one stream per cluster, so a cluster's buses depend only on the seed,
its index and its size.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial.distance import cdist

from .errors import InfeasibleSizing, MissingRatedPower, NotConnected
from .swing import GENERATOR_KINDS, Bus, Line, PowerNetwork

log = logging.getLogger(__name__)

TEN_CLUSTER_ROLES = ("wind_solar", "wind_solar", "conventional", "hydro", "hydro",
               "load", "load", "load", "load", "load")
INERTIA_CONSTANTS = {"conventional": 6.0, "hydro": 3.0, "wind_solar": 0.006}
# 52 generator buses split 8/20/4/8/12 over the generating clusters, as in
# the averaged heatmap experiment; the 48 load buses are spread evenly
ENSEMBLE_CLUSTER_SIZES = (8, 20, 4, 8, 12, 10, 10, 10, 9, 9)
_OVERSHOOT = 1.1


def default_roles(n_clusters: int) -> tuple[str, ...]:
    if n_clusters == len(TEN_CLUSTER_ROLES):
        return TEN_CLUSTER_ROLES
    n_gen = max(1, (n_clusters + 1) // 2)
    cycle = ("wind_solar", "conventional", "hydro")
    return tuple(cycle[k % 3] for k in range(n_gen)) + ("load",) * (n_clusters - n_gen)


@dataclass(frozen=True)
class EnsembleConfig:
    n_clusters: int = 10
    total_buses: int = 100
    cluster_roles: tuple | None = None
    inertia_constants: dict = field(default_factory=lambda: dict(INERTIA_CONSTANTS))
    seed: int = 0
    fixed_cluster_sizes: tuple | None = None
    map_size: float = 100.0
    cluster_spread: float = 5.0
    min_cluster_size: int = 2
    angle_cap_deg: float = 45.0
    subtransmission_margin: float = 2.0
    transmission_margin: float = 4.0
    max_sizing_iterations: int = 20

    def __post_init__(self):
        roles = self.cluster_roles
        roles = default_roles(self.n_clusters) if roles is None else tuple(roles)
        object.__setattr__(self, "cluster_roles", roles)
        if len(roles) != self.n_clusters:
            raise ValueError(f"{len(roles)} roles given for {self.n_clusters} clusters")
        for r in roles:
            if r not in GENERATOR_KINDS + ("load",):
                raise ValueError(f"unknown cluster role {r!r}")
        for kind in GENERATOR_KINDS:
            if not self.inertia_constants.get(kind, 0) > 0:
                raise ValueError(f"inertia constant for {kind!r} must be positive")
        if self.fixed_cluster_sizes is not None:
            sizes = tuple(int(s) for s in self.fixed_cluster_sizes)
            object.__setattr__(self, "fixed_cluster_sizes", sizes)
            if len(sizes) != self.n_clusters or sum(sizes) != self.total_buses:
                raise ValueError("fixed_cluster_sizes must have one entry per cluster "
                                 "and sum to total_buses")
            if min(sizes) < 1:
                raise ValueError("every cluster needs at least one bus")
        if self.total_buses < self.n_clusters * max(1, self.min_cluster_size) \
                and self.fixed_cluster_sizes is None:
            raise ValueError("too few buses for the requested clusters")
        if not any(r in GENERATOR_KINDS for r in roles):
            raise ValueError("at least one cluster must generate")

    def to_dict(self) -> dict:
        return {
            "n_clusters": self.n_clusters,
            "total_buses": self.total_buses,
            "cluster_roles": list(self.cluster_roles),
            "inertia_constants": {k: self.inertia_constants[k] for k in sorted(self.inertia_constants)},
            "seed": self.seed,
            "fixed_cluster_sizes": None if self.fixed_cluster_sizes is None
            else list(self.fixed_cluster_sizes),
            "map_size": self.map_size,
            "cluster_spread": self.cluster_spread,
            "min_cluster_size": self.min_cluster_size,
            "angle_cap_deg": self.angle_cap_deg,
            "subtransmission_margin": self.subtransmission_margin,
            "transmission_margin": self.transmission_margin,
            "max_sizing_iterations": self.max_sizing_iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EnsembleConfig":
        data = dict(data)
        for key in ("cluster_roles", "fixed_cluster_sizes"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class GenerationReport:
    size_resamples: int = 0
    sizing_iterations: int = 0
    max_nominal_angle: float = 0.0
    max_outage_angle: float = 0.0


def eigenvector_centrality(adjacency, tol=1e-10, maxiter=10000) -> np.ndarray:
    """Dominant-eigenvector centrality scores, nonnegative with unit 2-norm.

    Power iteration runs on ``A + I``: the shift leaves the eigenvectors
    alone but makes the Perron root strictly dominant in magnitude, which
    plain iteration lacks on bipartite graphs such as trees.
    """
    A = np.asarray(adjacency, dtype=float)
    k = A.shape[0]
    if A.shape != (k, k) or not np.allclose(A, A.T):
        raise ValueError("adjacency must be square and symmetric")
    if k == 0:
        return np.zeros(0)
    if k > 1 and connected_components(A, directed=False)[0] != 1:
        raise NotConnected("graph is not connected")
    S = A + np.eye(k)
    x = np.ones(k) / np.sqrt(k)
    for _ in range(maxiter):
        y = S @ x
        y /= np.linalg.norm(y)
        if np.linalg.norm(y - x) < tol:
            x = y
            break
        x = y
    return np.abs(x)


def most_central(scores, ids=None, rel_tol=1e-9) -> int:
    """Index (or id) of the top score; ties go to the lowest id."""
    scores = np.asarray(scores, dtype=float)
    ids = list(range(scores.size)) if ids is None else list(ids)
    best = scores.max()
    return min(i for i, s in zip(ids, scores) if s >= best * (1 - rel_tol))


def assign_inertia(net: PowerNetwork, constants=None) -> PowerNetwork:
    """Set ``M_k = constant(kind) * |p_k|`` on generator buses."""
    constants = INERTIA_CONSTANTS if constants is None else constants
    buses = []
    for b in net.buses:
        if b.is_generator:
            if not abs(b.power) > 0:
                raise MissingRatedPower(f"generator bus {b.id} has no rated power")
            b = replace(b, inertia=float(constants[b.kind] * abs(b.power)))
        buses.append(b)
    return PowerNetwork(tuple(buses), net.lines)


def dc_power_flow(n_buses, edges, susceptance, power):
    """Angles of the DC power flow ``p = B_lap theta`` with bus 0 as slack.

    ``edges`` is an ``(E, 2)`` index array; returns per-edge angle
    differences ``theta_i - theta_j``.
    """
    lap = np.zeros((n_buses, n_buses))
    i, j = edges[:, 0], edges[:, 1]
    np.add.at(lap, (i, i), susceptance)
    np.add.at(lap, (j, j), susceptance)
    np.add.at(lap, (i, j), -susceptance)
    np.add.at(lap, (j, i), -susceptance)
    theta = np.zeros(n_buses)
    theta[1:] = np.linalg.solve(lap[1:, 1:], power[1:])
    return theta[i] - theta[j]


def _draw_centers(rng, cfg):
    k = cfg.n_clusters
    min_sep = cfg.map_size / (2.0 * np.sqrt(k))
    centers = []
    for _ in range(1000 * k):
        c = rng.uniform(0.0, cfg.map_size, size=2)
        if all(np.hypot(*(c - d)) >= min_sep for d in centers):
            centers.append(c)
            if len(centers) == k:
                break
    while len(centers) < k:
        centers.append(rng.uniform(0.0, cfg.map_size, size=2))
    return np.array(centers)


def _draw_sizes(rng, cfg, report):
    if cfg.fixed_cluster_sizes is not None:
        return list(cfg.fixed_cluster_sizes)
    k = cfg.n_clusters
    while True:
        sizes = rng.multinomial(cfg.total_buses, np.full(k, 1.0 / k))
        if sizes.min() >= cfg.min_cluster_size:
            return sizes.tolist()
        report.size_resamples += 1


def _connected_without(n_buses, edges, skip):
    keep = np.ones(len(edges), dtype=bool)
    keep[skip] = False
    e = edges[keep]
    adj = np.zeros((n_buses, n_buses))
    adj[e[:, 0], e[:, 1]] = adj[e[:, 1], e[:, 0]] = 1.0
    return connected_components(adj, directed=False)[0] == 1


def _size_susceptances(cfg, n_buses, edges, transmission, power, report):
    cap = np.deg2rad(cfg.angle_cap_deg)
    margin = np.where(transmission, cfg.transmission_margin, cfg.subtransmission_margin)
    outages = [t for t in np.flatnonzero(transmission)
               if _connected_without(n_buses, edges, t)]
    b = np.ones(len(edges))
    for it in range(1, cfg.max_sizing_iterations + 1):
        delta = dc_power_flow(n_buses, edges, b, power)
        factor = np.maximum(1.0, np.abs(delta) * margin / cap)
        worst_outage = 0.0
        for t in outages:
            keep = np.ones(len(edges), dtype=bool)
            keep[t] = False
            d = dc_power_flow(n_buses, edges[keep], b[keep], power)
            worst_outage = max(worst_outage, float(np.max(np.abs(d))))
            f = np.ones(len(edges))
            f[keep] = np.maximum(1.0, np.abs(d) * cfg.subtransmission_margin / cap)
            factor = np.maximum(factor, f)
        report.sizing_iterations = it
        if np.all(factor <= 1.0):
            report.max_nominal_angle = float(np.max(np.abs(delta)))
            report.max_outage_angle = worst_outage
            return b, delta
        # overshoot so lines do not creep asymptotically onto the target
        b = np.where(factor > 1.0, b * factor * _OVERSHOOT, b)
    raise InfeasibleSizing(f"load angles still above target after "
                           f"{cfg.max_sizing_iterations} scaling rounds")


def generate_network(cfg: EnsembleConfig, report: GenerationReport | None = None) -> PowerNetwork:
    """Draw one clustered network; identical configs give identical networks."""
    report = GenerationReport() if report is None else report
    k = cfg.n_clusters
    streams = np.random.SeedSequence(cfg.seed).spawn(k + 1)
    top = np.random.Generator(np.random.PCG64(streams[0]))
    centers = _draw_centers(top, cfg)
    sizes = _draw_sizes(top, cfg, report)

    buses, lines = [], []
    centrals = []
    next_id = 0
    for c in range(k):
        rng = np.random.Generator(np.random.PCG64(streams[c + 1]))
        role = cfg.cluster_roles[c]
        s = sizes[c]
        pos = centers[c] + cfg.cluster_spread * rng.standard_normal((s, 2))
        dist = np.hypot(*(pos - centers[c]).T)
        mag = np.abs(rng.standard_normal(s)) * np.exp(-dist / cfg.cluster_spread) + 0.05
        sign = -1.0 if role == "load" else 1.0
        ids = list(range(next_id, next_id + s))
        next_id += s
        for bid, p, xy in zip(ids, mag, pos):
            buses.append(Bus(bid, role, float(sign * p), None, (float(xy[0]), float(xy[1])), c))
        if s > 1:
            tree = minimum_spanning_tree(cdist(pos, pos)).toarray()
            adj = np.zeros((s, s))
            for a, bb in sorted(zip(*np.nonzero(tree))):
                lines.append((ids[min(a, bb)], ids[max(a, bb)], "subtransmission"))
                adj[a, bb] = adj[bb, a] = 1.0
            centrals.append(ids[most_central(eigenvector_centrality(adj))])
        else:
            centrals.append(ids[0])
    for a in range(k):
        for bb in range(a + 1, k):
            lines.append((centrals[a], centrals[bb], "transmission"))

    power = _balance(buses)
    buses = [replace(b, power=float(p)) for b, p in zip(buses, power)]
    edges = np.array([(i, j) for i, j, _ in lines], dtype=int).reshape(-1, 2)
    transmission = np.array([t == "transmission" for _, _, t in lines], dtype=bool)
    b, delta = _size_susceptances(cfg, len(buses), edges, transmission, power, report)
    net = PowerNetwork(
        tuple(buses),
        tuple(Line(int(i), int(j), float(bb), float(d), t)
              for (i, j, t), bb, d in zip(lines, b, delta)),
    )
    return assign_inertia(net, cfg.inertia_constants)


def _balance(buses):
    """Scale load magnitudes so total injection is zero."""
    p = np.array([b.power for b in buses])
    load = np.array([not b.is_generator for b in buses])
    gen_total = p[~load].sum()
    load_total = -p[load].sum()
    if load.any() and load_total > 0:
        p[load] *= gen_total / load_total
    else:
        # no loads: generators trade power among themselves
        p = p - p.mean()
        p[np.abs(p) < 1e-3] = 1e-3
        p -= p.mean()
    return p


def cluster_members(net: PowerNetwork) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for b in sorted(net.buses, key=lambda b: b.id):
        out.setdefault(b.cluster, []).append(b.id)
    return out


def transmission_n_minus_1(net: PowerNetwork) -> bool:
    """Whether removing any single transmission line keeps the network connected."""
    trans = [ln for ln in net.lines if ln.tier == "transmission"]
    for skip in trans:
        rest = [ln for ln in net.lines if ln is not skip]
        if not net.is_connected(rest):
            return False
    return True
