"""Swing-equation models of lossless transmission networks.

Generator buses carry inertia; every other bus is an internal network bus
that is eliminated by Kron reduction.  With the reduced Laplacian factored
as ``K_red = L L^T`` and state ``x = (theta_dot, L^T theta)`` the model is

    x' = [[0, -M^-1 L], [L^T, 0]] x + [[M^-1], [0]] (u + w_u)
    y  = [I, 0] x + w_y

which is lossless with certificate ``diag(M, I)``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DimensionMismatch,
    Disconnected,
    LoadAngleOutOfRange,
    NonpositiveInertia,
    NonpositiveWeight,
    NullspaceMismatch,
    RankDeficient,
    SingularInternalBlock,
)
from .lossless import verify_certificate
from .numlin import StateSpace

GENERATOR_KINDS = ("conventional", "hydro", "wind_solar")
BUS_KINDS = GENERATOR_KINDS + ("load",)
TIERS = ("transmission", "subtransmission")


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    power: float = 0.0
    inertia: float | None = None
    position: tuple[float, float] = (0.0, 0.0)
    cluster: int = 0

    def __post_init__(self):
        if self.kind not in BUS_KINDS:
            raise ValueError(f"bus {self.id}: unknown kind {self.kind!r}")
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))

    @property
    def is_generator(self) -> bool:
        return self.kind in GENERATOR_KINDS


@dataclass(frozen=True)
class Line:
    i: int
    j: int
    susceptance: float
    load_angle: float = 0.0
    tier: str = "transmission"

    def __post_init__(self):
        if self.tier not in TIERS:
            raise ValueError(f"line {self.i}-{self.j}: unknown tier {self.tier!r}")

    @property
    def weight(self) -> float:
        return self.susceptance * np.cos(self.load_angle)


@dataclass(frozen=True)
class PowerNetwork:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate bus ids")
        known = set(ids)
        for ln in self.lines:
            if ln.i not in known or ln.j not in known:
                raise ValueError(f"line {ln.i}-{ln.j} references an unknown bus")
            if ln.i == ln.j:
                raise ValueError(f"line {ln.i}-{ln.j} is a self-loop")

    def bus(self, bus_id) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(bus_id)

    @property
    def generators(self) -> list[Bus]:
        return sorted((b for b in self.buses if b.is_generator), key=lambda b: b.id)

    @property
    def internal(self) -> list[Bus]:
        return sorted((b for b in self.buses if not b.is_generator), key=lambda b: b.id)

    @property
    def ordered_buses(self) -> list[Bus]:
        """Generators sorted by id, then internal buses sorted by id."""
        return self.generators + self.internal

    def inertia_vector(self) -> np.ndarray:
        M = []
        for b in self.generators:
            if b.inertia is None or not b.inertia > 0:
                raise NonpositiveInertia(f"generator bus {b.id} has inertia {b.inertia}")
            M.append(b.inertia)
        return np.array(M, dtype=float)

    def is_connected(self, lines=None) -> bool:
        return _is_connected([b.id for b in self.buses], self.lines if lines is None else lines)


def _is_connected(ids, lines) -> bool:
    if len(ids) <= 1:
        return True
    index = {b: k for k, b in enumerate(ids)}
    adj = np.zeros((len(ids), len(ids)))
    for ln in lines:
        adj[index[ln.i], index[ln.j]] = adj[index[ln.j], index[ln.i]] = 1.0
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


@dataclass(frozen=True, eq=False)
class SwingModel:
    M: np.ndarray
    L: np.ndarray
    sys: StateSpace
    generator_ids: list = field(default_factory=list)
    K_red: np.ndarray | None = None

    @property
    def certificate(self) -> np.ndarray:
        n = self.M.shape[0]
        return np.diag(np.concatenate([np.diag(self.M), np.ones(n - 1)]))


def validate_network(net: PowerNetwork):
    if not net.generators:
        raise Disconnected("network has no generator buses")
    if not net.is_connected():
        raise Disconnected("network graph is not connected")
    for ln in net.lines:
        if not abs(ln.load_angle) < np.pi / 2:
            raise LoadAngleOutOfRange(f"line {ln.i}-{ln.j}: |load angle| = "
                                      f"{abs(ln.load_angle):.4f} rad is not below pi/2")
        if not ln.weight > 0:
            raise NonpositiveWeight(f"line {ln.i}-{ln.j} has edge weight {ln.weight:.3e}")


def build_laplacian(net: PowerNetwork):
    """Partition the weighted Laplacian into generator/internal blocks.

    Edge weights are ``b_ij cos(delta_ij)``.  Returns ``(K_a, K_b, K_c)``
    with rows ordered as :attr:`PowerNetwork.ordered_buses`.
    """
    validate_network(net)
    order = net.ordered_buses
    index = {b.id: k for k, b in enumerate(order)}
    N = len(order)
    K = np.zeros((N, N))
    for ln in net.lines:
        a, b, w = index[ln.i], index[ln.j], ln.weight
        K[a, a] += w
        K[b, b] += w
        K[a, b] -= w
        K[b, a] -= w
    n = len(net.generators)
    return K[:n, :n], K[:n, n:], K[n:, n:]


def kron_reduce(K_a, K_b, K_c) -> np.ndarray:
    """Eliminate internal buses: ``K_red = K_a - K_b K_c^{-1} K_b^T``."""
    K_a = np.asarray(K_a, dtype=float)
    K_b = np.asarray(K_b, dtype=float).reshape(K_a.shape[0], -1)
    K_c = np.asarray(K_c, dtype=float).reshape(K_b.shape[1], K_b.shape[1])
    if K_c.size == 0:
        return K_a.copy()
    if np.linalg.cond(K_c) > 1e13:
        raise SingularInternalBlock("internal-bus Laplacian block is singular")
    K_red = K_a - K_b @ np.linalg.solve(K_c, K_b.T)
    return 0.5 * (K_red + K_red.T)


def factor_reduced(K_red, tol=1e-9) -> np.ndarray:
    """Eigen-factor ``K_red = L L^T`` with ``L`` of size ``n x (n-1)``.

    Columns follow descending eigenvalue; each column's sign is fixed so its
    largest-magnitude entry (first one on ties) is positive.
    """
    K_red = np.asarray(K_red, dtype=float)
    n = K_red.shape[0]
    if n == 1:
        return np.zeros((1, 0))
    w, V = np.linalg.eigh(0.5 * (K_red + K_red.T))
    scale = max(abs(w[-1]), np.finfo(float).tiny)
    if w[1] <= tol * scale:
        raise RankDeficient(f"reduced Laplacian has rank below {n - 1} "
                            f"(second eigenvalue {w[1]:.3e}); reduced graph disconnected")
    null = V[:, 0]
    ones = np.ones(n) / np.sqrt(n)
    if abs(w[0]) > tol * scale or abs(abs(null @ ones) - 1.0) > 1e-8:
        raise NullspaceMismatch("nullspace of the reduced Laplacian is not spanned by ones")
    w, V = w[1:][::-1], V[:, 1:][:, ::-1]
    idx = np.argmax(np.abs(V) - 1e-12 * np.arange(n)[:, None], axis=0)
    signs = np.sign(V[idx, np.arange(n - 1)])
    signs[signs == 0] = 1.0
    return (V * signs) * np.sqrt(w)


def build_statespace(M, L, generator_ids=None, K_red=None, tol=1e-9) -> SwingModel:
    """Assemble the swing state-space model and confirm its certificate."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 2:
        M = np.diag(M)
    if np.any(~(M > 0)):
        raise NonpositiveInertia("all inertias must be positive")
    n = M.size
    L = np.asarray(L, dtype=float).reshape(n, max(n - 1, 0))
    if n > 1 and np.linalg.matrix_rank(L) != n - 1:
        raise RankDeficient("L must have full column rank n - 1")
    Minv = np.diag(1.0 / M)
    r = n - 1
    A = np.block([[np.zeros((n, n)), -Minv @ L], [L.T, np.zeros((r, r))]])
    B = np.vstack([Minv, np.zeros((r, n))])
    C = np.hstack([np.eye(n), np.zeros((n, r))])
    sys = StateSpace(A, B, C, np.zeros((n, n)))
    model = SwingModel(np.diag(M), L, sys,
                       list(generator_ids) if generator_ids is not None else list(range(n)),
                       None if K_red is None else np.asarray(K_red, dtype=float))
    ok, res = verify_certificate(sys, model.certificate,
                                 tol=tol * (1.0 + np.linalg.norm(A) * np.linalg.norm(M)))
    if not ok:
        raise AssertionError(f"swing model failed its own certificate: {res}")
    return model


def swing_model(net: PowerNetwork, tol=1e-9) -> SwingModel:
    """Network -> Laplacian blocks -> Kron reduction -> factor -> state space."""
    K_a, K_b, K_c = build_laplacian(net)
    K_red = kron_reduce(K_a, K_b, K_c)
    L = factor_reduced(K_red, tol=tol)
    gens = net.generators
    return build_statespace(net.inertia_vector(), L, [b.id for b in gens], K_red, tol=tol)


def h2_limit_swing(M) -> float:
    """``sqrt(2 (1/M_1 + ... + 1/M_n))``."""
    M = np.atleast_1d(np.asarray(M, dtype=float))
    if M.size == 0 or np.any(~(M > 0)):
        raise NonpositiveInertia("inertias must be positive")
    return float(np.sqrt(2.0 * np.sum(1.0 / M)))


def harmonic_mean_decomposition(M) -> dict:
    """The H2 limit split into per-bus contributions ``2/M_k``.

    ``ratio`` is ``gamma*^2 / n`` which equals ``2 / HM(M)``.
    """
    M = np.atleast_1d(np.asarray(M, dtype=float))
    limit = h2_limit_swing(M)
    contrib = 2.0 / M
    hm = M.size / np.sum(1.0 / M)
    return {"gamma_h2": limit, "n": int(M.size), "harmonic_mean": float(hm),
            "ratio": float(limit**2 / M.size), "contributions": contrib}


def lump(net: PowerNetwork) -> PowerNetwork:
    """Aggregate each cluster into one bus.

    Inertia and power are summed per cluster; only transmission-tier lines
    are kept, reattached to the cluster buses.  A cluster with generators
    becomes a generator bus of its most common generator kind; a pure-load
    cluster becomes a load bus.  Lumped bus ids are the cluster ids, and
    positions are the mean of the member positions.
    """
    members = defaultdict(list)
    for b in net.buses:
        members[b.cluster].append(b)
    buses = []
    for cid in sorted(members):
        group = members[cid]
        gens = [b for b in group if b.is_generator]
        power = float(sum(b.power for b in group))
        pos = tuple(np.mean([b.position for b in group], axis=0))
        if gens:
            kinds = [b.kind for b in gens]
            kind = max(GENERATOR_KINDS, key=lambda k: (kinds.count(k), -GENERATOR_KINDS.index(k)))
            inertia = None
            if all(b.inertia is not None for b in gens):
                inertia = float(sum(b.inertia for b in gens))
            buses.append(Bus(cid, kind, power, inertia, pos, cid))
        else:
            buses.append(Bus(cid, "load", power, None, pos, cid))
    cluster_of = {b.id: b.cluster for b in net.buses}
    lines = []
    for ln in net.lines:
        if ln.tier != "transmission":
            continue
        ci, cj = cluster_of[ln.i], cluster_of[ln.j]
        if ci == cj:
            continue
        lines.append(Line(ci, cj, ln.susceptance, ln.load_angle, "transmission"))
    lumped = PowerNetwork(tuple(buses), tuple(lines))
    if not lumped.is_connected():
        raise Disconnected("lumped transmission network is not connected")
    return lumped


def permute_generators(model: SwingModel, perm) -> SwingModel:
    """Relabel generators: new generator ``k`` is old generator ``perm[k]``."""
    perm = np.asarray(perm)
    if sorted(perm.tolist()) != list(range(model.M.shape[0])):
        raise DimensionMismatch("perm must be a permutation of the generator indices")
    M = np.diag(model.M)[perm]
    K_red = None if model.K_red is None else model.K_red[np.ix_(perm, perm)]
    ids = [model.generator_ids[k] for k in perm]
    return build_statespace(M, model.L[perm, :], ids, K_red)
