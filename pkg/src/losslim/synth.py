"""Generalized plants, optimal controllers and closed-loop interconnection.

The plant ``x' = Ax + B(u + w_u)``, ``y = Cx + D(u + w_u) + w_y`` with
performance output ``z = (Cx + Du, u)`` is written in nine-block form

    [x']   [A    B_w   B_u ] [x]
    [z ] = [C_z  0     D_zu] [w]
    [y ]   [C_y  D_yw  D_yu] [u]

with ``w = (w_u, w_y)``.  Controllers map ``y`` to ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .errors import DimensionMismatch, IllPosedLoop, NoStabilizingSolution, NonzeroFeedthrough
from .numlin import StateSpace, h2_norm, solve_riccati

SQRT2 = float(np.sqrt(2.0))

CONTROLLER_KINDS = ("structured_h2", "static_hinf", "riccati_h2", "custom")


@dataclass(frozen=True, eq=False)
class GeneralizedPlant:
    A: np.ndarray
    B_w: np.ndarray
    B_u: np.ndarray
    C_z: np.ndarray
    C_y: np.ndarray
    D_zw: np.ndarray
    D_zu: np.ndarray
    D_yw: np.ndarray
    D_yu: np.ndarray
    # (R, S, D) normalizations and removed D_yu when built by loop_shift
    shift: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        n = np.asarray(self.A).shape[0]
        nw = np.asarray(self.B_w).shape[1]
        nu = np.asarray(self.B_u).shape[1]
        nz = np.asarray(self.C_z).shape[0]
        ny = np.asarray(self.C_y).shape[0]
        shapes = {"A": (n, n), "B_w": (n, nw), "B_u": (n, nu), "C_z": (nz, n),
                  "C_y": (ny, n), "D_zw": (nz, nw), "D_zu": (nz, nu),
                  "D_yw": (ny, nw), "D_yu": (ny, nu)}
        for name, shape in shapes.items():
            value = np.array(getattr(self, name), dtype=float)
            if value.size == 0 and shape[0] * shape[1] == 0:
                value = value.reshape(shape)
            if value.shape != shape:
                raise DimensionMismatch(f"{name} must be {shape}, got {value.shape}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def dims(self):
        """``(states, w, u, z, y)`` dimensions."""
        return self.n, self.B_w.shape[1], self.B_u.shape[1], self.C_z.shape[0], self.C_y.shape[0]


@dataclass(frozen=True, eq=False)
class Controller:
    K: StateSpace
    kind: str = "custom"

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}")


def build_generalized_plant(sys: StateSpace) -> GeneralizedPlant:
    """Nine-block plant for ``z = (Cx + Du, u)`` and noisy measurement ``y``."""
    n, m, p = sys.n, sys.m, sys.p
    B, C, D = sys.B, sys.C, sys.D
    return GeneralizedPlant(
        A=sys.A,
        B_w=np.hstack([B, np.zeros((n, p))]),
        B_u=B,
        C_z=np.vstack([C, np.zeros((m, n))]),
        C_y=C,
        D_zw=np.zeros((p + m, m + p)),
        D_zu=np.vstack([D, np.eye(m)]),
        D_yw=np.hstack([D, np.eye(p)]),
        D_yu=D,
    )


def _require_zero_d(sys):
    if np.any(sys.D != 0):
        raise NonzeroFeedthrough("this controller is only optimal for plants with D = 0")


def structured_h2_controller(sys: StateSpace) -> Controller:
    """``K(s) = -C (sI - A + 2BC)^{-1} B`` for a lossless plant with ``D = 0``."""
    _require_zero_d(sys)
    K = StateSpace(sys.A - 2.0 * sys.B @ sys.C, sys.B, -sys.C, np.zeros((sys.m, sys.p)))
    return Controller(K, "structured_h2")


def static_hinf_controller(sys: StateSpace) -> Controller:
    """Decentralized static gain ``K = -sqrt(2) I`` for a lossless plant with ``D = 0``."""
    _require_zero_d(sys)
    if sys.m != sys.p:
        raise DimensionMismatch("static -sqrt(2) I needs as many inputs as outputs")
    return Controller(StateSpace.static(-SQRT2 * np.eye(sys.m)), "static_hinf")


class H2Design(NamedTuple):
    X: np.ndarray
    Y: np.ndarray
    F: np.ndarray  # state feedback, u = F x
    L: np.ndarray  # output injection
    controller: Controller
    optimal_cost: float


def _sqrtm_spd(M):
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(w)) @ V.T


def h2_design(gp: GeneralizedPlant) -> H2Design:
    """Riccati-based H2-optimal output feedback for ``D_zw = 0``, ``D_yu = 0``.

    Handles general ``D_zu`` (full column rank) and ``D_yw`` (full row rank),
    including cross terms ``D_zu^T C_z`` and ``B_w D_yw^T``.  The optimal
    value ``sqrt(||G_ctl||^2 + ||G_obs||^2)`` is evaluated independently of
    the closed loop.
    """
    if np.any(gp.D_yu != 0):
        raise NonzeroFeedthrough("D_yu must be zero; apply loop_shift first")
    if np.any(gp.D_zw != 0):
        raise NonzeroFeedthrough("H2 synthesis needs D_zw = 0")
    A, B1, B2, C1, C2 = gp.A, gp.B_w, gp.B_u, gp.C_z, gp.C_y
    D12, D21 = gp.D_zu, gp.D_yw
    R1 = D12.T @ D12
    R2 = D21 @ D21.T
    # control Riccati equation with cross term
    Ax = A - B2 @ np.linalg.solve(R1, D12.T @ C1)
    Qx = C1.T @ (np.eye(C1.shape[0]) - D12 @ np.linalg.solve(R1, D12.T)) @ C1
    X = solve_riccati(Ax, B2 @ np.linalg.solve(R1, B2.T), Qx)
    F = -np.linalg.solve(R1, B2.T @ X + D12.T @ C1)
    # filter Riccati equation, solved in dual form
    Ay = A - B1 @ D21.T @ np.linalg.solve(R2, C2)
    Qy = B1 @ (np.eye(B1.shape[1]) - D21.T @ np.linalg.solve(R2, D21)) @ B1.T
    Y = solve_riccati(Ay.T, C2.T @ np.linalg.solve(R2, C2), Qy)
    L = -(Y @ C2.T + B1 @ D21.T) @ np.linalg.inv(R2)

    K = StateSpace(A + B2 @ F + L @ C2, -L, F, np.zeros((B2.shape[1], C2.shape[0])))
    g_ctl = StateSpace(A + B2 @ F, B1, C1 + D12 @ F, np.zeros((C1.shape[0], B1.shape[1])))
    g_obs = StateSpace(A + L @ C2, B1 + L @ D21, _sqrtm_spd(R1) @ F,
                       np.zeros((B2.shape[1], B1.shape[1])))
    cost = float(np.hypot(h2_norm(g_ctl), h2_norm(g_obs)))
    return H2Design(X, Y, F, L, Controller(K, "riccati_h2"), cost)


def riccati_h2_controller(gp: GeneralizedPlant) -> Controller:
    """Observer-form H2-optimal controller.

    For a plant with ``D = 0`` this is ``A_K = A - BB^T X - YC^T C``,
    ``B_K = YC^T``, ``C_K = -B^T X``.  A loop-shifted plant is accepted too;
    the returned controller then acts on the original ``y`` and ``u``, so
    ``close_loop(gp, riccati_h2_controller(loop_shift(gp)))`` is the
    optimal loop for a plant with ``D != 0``.
    """
    return unshift_controller(gp, h2_design(gp).controller)


def loop_shift(gp: GeneralizedPlant) -> GeneralizedPlant:
    """Remove ``D_yu`` and normalize ``D_zu``, ``D_yw``.

    With ``R = (I + DD^T)^{1/2}`` and ``S = (I + D^T D)^{1/2}`` the new
    control is ``u~ = S u`` and the new measurement is
    ``y~ = R^{-1} (y - D u)``, giving ``B_u -> B S^{-1}``,
    ``D_zu -> D_zu S^{-1}``, ``C_y -> R^{-1} C_y``, ``D_yw -> R^{-1} D_yw``
    and ``D_yu -> 0``, where ``D`` is read from ``D_yu``.  The H2-optimal
    cost is unchanged.  Shifting an already shifted plant returns it as is.
    """
    if gp.shift is not None:
        return gp
    D = gp.D_yu
    if np.any(D):
        R = _sqrtm_spd(np.eye(D.shape[0]) + D @ D.T)
        S = _sqrtm_spd(np.eye(D.shape[1]) + D.T @ D)
    else:
        R = np.eye(D.shape[0])
        S = np.eye(D.shape[1])
    Sinv = np.linalg.inv(S)
    Rinv = np.linalg.inv(R)
    return GeneralizedPlant(
        A=gp.A, B_w=gp.B_w, B_u=gp.B_u @ Sinv, C_z=gp.C_z, C_y=Rinv @ gp.C_y,
        D_zw=gp.D_zw, D_zu=gp.D_zu @ Sinv, D_yw=Rinv @ gp.D_yw,
        D_yu=np.zeros_like(D),
        shift=(R, S, D.copy()),
    )


def unshift_controller(shifted: GeneralizedPlant, K: Controller) -> Controller:
    """Map a controller designed for ``loop_shift(gp)`` back to ``gp``'s signals."""
    if shifted.shift is None:
        return K
    R, S, D = shifted.shift
    Ak, Bk, Ck, Dk = K.K.A, K.K.B, K.K.C, K.K.D
    Sinv = np.linalg.inv(S)
    Rinv = np.linalg.inv(R)
    # u = S^{-1} u~,  y~ = R^{-1} (y - D u)
    Bh = Bk @ Rinv
    Ch = Sinv @ Ck
    Dh = Sinv @ Dk @ Rinv
    E = np.linalg.inv(np.eye(Dh.shape[0]) + Dh @ D)
    C_new = E @ Ch
    D_new = E @ Dh
    A_new = Ak - Bh @ D @ C_new
    B_new = Bh @ (np.eye(D.shape[0]) - D @ D_new)
    return Controller(StateSpace(A_new, B_new, C_new, D_new), K.kind)


def close_loop(gp: GeneralizedPlant, K: Controller) -> StateSpace:
    """Lower linear-fractional interconnection ``w -> z`` with state ``(x, x_K)``."""
    Ks = K.K
    nu, ny = gp.B_u.shape[1], gp.C_y.shape[0]
    if Ks.m != ny or Ks.p != nu:
        raise DimensionMismatch(f"controller must map {ny} measurements to {nu} inputs, "
                                f"got {Ks.m} -> {Ks.p}")
    M = np.eye(nu) - Ks.D @ gp.D_yu
    if np.linalg.svd(M, compute_uv=False).min() <= 1e-12:
        raise IllPosedLoop("I - D_K D_yu is singular")
    E = np.linalg.inv(M)
    # u = E (D_K C_y x + C_K x_K + D_K D_yw w)
    Ux = E @ Ks.D @ gp.C_y
    Uk = E @ Ks.C
    Uw = E @ Ks.D @ gp.D_yw
    # y = C_y x + D_yw w + D_yu u
    Yx = gp.C_y + gp.D_yu @ Ux
    Yk = gp.D_yu @ Uk
    Yw = gp.D_yw + gp.D_yu @ Uw
    A = np.block([[gp.A + gp.B_u @ Ux, gp.B_u @ Uk],
                  [Ks.B @ Yx, Ks.A + Ks.B @ Yk]])
    B = np.vstack([gp.B_w + gp.B_u @ Uw, Ks.B @ Yw])
    C = np.hstack([gp.C_z + gp.D_zu @ Ux, gp.D_zu @ Uk])
    D = gp.D_zw + gp.D_zu @ Uw
    return StateSpace(A, B, C, D)


class HinfFeasibility(NamedTuple):
    feasible: bool
    X: np.ndarray | None
    Y: np.ndarray | None
    spectral_radius: float
    reason: str


def hinf_feasibility(gp: GeneralizedPlant, gamma: float) -> HinfFeasibility:
    """Riccati test for ``||T_zw||_inf < gamma`` over all stabilizing controllers.

    Requires the simplified structure ``D_zw = 0``, ``D_yu = 0``,
    ``D_zu^T [C_z, D_zu] = [0, I]`` and ``D_yw [B_w^T, D_yw^T] = [0, I]``
    (true for the unshifted plant of a system with ``D = 0``).  The level is
    achievable iff both stabilizing solutions

        X A + A^T X - X (B_u B_u^T - gamma^-2 B_w B_w^T) X + C_z^T C_z = 0
        Y A^T + A Y - Y (C_y^T C_y - gamma^-2 C_z^T C_z) Y + B_w B_w^T = 0

    exist, are positive semidefinite, and ``rho(XY) < gamma^2``.
    """
    if np.any(gp.D_yu) or np.any(gp.D_zw):
        raise NonzeroFeedthrough("feasibility test needs D_yu = 0 and D_zw = 0")
    g2 = gamma ** -2
    Gx = gp.B_u @ gp.B_u.T - g2 * gp.B_w @ gp.B_w.T
    Gy = gp.C_y.T @ gp.C_y - g2 * gp.C_z.T @ gp.C_z
    try:
        X = solve_riccati(gp.A, Gx, gp.C_z.T @ gp.C_z)
    except NoStabilizingSolution as exc:
        return HinfFeasibility(False, None, None, np.inf, f"X: {exc}")
    try:
        Y = solve_riccati(gp.A.T, Gy, gp.B_w @ gp.B_w.T)
    except NoStabilizingSolution as exc:
        return HinfFeasibility(False, X, None, np.inf, f"Y: {exc}")
    psd_tol = -1e-9 * max(1.0, np.linalg.norm(X, 2), np.linalg.norm(Y, 2))
    if np.linalg.eigvalsh(X)[0] < psd_tol or np.linalg.eigvalsh(Y)[0] < psd_tol:
        return HinfFeasibility(False, X, Y, np.inf, "Riccati solution not PSD")
    rho = float(np.max(np.abs(linalg.eigvals(X @ Y))))
    if rho < gamma ** 2:
        return HinfFeasibility(True, X, Y, rho, "ok")
    return HinfFeasibility(False, X, Y, rho, f"rho(XY) = {rho:.6g} >= gamma^2 = {gamma**2:.6g}")

