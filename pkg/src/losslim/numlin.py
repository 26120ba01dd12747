"""Dense linear-algebra kernel for continuous-time LTI systems.

Lyapunov and Riccati solvers, H2/H-infinity norms and controllability
tests.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .errors import (
    BracketFailure,
    DimensionMismatch,
    IllConditioned,
    NoStabilizingSolution,
    NonzeroFeedthrough,
    NotHurwitz,
)

__all__ = [
    "StateSpace",
    "SolverReport",
    "LyapunovSolver",
    "hurwitz_margin",
    "is_hurwitz",
    "solve_lyapunov",
    "solve_lyapunov_kron",
    "solve_care",
    "solve_riccati",
    "h2_norm",
    "hinf_norm",
    "controllability_rank",
]


def _as_matrix(x, rows=None, name="matrix"):
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        # a bare vector is read as a column when the row count is known
        if rows is not None and a.size == rows:
            a = a.reshape(rows, 1)
        else:
            a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionMismatch(f"{name} must be two-dimensional, got shape {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Real state-space realization ``G(s) = C (sI - A)^{-1} B + D``.

    A system without states (``n == 0``) is a static gain ``D``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, 0))
        A = _as_matrix(A, name="A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        D = _as_matrix(self.D, name="D")
        p, m = D.shape
        B = np.array(self.B, dtype=float)
        if (B.ndim < 2 or B.size == 0) and B.size == n * m:
            B = B.reshape(n, m)
        C = np.array(self.C, dtype=float)
        if (C.ndim < 2 or C.size == 0) and C.size == p * n:
            C = C.reshape(p, n)
        if B.shape != (n, m):
            raise DimensionMismatch(f"B must be {n}x{m}, got {B.shape}")
        if C.shape != (p, n):
            raise DimensionMismatch(f"C must be {p}x{n}, got {C.shape}")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            if not np.all(np.isfinite(mat)):
                raise DimensionMismatch(f"{name} has non-finite entries")
            mat.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @classmethod
    def static(cls, D) -> "StateSpace":
        D = _as_matrix(D, name="D")
        p, m = D.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D)

    def freqresp(self, omega) -> np.ndarray:
        """Frequency response at ``s = j*omega``; shape ``(len(omega), p, m)``."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        out = np.empty((omega.size, self.p, self.m), dtype=complex)
        eye = np.eye(self.n)
        for i, w in enumerate(omega):
            if self.n:
                out[i] = self.C @ np.linalg.solve(1j * w * eye - self.A, self.B) + self.D
            else:
                out[i] = self.D
        return out

    def subsystem(self, outputs, inputs) -> "StateSpace":
        outputs = list(outputs)
        inputs = list(inputs)
        return StateSpace(self.A, self.B[:, inputs], self.C[outputs, :],
                          self.D[np.ix_(outputs, inputs)])

    def __repr__(self):
        return f"StateSpace(n={self.n}, m={self.m}, p={self.p})"


@dataclass(frozen=True)
class SolverReport:
    residual_norm: float
    iterations: int
    tolerance_used: float

    def __post_init__(self):
        if not self.residual_norm >= 0:
            raise ValueError("residual_norm must be nonnegative")


def hurwitz_margin(A) -> float:
    A = np.asarray(A, dtype=float)
    return 1e-9 * (1.0 + np.linalg.norm(A, "fro"))


def is_hurwitz(A, eigenvalues=None) -> bool:
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return True
    ev = np.linalg.eigvals(A) if eigenvalues is None else eigenvalues
    return bool(np.max(ev.real) < -hurwitz_margin(A))


class LyapunovSolver:
    """Bartels-Stewart solver for ``A X + X A^T + Q = 0`` with a fixed ``A``.

    The real Schur factorization of ``A`` is computed once, so repeated
    solves with different right-hand sides only pay for the
    quasi-triangular Sylvester sweep.
    """

    def __init__(self, A, check_stability=True):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        self.A = A
        self.n = A.shape[0]
        if self.n == 0:
            self.T = self.U = A
            return
        self.T, self.U = linalg.schur(A, output="real")
        if check_stability:
            ev = linalg.eigvals(self.T)
            if not is_hurwitz(A, eigenvalues=ev):
                raise NotHurwitz(f"max real eigenvalue {np.max(ev.real):.3e} is not below "
                                 f"-{hurwitz_margin(A):.1e}")

    def solve(self, Q, tol=1e-8, report=False):
        Q = np.asarray(Q, dtype=float)
        if Q.shape != (self.n, self.n):
            raise DimensionMismatch(f"Q must be {self.n}x{self.n}, got {Q.shape}")
        if self.n == 0:
            X = np.zeros((0, 0))
            return (X, SolverReport(0.0, 0, tol)) if report else X
        F = self.U.T @ Q @ self.U
        # T Y + Y T^T = scale * (-F)
        Y, scale, info = lapack.dtrsyl(self.T, self.T, -F, trana="N", tranb="T", isgn=1)
        if info < 0:
            raise IllConditioned(f"dtrsyl argument error {info}")
        X = self.U @ (Y / scale) @ self.U.T
        X = 0.5 * (X + X.T)
        res = np.linalg.norm(self.A @ X + X @ self.A.T + Q, "fro")
        bound = tol * (1.0 + np.linalg.norm(Q, "fro"))
        if res > bound:
            raise IllConditioned(f"Lyapunov residual {res:.3e} exceeds {bound:.3e}")
        return (X, SolverReport(float(res), 1, tol)) if report else X


def solve_lyapunov(A, Q, tol=1e-8, report=False):
    """Solve ``A X + X A^T + Q = 0`` for Hurwitz ``A``.

    Parameters
    ----------
    A : (n, n) array_like
        Hurwitz matrix.
    Q : (n, n) array_like
        Symmetric right-hand side.
    tol : float
        Relative residual target, ``||AX + XA^T + Q||_F <= tol (1 + ||Q||_F)``.
    report : bool
        Also return a :class:`SolverReport`.

    Returns
    -------
    X : (n, n) ndarray
        Symmetric solution; positive semidefinite when ``Q`` is.
    """
    return LyapunovSolver(A).solve(Q, tol=tol, report=report)


def solve_lyapunov_kron(A, Q):
    """Vectorized direct solve of ``A X + X A^T + Q = 0``.

    Forms the ``n^2 x n^2`` operator ``I (x) A + A (x) I`` explicitly; only
    meant for small ``n`` as an independent check.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    eye = np.eye(n)
    op = np.kron(eye, A) + np.kron(A, eye)
    x = np.linalg.solve(op, -Q.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def solve_riccati(A, G, Q, tol=1e-8, newton=True, report=False):
    """Stabilizing solution of ``A^T X + X A - X G X + Q = 0``.

    ``G`` may be indefinite (H-infinity Riccati equations).  The stable
    invariant subspace of the Hamiltonian ``[[A, -G], [-Q, -A^T]]`` is
    extracted with an ordered real Schur decomposition.

    Raises
    ------
    NoStabilizingSolution
        The Hamiltonian has eigenvalues on the imaginary axis, the stable
        subspace is not a graph subspace, or the resulting closed loop
        ``A - G X`` is not Hurwitz.
    """
    A = np.asarray(A, dtype=float)
    G = np.asarray(G, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    if G.shape != (n, n) or Q.shape != (n, n):
        raise DimensionMismatch("A, G and Q must all be n x n")
    if n == 0:
        X = np.zeros((0, 0))
        return (X, SolverReport(0.0, 0, tol)) if report else X
    G = 0.5 * (G + G.T)
    Q = 0.5 * (Q + Q.T)
    H = np.block([[A, -G], [-Q, -A.T]])
    hnorm = np.linalg.norm(H, 1)
    axis_tol = 1e-10 * (1.0 + hnorm)
    T, Z, sdim = linalg.schur(H, output="real", sort=lambda re, im: re < -axis_tol)
    ev = linalg.eigvals(T)
    if np.any(np.abs(ev.real) <= axis_tol) or sdim != n:
        raise NoStabilizingSolution(
            f"Hamiltonian has {int(np.sum(np.abs(ev.real) <= axis_tol))} eigenvalues "
            f"on the imaginary axis (stable subspace dimension {sdim}, need {n})")
    U1 = Z[:n, :n]
    U2 = Z[n:, :n]
    if np.linalg.cond(U1) > 1e12:
        raise NoStabilizingSolution("stable invariant subspace is not a graph subspace")
    X = np.linalg.solve(U1.T, U2.T).T
    X = 0.5 * (X + X.T)

    def residual(X):
        return np.linalg.norm(A.T @ X + X @ A - X @ G @ X + Q, "fro")

    # relative to the size of the terms, so large ||X|| is not penalized
    xn = np.linalg.norm(X, "fro")
    bound = tol * (1.0 + np.linalg.norm(Q, "fro") + 2 * np.linalg.norm(A, "fro") * xn
                   + np.linalg.norm(G, "fro") * xn**2)
    res = residual(X)
    iterations = 1
    if res > bound and newton:
        # one Kleinman step: (A - GX)^T Xn + Xn (A - GX) + Q + X G X = 0
        Acl = A - G @ X
        try:
            Xn = solve_lyapunov(Acl.T, Q + X @ G @ X, tol=np.inf)
        except NotHurwitz:
            Xn = X
        if residual(Xn) < res:
            X, res = Xn, residual(Xn)
        iterations += 1
    Acl = A - G @ X
    if not is_hurwitz(Acl):
        raise NoStabilizingSolution("closed-loop matrix A - G X is not Hurwitz")
    if res > bound:
        raise NoStabilizingSolution(f"Riccati residual {res:.3e} exceeds {bound:.3e}")
    return (X, SolverReport(float(res), iterations, tol)) if report else X


def solve_care(A, B, Q, R_inv_scale=1.0, tol=1e-8, report=False):
    """Stabilizing solution of ``A^T X + X A - s X B B^T X + Q = 0``.

    ``s = R_inv_scale`` must be positive; with ``s = 1 - gamma**-2`` this is
    the H-infinity Riccati equation of a plant whose disturbance and control
    input matrices coincide.
    """
    if not R_inv_scale > 0:
        raise ValueError("R_inv_scale must be positive")
    A = np.asarray(A, dtype=float)
    B = _as_matrix(B, rows=A.shape[0], name="B")
    return solve_riccati(A, R_inv_scale * (B @ B.T), Q, tol=tol, report=report)


def h2_norm(sys: StateSpace) -> float:
    """H2 norm ``sqrt(trace(C Wc C^T))`` with ``A Wc + Wc A^T + B B^T = 0``."""
    if np.any(sys.D != 0):
        raise NonzeroFeedthrough("H2 norm is infinite for a nonzero feedthrough D")
    if sys.n == 0:
        return 0.0
    Wc = solve_lyapunov(sys.A, sys.B @ sys.B.T)
    return float(np.sqrt(max(np.trace(sys.C @ Wc @ sys.C.T), 0.0)))


def _sigma_max(G) -> float:
    if G.size == 0:
        return 0.0
    return float(np.linalg.norm(G, 2))


def _frequency_grid(eigenvalues, points=64):
    mags = np.abs(eigenvalues[np.abs(eigenvalues) > 0])
    if mags.size:
        lo, hi = mags.min() / 10.0, mags.max() * 10.0
    else:
        lo, hi = 1e-2, 1e2
    peaks = np.abs(eigenvalues.imag)
    return np.unique(np.concatenate([[0.0], np.geomspace(lo, hi, points), peaks]))


class _HinfProblem:
    """Bounded-real Hamiltonian test for one system."""

    def __init__(self, sys: StateSpace):
        self.sys = sys
        self.sigma_d = _sigma_max(sys.D)
        self._schur = None

    def sigma_at(self, omegas):
        return np.array([_sigma_max(G) for G in self.sys.freqresp(omegas)])

    def imaginary_frequencies(self, gamma):
        """Frequencies of the Hamiltonian's imaginary-axis eigenvalues at ``gamma``."""
        A, B, C, D = self.sys.A, self.sys.B, self.sys.C, self.sys.D
        R = gamma**2 * np.eye(self.sys.m) - D.T @ D
        Rinv_DtC = np.linalg.solve(R, D.T @ C)
        Rinv_Bt = np.linalg.solve(R, B.T)
        Ah = A + B @ Rinv_DtC
        H = np.block([[Ah, B @ Rinv_Bt],
                      [-(C.T @ C + C.T @ D @ Rinv_DtC), -Ah.T]])
        ev = linalg.eigvals(H)
        near = np.abs(ev.real) <= 1e-6 * np.maximum(1.0, np.abs(ev))
        return np.unique(np.abs(ev[near].imag))


def hinf_norm(sys: StateSpace, tol=1e-6, lower_bound=None, maxiter=80,
              check_stability=True) -> float:
    """H-infinity norm of a stable system.

    Each probe ``gamma`` is classified by the eigenvalues of the
    bounded-real Hamiltonian: ``gamma`` is an upper bound exactly when none
    of them is purely imaginary.  Imaginary eigenvalues ``j*w`` found at an
    infeasible probe are confirmed by evaluating ``sigma_max(G(jw))``, and
    the largest such value (also sampled at midpoints between consecutive
    crossings) becomes the new lower end of the bracket, so the bracket
    typically closes in a handful of probes.  When a probe makes no
    progress the routine falls back to plain bisection of
    ``[lower, upper]``.

    Parameters
    ----------
    sys : StateSpace
    tol : float
        Relative accuracy of the returned value.
    lower_bound : float, optional
        A known lower bound (for example a frequency-grid estimate).
    check_stability : bool
        Skip the eigenvalue check when the caller already knows ``A`` is
        Hurwitz (only honoured together with ``lower_bound``).
    """
    if sys.n == 0:
        return _sigma_max(sys.D)
    ev = None
    if check_stability or lower_bound is None:
        ev = np.linalg.eigvals(sys.A)
        if not is_hurwitz(sys.A, eigenvalues=ev):
            raise NotHurwitz(f"max real eigenvalue {np.max(ev.real):.3e}")
    prob = _HinfProblem(sys)
    if lower_bound is None:
        lower_bound = float(np.max(prob.sigma_at(_frequency_grid(ev))))
    lo = max(prob.sigma_d, lower_bound)
    if lo == 0.0:
        if not np.any(sys.B) or not np.any(sys.C):
            return 0.0
        lo = np.finfo(float).tiny ** 0.5
    hi = None
    accept = 1.0 - 0.1 * tol
    for _ in range(maxiter):
        if hi is not None and hi <= lo * (1 + 2 * tol):
            return 0.5 * (lo + hi)
        gamma = lo * (1 + 2 * tol)
        if hi is not None:
            gamma = min(gamma, 0.5 * (lo + hi))
        omegas = prob.imaginary_frequencies(gamma)
        if omegas.size:
            mids = 0.5 * (omegas[1:] + omegas[:-1])
            sig = prob.sigma_at(np.concatenate([omegas, mids]))
            peak = float(sig.max())
        else:
            peak = 0.0
        if peak >= gamma * accept:
            lo = max(lo, peak, gamma * accept)
            continue
        # no confirmed crossing: gamma is an upper bound
        if gamma == lo * (1 + 2 * tol):
            return lo * (1 + tol)
        hi = gamma
    if hi is None:
        hi = _upper_bracket(prob, lo)
    # plain bisection on what remains
    while hi > lo * (1 + 2 * tol):
        gamma = 0.5 * (lo + hi)
        omegas = prob.imaginary_frequencies(gamma)
        if omegas.size and prob.sigma_at(omegas).max() >= gamma * accept:
            lo = gamma
        else:
            hi = gamma
    return 0.5 * (lo + hi)


def _upper_bracket(prob, lo, doublings=60):
    gamma = 2.0 * lo
    for _ in range(doublings):
        omegas = prob.imaginary_frequencies(gamma)
        if not omegas.size or prob.sigma_at(omegas).max() < gamma:
            return gamma
        gamma *= 2.0
    raise BracketFailure(f"no feasible upper bound found below {gamma:.3e}")


def controllability_rank(A, B, tol=1e-10):
    """Rank test of ``(A, B)`` with a PBH cross-check.

    Returns ``(is_controllable, rank)`` where ``rank`` is the numerical rank
    of ``[B, AB, ..., A^{n-1} B]`` at threshold
    ``tol * sigma_max * sqrt(n m)``.  The Popov-Belevitch-Hautus test
    (``rank [A - lambda I, B] = n`` at every eigenvalue) is evaluated too;
    disagreement between the two is reported as a warning, and the PBH
    verdict wins since the Krylov matrix loses rank numerically long before
    the pair stops being controllable.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B = _as_matrix(B, rows=n, name="B")
    m = B.shape[1]
    if n == 0:
        return True, 0
    # column-normalize each Krylov block to keep the scales comparable
    blocks = []
    blk = B.copy()
    for _ in range(n):
        blocks.append(blk)
        blk = A @ blk
        s = np.linalg.norm(blk)
        if s > 0:
            blk = blk / s
    K = np.hstack(blocks)
    sv = np.linalg.svd(K, compute_uv=False)
    thresh = tol * sv[0] * np.sqrt(n * m) if sv.size and sv[0] > 0 else 0.0
    rank = int(np.sum(sv > thresh)) if sv.size and sv[0] > 0 else 0

    pbh = True
    scale = max(np.linalg.norm(A, 2), np.linalg.norm(B, 2), 1.0)
    for lam in np.unique(np.round(np.linalg.eigvals(A), 12)):
        M = np.hstack([A - lam * np.eye(n), B])
        s = np.linalg.svd(M, compute_uv=False)
        if s[n - 1] <= 1e-8 * scale:
            pbh = False
            break
    krylov = rank == n
    if pbh != krylov:
        warnings.warn(f"controllability tests disagree (Krylov rank {rank}, PBH "
                      f"{'full' if pbh else 'deficient'})", RuntimeWarning, stacklevel=2)
    return pbh, rank
