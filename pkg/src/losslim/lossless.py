"""Lossless systems: storage certificates and fundamental H2/H-infinity limits.

A realization ``(A, B, C, D)`` is lossless when a symmetric positive
definite ``P`` satisfies ``PA + A^T P = 0``, ``PB = C^T`` and
``D + D^T = 0``.  For such systems the optimal H2 level over all causal
output-feedback controllers is ``sqrt(2 tr(CB))`` and, when ``D = 0``, the
optimal H-infinity level is ``sqrt(2)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import (
    DimensionMismatch,
    NegativeTrace,
    NoStabilizingSolution,
    NonzeroFeedthrough,
    NotLossless,
    NotPositiveDefinite,
    NotUnique,
    SkewFeedthroughViolated,
)
from .numlin import StateSpace, solve_care

log = logging.getLogger(__name__)

SQRT2 = float(np.sqrt(2.0))

# above this many symmetric unknowns the stacked least-squares system gets
# too large to factor densely and the Riccati route is used instead
_STACKED_MAX_UNKNOWNS = 2500


@dataclass(frozen=True, eq=False)
class LosslessCertificate:
    P: np.ndarray
    residual_eq_A: float
    residual_eq_B: float
    min_eigenvalue: float

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        if not self.min_eigenvalue > 0:
            raise NotPositiveDefinite(f"certificate has min eigenvalue {self.min_eigenvalue:.3e}")


@dataclass(frozen=True)
class FundamentalLimits:
    """``gamma_hinf`` is ``None`` when the system has a nonzero feedthrough."""

    gamma_h2: float
    gamma_hinf: float | None

    @property
    def hinf_requires_zero_d(self) -> bool:
        return self.gamma_hinf is None


def certificate_residuals(sys: StateSpace, P):
    P = np.asarray(P, dtype=float)
    if P.shape != (sys.n, sys.n):
        raise DimensionMismatch(f"P must be {sys.n}x{sys.n}, got {P.shape}")
    res_a = float(np.linalg.norm(P @ sys.A + sys.A.T @ P, "fro"))
    res_b = float(np.linalg.norm(P @ sys.B - sys.C.T, "fro"))
    res_d = float(np.linalg.norm(sys.D + sys.D.T, "fro"))
    return res_a, res_b, res_d


def _check_skew_feedthrough(sys, tol):
    res_d = np.linalg.norm(sys.D + sys.D.T, "fro")
    if res_d > tol * (1.0 + np.linalg.norm(sys.D, "fro")):
        raise SkewFeedthroughViolated(f"||D + D^T||_F = {res_d:.3e}")


def _sym_basis_index(n, order):
    """Enumerate the upper-triangular positions of a symmetric n x n matrix."""
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    if order == "col":
        pairs = sorted(pairs, key=lambda ij: (ij[1], ij[0]))
    elif order == "reverse":
        pairs = pairs[::-1]
    elif order != "row":
        raise ValueError(f"unknown ordering {order!r}")
    return pairs


def _stacked_operator(sys, pairs):
    """Matrix of ``p -> [vec(PA + A^T P); vec(PB)]`` on symmetric ``P``."""
    n, m = sys.n, sys.m
    A, B = sys.A, sys.B
    cols = []
    for i, j in pairs:
        E = np.zeros((n, n))
        E[i, j] = E[j, i] = 1.0
        cols.append(np.concatenate([(E @ A + A.T @ E).ravel(), (E @ B).ravel()]))
    op = np.array(cols).T
    rhs = np.concatenate([np.zeros(n * n), sys.C.T.ravel()])
    return op, rhs


def _certificate_stacked(sys, tol, order):
    pairs = _sym_basis_index(sys.n, order)
    op, rhs = _stacked_operator(sys, pairs)
    Q, R, piv = linalg.qr(op, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    thresh = tol * np.sqrt(op.shape[0]) * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > thresh))
    coef = np.zeros(len(pairs))
    if rank:
        y = linalg.solve_triangular(R[:rank, :rank], (Q.T @ rhs)[:rank])
        coef[piv[:rank]] = y
    resid = np.linalg.norm(op @ coef - rhs)
    if resid > tol * np.sqrt(op.shape[0]) * (1.0 + np.linalg.norm(rhs)):
        raise NotLossless(f"no P satisfies PA + A^T P = 0, PB = C^T "
                          f"(least-squares residual {resid:.3e})")
    if rank < len(pairs):
        raise NotUnique(f"certificate equations have a {len(pairs) - rank}-dimensional "
                        f"nullspace; the realization is not minimal")
    P = np.zeros((sys.n, sys.n))
    for (i, j), c in zip(pairs, coef):
        P[i, j] = P[j, i] = c
    return P


def _certificate_riccati(sys):
    # the unique stabilizing solution of A^T X + XA - XBB^T X + C^T C = 0
    # coincides with the certificate whenever one exists
    try:
        return solve_care(sys.A, sys.B, sys.C.T @ sys.C)
    except NoStabilizingSolution as exc:
        raise NotLossless(f"Riccati route found no candidate certificate: {exc}") from exc


def find_certificate(sys: StateSpace, tol=1e-9, order="row", method="auto") -> LosslessCertificate:
    """Find the storage certificate ``P`` of a lossless realization.

    Parameters
    ----------
    sys : StateSpace
    tol : float
        Relative tolerance for the skew-feedthrough check, the
        least-squares residual and the rank decision.
    order : {"row", "col", "reverse"}
        Enumeration order of the symmetric unknowns.  The answer does not
        depend on it; it exists so uniqueness can be checked.
    method : {"auto", "stacked", "riccati"}
        ``"stacked"`` solves the joint linear system in the ``n(n+1)/2``
        unknowns by pivoted QR.  ``"riccati"`` takes the stabilizing
        solution of ``A^T X + XA - XBB^T X + C^T C = 0`` as the candidate;
        it costs ``O(n^3)`` instead of ``O(n^6)`` and is used by ``"auto"``
        for large systems.  Both verify the candidate afterwards.

    Raises
    ------
    SkewFeedthroughViolated, NotLossless, NotUnique, NotPositiveDefinite
    """
    _check_skew_feedthrough(sys, tol)
    n = sys.n
    if n == 0:
        return LosslessCertificate(np.zeros((0, 0)), 0.0, 0.0, np.inf)
    if method == "auto":
        method = "stacked" if n * (n + 1) // 2 <= _STACKED_MAX_UNKNOWNS else "riccati"
    if method == "stacked":
        P = _certificate_stacked(sys, tol, order)
    elif method == "riccati":
        P = _certificate_riccati(sys)
    else:
        raise ValueError(f"unknown method {method!r}")
    P = 0.5 * (P + P.T)
    res_a, res_b, _ = certificate_residuals(sys, P)
    if method == "riccati":
        scale_a = np.linalg.norm(sys.A, "fro") * np.linalg.norm(P, "fro")
        if res_a > 1e3 * tol * (1 + scale_a) or res_b > 1e3 * tol * (1 + np.linalg.norm(sys.C)):
            raise NotLossless(f"candidate certificate residuals {res_a:.3e}, {res_b:.3e}")
    lam_min = float(np.linalg.eigvalsh(P)[0])
    if lam_min <= tol * max(1.0, np.linalg.norm(P, 2)):
        raise NotPositiveDefinite(f"certificate solution has min eigenvalue {lam_min:.3e}")
    return LosslessCertificate(P, res_a, res_b, lam_min)


def verify_certificate(sys: StateSpace, P, tol=1e-9):
    """Check the three losslessness conditions and positive definiteness.

    Returns ``(ok, residuals)`` where ``residuals`` maps ``"A"``, ``"B"``,
    ``"D"`` to the Frobenius residuals and ``"min_eigenvalue"`` to the
    smallest eigenvalue of the symmetric part of ``P``.
    """
    res_a, res_b, res_d = certificate_residuals(sys, P)
    P = np.asarray(P, dtype=float)
    lam_min = float(np.linalg.eigvalsh(0.5 * (P + P.T))[0]) if sys.n else np.inf
    sym = float(np.linalg.norm(P - P.T, "fro"))
    residuals = {"A": res_a, "B": res_b, "D": res_d, "symmetry": sym,
                 "min_eigenvalue": lam_min}
    ok = max(res_a, res_b, res_d, sym) <= tol and lam_min > tol
    return ok, residuals


def h2_limit(sys: StateSpace, certificate: LosslessCertificate | None = None, tol=1e-9) -> float:
    """Optimal closed-loop H2 level ``sqrt(2 tr(CB))`` of a lossless plant."""
    if certificate is None:
        certificate = find_certificate(sys, tol=tol)
    trace = float(np.trace(sys.C @ sys.B))
    if log.isEnabledFor(logging.DEBUG):
        alt = float(np.trace(sys.B.T @ certificate.P @ sys.B))
        log.debug("tr(CB) = %.17g, tr(B^T P B) = %.17g", trace, alt)
    scale = np.linalg.norm(sys.C) * np.linalg.norm(sys.B)
    if trace < -tol * (1.0 + scale):
        raise NegativeTrace(f"tr(CB) = {trace:.3e} < 0")
    return float(np.sqrt(2.0 * max(trace, 0.0)))


def hinf_limit(sys: StateSpace, certificate: LosslessCertificate | None = None, tol=1e-9) -> float:
    """Optimal closed-loop H-infinity level of a lossless plant with ``D = 0``."""
    if np.any(sys.D != 0):
        raise NonzeroFeedthrough("the H-infinity limit is only established for D = 0")
    if certificate is None:
        find_certificate(sys, tol=tol)
    return SQRT2


def fundamental_limits(sys: StateSpace, certificate: LosslessCertificate | None = None,
                       tol=1e-9) -> FundamentalLimits:
    if certificate is None:
        certificate = find_certificate(sys, tol=tol)
    gamma_h2 = h2_limit(sys, certificate, tol=tol)
    gamma_hinf = SQRT2 if not np.any(sys.D != 0) else None
    return FundamentalLimits(gamma_h2, gamma_hinf)
