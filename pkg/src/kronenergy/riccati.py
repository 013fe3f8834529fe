"""H-infinity algebraic Riccati equations for the quadratic energy coefficients.

Both equations are brought to the form

    F^T X + X F - X G X + Q = 0,   F - G X Hurwitz,

and solved through the stable invariant subspace of the Hamiltonian
``[[F, -G], [-Q, -F^T]]``:

* past:   ``F = -A``, ``G = B B^T``,      ``Q = eta C^T C``  (``X = V_2``)
* future: ``F = A``,  ``G = eta B B^T``,  ``Q = C^T C``      (``X = W_2``)

The past substitution turns the requirement "``-(A + B B^T V_2)`` Hurwitz"
into the usual stabilizing condition.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import RiccatiError

__all__ = [
    "RiccatiProblem",
    "RiccatiSolution",
    "check_eta",
    "solve_past_riccati",
    "solve_future_riccati",
    "riccati_residual",
]

log = logging.getLogger(__name__)

TOL_RESIDUAL = 1e-10


def check_eta(eta):
    """Validate ``eta = 1 - gamma^-2``: ``eta <= 1`` and ``eta != 0``."""
    eta = float(eta)
    if not np.isfinite(eta) or eta > 1.0:
        raise ValueError(f"eta must satisfy eta <= 1 (gamma > 0), got {eta}")
    if eta == 0.0:
        raise ValueError("eta = 0 corresponds to gamma = 1, which is excluded")
    return eta


@dataclass
class RiccatiProblem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    eta: float
    kind: str = "future"

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.asarray(self.B, dtype=float).reshape(self.A.shape[0], -1)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, self.A.shape[0])
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        self.eta = check_eta(self.eta)
        if self.kind not in ("past", "future"):
            raise ValueError("kind must be 'past' or 'future'")


@dataclass
class RiccatiSolution:
    X: np.ndarray
    residual: float
    closed_loop: np.ndarray
    kind: str
    psd: bool = True


def riccati_residual(A, B, C, eta, X, kind):
    """Relative Frobenius residual of the past or future Riccati equation.

    The scale is ``||A|| ||X|| + |eta| ||C||^2 + ||B||^2 ||X||^2`` (Frobenius norms).
    """
    BBt = B @ B.T
    CtC = C.T @ C
    if kind == "past":
        R = A.T @ X + X @ A - eta * CtC + X @ BBt @ X
    else:
        R = A.T @ X + X @ A + CtC - eta * X @ BBt @ X
    nX = np.linalg.norm(X)
    scale = np.linalg.norm(A) * nX + abs(eta) * np.linalg.norm(C) ** 2 + np.linalg.norm(B) ** 2 * nX**2
    return float(np.linalg.norm(R) / scale) if scale > 0 else float(np.linalg.norm(R))


def _care_hamiltonian(F, G, Q):
    n = F.shape[0]
    H = np.block([[F, -G], [-Q, -F.T]])
    hnorm = max(np.linalg.norm(H, 1), 1.0)
    try:
        T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    except np.linalg.LinAlgError as exc:
        raise RiccatiError(f"Hamiltonian Schur decomposition failed: {exc}") from exc
    lam = sla.eigvals(T)
    if np.abs(lam.real).min() <= 1e-13 * hnorm * n:
        raise RiccatiError("Hamiltonian has eigenvalues on the imaginary axis: "
                           "gamma too small / eta infeasible")
    if sdim != n:
        raise RiccatiError(f"stable invariant subspace has dimension {sdim}, expected {n}: "
                           "gamma too small / eta infeasible")
    U11, U21 = Z[:n, :n], Z[n:, :n]
    # ill-conditioned U11 is legitimate for weakly controllable systems (huge X);
    # the residual check downstream decides acceptance
    with np.errstate(all="ignore"):
        try:
            X = np.linalg.solve(U11.T, U21.T).T
        except np.linalg.LinAlgError as exc:
            raise RiccatiError("stable subspace is not a graph (no stabilizing solution): "
                               "gamma too small / eta infeasible") from exc
    if not np.all(np.isfinite(X)):
        raise RiccatiError("stable subspace is not a graph (no stabilizing solution): "
                           "gamma too small / eta infeasible")
    # spectrum of F - G X, read off the selected block instead of the formed
    # matrix, whose eigenvalues are unreliable when ||X|| is huge
    return 0.5 * (X + X.T), sla.eigvals(T[:n, :n])


def _newton_step(F, G, Q, X):
    # Kleinman step: (F - G X)^T X+ + X+ (F - G X) = -(Q + X G X)
    K = F - G @ X
    Xn = sla.solve_continuous_lyapunov(K.T, -(Q + X @ G @ X))
    return 0.5 * (Xn + Xn.T)


def _solve(F, G, Q, residual, newton):
    X, lam = _care_hamiltonian(F, G, Q)
    res = residual(X)
    for _ in range(newton):
        if res <= 1e-2 * TOL_RESIDUAL:
            break
        with np.errstate(all="ignore"):
            try:
                Xn = _newton_step(F, G, Q, X)
            except (np.linalg.LinAlgError, ValueError):
                break
            rn = residual(Xn)
        if not rn < res:
            break
        X, res = Xn, rn
    return X, res, lam


def _finish(prob, X, res, closed, lam, require_psd):
    n = X.shape[0]
    if res > TOL_RESIDUAL:
        raise RiccatiError(f"{prob.kind} Riccati residual {res:.2e} exceeds {TOL_RESIDUAL:.0e}")
    if n and lam.real.max() >= -1e-12 * max(np.abs(lam).max(), np.finfo(float).tiny):
        raise RiccatiError(f"{prob.kind} closed loop is not stable: gamma too small / eta infeasible")
    psd = True
    if prob.eta > 0 and n:
        ev = np.linalg.eigvalsh(X)
        psd = bool(ev.min() >= -1e-10 * max(np.abs(ev).max(), np.finfo(float).tiny))
        if not psd:
            msg = (f"{prob.kind} Riccati solution is not positive semidefinite "
                   f"(eigenvalues in [{ev.min():.2e}, {ev.max():.2e}]; X too ill-conditioned for double precision?)")
            if require_psd:
                raise RiccatiError(msg)
            log.warning(msg)
    log.debug("%s Riccati: n=%d relative residual %.2e", prob.kind, n, res)
    return RiccatiSolution(X=X, residual=res, closed_loop=closed, kind=prob.kind, psd=psd)


def solve_past_riccati(prob, newton=3, require_psd=True):
    """Solve ``A^T V + V A - eta C^T C + V B B^T V = 0`` with ``-(A + B B^T V)`` Hurwitz.

    ``newton`` bounds the number of optional Newton refinement steps taken
    when the Hamiltonian solution is not already at round-off level.  With
    ``require_psd=False`` an indefinite solution (for ``eta > 0``) is returned
    with ``psd=False`` and a warning instead of raising.
    """
    if prob.kind != "past":
        raise ValueError("solve_past_riccati needs a problem of kind 'past'")
    A, B, C, eta = prob.A, prob.B, prob.C, prob.eta
    F, G, Q = -A, B @ B.T, eta * (C.T @ C)
    X, res, lam = _solve(F, G, Q, lambda X: riccati_residual(A, B, C, eta, X, "past"), newton)
    closed = A + B @ B.T @ X
    return _finish(prob, X, res, closed, lam, require_psd)


def solve_future_riccati(prob, newton=3, require_psd=True):
    """Solve ``A^T W + W A + C^T C - eta W B B^T W = 0`` with ``A - eta B B^T W`` Hurwitz."""
    if prob.kind != "future":
        raise ValueError("solve_future_riccati needs a problem of kind 'future'")
    A, B, C, eta = prob.A, prob.B, prob.C, prob.eta
    F, G, Q = A, eta * (B @ B.T), C.T @ C
    X, res, lam = _solve(F, G, Q, lambda X: riccati_residual(A, B, C, eta, X, "future"), newton)
    closed = A - eta * B @ B.T @ X
    return _finish(prob, X, res, closed, lam, require_psd)
