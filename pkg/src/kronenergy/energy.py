"""Polynomial past/future energy functions of polynomial-drift systems.

For ``dx/dt = A x + sum_p F_p x^(p) + B u``, ``y = C x`` the energies are
``E(x) = 1/2 sum_{k=2}^d v_k^T x^(k)``.  ``v_2`` comes from a Riccati
equation; every higher coefficient solves

    L_k(M)^T v_k = - sum_{i+p=k+1} L_i(F_p)^T v_i  + s * sum_{i+j=k+2} i j vec(V_i^T B B^T V_j)

with ``M = A + B B^T V_2``, ``s = -1/4`` (past) or ``M = A - eta B B^T W_2``,
``s = +eta/4`` (future), followed by symmetrization.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import KronEnergyError
from .kronpoly import _CHUNK, kron_power, lyap_mult_t, poly_eval, poly_grad, symmetrize
from .kway import schur_factor, solve_kway
from .riccati import RiccatiProblem, check_eta, solve_future_riccati, solve_past_riccati

__all__ = [
    "PolyDynamics",
    "EnergyPoly",
    "closed_loop_matrix",
    "assemble_rhs",
    "compute_past_energy",
    "compute_future_energy",
    "compute_energy",
    "hjb_residual",
]

log = logging.getLogger(__name__)


@dataclass
class PolyDynamics:
    """``dx/dt = A x + sum_p F_p x^(p) + B u``, ``y = C x``.

    ``drift`` maps the degree ``p >= 2`` to ``F_p`` of shape ``(n, n**p)``:
    a dense array, a scipy sparse matrix or an operator supporting
    ``F @ z`` and ``W @ F``.  Missing degrees are zero.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    drift: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {self.A.shape}")
        self.B = np.asarray(self.B, dtype=float).reshape(n, -1)
        self.C = np.asarray(self.C, dtype=float)
        self.C = self.C.reshape(-1, n) if self.C.size else np.zeros((0, n))
        drift = {}
        for p, F in dict(self.drift).items():
            p = int(p)
            if p < 2:
                raise ValueError(f"drift degree must be >= 2, got {p}")
            if isinstance(F, (list, tuple)):
                F = np.asarray(F, dtype=float)
            if tuple(F.shape) != (n, n**p):
                raise ValueError(f"F_{p} must have shape {(n, n**p)}, got {tuple(F.shape)}")
            drift[p] = F
        self.drift = dict(sorted(drift.items()))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p_out(self):
        return self.C.shape[0]

    @property
    def drift_degree(self):
        return max(self.drift, default=1)

    def f(self, x):
        """Drift ``A x + sum_p F_p x^(p)``."""
        x = np.asarray(x, dtype=float).ravel()
        if x.size != self.n:
            raise ValueError(f"state has length {x.size}, expected {self.n}")
        out = self.A @ x
        for p, F in self.drift.items():
            out = out + np.asarray(F @ kron_power(x, p)).ravel()
        return out


@dataclass
class EnergyPoly:
    """Degree-``d`` energy polynomial ``1/2 sum_k v_k^T x^(k)``."""

    kind: str
    eta: float
    n: int
    coeffs: dict
    vtb: dict = field(default_factory=dict, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("past", "future"):
            raise ValueError("kind must be 'past' or 'future'")
        self.coeffs = {int(k): np.asarray(v, dtype=float).ravel() for k, v in sorted(self.coeffs.items())}
        for k, v in self.coeffs.items():
            if k < 2 or v.size != self.n**k:
                raise ValueError(f"degree-{k} coefficient must have length {self.n**k}")

    @property
    def degree(self):
        return max(self.coeffs)

    @property
    def V2(self):
        return self.coeffs[2].reshape(self.n, self.n)

    def truncated(self, d):
        return EnergyPoly(self.kind, self.eta, self.n, {k: v for k, v in self.coeffs.items() if k <= d})

    def __call__(self, x):
        return poly_eval(self, x)

    def gradient(self, x):
        return poly_grad(self, x)


def closed_loop_matrix(sys, X2, kind, eta=None):
    """``A + B B^T V_2`` (past) or ``A - eta B B^T W_2`` (future)."""
    BBt = sys.B @ sys.B.T
    if kind == "past":
        return sys.A + BBt @ X2
    if kind == "future":
        if eta is None:
            raise ValueError("the future closed loop needs eta")
        return sys.A - eta * BBt @ X2
    raise ValueError("kind must be 'past' or 'future'")


def assemble_rhs(sys, coeffs, k, kind, eta, vtb=None, out=None):
    """Right-hand side of the degree-``k`` linear system.

    ``coeffs`` holds the symmetric coefficients of degrees ``2..k-1``;
    ``vtb`` optionally caches ``V_i^T B`` (``n^{i-1} x m``) and is filled in
    for any degree it lacks.
    """
    n = sys.n
    if out is None:
        out = np.zeros(n**k)
    if vtb is None:
        vtb = {}
    for p, F in sys.drift.items():
        i = k + 1 - p
        if i >= 2:
            lyap_mult_t(F, coeffs[i], order=i, out=out, alpha=-1.0)
    scale = -0.25 if kind == "past" else 0.25 * eta
    for i in range(3, k):
        j = k + 2 - i
        if j < 3:
            continue
        for d in (i, j):
            if d not in vtb:
                vtb[d] = coeffs[d].reshape(-1, n) @ sys.B
        left, right = vtb[i], vtb[j]
        Q = out.reshape(left.shape[0], right.shape[0])
        rows = max(1, _CHUNK // max(right.shape[0], 1))
        for r0 in range(0, left.shape[0], rows):
            Q[r0:r0 + rows] += (scale * i * j) * (left[r0:r0 + rows] @ right.T)
    return out


def compute_energy(sys, eta, d, kind, schur_output="real", keep_products=False):
    """Energy coefficients of degrees ``2..d`` (see :func:`compute_past_energy`)."""
    eta = check_eta(eta)
    if d < 2:
        raise ValueError("degree must be at least 2")
    n = sys.n
    timings = {}
    t0 = time.perf_counter()
    prob = RiccatiProblem(sys.A, sys.B, sys.C, eta, kind)
    ric = solve_past_riccati(prob) if kind == "past" else solve_future_riccati(prob)
    timings[2] = time.perf_counter() - t0
    log.info("%s energy degree 2: Riccati residual %.2e (%.3fs)", kind, ric.residual, timings[2])
    coeffs = {2: ric.X.ravel().copy()}
    vtb = {}
    kres = {}
    if d >= 3:
        t0 = time.perf_counter()
        cache = schur_factor(ric.closed_loop, output=schur_output)
        timings["schur"] = time.perf_counter() - t0
        for k in range(3, d + 1):
            t0 = time.perf_counter()
            try:
                rhs = assemble_rhs(sys, coeffs, k, kind, eta, vtb=vtb)
                v, kres[k] = solve_kway(cache, k, rhs, overwrite_b=True, full_output=True)
            except KronEnergyError as exc:
                raise type(exc)(f"{kind} energy, degree {k}: {exc}") from exc
            del rhs
            symmetrize(v, n, k, out=v)
            coeffs[k] = v
            if k < d:
                vtb[k] = v.reshape(-1, n) @ sys.B
            timings[k] = time.perf_counter() - t0
            log.info("%s energy degree %d: k-way residual %.2e (%.3fs)", kind, k, kres[k], timings[k])
    info = {"riccati_residual": ric.residual, "kway_residuals": kres, "timings": timings}
    return EnergyPoly(kind, eta, n, coeffs, vtb=vtb if keep_products else {}, info=info)


def compute_past_energy(sys, eta, d, **kwargs):
    """Past energy coefficients ``v_2, ..., v_d``.

    Parameters
    ----------
    sys : PolyDynamics
    eta : float
        ``1 - gamma^-2``; ``eta <= 1`` and ``eta != 0``.
    d : int
        Degree of the approximation (``d = 2`` returns the Riccati solution).
    schur_output : {'real', 'complex'}
        Schur form used by the k-way solver.
    keep_products : bool
        Keep the cached ``V_i^T B`` products on the result.
    """
    return compute_energy(sys, eta, d, "past", **kwargs)


def compute_future_energy(sys, eta, d, **kwargs):
    """Future energy coefficients ``w_2, ..., w_d``; same arguments as the past variant."""
    return compute_energy(sys, eta, d, "future", **kwargs)


def hjb_residual(sys, E, x):
    """Left-hand side of the past or future HJB equation at ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != sys.n:
        raise ValueError(f"state has length {x.size}, expected {sys.n}")
    g = poly_grad(E, x)
    drift = float(g @ sys.f(x))
    btg = sys.B.T @ g
    y = sys.C @ x
    if E.kind == "past":
        return drift + 0.5 * float(btg @ btg) - 0.5 * E.eta * float(y @ y)
    return drift - 0.5 * E.eta * float(btg @ btg) + 0.5 * float(y @ y)
