"""Benchmark and synthetic systems.

``build_heat_fem`` discretizes the 1D reaction-diffusion equation

    z_t = z_xx + z_x + z/8 + z^3 + sum_j chi_j(x) u_j,   z(0) = z(ell) = 0,

with linear finite elements on a uniform mesh and returns the explicit
form ``x' = A x + F_3 x^(3) + B u``, ``y = C x``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .energy import PolyDynamics

__all__ = [
    "HeatModelConfig",
    "AssembledModel",
    "MassScaledTensor",
    "build_heat_fem",
    "build_scalar_cubic",
    "build_random_stable",
    "initial_condition",
]


class MassScaledTensor:
    """Lazy ``M^{-1} G`` for a symmetric positive definite tridiagonal ``M``.

    ``G`` is a sparse ``(n, n**p)`` matrix.  Supports ``F @ z`` (a vector or
    a matrix with ``n**p`` rows), ``W @ F`` for dense ``W`` with ``n`` columns
    and :meth:`toarray`.
    """

    __array_ufunc__ = None

    def __init__(self, diag, offdiag, G, lumped=False):
        self.diag = np.asarray(diag, dtype=float)
        self.offdiag = np.asarray(offdiag, dtype=float)
        self.G = sp.csr_array(G)
        self.lumped = bool(lumped)
        n = self.diag.size
        if self.G.shape[0] != n:
            raise ValueError("G and M sizes differ")
        if self.lumped:
            self._chol = None
        else:
            ab = np.zeros((2, n))
            ab[0, 1:] = self.offdiag
            ab[1] = self.diag
            self._chol = sla.cholesky_banded(ab)

    @property
    def shape(self):
        return self.G.shape

    def solve_mass(self, Y):
        """``M^{-1} Y``."""
        Y = np.asarray(Y, dtype=float)
        if self.lumped:
            return Y / (self.diag[:, None] if Y.ndim == 2 else self.diag)
        return sla.cho_solve_banded((self._chol, False), Y)

    def __matmul__(self, z):
        return self.solve_mass(np.asarray(self.G @ z))

    def __rmatmul__(self, W):
        W = np.asarray(W, dtype=float)
        # W M^{-1} = (M^{-1} W^T)^T since M is symmetric
        WM = self.solve_mass(W.T).T
        return np.asarray((self.G.T @ WM.T).T)

    def toarray(self):
        return self.solve_mass(self.G.toarray())


@dataclass(frozen=True)
class HeatModelConfig:
    N: int
    ell: float = 30.0
    m: int = 4
    p_out: int = 4
    reaction: float = 0.125
    cubic: float = 1.0
    convection: float = 1.0
    lumped: bool = False

    def __post_init__(self):
        if self.N < 2 or self.m < 1 or self.p_out < 1:
            raise ValueError("N must be >= 2 and m, p_out >= 1")
        if self.N % self.m or self.N % self.p_out:
            raise ValueError(f"N={self.N} must be a multiple of m={self.m} and p_out={self.p_out}")
        if not self.ell > 0:
            raise ValueError("ell must be positive")


@dataclass
class AssembledModel:
    sys: PolyDynamics
    x0: np.ndarray
    h: float
    config: HeatModelConfig
    mass: np.ndarray = None

    @property
    def n(self):
        return self.sys.n


def initial_condition(x, ell):
    return 5e-5 * x * (x - ell) * (x - ell / 2)


def _cubic_tensor(N, h):
    # exact element integrals of phi_a phi_i phi_j phi_k: h * alpha! beta! / 5!
    n = N - 1
    local = {}
    for code in range(16):
        idx = tuple((code >> s) & 1 for s in (3, 2, 1, 0))
        alpha = 4 - sum(idx)
        local[idx] = h * factorial(alpha) * factorial(4 - alpha) / factorial(5)
    rows, cols, vals = [], [], []
    for e in range(N):
        for (a, i, j, k), val in local.items():
            g = (e + a - 1, e + i - 1, e + j - 1, e + k - 1)
            if min(g) < 0 or max(g) >= n:
                continue
            rows.append(g[0])
            cols.append((g[1] * n + g[2]) * n + g[3])
            vals.append(val)
    G = sp.coo_array((vals, (rows, cols)), shape=(n, n**3))
    G.sum_duplicates()
    return G.tocsr()


def _indicator_integrals(N, h, parts):
    # integral of phi_a over each of `parts` equal subdomains aligned with nodes
    n = N - 1
    per = N // parts
    out = np.zeros((n, parts))
    for e in range(N):
        j = e // per
        for a in (e - 1, e):
            if 0 <= a < n:
                out[a, j] += h / 2
    return out


def build_heat_fem(cfg):
    """Assemble the finite-element heat model of dimension ``n = N - 1``."""
    N, ell = cfg.N, float(cfg.ell)
    n = N - 1
    h = ell / N
    if cfg.lumped:
        mdiag, moff = np.full(n, h), np.zeros(n - 1)
    else:
        mdiag, moff = np.full(n, 2 * h / 3), np.full(n - 1, h / 6)
    off = np.ones(n - 1)
    K = (np.diag(np.full(n, 2.0)) - np.diag(off, 1) - np.diag(off, -1)) / h
    Cv = 0.5 * (np.diag(off, 1) - np.diag(off, -1))
    M = np.diag(mdiag) + np.diag(moff, 1) + np.diag(moff, -1)
    G3 = cfg.cubic * _cubic_tensor(N, h)
    F3 = MassScaledTensor(mdiag, moff, G3, lumped=cfg.lumped)
    A = F3.solve_mass(-K + cfg.convection * Cv) + cfg.reaction * np.eye(n)
    B = F3.solve_mass(_indicator_integrals(N, h, cfg.m))
    C = _indicator_integrals(N, h, cfg.p_out).T
    drift = {3: F3} if cfg.cubic != 0 else {}
    sys = PolyDynamics(A=A, B=B, C=C, drift=drift)
    nodes = h * np.arange(1, N)
    return AssembledModel(sys=sys, x0=initial_condition(nodes, ell), h=h, config=cfg, mass=M)


def build_scalar_cubic(a, b, c, f3):
    """``x' = a x + f3 x^3 + b u``, ``y = c x``."""
    drift = {3: np.array([[float(f3)]])} if f3 != 0 else {}
    return PolyDynamics(A=[[a]], B=[[b]], C=[[c]], drift=drift)


def build_random_stable(n, m=1, p_out=1, ell_drift=3, seed=0):
    """Random system with Hurwitz ``A`` and dense ``F_p`` (``p = 2..ell_drift``).

    ``A`` is a scaled Gaussian matrix shifted so that its spectral abscissa is
    ``-1``; each ``F_p`` is Gaussian normalized to unit Frobenius norm.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    A -= (np.linalg.eigvals(A).real.max() + 1.0) * np.eye(n)
    drift = {}
    for p in range(2, ell_drift + 1):
        F = rng.standard_normal((n, n**p))
        drift[p] = F / np.linalg.norm(F)
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p_out, n))
    return PolyDynamics(A=A, B=B, C=C, drift=drift)
