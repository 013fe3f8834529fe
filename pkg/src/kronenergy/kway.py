"""Bartels-Stewart type solver for ``L_k(M)^T x = b``.

After one Schur factorization ``M = U T U^*`` the system becomes
``sum_j T^T x_j Y = U^T x_all b`` with a (block) lower-triangular operator in
every mode.  Sweeping the leading mode and recursing leaves ``n^{k-2}``
triangular Sylvester equations, for ``O(n^{k+1})`` work overall.

The default path keeps the real quasi-triangular Schur form so the full
``n^k`` buffer stays real and is overwritten in place.  A 2x2 block in a
leading mode couples two slices; it is diagonalized and the pair is obtained
from one complex slice solve, since the second is its conjugate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dtrsyl, ztrsyl

from .errors import AccuracyError, KronEnergyError, ResonanceError
from .kronpoly import lyap_mult_t, mode_multiply

__all__ = ["SchurCache", "schur_factor", "check_solvability", "solve_kway", "kway_residual"]

log = logging.getLogger(__name__)

TOL_RES = 1e-8


@dataclass(eq=False)
class SchurCache:
    """Schur factorization ``M = U T U^*`` of one closed-loop matrix.

    ``T`` is real quasi-triangular (``output='real'``) or complex triangular
    (``output='complex'``).  Immutable after construction apart from the
    lazily computed complex form of a real ``T``.
    """

    M: np.ndarray
    U: np.ndarray
    T: np.ndarray
    eigenvalues: np.ndarray
    output: str = "real"
    blocks: list = field(default_factory=list)
    _complex_T: tuple | None = field(default=None, repr=False)

    @property
    def n(self):
        return self.M.shape[0]

    @property
    def reconstruction_error(self):
        R = self.U @ self.T @ self.U.conj().T - self.M
        return np.linalg.norm(R) / max(np.linalg.norm(self.M), np.finfo(float).tiny)

    @property
    def has_complex_blocks(self):
        return any(s == 2 for _, s in self.blocks)

    def complex_form(self):
        """``(Tc, Z)`` with ``T = Z Tc Z^H`` and ``Tc`` upper triangular."""
        if self._complex_T is None:
            Tc, Z = sla.rsf2csf(self.T, np.eye(self.n))
            self._complex_T = (Tc, Z)
        return self._complex_T


def _diagonal_blocks(T):
    n = T.shape[0]
    blocks, i = [], 0
    while i < n:
        if i + 1 < n and T[i + 1, i] != 0.0:
            blocks.append((i, 2))
            i += 2
        else:
            blocks.append((i, 1))
            i += 1
    return blocks


def schur_factor(M, output="real"):
    """Schur-factorize a square matrix once for reuse across orders ``k``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("Schur factorization needs a square matrix")
    if not np.all(np.isfinite(M)):
        raise KronEnergyError("Schur factorization failed: matrix has non-finite entries")
    if output not in ("real", "complex"):
        raise ValueError("output must be 'real' or 'complex'")
    try:
        T, U = sla.schur(M, output=output)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise KronEnergyError(f"Schur factorization failed: {exc}") from exc
    if output == "real":
        blocks = _diagonal_blocks(T)
        eig = np.empty(M.shape[0], dtype=complex)
        for i, s in blocks:
            eig[i:i + s] = np.linalg.eigvals(T[i:i + s, i:i + s])
    else:
        blocks = [(i, 1) for i in range(M.shape[0])]
        eig = np.diag(T).copy()
    return SchurCache(M=M, U=U, T=T, eigenvalues=eig, output=output, blocks=blocks)


def check_solvability(cache, k):
    """True iff no sum of ``k`` eigenvalues (with repetition) is numerically zero."""
    lam = np.asarray(cache.eigenvalues)
    if lam.size == 0:
        return True
    if np.all(lam.real < 0) or np.all(lam.real > 0):
        return True
    tol = 1e-12 * k * np.abs(lam).max()
    if k == 1:
        return bool(np.abs(lam).min() > tol)
    partial = lam.copy()
    for _ in range(k - 2):
        partial = np.add.outer(partial, lam).ravel()
    # one leading eigenvalue at a time keeps memory at n^{k-1}
    for lead in lam:
        if np.abs(partial + lead).min() <= tol:
            return False
    return True


# --- triangular kernels ------------------------------------------------------
# All kernels overwrite X (shape (n,)*k) with the solution of
#     sum_j T^T x_j Y + shift * Y = X.


def _trsyl_real(T, X, shift):
    # (T^T + s) Y + Y T = C  <=>  T^T Y^T + Y^T (T + s) = C^T; C^T is F-contiguous
    B = T + shift * np.eye(T.shape[0])
    Yt, scale, info = dtrsyl(T, B, X.T, trana="T", tranb="N", overwrite_c=1)
    if info < 0:
        raise KronEnergyError(f"dtrsyl argument error {info}")
    if info == 1:
        raise ResonanceError("triangular Sylvester solve hit a (near) singular pivot")
    X[...] = (Yt / scale).T if scale != 1.0 else Yt.T


def _trsyl_complex(Tc, X, shift):
    B = Tc + shift * np.eye(Tc.shape[0])
    Yt, scale, info = ztrsyl(np.conj(Tc), B, X.T, trana="C", tranb="N", overwrite_c=1)
    if info < 0:
        raise KronEnergyError(f"ztrsyl argument error {info}")
    if info == 1:
        raise ResonanceError("triangular Sylvester solve hit a (near) singular pivot")
    X[...] = (Yt / scale).T if scale != 1.0 else Yt.T


def _solve_complex(Tc, X, shift):
    n = Tc.shape[0]
    k = X.ndim
    if k == 1:
        X[...] = sla.solve_triangular(Tc + shift * np.eye(n), X, trans=1, lower=False)
        return
    if k == 2:
        _trsyl_complex(Tc, X, shift)
        return
    X2 = X.reshape(n, -1)
    for i in range(n):
        if i:
            X2[i] -= Tc[:i, i] @ X2[:i]
        _solve_complex(Tc, X[i], shift + Tc[i, i])


def _solve_pair_complex(cache, R, shift):
    """Complex slice solve in the real-Schur basis (used for 2x2 block pairs)."""
    Tc, Z = cache.complex_form()
    Y = np.array(R, dtype=complex)
    for ax in range(Y.ndim):
        mode_multiply(Y, Z.T, ax)
    _solve_complex(Tc, Y, shift)
    Zb = np.conj(Z)
    for ax in range(Y.ndim):
        mode_multiply(Y, Zb, ax)
    return Y


def _apply_shifted(T, Y, shift):
    """``sum_j T^T x_j Y + shift * Y`` (matrix-free)."""
    out = lyap_mult_t(T, Y.ravel(), order=Y.ndim) if Y.ndim else np.zeros(1)
    out += shift * Y.ravel()
    return out.reshape(Y.shape)


def _solve_real(cache, X, shift, track=False):
    """In-place solve on the real quasi-triangular form; returns residual**2 if tracked."""
    T = cache.T
    n = T.shape[0]
    k = X.ndim
    if k <= 2:
        rhs = X.copy() if track else None
        if k == 1:
            Xm = X.reshape(n, 1)
            Yt, scale, info = dtrsyl(T + shift * np.eye(n), np.zeros((1, 1)), Xm.copy(order="F"),
                                     trana="T", tranb="N")
            if info == 1:
                raise ResonanceError("triangular solve hit a (near) singular pivot")
            X[...] = Yt[:, 0] / scale
        else:
            _trsyl_real(T, X, shift)
        if track:
            return float(np.sum((_apply_shifted(T, X, shift) - rhs) ** 2))
        return 0.0

    res2 = 0.0
    X2 = X.reshape(n, -1)
    for i, s in cache.blocks:
        if i:
            X2[i:i + s] -= T[:i, i:i + s].T @ X2[:i]
        rhs = X2[i:i + s].copy() if track else None
        if s == 1:
            _solve_real(cache, X[i], shift + T[i, i])
        else:
            S2 = T[i:i + 2, i:i + 2].T
            lam, P = np.linalg.eig(S2)
            j = int(np.argmax(lam.imag))
            p = P[:, j]
            Pfull = np.column_stack([p, np.conj(p)])
            q = np.linalg.inv(Pfull)[0]
            R1 = q[0] * X[i] + q[1] * X[i + 1]
            Z1 = _solve_pair_complex(cache, R1, shift + lam[j])
            X[i] = 2.0 * np.real(p[0] * Z1)
            X[i + 1] = 2.0 * np.real(p[1] * Z1)
        if track:
            for r in range(s):
                row = i + r
                got = _apply_shifted(T, X[row], shift)
                for l in range(i, i + s):
                    got += T[l, row] * X[l]
                res2 += float(np.sum((got.ravel() - rhs[r]) ** 2))
    return res2


def solve_kway(cache, k, b, tol_res=TOL_RES, overwrite_b=False, full_output=False):
    """Solve ``L_k(M)^T x = b`` using a cached Schur factorization of ``M``.

    Parameters
    ----------
    cache : SchurCache
        Factorization of ``M`` from :func:`schur_factor`.
    k : int
        Order of the k-way Lyapunov operator.
    b : ndarray
        Right-hand side of length ``n**k``.
    tol_res : float
        Relative residual bound; a larger attained residual raises
        :class:`AccuracyError`.
    overwrite_b : bool
        Reuse ``b``'s memory for the solution (real path only).
    full_output : bool
        Also return the attained relative residual.

    Notes
    -----
    On the real path the residual is accumulated slice by slice in Schur
    coordinates while back-substituting.  The coordinate change is
    orthogonal, so this equals the residual in the original basis up to
    rounding of the transforms and needs no extra ``n^k`` buffer.
    """
    n = cache.n
    b = np.asarray(b, dtype=float).ravel()
    if b.size != n**k:
        raise ValueError(f"right-hand side has length {b.size}, expected {n**k}")
    if k < 1:
        raise ValueError("k must be positive")
    if not check_solvability(cache, k):
        raise ResonanceError(f"L_{k}(M) is singular: a sum of {k} eigenvalues vanishes")
    bnorm = float(np.linalg.norm(b))

    if cache.output == "real":
        X = b if overwrite_b else b.copy()
        Xt = X.reshape((n,) * k)
        Ut = cache.U.T
        for ax in range(k):
            mode_multiply(Xt, Ut, ax)
        res2 = _solve_real(cache, Xt, 0.0, track=True)
        for ax in range(k):
            mode_multiply(Xt, cache.U, ax)
        res = np.sqrt(res2)
    else:
        Xt = b.astype(complex).reshape((n,) * k)
        for ax in range(k):
            mode_multiply(Xt, cache.U.T, ax)
        _solve_complex(cache.T, Xt, 0.0)
        Ub = np.conj(cache.U)
        for ax in range(k):
            mode_multiply(Xt, Ub, ax)
        Xc = Xt.ravel()
        im = np.linalg.norm(Xc.imag)
        if im > 1e-10 * max(np.linalg.norm(Xc.real), np.finfo(float).tiny) and im > 0:
            raise AccuracyError(f"complex Schur solve left an imaginary part of relative size "
                                f"{im / np.linalg.norm(Xc.real):.2e}")
        X = Xc.real.copy()
        res = np.linalg.norm(lyap_mult_t(cache.M, X, order=k) - b)

    rel = res / bnorm if bnorm > 0 else res
    log.debug("k-way solve n=%d k=%d relative residual %.3e", n, k, rel)
    if rel > tol_res:
        raise AccuracyError(f"k-way solve (k={k}) residual {rel:.3e} exceeds {tol_res:.1e}", residual=rel)
    if full_output:
        return X, rel
    return X


def kway_residual(M, k, x, b):
    """Relative residual ``||L_k(M)^T x - b|| / ||b||`` computed matrix-free."""
    r = lyap_mult_t(np.asarray(M, dtype=float), x, order=k) - np.asarray(b, dtype=float).ravel()
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(r) / bn) if bn > 0 else float(np.linalg.norm(r))
