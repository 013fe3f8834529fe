"""Kronecker-product polynomial algebra.

Multi-index convention: in ``x^{(k)} = x (x) x^{(k-1)}`` the first factor
varies slowest, so a coefficient of order ``k`` is the C-order flattening of
an ``(n,) * k`` array.  The matricization ``V_k`` (``n x n^{k-1}``,
``vec(V_k) = v_k`` column-stacked) is then ``v.reshape(n**(k-1), n).T``, and
``V_k^T`` is simply ``v.reshape(n**(k-1), n)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import SizeGuardError

__all__ = [
    "KCoeff",
    "linearize",
    "unlinearize",
    "coefficient_order",
    "kron_power",
    "perfect_shuffle",
    "symmetrize",
    "is_symmetric",
    "contract",
    "poly_eval",
    "poly_grad",
    "lyap_mult_t",
    "dense_kway_lyap",
    "mode_multiply",
]

# elements per temporary block in the chunked products
_CHUNK = 1 << 22


def coefficient_order(size, n):
    """Return ``k`` with ``n**k == size``; raise if there is none."""
    if n < 1:
        raise ValueError("state dimension must be positive")
    if n == 1:
        raise ValueError("order of a coefficient is ambiguous for n = 1; pass it explicitly")
    k, m = 0, 1
    while m < size:
        m *= n
        k += 1
    if m != size:
        raise ValueError(f"length {size} is not a power of n = {n}")
    return k


@dataclass
class KCoeff:
    """One Kronecker coefficient ``v_k`` of length ``n**k``."""

    data: np.ndarray
    n: int
    k: int
    symmetric: bool = field(default=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).ravel()
        if self.data.size != self.n**self.k:
            raise ValueError(f"coefficient of order {self.k} needs {self.n**self.k} entries, got {self.data.size}")
        if self.symmetric and not is_symmetric(self.data, self.n, self.k):
            raise ValueError("coefficient flagged symmetric is not symmetric")

    @property
    def matrix(self):
        """The ``n x n^{k-1}`` matricization with ``vec(V_k) = v_k``."""
        return self.data.reshape(self.n ** (self.k - 1), self.n).T

    @property
    def tensor(self):
        return self.data.reshape((self.n,) * self.k)

    def symmetrized(self):
        return KCoeff(symmetrize(self.data, self.n, self.k), self.n, self.k, symmetric=True)


def linearize(index, n):
    """Position of the 0-based multi-index ``index`` in a length ``n**k`` vector."""
    pos = 0
    for i in index:
        if not 0 <= i < n:
            raise ValueError(f"index entry {i} out of range for n = {n}")
        pos = pos * n + int(i)
    return pos


def unlinearize(pos, n, k):
    if not 0 <= pos < n**k:
        raise ValueError(f"position {pos} out of range for n**k = {n**k}")
    out = []
    for _ in range(k):
        pos, r = divmod(pos, n)
        out.append(r)
    return tuple(reversed(out))


def kron_power(x, k):
    """``x (x) x (x) ... (x) x`` with ``k`` factors."""
    if k < 1:
        raise ValueError("Kronecker power needs k >= 1")
    x = np.asarray(x, dtype=float).ravel()
    out = x.copy()
    for _ in range(k - 1):
        out = np.outer(out, x).ravel()
    return out


def perfect_shuffle(p, q):
    """Index map ``pi`` with ``vec(A.T)[i] == vec(A)[pi[i]]`` for ``p x q`` ``A``.

    ``vec`` stacks columns.  The dense permutation matrix is never built.
    """
    if p < 1 or q < 1:
        raise ValueError("perfect shuffle dimensions must be positive")
    idx = np.arange(p * q)
    col, row = idx % q, idx // q
    return row + p * col


@lru_cache(maxsize=32)
def _sorted_tuples(n, k):
    # all nondecreasing k-tuples over range(n), lexicographic
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    prev = _sorted_tuples(n, k - 1)
    blocks = []
    for a in range(n):
        tail = prev[prev[:, 0] >= a] if k > 1 else prev
        head = np.full((tail.shape[0], 1), a, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def symmetrize(v, n, k=None, out=None):
    """Symmetric coefficient with the same polynomial values as ``v``.

    Entries whose multi-indices are permutations of one another are replaced
    by their mean.  Groups that are already constant are left untouched, so
    symmetric input is returned bit-for-bit.  ``out`` may alias ``v``.
    """
    v = np.asarray(v, dtype=float).ravel()
    if k is None:
        k = coefficient_order(v.size, n)
    if v.size != n**k:
        raise ValueError(f"coefficient of order {k} needs {n**k} entries, got {v.size}")
    if out is None:
        out = v.copy()
    elif out is not v:
        out[...] = v
    if k == 1 or n == 1:
        return out

    perms = np.array(list(itertools.permutations(range(k))), dtype=np.int64)
    strides = n ** np.arange(k - 1, -1, -1, dtype=np.int64)
    tails = _sorted_tuples(n, k - 1)
    rows = max(1, _CHUNK // (8 * len(perms)))
    for a in range(n):
        tail = tails[tails[:, 0] >= a]
        for r0 in range(0, tail.shape[0], rows):
            t = tail[r0:r0 + rows]
            tup = np.hstack([np.full((t.shape[0], 1), a, dtype=np.int64), t])
            idx = np.empty((t.shape[0], len(perms)), dtype=np.int64)
            for j, perm in enumerate(perms):
                idx[:, j] = tup[:, perm] @ strides
            vals = out[idx]
            mean = vals.mean(axis=1)
            same = (vals == vals[:, :1]).all(axis=1)
            mean[same] = vals[same, 0]
            out[idx] = mean[:, None]
    return out


def is_symmetric(v, n, k=None, rtol=1e-12):
    """Check invariance under all mode permutations (adjacent swaps generate them)."""
    v = np.asarray(v, dtype=float).ravel()
    if k is None:
        k = coefficient_order(v.size, n)
    if k < 2 or n == 1:
        return True
    t = v.reshape((n,) * k)
    tol = rtol * max(np.abs(v).max(initial=0.0), np.finfo(float).tiny)
    for j in range(k - 1):
        axes = list(range(k))
        axes[j], axes[j + 1] = axes[j + 1], axes[j]
        if np.abs(t - t.transpose(axes)).max() > tol:
            return False
    return True


def contract(v, x, times=None):
    """Contract the last ``times`` modes of ``v`` with ``x`` (all modes by default).

    Each step is one reshape and matrix-vector product, so the cost is
    ``O(len(v))`` and ``x^{(k)}`` is never formed.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    t = np.asarray(v, dtype=float).ravel()
    if times is None:
        times = coefficient_order(t.size, n) if n > 1 else 1
    for _ in range(times):
        if t.size % n:
            raise ValueError("coefficient length does not match the state dimension")
        t = t.reshape(-1, n) @ x
    return t


def _coeff_items(E):
    coeffs = getattr(E, "coeffs", E)
    return sorted(coeffs.items())


def poly_eval(E, x):
    """Evaluate ``1/2 * sum_k v_k^T x^{(k)}``.

    ``E`` is an :class:`~kronenergy.energy.EnergyPoly` or a mapping
    ``{degree: coefficient}``.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    total = 0.0
    for k, v in _coeff_items(E):
        if np.size(v) != n**k:
            raise ValueError(f"degree-{k} coefficient has length {np.size(v)}, expected {n**k}")
        total += float(contract(v, x, k)[0])
    return 0.5 * total


def poly_grad(E, x, check_symmetric=True):
    """Gradient ``sum_k (k/2) V_k x^{(k-1)}`` of :func:`poly_eval`.

    The closed form is only valid for symmetric coefficients.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    g = np.zeros(n)
    for k, v in _coeff_items(E):
        if np.size(v) != n**k:
            raise ValueError(f"degree-{k} coefficient has length {np.size(v)}, expected {n**k}")
        if check_symmetric and not is_symmetric(v, n, k, rtol=1e-10):
            raise ValueError(f"degree-{k} coefficient is not symmetric")
        g += 0.5 * k * contract(v, x, k - 1)
    return g


def lyap_mult_t(F, v, order=None, out=None, alpha=1.0):
    """Matrix-free ``alpha * L_i(F)^T v`` for ``F`` of shape ``(n, q)``.

    ``v`` has length ``n**i``; the result has length ``n**(i-1) * q``.  Each of
    the ``i`` terms is the product ``W @ F`` of a mode-reordered copy of
    ``v`` (rows of length ``n``), scattered back into slot ``j``.  The products
    are blocked so no temporary larger than a few MB is formed.  ``F`` may be a
    dense array, a scipy sparse matrix or any operator supporting ``W @ F``.
    When ``out`` is given the result is accumulated into it.  ``order`` is
    required when ``n == 1``.
    """
    n, q = F.shape
    v = np.asarray(v, dtype=float).ravel()
    i = order if order is not None else coefficient_order(v.size, n)
    if v.size != n**i:
        raise ValueError(f"coefficient length {v.size} is not a power of n = {n}")
    size = n ** (i - 1) * q
    if out is None:
        out = np.zeros(size)
    elif out.size != size:
        raise ValueError(f"output has length {out.size}, expected {size}")
    V = v.reshape((n,) * i)
    for j in range(i):
        lead, trail = n**j, n ** (i - 1 - j)
        W3 = np.moveaxis(V, j, -1).reshape(lead, trail, n)
        out3 = out.reshape(lead, q, trail)
        cb = min(trail, max(1, _CHUNK // q))
        ca = min(lead, max(1, _CHUNK // (q * cb)))
        for a0 in range(0, lead, ca):
            a1 = min(lead, a0 + ca)
            for b0 in range(0, trail, cb):
                b1 = min(trail, b0 + cb)
                P = np.asarray(W3[a0:a1, b0:b1].reshape(-1, n) @ F)
                P = P.reshape(a1 - a0, b1 - b0, q).transpose(0, 2, 1)
                if alpha != 1.0:
                    P = alpha * P
                out3[a0:a1, :, b0:b1] += P
    return out


def dense_kway_lyap(M, k, max_entries=10**7):
    """Explicit ``L_k(M) = sum_j I (x) .. (x) M (x) .. (x) I`` (test oracle only)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("M must be a matrix")
    if k < 1:
        raise ValueError("k-way Lyapunov matrix needs k >= 1")
    n, q = M.shape
    rows, cols = n**k, n ** (k - 1) * q
    if rows * cols > max_entries:
        raise SizeGuardError(f"dense L_{k} would have {rows * cols} entries (guard {max_entries})")
    out = np.zeros((rows, cols))
    for j in range(k):
        out += np.kron(np.kron(np.eye(n**j), M), np.eye(n ** (k - 1 - j)))
    return out


def mode_multiply(X, G, axis, out=None):
    """In-place ``X <- G x_axis X`` (apply ``G`` along one mode of a cube).

    ``X`` is a contiguous ``(n,) * k`` array and ``G`` is ``n x n``; work is
    done in blocks so only a small temporary is live.
    """
    n = G.shape[0]
    k = X.ndim
    lead, trail = n**axis, n ** (k - 1 - axis)
    X3 = X.reshape(lead, n, trail)
    if out is None:
        out = X
    O3 = out.reshape(lead, n, trail)
    if trail == 1:
        rows = max(1, _CHUNK // n)
        X2, O2 = X3.reshape(lead, n), O3.reshape(lead, n)
        Gt = G.T
        for r0 in range(0, lead, rows):
            O2[r0:r0 + rows] = X2[r0:r0 + rows] @ Gt
        return out
    cb = min(trail, max(1, _CHUNK // n))
    ca = min(lead, max(1, _CHUNK // (n * cb)))
    for a0 in range(0, lead, ca):
        for b0 in range(0, trail, cb):
            O3[a0:a0 + ca, :, b0:b0 + cb] = np.matmul(G, X3[a0:a0 + ca, :, b0:b0 + cb])
    return out
