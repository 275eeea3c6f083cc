"""Small dense symmetric-matrix kernel.

Matrices here never exceed ~10x10, so everything is plain row-major numpy
arrays and the factorizations are written out directly: a Cholesky with an
explicit pivot test, inversion through that factor, and cyclic Jacobi for
eigenvalues. The Loewner order comparison is built on the smallest
eigenvalue of the difference.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimMismatch, IllConditioned, NotPD, NotSymmetric

SYMMETRY_RTOL = 1e-10
PD_RTOL = 1e-10
MAX_COND = 1e12


def _norm(m: np.ndarray) -> float:
    return float(np.max(np.abs(m))) if m.size else 0.0


def as_matrix(m) -> np.ndarray:
    a = np.array(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimMismatch("expected a 2-D matrix", shape=list(a.shape))
    return a


def as_symmetric(m, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Return ``m`` as a symmetric float array.

    Small asymmetries (at most ``rtol * max|m|``) are averaged away; larger
    ones raise :class:`NotSymmetric`.
    """
    a = as_matrix(m)
    if a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimMismatch("symmetric matrix must be square", shape=list(a.shape))
    asym = _norm(a - a.T)
    if asym > rtol * _norm(a):
        raise NotSymmetric("matrix is not symmetric", max_asymmetry=asym)
    return 0.5 * (a + a.T)


def identity(d: int) -> np.ndarray:
    return np.eye(d)


def default_tol(m: np.ndarray) -> float:
    scale = float(np.max(np.abs(np.diag(m)))) if m.size else 0.0
    return PD_RTOL * (scale if scale > 0 else 1.0)


def cholesky(m, tol: float | None = None) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises :class:`NotPD` as soon as a pivot drops below ``tol``
    (default ``1e-10 * max diag``).
    """
    a = as_symmetric(m)
    d = a.shape[0]
    if tol is None:
        tol = default_tol(a)
    L = np.zeros_like(a)
    for j in range(d):
        pivot = a[j, j] - float(L[j, :j] @ L[j, :j])
        if not pivot >= tol:
            raise NotPD("matrix is not positive definite", pivot_index=j, pivot=pivot)
        L[j, j] = math.sqrt(pivot)
        if j + 1 < d:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _forward(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.array(b, dtype=float)
    for i in range(L.shape[0]):
        y[i] = (y[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.array(y, dtype=float)
    for i in range(L.shape[0] - 1, -1, -1):
        x[i] = (x[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


def _check_conditioning(L: np.ndarray, max_cond: float) -> None:
    diag = np.diag(L)
    # squared ratio of Cholesky diagonals: a cheap lower bound on cond(m)
    est = float(np.max(diag) / np.min(diag)) ** 2
    if est > max_cond:
        raise IllConditioned("condition number estimate too large", cond_estimate=est)


def solve(m, b, tol: float | None = None, max_cond: float = MAX_COND) -> np.ndarray:
    """Solve ``m x = b`` for symmetric positive definite ``m``.

    ``b`` may be a vector or a matrix of right-hand sides.
    """
    L = cholesky(m, tol)
    _check_conditioning(L, max_cond)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != L.shape[0]:
        raise DimMismatch("right-hand side does not conform", rows=L.shape[0], rhs=list(b.shape))
    return _backward(L, _forward(L, b))


def invert(m, tol: float | None = None, max_cond: float = MAX_COND) -> np.ndarray:
    a = as_symmetric(m)
    inv = solve(a, np.eye(a.shape[0]), tol, max_cond)
    return 0.5 * (inv + inv.T)


def jacobi_eigenvalues(m, max_sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix, ascending, by cyclic Jacobi."""
    a = as_symmetric(m).copy()
    d = a.shape[0]
    scale = _norm(a)
    if d == 1 or scale == 0.0:
        return np.sort(np.diag(a))
    for _ in range(max_sweeps):
        off = math.sqrt(float(np.sum((a - np.diag(np.diag(a))) ** 2)))
        if off <= 1e-15 * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(tau * tau + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp = a[p].copy()
                rq = a[q].copy()
                a[p] = c * rp - s * rq
                a[q] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
    return np.sort(np.diag(a))


def min_eigenvalue(m) -> float:
    return float(jacobi_eigenvalues(m)[0])


def loewner_leq(v1, v2, tol: float = 1e-9) -> bool:
    """True when ``v1 ⪯ v2``, i.e. ``v2 - v1`` is PSD up to ``tol * max|v2|``."""
    a = as_symmetric(v1)
    b = as_symmetric(v2)
    if a.shape != b.shape:
        raise DimMismatch("Loewner comparison needs equal dimensions",
                          left=list(a.shape), right=list(b.shape))
    return min_eigenvalue(b - a) >= -tol * _norm(b)


def loewner_margin(v1, v2) -> float:
    """Smallest eigenvalue of ``v2 - v1``; non-negative iff ``v1 ⪯ v2``."""
    return min_eigenvalue(as_symmetric(v2) - as_symmetric(v1))


def block_diag(*blocks) -> np.ndarray:
    mats = [as_matrix(b) for b in blocks]
    rows = sum(b.shape[0] for b in mats)
    cols = sum(b.shape[1] for b in mats)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in mats:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


def assemble(tt, te, ee) -> np.ndarray:
    """Assemble a symmetric 2x2 block matrix from its upper blocks."""
    tt = as_matrix(tt)
    ee = as_matrix(ee)
    te = np.asarray(te, dtype=float).reshape(tt.shape[0], ee.shape[0])
    return np.block([[tt, te], [te.T, ee]])


def split(m, p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split a square matrix into its ``(tt, te, ee)`` blocks at index ``p``."""
    a = as_matrix(m)
    if not 0 < p < a.shape[0]:
        raise DimMismatch("block split index out of range", p=p, dim=a.shape[0])
    return a[:p, :p].copy(), a[:p, p:].copy(), a[p:, p:].copy()


class VarianceBlocks:
    """Symmetric (p+q)x(p+q) matrix kept as its ``tt``/``te``/``ee`` blocks."""

    __slots__ = ("tt", "te", "ee")

    def __init__(self, tt, te, ee):
        self.tt = as_symmetric(tt)
        self.ee = as_symmetric(ee)
        self.te = np.asarray(te, dtype=float).reshape(self.tt.shape[0], self.ee.shape[0])

    @classmethod
    def from_full(cls, m, p: int) -> "VarianceBlocks":
        tt, te, ee = split(as_symmetric(m), p)
        return cls(tt, te, ee)

    @property
    def p(self) -> int:
        return self.tt.shape[0]

    @property
    def q(self) -> int:
        return self.ee.shape[0]

    def full(self) -> np.ndarray:
        return assemble(self.tt, self.te, self.ee)

    def __repr__(self) -> str:
        return f"VarianceBlocks(p={self.p}, q={self.q}, tt={self.tt.tolist()})"
