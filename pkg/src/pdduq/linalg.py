"""Small dense symmetric eigensolvers based on cyclic Jacobi rotations.

The solver works on a single matrix or on a stack of matrices of the same
size; a rotation is applied to every matrix of the stack at once, which makes
it fast enough for a million 3x3 eigenproblems and accurate enough for the
tridiagonal Jacobi matrices behind Gauss quadrature.
"""

from __future__ import annotations

import numpy as np

__all__ = ["EigenConvergenceError", "jacobi_eigh", "symmetric_eig3", "generalized_eigvalsh"]


class EigenConvergenceError(RuntimeError):
    """Raised when Jacobi sweeps fail to reduce the off-diagonal part."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending


def _off_norm2(a):
    n = a.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sum(np.where(mask, a * a, 0.0), axis=(-2, -1))


def jacobi_eigh(a, tol: float = 1e-14, max_sweeps: int = 60, vectors: bool = True):
    """Eigen-decompose symmetric matrices by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like, shape (..., n, n)
        Symmetric matrix or stack of symmetric matrices.  Only the symmetric
        part is used.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm of every matrix is
        at most ``tol`` times its full Frobenius norm.
    max_sweeps : int
        Upper bound on the number of full sweeps.
    vectors : bool
        Whether to accumulate eigenvectors.

    Returns
    -------
    w : ndarray, shape (..., n)
        Eigenvalues in ascending order.
    v : ndarray, shape (..., n, n)
        Orthonormal eigenvectors as columns, ``a @ v[..., :, k] = w[..., k] v[..., :, k]``.
        Only returned when ``vectors`` is true.

    Raises
    ------
    EigenConvergenceError
        If some matrix is not diagonalized within ``max_sweeps`` sweeps; the
        exception's ``offending`` attribute holds the batch indices.
    """
    a = np.array(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    n = a.shape[-1]
    v = np.broadcast_to(np.eye(n), a.shape).copy() if vectors else None
    scale2 = np.sum(a * a, axis=(-2, -1))
    thresh2 = (tol * tol) * np.where(scale2 > 0, scale2, 1.0)

    for _ in range(max_sweeps):
        off2 = _off_norm2(a)
        if np.all(off2 <= thresh2):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[..., p, q]
                active = np.abs(apq) > 0.0
                if not np.any(active):
                    continue
                app = a[..., p, p]
                aqq = a[..., q, q]
                with np.errstate(over="ignore"):
                    theta = (aqq - app) / (2.0 * np.where(active, apq, 1.0))
                big = np.abs(theta) > 1e150
                tame = np.where(big, 1.0, theta)
                t = np.where(
                    big,
                    0.5 / np.where(big, theta, 1.0),
                    np.copysign(1.0, tame) / (np.abs(tame) + np.sqrt(tame * tame + 1.0)),
                )
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                cc = c[..., None]
                ss = s[..., None]
                colp = a[..., :, p].copy()
                colq = a[..., :, q].copy()
                a[..., :, p] = cc * colp - ss * colq
                a[..., :, q] = ss * colp + cc * colq
                rowp = a[..., p, :].copy()
                rowq = a[..., q, :].copy()
                a[..., p, :] = cc * rowp - ss * rowq
                a[..., q, :] = ss * rowp + cc * rowq
                a[..., p, p] = app - t * apq
                a[..., q, q] = aqq + t * apq
                a[..., p, q] = 0.0
                a[..., q, p] = 0.0
                if vectors:
                    vp = v[..., :, p].copy()
                    vq = v[..., :, q].copy()
                    v[..., :, p] = cc * vp - ss * vq
                    v[..., :, q] = ss * vp + cc * vq
    else:
        off2 = _off_norm2(a)
        bad = np.argwhere(np.atleast_1d(off2 > thresh2))
        if bad.size:
            raise EigenConvergenceError(
                f"Jacobi rotations did not converge in {max_sweeps} sweeps for {len(bad)} matrices",
                offending=bad.ravel() if a.ndim > 2 else None,
            )

    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    if not vectors:
        return w
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return w, v


def symmetric_eig3(a, symmetry_tol: float = 1e-12):
    """Eigenvalues and eigenvectors of 3x3 symmetric matrices.

    Accepts a single matrix of shape (3, 3) or a stack (..., 3, 3).  Raises
    ``ValueError`` if the input departs from symmetry by more than
    ``symmetry_tol`` relative to its largest entry.
    """
    a = np.asarray(a, dtype=float)
    if a.shape[-2:] != (3, 3):
        raise ValueError(f"expected 3x3 matrices, got shape {a.shape}")
    scale = np.max(np.abs(a), axis=(-2, -1), keepdims=True)
    asym = np.abs(a - np.swapaxes(a, -1, -2))
    if np.any(asym > symmetry_tol * np.where(scale > 0, scale, 1.0)):
        raise ValueError("matrix is not symmetric")
    return jacobi_eigh(a)


def generalized_eigvalsh(k, m_diag):
    """Eigenvalues of ``K phi = lam M phi`` for diagonal positive ``M``.

    Uses the symmetric reduction ``M^{-1/2} K M^{-1/2}``.  ``k`` has shape
    (..., n, n) and ``m_diag`` shape (..., n).
    """
    m_diag = np.asarray(m_diag, dtype=float)
    if np.any(m_diag <= 0):
        raise ValueError("mass matrix must be positive definite")
    r = 1.0 / np.sqrt(m_diag)
    a = np.asarray(k, dtype=float) * r[..., :, None] * r[..., None, :]
    return jacobi_eigh(a, vectors=False)
