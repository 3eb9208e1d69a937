"""Modes of variability: EOF decomposition, random-matrix truncation, VARIMAX.

Conventions
-----------
``A`` is a (t, n) anomaly matrix with rows in time. Its covariance is
``S = A.T @ A / t``; eigenvalues of ``S`` are called ``lambda2`` to keep the
squared notation of the EOF literature. The k-th principal component is
``A @ u_k``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError


class VarimaxConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Result of :func:`compute_modes`.

    Attributes
    ----------
    eigenvalues : array, shape (n,)
        Full covariance spectrum, descending, zero-padded when n > t.
    eofs_raw : array, shape (n, k)
        Leading orthonormal eigenvectors.
    eofs_rotated : array, shape (n, k)
        ``eofs_raw @ rotation``.
    rotation : array, shape (k, k)
        Orthogonal VARIMAX rotation (identity when k < 2 or rotation is off).
    pcs : array, shape (t, k)
        Projections of the anomaly matrix on `eofs_rotated`.
    k_selected : int
        Number of eigenvalues above the Marchenko-Pastur upper edge.
    bounds : tuple of float
        ``(lambda_minus, lambda_plus)``.
    """

    eigenvalues: np.ndarray
    eofs_raw: np.ndarray
    eofs_rotated: np.ndarray
    rotation: np.ndarray
    pcs: np.ndarray
    k_selected: int
    bounds: tuple
    normalized: bool = True
    criterion_history: list = field(default_factory=list)


def covariance(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise DataError("empty anomaly matrix")
    t = A.shape[0]
    if t < 2:
        raise DataError("need at least two time steps")
    S = A.T @ A / t
    return 0.5 * (S + S.T)


def _sign_fix(vectors):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs, signs


def eigendecompose(S, symmetry_tol: float = 1e-10):
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order.

    Each eigenvector is signed so its largest-magnitude component is
    positive.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError("matrix must be square")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    if np.max(np.abs(S - S.T)) > symmetry_tol * scale:
        raise DataError("matrix is not symmetric")
    w, V = np.linalg.eigh(S)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    V, _ = _sign_fix(V)
    return w, V


def eof_decompose(A, n_modes: int | None = None):
    """Eigen-decomposition of ``S = A.T A / t`` without forming S when n > t.

    When the matrix is wider than it is tall, the (t, t) Gram matrix
    ``A A.T / t`` shares the nonzero spectrum of S; its eigenvectors ``v``
    map back to unit EOFs through ``u = A.T v / sqrt(t * lambda2)``.

    Returns the full spectrum (length n, zero-padded) and the leading
    `n_modes` EOFs.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise DataError("empty anomaly matrix")
    t, n = A.shape
    if t < 2:
        raise DataError("need at least two time steps")
    if n <= t:
        w, U = eigendecompose(covariance(A))
        w = np.clip(w, 0.0, None)
        if n_modes is not None:
            U = U[:, :n_modes]
        return w, U
    G = A @ A.T / t
    w, V = eigendecompose(0.5 * (G + G.T))
    w = np.clip(w, 0.0, None)
    # eigenvalues below this are numerical zeros and carry no EOF
    tiny = w[0] * max(t, n) * np.finfo(float).eps if w.size else 0.0
    rank = int(np.sum(w > tiny))
    k = rank if n_modes is None else min(n_modes, rank)
    U = A.T @ V[:, :k] / np.sqrt(t * w[:k])
    U, _ = _sign_fix(U)
    spectrum = np.zeros(n)
    spectrum[:rank] = w[:rank]
    return spectrum, U


def mp_bounds(n: int, t: int):
    """Marchenko-Pastur edges ``(1 -+ sqrt(n/t))**2`` for unit-variance noise."""
    if n < 1 or t < 1:
        raise ValueError("n and t must be positive")
    r = np.sqrt(n / t)
    return float((1.0 - r) ** 2), float((1.0 + r) ** 2)


def select_nonrandom(eigenvalues, bounds, normalize: bool = True) -> int:
    """Count eigenvalues strictly above the upper Marchenko-Pastur edge.

    With `normalize`, the spectrum is first divided by its mean so that it is
    comparable with the unit-variance edge.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.size == 0:
        return 0
    if normalize:
        mean = lam.mean()
        if mean <= 0:
            return 0
        lam = lam / mean
    return int(np.sum(lam > bounds[1]))


def varimax_criterion(B) -> float:
    """Sum over columns of ``p * sum(b**4) - (sum(b**2))**2``."""
    B = np.asarray(B, dtype=float)
    p = B.shape[0]
    B2 = B * B
    return float(np.sum(p * np.sum(B2 * B2, axis=0) - np.sum(B2, axis=0) ** 2))


def _pair_angle(x, y, p):
    # closed-form maximizer of the criterion restricted to columns x, y
    u = x * x - y * y
    v = 2.0 * x * y
    su, sv = u.sum(), v.sum()
    num = 2.0 * (p * np.dot(u, v) - su * sv)
    den = p * (np.dot(u, u) - np.dot(v, v)) - (su * su - sv * sv)
    return 0.25 * np.arctan2(num, den)


def varimax_rotate(U, tol: float = 1e-7, max_sweeps: int = 1000, return_history: bool = False):
    """Orthogonal VARIMAX rotation by cyclic pairwise planar rotations.

    Every column pair is rotated by the angle that maximizes the criterion in
    its plane, so each sweep can only increase it. Sweeps stop when the
    relative gain drops below `tol`.

    Returns
    -------
    B : array, shape (n, m)
        Rotated loadings ``U @ R``.
    R : array, shape (m, m)
        Orthogonal rotation.
    history : list of float, optional
        Criterion value before the first sweep and after each sweep.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] < 2:
        raise DataError("VARIMAX needs at least two columns")
    p, m = U.shape
    if np.linalg.matrix_rank(U) < m:
        raise DataError("loading columns are linearly dependent")
    B = U.copy()
    R = np.eye(m)
    history = [varimax_criterion(B)]
    converged = False
    for _ in range(max_sweeps):
        for i in range(m - 1):
            for j in range(i + 1, m):
                theta = _pair_angle(B[:, i], B[:, j], p)
                if theta == 0.0:
                    continue
                c, s = np.cos(theta), np.sin(theta)
                rot = np.array([[c, -s], [s, c]])
                B[:, [i, j]] = B[:, [i, j]] @ rot
                R[:, [i, j]] = R[:, [i, j]] @ rot
        history.append(varimax_criterion(B))
        prev, cur = history[-2], history[-1]
        if abs(cur - prev) <= tol * max(abs(cur), np.finfo(float).tiny):
            converged = True
            break
    if not converged:
        warnings.warn(f"VARIMAX did not converge in {max_sweeps} sweeps",
                      VarimaxConvergenceWarning, stacklevel=2)
    # re-orthogonalize to wipe accumulated rounding in R
    Q, Rr = np.linalg.qr(R)
    Q = Q * np.sign(np.diag(Rr))
    B = U @ Q
    if return_history:
        return B, Q, history
    return B, Q


def compute_pcs(A, loadings) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    loadings = np.asarray(loadings, dtype=float)
    if loadings.ndim == 1:
        loadings = loadings[:, None]
    if A.shape[1] != loadings.shape[0]:
        raise DataError(
            f"anomaly matrix has {A.shape[1]} columns, loadings have {loadings.shape[0]} rows"
        )
    return A @ loadings


def compute_modes(A, normalize: bool = True, rotate: bool = True, scaled_rotation: bool = True,
                  n_modes: int | None = None, varimax_tol: float = 1e-7,
                  varimax_max_sweeps: int = 1000) -> ModeSet:
    """Full mode extraction for an anomaly matrix.

    Selects the non-random modes (or the leading `n_modes` when given),
    rotates them, orders the rotated modes by descending PC variance and
    signs each so its largest loading is positive.

    With `scaled_rotation`, the rotation is chosen on loadings scaled by
    ``sqrt(lambda2)`` and then applied to the orthonormal EOFs, so the
    rotated EOFs stay orthonormal.
    """
    A = np.asarray(getattr(A, "matrix", A), dtype=float)
    t, n = A.shape
    bounds = mp_bounds(n, t)
    spectrum, U_all = eof_decompose(A)
    k_sel = select_nonrandom(spectrum, bounds, normalize)
    k = k_sel if n_modes is None else int(n_modes)
    k = min(k, U_all.shape[1])
    U = U_all[:, :k]
    R = np.eye(k)
    history = []
    if rotate and k >= 2:
        target = U * np.sqrt(spectrum[:k]) if scaled_rotation else U
        _, R, history = varimax_rotate(target, tol=varimax_tol, max_sweeps=varimax_max_sweeps,
                                       return_history=True)
    B = U @ R
    pcs = compute_pcs(A, B)
    if k:
        order = np.argsort(-np.mean(pcs ** 2, axis=0), kind="stable")
        R, B, pcs = R[:, order], B[:, order], pcs[:, order]
        B, signs = _sign_fix(B)
        R = R * signs
        pcs = pcs * signs
    if not np.all(np.isfinite(B)):
        raise NumericalError("non-finite EOFs")
    return ModeSet(
        eigenvalues=spectrum,
        eofs_raw=U,
        eofs_rotated=B,
        rotation=R,
        pcs=pcs,
        k_selected=k_sel,
        bounds=bounds,
        normalized=normalize,
        criterion_history=history,
    )
