"""Dense linear-algebra helpers shared by every estimator.

All routines are deterministic: identical inputs give identical outputs,
including the sign of eigenvectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError, NumericError

SYMMETRY_TOL = 1e-8
DEFAULT_REL_TOL = 1e-8
# rows per block when summing outer products; keeps the per-block float
# error small before the compensated running total absorbs it
CHUNK_ROWS = 4096


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (descending) and matching orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray

    def __len__(self):
        return self.values.shape[0]

    def top(self, n):
        return self.vectors[:, :n]

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def _fix_signs(vectors):
    # largest-magnitude entry of each column made non-negative; first index wins ties
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def symmetrize(S):
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def check_symmetric(S, tol=SYMMETRY_TOL):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InputError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > tol * scale:
        raise InputError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    return S


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are returned in non-increasing order. Each eigenvector is
    signed so that its entry of largest magnitude is non-negative. Repeated
    eigenvalues keep the order LAPACK returns for them; any metric built on
    the spanned subspace is unaffected by that choice.

    Raises
    ------
    InputError
        If ``S`` is asymmetric beyond ``1e-8`` (relative) or non-finite.
    NumericError
        If the eigensolver fails to converge.
    """
    S = symmetrize(check_symmetric(S))
    try:
        values, vectors = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition did not converge: {exc}") from exc
    order = np.argsort(-values, kind="stable")
    return EigenSystem(values[order], _fix_signs(vectors[:, order]))


def reg_inverse(S, rel_tol=DEFAULT_REL_TOL):
    """Eigenvalue-truncated pseudoinverse of a symmetric PSD matrix.

    Modes whose eigenvalue is below ``rel_tol * max_eigenvalue`` get zero
    weight. An all-zero matrix maps to the zero matrix.
    """
    eig = sym_eig(S)
    n = len(eig)
    if n == 0 or eig.values[0] <= 0:
        return np.zeros((n, n))
    keep = eig.values >= rel_tol * eig.values[0]
    V = eig.vectors[:, keep]
    return symmetrize((V / eig.values[keep]) @ V.T)


def effective_rank(S, rel_tol=DEFAULT_REL_TOL):
    vals = sym_eig(S).values
    if vals.size == 0 or vals[0] <= 0:
        return 0
    return int(np.sum(vals >= rel_tol * vals[0]))


def general_inverse(M, rel_tol=DEFAULT_REL_TOL):
    """SVD-truncated pseudoinverse of a general square matrix.

    Returns ``(inverse, deficient)`` where ``deficient`` lists the indices of
    singular directions (in descending singular-value order) that were cut.
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    if s.size == 0 or s[0] <= 0:
        return np.zeros(M.T.shape), list(range(s.size))
    keep = s >= rel_tol * s[0]
    inv = (Vt[keep].T / s[keep]) @ U[:, keep].T
    return inv, [int(i) for i in np.flatnonzero(~keep)]


def psd_repair(S, name="matrix", warn=True):
    """Symmetrize and clip negative eigenvalues to zero.

    Returns ``(repaired, clipped_mass)``; ``clipped_mass`` is the sum of the
    absolute values of the clipped eigenvalues.
    """
    import warnings

    S = symmetrize(S)
    if S.size == 0:
        return S, 0.0
    values, vectors = np.linalg.eigh(S)
    neg = values < 0
    clipped = float(-values[neg].sum())
    if clipped > 0:
        values = np.where(neg, 0.0, values)
        S = symmetrize((vectors * values) @ vectors.T)
        if warn:
            warnings.warn(
                f"{name}: clipped {int(neg.sum())} negative eigenvalue(s), mass {clipped:.3g}",
                RuntimeWarning,
                stacklevel=2,
            )
    return S, clipped


class _Compensated:
    """Kahan-compensated running sum of arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x):
        y = x - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t


def outer_sum(X, Y=None, chunk=CHUNK_ROWS):
    """Return sum over rows of ``x_t y_t^T`` using blocked, compensated summation."""
    X = np.asarray(X, dtype=float)
    Y = X if Y is None else np.asarray(Y, dtype=float)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError("row counts differ")
    acc = _Compensated((X.shape[1], Y.shape[1]))
    for start in range(0, X.shape[0], chunk):
        acc.add(X[start:start + chunk].T @ Y[start:start + chunk])
    return acc.total


@dataclass(frozen=True)
class SuffStats:
    """Second-moment sums over a lag-embedded dataset.

    Sums (not means) are stored so two windows merge exactly; the ``sigma_*``
    and ``cross`` properties return the means. ``sigma_s`` is the second
    moment of the target rows averaged over horizons, so that the training
    residual identity ``tr[sigma_s] - tr[W sigma_hat W^T]`` holds row for row.
    """

    phi_sum: np.ndarray
    cross_sum: np.ndarray  # (K_f, N_s, N_phi)
    s_sum: np.ndarray
    count: int

    @property
    def n_phi(self):
        return self.phi_sum.shape[0]

    @property
    def n_s(self):
        return self.s_sum.shape[0]

    @property
    def K_f(self):
        return self.cross_sum.shape[0]

    def _mean(self, x):
        if self.count == 0:
            return np.zeros_like(x)
        return x / self.count

    @property
    def sigma_phi(self):
        return symmetrize(self._mean(self.phi_sum))

    @property
    def cross(self):
        return self._mean(self.cross_sum)

    @property
    def sigma_s(self):
        return symmetrize(self._mean(self.s_sum))


def empty_stats(n_phi, n_s, K_f):
    return SuffStats(np.zeros((n_phi, n_phi)), np.zeros((K_f, n_s, n_phi)),
                     np.zeros((n_s, n_s)), 0)


def accumulate(stats, phi_rows, target_rows):
    """Add a block of rows to ``stats`` and return the updated statistics.

    Parameters
    ----------
    stats : SuffStats
    phi_rows : array, shape (n, N_phi) or (N_phi,)
    target_rows : array, shape (K_f, n, N_s) or sequence of K_f row blocks
        The ``s`` moment is taken from these rows, averaged over horizons.
    """
    phi = np.atleast_2d(np.asarray(phi_rows, dtype=float))
    targets = [np.atleast_2d(np.asarray(t, dtype=float)) for t in target_rows]
    if phi.shape[1] != stats.n_phi:
        raise DimensionError(f"phi has {phi.shape[1]} columns, stats expect {stats.n_phi}")
    if len(targets) != stats.K_f:
        raise DimensionError(f"expected {stats.K_f} target blocks, got {len(targets)}")
    for t in targets:
        if t.shape != (phi.shape[0], stats.n_s):
            raise DimensionError(f"target block shape {t.shape} != {(phi.shape[0], stats.n_s)}")
    phi_sum = stats.phi_sum + outer_sum(phi)
    cross_sum = stats.cross_sum + np.stack([outer_sum(t, phi) for t in targets])
    s_block = sum(outer_sum(t) for t in targets) / len(targets)
    return SuffStats(phi_sum, cross_sum, stats.s_sum + s_block, stats.count + phi.shape[0])


def merge(a, b):
    """Combine statistics of two disjoint windows."""
    if a.phi_sum.shape != b.phi_sum.shape or a.cross_sum.shape != b.cross_sum.shape:
        raise DimensionError("cannot merge statistics of different shapes")
    return SuffStats(a.phi_sum + b.phi_sum, a.cross_sum + b.cross_sum,
                     a.s_sum + b.s_sum, a.count + b.count)


def stats_from_dataset(dataset, chunk=CHUNK_ROWS):
    """Accumulate :class:`SuffStats` over a whole :class:`LagDataset`."""
    stats = empty_stats(dataset.n_phi, dataset.n_s, dataset.K_f)
    return accumulate(stats, dataset.phi, dataset.targets)
