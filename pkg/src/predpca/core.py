"""Predictive PCA: least-squares future maps followed by PCA of the predictions."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .dataio import LagDataset, TimeSeries
from .errors import DimensionError, NumericError, ParameterError
from .numerics import (
    DEFAULT_REL_TOL,
    EigenSystem,
    SuffStats,
    reg_inverse,
    stats_from_dataset,
    sym_eig,
    symmetrize,
)


@dataclass(frozen=True)
class PredModel:
    """A fitted PredPCA model.

    Attributes
    ----------
    Q : ndarray, shape (K_f, N_s, N_phi)
        Least-squares maps from ``phi_t`` to ``s_{t+k}``.
    sigma_hat : ndarray, shape (N_s, N_s)
        Covariance of the predicted inputs, averaged over horizons.
    eig : EigenSystem
        Eigensystem of ``sigma_hat``.
    N_u : int
        Number of encoders.
    W : ndarray, shape (N_u, N_s)
        Encoder/decoder weights with orthonormal rows.
    stats : SuffStats
        Training statistics the model was fitted on.
    """

    Q: np.ndarray
    sigma_hat: np.ndarray
    eig: EigenSystem
    N_u: int
    W: np.ndarray
    K_p: int
    K_f: int
    mean: np.ndarray
    stats: SuffStats
    rel_tol: float = DEFAULT_REL_TOL

    @property
    def n_s(self):
        return self.Q.shape[1]

    @property
    def n_phi(self):
        return self.Q.shape[2]

    def with_dims(self, N_u):
        """Same maps, different number of encoders (batch solution)."""
        _check_n_u(N_u, self.n_s)
        return PredModel(self.Q, self.sigma_hat, self.eig, N_u, self.eig.top(N_u).T.copy(),
                         self.K_p, self.K_f, self.mean, self.stats, self.rel_tol)


def _check_n_u(N_u, n_s):
    if not (isinstance(N_u, (int, np.integer)) and 1 <= N_u <= n_s):
        raise ParameterError(f"N_u must be an integer in [1, {n_s}], got {N_u!r}")


def fit_ml_maps(stats, rel_tol=DEFAULT_REL_TOL):
    """Return ``Q_k = <s_{t+k} phi^T> <phi phi^T>^+`` for every horizon.

    The inverse drops modes of ``<phi phi^T>`` below ``rel_tol`` times its
    largest eigenvalue, so rank-deficient regressors never raise.
    """
    if stats.count < stats.n_phi:
        warnings.warn(f"only {stats.count} samples for {stats.n_phi} regressors; "
                      "relying on truncated inverse", RuntimeWarning, stacklevel=2)
    inv = reg_inverse(stats.sigma_phi, rel_tol)
    return np.stack([C @ inv for C in stats.cross])


def predicted_covariance(Q, stats):
    """``(1/K_f) sum_k Q_k Sigma_phi Q_k^T`` using the first ``len(Q)`` horizons."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 2:
        Q = Q[None]
    if Q.shape[2] != stats.n_phi:
        raise DimensionError("Q and stats disagree on N_phi")
    sigma_phi = stats.sigma_phi
    total = sum(q @ sigma_phi @ q.T for q in Q) / Q.shape[0]
    return symmetrize(total)


def fit_stats(stats, N_u, K_p, mean=None, rel_tol=DEFAULT_REL_TOL, K_f_cov=None):
    """Fit a :class:`PredModel` straight from sufficient statistics.

    ``K_f_cov`` limits how many horizons enter the predicted covariance
    (all by default); every horizon still gets its map.
    """
    _check_n_u(N_u, stats.n_s)
    Q = fit_ml_maps(stats, rel_tol)
    K_f = Q.shape[0] if K_f_cov is None else K_f_cov
    sigma_hat = predicted_covariance(Q[:K_f], stats)
    eig = sym_eig(sigma_hat)
    mean = np.zeros(stats.n_s) if mean is None else np.asarray(mean, dtype=float)
    return PredModel(Q, sigma_hat, eig, int(N_u), eig.top(N_u).T.copy(), K_p, K_f,
                     mean, stats, rel_tol)


def fit_batch(dataset, N_u, rel_tol=DEFAULT_REL_TOL):
    """Fit the maps, then take the top ``N_u`` eigenvectors of the predicted covariance."""
    stats = stats_from_dataset(dataset)
    return fit_stats(stats, N_u, dataset.K_p, dataset.mean, rel_tol)


def predicted_inputs(model, phi, k=1):
    """Rows of ``Q_k phi_t`` (centered units)."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape[-1] != model.n_phi:
        raise DimensionError(f"phi has {phi.shape[-1]} entries, model expects {model.n_phi}")
    if not 1 <= k <= model.Q.shape[0]:
        raise ParameterError(f"horizon k={k} outside 1..{model.Q.shape[0]}")
    return phi @ model.Q[k - 1].T


def encode(model, phi, k=1):
    """Encoders ``u_{t+k|t} = W Q_k phi_t``; accepts one row or a matrix of rows."""
    return predicted_inputs(model, phi, k) @ model.W.T


def predict(model, phi, k=1, add_mean=True):
    """Predict ``s_{t+k}`` as ``W^T u_{t+k|t}``, optionally in original units."""
    pred = encode(model, phi, k) @ model.W
    return pred + model.mean if add_mean else pred


def empirical_error(model, dataset, k=1, normalize=False):
    """Mean squared prediction residual over the rows of ``dataset``.

    With ``normalize`` the result is divided by the mean squared target norm.
    """
    if dataset.n_rows == 0:
        raise ParameterError("empty dataset")
    target = dataset.targets[k - 1]
    resid = target - predict(model, dataset.phi, k, add_mean=False)
    err = float(np.mean(np.sum(resid ** 2, axis=1)))
    if normalize:
        denom = float(np.mean(np.sum(target ** 2, axis=1)))
        return err / denom if denom > 0 else 0.0
    return err


def heldout_loss(model, dataset):
    """``0.5 * sum_k mean|s_{t+k} - W^T u_{t+k|t}|^2``, the scale of the analytic expectation."""
    return 0.5 * sum(empirical_error(model, dataset, k) for k in range(1, model.K_f + 1))


def subspace_step(W, s_pred, s_true):
    """Mean of ``u (s - W^T u)^T`` over rows, summed over horizons.

    ``s_pred`` and ``s_true`` have shape ``(K_f, n, N_s)``.
    """
    grad = np.zeros_like(W)
    n = s_pred.shape[1]
    for sp, st in zip(s_pred, s_true):
        u = sp @ W.T
        grad += u.T @ (st - u @ W) / n
    return grad


def fit_online(dataset, N_u, model=None, lr=1e-2, tau=None, epochs=100,
               batch_size=None, seed=0, W0=None, tol=0.0, return_trace=False,
               rel_tol=DEFAULT_REL_TOL):
    """Learn ``W`` with the predictive subspace rule, keeping the maps fixed.

    Each update is ``W += eta_t * <u (s_{t+k} - W^T u)^T>`` averaged over a
    minibatch (the whole dataset when ``batch_size`` is None) and summed over
    horizons, with ``u = W Q_k phi_t``. The rate decays as
    ``lr / (1 + n_seen / tau)`` where ``n_seen`` counts samples processed;
    ``tau`` defaults to the number of rows.

    Parameters
    ----------
    model : PredModel, optional
        Supplies the maps; fitted in batch when omitted.
    W0 : array, optional
        Initial weights; a random orthonormal matrix when omitted.
    tol : float
        Stop early once an epoch changes ``W`` by less than this (Frobenius).
    return_trace : bool
        Also return the per-epoch Frobenius norms of the change in ``W``.

    Raises
    ------
    NumericError
        If ``||W||_F`` exceeds 1e3 (rate too large).
    """
    if model is None:
        model = fit_batch(dataset, N_u, rel_tol)
    _check_n_u(N_u, model.n_s)
    rng = np.random.default_rng(seed)
    if W0 is None:
        G = rng.standard_normal((model.n_s, N_u))
        W = np.linalg.qr(G)[0].T
    else:
        W = np.array(W0, dtype=float)
        if W.shape != (N_u, model.n_s):
            raise DimensionError(f"W0 must have shape {(N_u, model.n_s)}")
    K_f = model.K_f
    s_pred = np.stack([predicted_inputs(model, dataset.phi, k) for k in range(1, K_f + 1)])
    s_true = dataset.targets[:K_f]
    n = dataset.n_rows
    tau = float(n if tau is None else tau)
    bs = n if batch_size is None else int(batch_size)
    seen = 0
    trace = []
    for _ in range(epochs):
        W_start = W.copy()
        order = np.arange(n) if bs >= n else rng.permutation(n)
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            eta = lr / (1.0 + seen / tau)
            W = W + eta * subspace_step(W, s_pred[:, idx], s_true[:, idx])
            seen += idx.size
            if not np.isfinite(W).all() or np.linalg.norm(W) > 1e3:
                raise NumericError("online subspace rule diverged; use a smaller learning rate")
        delta = float(np.linalg.norm(W - W_start))
        trace.append(delta)
        if delta < tol:
            break
    fitted = PredModel(model.Q, model.sigma_hat, model.eig, int(N_u), W, model.K_p, model.K_f,
                       model.mean, model.stats, model.rel_tol)
    return (fitted, np.array(trace)) if return_trace else fitted


def whitened_basis(series, A_hat, sigma_omega_hat, rel_tol=DEFAULT_REL_TOL):
    """Replace each row ``s_t`` by ``A_hat^T Sigma_omega^+ s_t``.

    The result is meant to be lag-embedded in place of the raw observations;
    it weights directions by their inverse noise level before regression.
    """
    data = series.data if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    A_hat = np.asarray(A_hat, dtype=float)
    proj = reg_inverse(sigma_omega_hat, rel_tol) @ A_hat
    out = data @ proj
    name = series.name if isinstance(series, TimeSeries) else ""
    return TimeSeries(out, np.zeros(out.shape[1]), name)
