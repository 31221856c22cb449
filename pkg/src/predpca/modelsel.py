"""Analytic test-error expectation and the choice of encoder count and lag order."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import fit_stats
from .dataio import TimeSeries, lag_embed
from .errors import ParameterError, PredPCAError
from .numerics import DEFAULT_REL_TOL, effective_rank, stats_from_dataset


class ErrorTerms(NamedTuple):
    training_error: float
    generalization_error: float
    L_hat: float
    plugin_bias: float = 0.0


def error_curve(model, stats=None):
    """Training and generalization terms for every ``N_u`` in ``0..N_s``.

    Returns two arrays of length ``N_s + 1``. Index ``n`` is the value for
    ``N_u = n``; the O(T^-3/2) remainder of the expansion is dropped.

    Both terms are evaluated with sample estimates. The sample eigenvalues
    exceed their population values by the generalization term itself (in
    expectation), so the sample training term sits one generalization term
    below the population one; see :func:`test_error_expectation`.
    """
    stats = model.stats if stats is None else stats
    T = stats.count
    if T <= 0:
        raise ParameterError("sample count must be positive")
    lam = model.eig.values
    P = model.eig.vectors
    sigma_s = stats.sigma_s
    K_f = model.K_f
    n_phi = stats.n_phi
    # residual variance captured along each eigenvector: P_i^T (S_s - S_hat) P_i
    resid = np.einsum("ij,ik,kj->j", P, sigma_s, P) - lam
    train = 0.5 * K_f * (np.trace(sigma_s) - np.concatenate([[0.0], np.cumsum(lam)]))
    gen = 0.5 * K_f * n_phi / T * np.concatenate([[0.0], np.cumsum(resid)])
    return train, gen


def test_error_expectation(model, stats=None, N_u=None, plugin_correction=True):
    """Expected held-out loss ``0.5 * sum_k <|s_{t+k} - P P^T Q_k phi_t|^2>``.

    ``training_error = (K_f/2)(tr S_s - sum_{i<=N_u} lambda_i)`` and
    ``generalization_error = (K_f N_phi / 2T) tr[P^T (S_s - S_hat) P]``
    with ``P`` the top ``N_u`` eigenvectors of the predicted covariance.

    With ``plugin_correction`` (default) the sample eigenvalues' upward bias
    is removed by adding the generalization term a second time, reported as
    ``plugin_bias``. Without it ``L_hat`` is the bare sum of the two terms,
    which underestimates the held-out loss and overshoots ``N_u`` when the
    noise floor is flat.
    """
    N_u = model.N_u if N_u is None else N_u
    n_s = model.eig.values.shape[0]
    if not 0 <= N_u <= n_s:
        raise ParameterError(f"N_u must lie in [0, {n_s}]")
    train, gen = error_curve(model, stats)
    bias = float(gen[N_u]) if plugin_correction else 0.0
    return ErrorTerms(float(train[N_u]), float(gen[N_u]),
                      float(train[N_u] + gen[N_u] + bias), bias)


test_error_expectation.__test__ = False  # keep pytest from collecting the import


def loss_curve(model, stats=None, plugin_correction=True):
    """``L_hat`` for every ``N_u`` in ``0..N_s``."""
    train, gen = error_curve(model, stats)
    return train + (2.0 if plugin_correction else 1.0) * gen


def critical_sample_size(model, N_psi, stats=None):
    """Diagnostic ``N_phi tr[S_s - S_hat] / lambda_{N_psi}``.

    Above this sample count the minimizer is expected to settle on ``N_psi``.
    """
    stats = model.stats if stats is None else stats
    lam = model.eig.values
    if not 1 <= N_psi <= lam.size or lam[N_psi - 1] <= 0:
        return float("inf")
    return float(stats.n_phi * np.trace(stats.sigma_s - model.sigma_hat) / lam[N_psi - 1])


@dataclass
class GridRecord:
    N_u: int
    K_p: int
    N_phi: int
    training_error: float
    generalization_error: float
    L_hat: float
    phi_rank: int = 0


@dataclass
class SelectionReport:
    grid: list
    chosen_N_u: int
    chosen_K_p: int
    T: int
    K_f: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def chosen(self):
        for rec in self.grid:
            if rec.N_u == self.chosen_N_u and rec.K_p == self.chosen_K_p:
                return rec
        raise LookupError("chosen record missing from grid")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["N_u", "K_p", "N_phi", "train_err", "gen_err", "L_hat", "chosen"])
            for rec in self.grid:
                flag = int(rec.N_u == self.chosen_N_u and rec.K_p == self.chosen_K_p)
                writer.writerow([rec.N_u, rec.K_p, rec.N_phi, repr(float(rec.training_error)),
                                 repr(float(rec.generalization_error)), repr(float(rec.L_hat)), flag])


def _pick(records):
    # parsimony on ties: smaller N_u, then smaller K_p
    return min(records, key=lambda r: (r.L_hat, r.N_u, r.K_p))


def select(data, N_u_range, K_p_range=(1,), K_f=1, rel_tol=DEFAULT_REL_TOL,
           plugin_correction=True):
    """Minimize the analytic test-error expectation over a grid.

    Parameters
    ----------
    data : TimeSeries or callable
        A centered series (lag-embedded per ``K_p``) or a callable
        ``K_p -> LagDataset``.
    N_u_range, K_p_range : iterables of int
    K_f : int
        Prediction horizons (ignored when ``data`` is a builder).

    Returns
    -------
    SelectionReport
        Grid sorted by ``(K_p, N_u)``; the chosen record has the smallest
        ``L_hat``.
    plugin_correction : bool
        See :func:`test_error_expectation`.
    """
    N_u_values = sorted(set(int(n) for n in N_u_range))
    K_p_values = sorted(set(int(k) for k in K_p_range))
    if not N_u_values or not K_p_values:
        raise ParameterError("empty selection grid")
    if isinstance(data, TimeSeries):
        def builder(K_p):
            return lag_embed(data, K_p, K_f)
    elif callable(data):
        builder = data
    else:
        raise ParameterError("data must be a TimeSeries or a dataset builder")

    grid = []
    T_used, K_f_used = 0, K_f
    diagnostics = {}
    models = {}
    for K_p in K_p_values:
        try:
            ds = builder(K_p)
            stats = stats_from_dataset(ds)
            model = fit_stats(stats, 1, K_p, ds.mean, rel_tol)
        except PredPCAError as exc:
            raise type(exc)(f"grid point K_p={K_p}: {exc}") from exc
        n_s = stats.n_s
        bad = [n for n in N_u_values if not 1 <= n <= n_s]
        if bad:
            raise ParameterError(f"N_u values {bad} outside [1, {n_s}] at K_p={K_p}")
        train, gen = error_curve(model)
        L = loss_curve(model, plugin_correction=plugin_correction)
        rank = effective_rank(stats.sigma_phi, rel_tol)
        for n in N_u_values:
            grid.append(GridRecord(n, K_p, stats.n_phi, float(train[n]), float(gen[n]),
                                   float(L[n]), rank))
        T_used, K_f_used = stats.count, model.K_f
        models[K_p] = model
        diagnostics[f"phi_rank_Kp{K_p}"] = rank
    best = _pick(grid)
    diagnostics["T_psi_critical"] = critical_sample_size(models[best.K_p], best.N_u)
    return SelectionReport(grid, best.N_u, best.K_p, T_used, K_f_used, diagnostics)


def choose_n_u(model, N_u_range=None, plugin_correction=True):
    """Minimizer of the analytic expectation for an already fitted model."""
    n_s = model.n_s
    values = range(1, n_s + 1) if N_u_range is None else N_u_range
    L = loss_curve(model, plugin_correction=plugin_correction)
    return min(values, key=lambda n: (L[n], n))
