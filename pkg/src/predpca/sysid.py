"""System identification from a fitted PredPCA model.

Each estimator is a plain function of arrays; :func:`identify_all` chains
them. Latent quantities are identified only up to an invertible transform of
the basis coordinates and an orthogonal transform of the state coordinates,
so comparisons with ground truth go through the invariant metrics in
:mod:`predpca.synth`.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import synth
from .core import fit_stats, predicted_inputs
from .dataio import TimeSeries, apply_center, center, lag_embed, load_bundle, save_bundle
from .errors import DimensionError, FormatError, NumericError, ParameterError, PredPCAError
from .modelsel import choose_n_u
from .numerics import (
    DEFAULT_REL_TOL,
    EigenSystem,
    general_inverse,
    psd_repair,
    reg_inverse,
    stats_from_dataset,
    sym_eig,
    symmetrize,
)

BUNDLE_KIND = "system-estimate"
GAP_MIN = 2.0
# basis-transition modes below this fraction of the top singular value are
# not inverted when recovering the basis covariance
PSI_TOL = 1e-3


@dataclass
class SystemEstimate:
    """Every identified quantity plus what is needed to predict states from new data."""

    A_hat: np.ndarray
    Psi_hat: np.ndarray
    Sigma_psi_hat: np.ndarray
    Sigma_omega_hat: np.ndarray
    B_hat: np.ndarray
    Sigma_z_hat: np.ndarray
    basis_eig: EigenSystem
    N_psi_hat: int
    N_x_hat: int
    Q: np.ndarray
    K_p: int
    mean: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def Sigma_x_hat(self):
        return np.eye(self.N_x_hat)

    @property
    def state_map(self):
        """``Lambda^{-1/2} P^T``: basis coordinates to whitened states."""
        vals = self.basis_eig.values[: self.N_x_hat]
        return self.basis_eig.top(self.N_x_hat).T / np.sqrt(vals)[:, None]

    def predict_states(self, series, k=1):
        """``x_hat_{t+k|t}`` for every anchor of ``series`` (raw units, re-centered here)."""
        if not 1 <= k <= self.Q.shape[0]:
            raise ParameterError(f"k must lie in 1..{self.Q.shape[0]}")
        ts = series if isinstance(series, TimeSeries) else TimeSeries(series)
        ds = lag_embed(apply_center(ts, self.mean), self.K_p, 1)
        basis = ds.phi @ self.Q[k - 1].T @ self.A_hat
        return basis @ self.state_map.T

    def to_arrays(self):
        return {
            "A_hat": self.A_hat, "Psi_hat": self.Psi_hat, "Sigma_psi_hat": self.Sigma_psi_hat,
            "Sigma_omega_hat": self.Sigma_omega_hat, "B_hat": self.B_hat,
            "Sigma_z_hat": self.Sigma_z_hat, "basis_values": self.basis_eig.values,
            "basis_vectors": self.basis_eig.vectors, "Q": self.Q, "mean": self.mean,
        }


def save_estimate(est, directory):
    meta = {"N_psi_hat": int(est.N_psi_hat), "N_x_hat": int(est.N_x_hat), "K_p": int(est.K_p),
            "diagnostics": {k: v for k, v in est.diagnostics.items()
                            if isinstance(v, (int, float, str, bool, list))}}
    save_bundle(directory, BUNDLE_KIND, est.to_arrays(), meta)


def load_estimate(directory):
    kind, arr, meta = load_bundle(directory)
    if kind != BUNDLE_KIND:
        raise FormatError(f"{directory}: bundle kind {kind!r}, expected {BUNDLE_KIND!r}")
    eig = EigenSystem(arr["basis_values"], arr["basis_vectors"])
    return SystemEstimate(arr["A_hat"], arr["Psi_hat"], arr["Sigma_psi_hat"],
                          arr["Sigma_omega_hat"], arr["B_hat"], arr["Sigma_z_hat"], eig,
                          meta["N_psi_hat"], meta["N_x_hat"], arr["Q"], meta["K_p"],
                          arr["mean"], dict(meta.get("diagnostics", {})))


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

def estimate_A(model, N_psi):
    """Top ``N_psi`` eigenvectors of the predicted-input covariance."""
    n_s = model.eig.values.size
    if not 0 <= N_psi <= n_s:
        raise ParameterError(f"N_psi must lie in [0, {n_s}]")
    return model.eig.top(N_psi).copy()


def project_basis(rows, A_hat):
    """Rows ``v_t`` mapped to ``A_hat^T v_t``."""
    rows = rows.data if isinstance(rows, TimeSeries) else np.asarray(rows, dtype=float)
    A_hat = np.asarray(A_hat, dtype=float)
    if rows.shape[-1] != A_hat.shape[0]:
        raise DimensionError(f"rows have {rows.shape[-1]} entries, A_hat has {A_hat.shape[0]} rows")
    return rows @ A_hat


def _lag_cov(X, lag, base=0):
    # <x_{t+lag} x_{t+base}^T> over all t where both exist (base <= lag)
    n = X.shape[0] - lag
    return X[lag:lag + n].T @ X[base:base + n] / n


def estimate_Psi(basis_now, rel_tol=DEFAULT_REL_TOL):
    """``<psi_{t+2} psi_t^T> <psi_{t+1} psi_t^T>^{-1}`` from current-input bases.

    Both cross-covariances skip a lag, so white observation noise drops out.
    """
    X = np.asarray(basis_now, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3:
        raise DimensionError("need at least 3 rows of basis coordinates")
    n = X.shape[0] - 2
    M2 = X[2:].T @ X[:n] / n
    M1 = X[1:n + 1].T @ X[:n] / n
    inv, bad = general_inverse(M1, rel_tol)
    if bad:
        raise NumericError(f"lag-1 basis covariance is singular along modes {bad}")
    return M2 @ inv


def estimate_sigma_psi(basis_now, Psi_hat, psi_tol=PSI_TOL, warn=True):
    """Symmetrized ``Psi^{-1} <psi_{t+1} psi_t^T>``, clipped to be PSD.

    Singular directions of ``Psi_hat`` below ``psi_tol`` times the largest
    are left out of the inverse (with a warning naming them); inverting them
    would blow sampling noise up into spurious dominant modes.
    """
    X = np.asarray(basis_now, dtype=float)
    M = _lag_cov(X, 1)
    inv, bad = general_inverse(Psi_hat, psi_tol)
    if len(bad) == Psi_hat.shape[0] and bad:
        raise NumericError("basis transition is numerically zero")
    if bad and warn:
        warnings.warn(f"basis transition nearly singular; modes {bad} not inverted",
                      RuntimeWarning, stacklevel=2)
    S = 0.5 * (inv @ M + M.T @ inv.T)
    return psd_repair(S, "Sigma_psi_hat", warn)[0]


def estimate_sigma_omega(sigma_s, A_hat, Sigma_psi_hat, warn=True):
    """``Sigma_s - A Sigma_psi A^T``, clipped to be PSD.

    ``sigma_s`` may be a matrix or a :class:`SuffStats`.
    """
    S = sigma_s.sigma_s if hasattr(sigma_s, "sigma_s") else np.asarray(sigma_s, dtype=float)
    A_hat = np.asarray(A_hat, dtype=float)
    if A_hat.shape[1] == 0:
        return symmetrize(S)
    return psd_repair(S - A_hat @ Sigma_psi_hat @ A_hat.T, "Sigma_omega_hat", warn)[0]


def estimate_states(basis_eig, N_x, basis_pred):
    """Whitened projection ``Lambda^{-1/2} P^T psi_hat`` onto the top ``N_x`` modes."""
    if not 1 <= N_x <= len(basis_eig):
        raise ParameterError(f"N_x must lie in [1, {len(basis_eig)}]")
    vals = basis_eig.values[:N_x]
    if np.any(vals <= 0):
        raise NumericError(f"non-positive basis eigenvalue among the top {N_x}: {vals.min():.3g}")
    proj = basis_eig.top(N_x).T / np.sqrt(vals)[:, None]
    return np.asarray(basis_pred, dtype=float) @ proj.T


def estimate_B(states_pred2, basis_pred1, rel_tol=DEFAULT_REL_TOL):
    """Regress two-step state predictions on one-step basis predictions."""
    Y = np.asarray(states_pred2, dtype=float)
    X = np.asarray(basis_pred1, dtype=float)
    if Y.shape[0] != X.shape[0]:
        raise DimensionError("state and basis series must be row-aligned")
    n = X.shape[0]
    return (Y.T @ X / n) @ reg_inverse(X.T @ X / n, rel_tol)


def estimate_sigma_z(B_hat, Sigma_psi_hat, warn=True):
    """``I - B Sigma_psi B^T`` (state covariance fixed to the identity), clipped to be PSD."""
    n_x = B_hat.shape[0]
    return psd_repair(np.eye(n_x) - B_hat @ Sigma_psi_hat @ B_hat.T, "Sigma_z_hat", warn)[0]


def estimate_N_x(basis_eig, rel_tol=DEFAULT_REL_TOL, gap_min=GAP_MIN):
    """Position of the largest ratio ``lambda_i / lambda_{i+1}``.

    Only eigenvalues above ``rel_tol * lambda_max`` take part. When no ratio
    reaches ``gap_min`` the spectrum has no gap and the full count is
    returned with a warning.
    """
    vals = np.asarray(basis_eig.values if isinstance(basis_eig, EigenSystem) else basis_eig,
                      dtype=float)
    if vals.size == 0 or vals[0] <= 0:
        raise ParameterError("need at least one positive eigenvalue")
    vals = vals[vals > rel_tol * vals[0]]
    if vals.size < 2:
        return int(vals.size)
    ratios = vals[:-1] / vals[1:]
    i = int(np.argmax(ratios))
    if ratios[i] < gap_min:
        warnings.warn(f"no spectrum gap (largest ratio {ratios[i]:.3g} < {gap_min}); "
                      "using all modes", RuntimeWarning, stacklevel=2)
        return int(vals.size)
    return i + 1


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------

def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PredPCAError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


def identify_all(series, K_p, K_f=1, N_u=None, N_x=None, N_u_range=None,
                 rel_tol=DEFAULT_REL_TOL, gap_min=GAP_MIN, plugin_correction=True,
                 psi_tol=PSI_TOL):
    """Run every estimator on one observation sequence.

    Parameters
    ----------
    series : TimeSeries or array
        Raw observations; centered here.
    K_p, K_f : int
        Lag order and horizons for the maps. Two-step maps are always fitted
        because the transition estimator needs them; the predicted covariance
        (and hence ``A_hat``) uses only the first ``K_f``.
    N_u : int, optional
        Basis count; chosen by minimizing the test-error expectation when
        omitted (over ``N_u_range``, default ``1..N_s``).
    N_x : int, optional
        State count; estimated from the basis spectrum when omitted.
    """
    ts = series if isinstance(series, TimeSeries) else TimeSeries(series)
    ts = center(ts)
    K_f_fit = max(K_f, 2)
    ds = _stage("lag_embed", lag_embed, ts, K_p, K_f_fit)
    stats = stats_from_dataset(ds)
    model = _stage("fit", fit_stats, stats, 1, K_p, ts.mean, rel_tol, K_f_cov=K_f)
    if N_u is None:
        N_u = choose_n_u(model, N_u_range, plugin_correction=plugin_correction)
    N_u = int(N_u)
    A_hat = _stage("A", estimate_A, model, N_u)
    basis_now = project_basis(ts.data, A_hat)
    Psi_hat = _stage("Psi", estimate_Psi, basis_now, rel_tol)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        Sigma_psi = _stage("Sigma_psi", estimate_sigma_psi, basis_now, Psi_hat, psi_tol)
        Sigma_omega = _stage("Sigma_omega", estimate_sigma_omega, stats, A_hat, Sigma_psi)
    basis_eig = sym_eig(Sigma_psi)
    if N_x is None:
        N_x = _stage("N_x", estimate_N_x, basis_eig, rel_tol, gap_min)
    basis_pred1 = predicted_inputs(model, ds.phi, 1) @ A_hat
    basis_pred2 = predicted_inputs(model, ds.phi, 2) @ A_hat
    states2 = _stage("states", estimate_states, basis_eig, N_x, basis_pred2)
    B_hat = _stage("B", estimate_B, states2, basis_pred1, rel_tol)
    with warnings.catch_warnings(record=True) as caught_z:
        warnings.simplefilter("always")
        Sigma_z = estimate_sigma_z(B_hat, Sigma_psi)
    notes = [str(w.message) for w in caught + caught_z]
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    diagnostics = {"T": int(ts.T), "K_f": int(K_f), "clip_warnings": notes}
    return SystemEstimate(A_hat, Psi_hat, Sigma_psi, Sigma_omega, B_hat, Sigma_z, basis_eig,
                          N_u, int(N_x), model.Q, K_p, ts.mean, diagnostics)


# --------------------------------------------------------------------------
# evaluation against ground truth
# --------------------------------------------------------------------------

def _spectrum_rel(M_hat, M_true):
    denom = np.linalg.norm(np.linalg.eigvals(M_true))
    d = synth.spectrum_distance(M_hat, M_true)
    return d / denom if denom > 0 else d


def compare_to_truth(est, gt):
    """Ambiguity-invariant errors of each estimator, keyed ``estimator.metric``.

    ``*_sq`` entries are squared errors used for convergence-order checks.
    Procrustes-aligned ratios resolve only an orthogonal ambiguity and are
    labeled as such.
    """
    out = {}
    A = gt.A
    if est.A_hat.shape[1] == A.shape[1]:
        ang = synth.subspace_angle(est.A_hat, A)
        out["A.max_angle"] = float(ang.max())
        out["A.sq"] = float(np.sum(ang ** 2))
        out["A.procrustes_ratio"] = synth.procrustes_ratio(est.A_hat.T, A.T)
    Sigma_psi = gt.sigma_psi()
    same_basis = est.Psi_hat.shape == Sigma_psi.shape
    if same_basis and gt.kind == "linear":
        d = synth.spectrum_distance(est.Psi_hat, gt.B)
        out["Psi.spectrum"] = d
        out["Psi.sq"] = d ** 2
    if same_basis:
        d = synth.spectrum_distance(est.Sigma_psi_hat, Sigma_psi)
        out["Sigma_psi.spectrum"] = d
        out["Sigma_psi.sq"] = d ** 2
    rel = synth.relative_frobenius(est.Sigma_omega_hat, gt.Sigma_omega)
    out["Sigma_omega.rel_frobenius"] = rel
    out["Sigma_omega.sq"] = rel ** 2
    if est.N_x_hat == gt.n_x and same_basis:
        BSB_hat = est.B_hat @ est.Sigma_psi_hat @ est.B_hat.T
        BSB = gt.B @ Sigma_psi @ gt.B.T
        d = synth.spectrum_distance(BSB_hat, BSB)
        out["B.spectrum_BSBt"] = d
        out["B.sq"] = d ** 2
        if gt.kind == "linear":
            out["B.singular_values"] = synth.singular_value_distance(est.B_hat, gt.B)
    if est.N_x_hat == gt.n_x:
        d = synth.spectrum_distance(est.Sigma_z_hat, gt.Sigma_z)
        out["Sigma_z.spectrum"] = d
        out["Sigma_z.rel_spectrum"] = _spectrum_rel(est.Sigma_z_hat, gt.Sigma_z)
        out["Sigma_z.sq"] = d ** 2
    out["N_psi.error"] = int(est.N_psi_hat - gt.n_psi)
    out["N_x.error"] = int(est.N_x_hat - gt.n_x)
    if gt.kind != "linear":
        sx, sp = synth.linearization_sigmas(gt.rho, gt.n_x, gt.n_psi)
        out["sigma_x"] = sx
        out["sigma_psi"] = sp
    return out


def write_report(est, path, truth_metrics=None):
    """CSV with columns ``estimator,metric,value``."""
    rows = [("N_psi", "count", est.N_psi_hat), ("N_x", "count", est.N_x_hat),
            ("A", "orthonormality_error",
             float(np.linalg.norm(est.A_hat.T @ est.A_hat - np.eye(est.A_hat.shape[1])))),
            ("Sigma_psi", "trace", float(np.trace(est.Sigma_psi_hat))),
            ("Sigma_omega", "trace", float(np.trace(est.Sigma_omega_hat))),
            ("Sigma_z", "trace", float(np.trace(est.Sigma_z_hat))),
            ("B", "spectral_norm", float(np.linalg.norm(est.B_hat, 2)) if est.B_hat.size else 0.0)]
    for key, value in sorted((truth_metrics or {}).items()):
        name, _, metric = key.partition(".")
        rows.append((name, "truth_" + (metric or name), value))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["estimator", "metric", "value"])
        for name, metric, value in rows:
            writer.writerow([name, metric, repr(float(value)) if isinstance(value, (float, np.floating)) else value])
