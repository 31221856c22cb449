"""Comparison predictors: autoregression, plain PCA and a Kalman-filter state-space model.

The Kalman model is fitted by expectation-maximization with a Rauch-Tung-
Striebel smoother in the E-step and the closed-form M-step.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import synth
from .core import fit_batch, predict
from .dataio import LagDataset, TimeSeries, apply_center, center, lag_embed
from .errors import DimensionError, NumericError, ParameterError
from .modelsel import select
from .numerics import DEFAULT_REL_TOL, reg_inverse, stats_from_dataset, sym_eig, symmetrize

LOG2PI = np.log(2.0 * np.pi)


# --------------------------------------------------------------------------
# AR and PCA
# --------------------------------------------------------------------------

def fit_ar(dataset, rel_tol=DEFAULT_REL_TOL):
    """Plain least-squares autoregression: PredPCA keeping every component."""
    return fit_batch(dataset, dataset.n_s, rel_tol)


@dataclass
class PCABaseline:
    """PCA of the inputs followed by a least-squares predictor on the codes.

    ``W`` has orthonormal rows; with ``source="s"`` it acts on each lag block
    of ``phi``, with ``source="phi"`` on the whole regressor.
    """

    W: np.ndarray
    G: np.ndarray  # (K_f, N_s, n_codes)
    source: str
    K_p: int
    mean: np.ndarray

    @property
    def subspace(self):
        return self.W.T

    def codes(self, phi):
        phi = np.atleast_2d(phi)
        if self.source == "phi":
            return phi @ self.W.T
        n_s = self.W.shape[1]
        blocks = [phi[:, j * n_s:(j + 1) * n_s] @ self.W.T for j in range(self.K_p)]
        return np.hstack(blocks)

    def predict(self, phi, k=1, add_mean=False):
        pred = self.codes(phi) @ self.G[k - 1].T
        return pred + self.mean if add_mean else pred


def fit_pca_baseline(dataset, N_u, source="s", rel_tol=DEFAULT_REL_TOL):
    """Top ``N_u`` eigenvectors of the input covariance, then regression to the targets."""
    if source not in ("s", "phi"):
        raise ParameterError("source must be 's' or 'phi'")
    X = dataset.current() if source == "s" else dataset.phi
    if not 1 <= N_u <= X.shape[1]:
        raise ParameterError(f"N_u must lie in [1, {X.shape[1]}]")
    eig = sym_eig(X.T @ X / X.shape[0])
    W = eig.top(N_u).T.copy()
    base = PCABaseline(W, np.zeros((0,)), source, dataset.K_p, dataset.mean)
    V = base.codes(dataset.phi)
    inv = reg_inverse(V.T @ V / V.shape[0], rel_tol)
    base.G = np.stack([(t.T @ V / V.shape[0]) @ inv for t in dataset.targets])
    return base


# --------------------------------------------------------------------------
# Kalman filter / smoother / EM
# --------------------------------------------------------------------------

@dataclass
class KalmanModel:
    """``s_t = A x_t + omega_t``, ``x_{t+1} = B x_t + z_t``, ``x_0 ~ N(mu0, P0)``."""

    A_k: np.ndarray
    B_k: np.ndarray
    Sigma_omega_k: np.ndarray
    Sigma_z_k: np.ndarray
    mu0: np.ndarray
    P0: np.ndarray
    mean: np.ndarray = None
    loglik: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def n_x(self):
        return self.B_k.shape[0]

    def copy(self):
        return KalmanModel(self.A_k.copy(), self.B_k.copy(), self.Sigma_omega_k.copy(),
                           self.Sigma_z_k.copy(), self.mu0.copy(), self.P0.copy(),
                           None if self.mean is None else self.mean.copy(), list(self.loglik),
                           self.n_iter)


@dataclass
class FilterResult:
    x_pred: np.ndarray  # (T, n_x) mean of x_t given s_{<t}
    P_pred: np.ndarray  # (T, n_x, n_x)
    x_filt: np.ndarray
    P_filt: np.ndarray
    loglik: float


def _freeze_tol(P):
    return 1e-12 * max(1.0, float(np.max(np.abs(P))))


def kalman_filter(model, S):
    """Forward pass. Once the covariance recursion has converged it is held fixed.

    The covariances do not depend on the data, so after convergence only the
    means are propagated, which keeps long sequences cheap.
    """
    S = np.asarray(S, dtype=float)
    T, n_s = S.shape
    A, B, R, Q = model.A_k, model.B_k, model.Sigma_omega_k, model.Sigma_z_k
    n = model.n_x
    if A.shape != (n_s, n):
        raise DimensionError(f"A_k is {A.shape}, data has {n_s} columns")
    P_pred = np.empty((T, n, n))
    P_filt = np.empty((T, n, n))
    gains = []
    Sinv_list, logdets = [], []
    Pp = model.P0
    frozen_at = T
    for t in range(T):
        P_pred[t] = Pp
        Sm = symmetrize(A @ Pp @ A.T + R)
        L = np.linalg.cholesky(Sm)
        Sinv = np.linalg.inv(Sm)
        K = Pp @ A.T @ Sinv
        Pf = symmetrize(Pp - K @ A @ Pp)
        P_filt[t] = Pf
        gains.append(K)
        Sinv_list.append(Sinv)
        logdets.append(2.0 * np.sum(np.log(np.diag(L))))
        Pp_next = symmetrize(B @ Pf @ B.T + Q)
        if t > 0 and np.max(np.abs(Pp_next - Pp)) < _freeze_tol(Pp):
            frozen_at = t + 1
            P_pred[frozen_at:] = Pp_next
            P_filt[frozen_at:] = Pf
            break
        Pp = Pp_next
    # means
    x_pred = np.empty((T, n))
    x_filt = np.empty((T, n))
    ll = 0.0
    xp = model.mu0.copy()
    for t in range(T):
        j = min(t, len(gains) - 1)
        x_pred[t] = xp
        e = S[t] - A @ xp
        ll -= 0.5 * (n_s * LOG2PI + logdets[j] + e @ Sinv_list[j] @ e)
        xf = xp + gains[j] @ e
        x_filt[t] = xf
        xp = B @ xf
    return FilterResult(x_pred, P_pred, x_filt, P_filt, float(ll))


def kalman_smoother(model, filt):
    """Rauch-Tung-Striebel pass; returns smoothed means, covariances and lag-one covariances.

    ``lag1[t]`` is ``Cov(x_{t+1}, x_t | all data)`` for ``t = 0..T-2``.
    """
    T, n = filt.x_filt.shape
    B = model.B_k
    xs = np.empty((T, n))
    V = np.empty((T, n, n))
    lag1 = np.empty((max(T - 1, 0), n, n))
    xs[-1] = filt.x_filt[-1]
    V[-1] = filt.P_filt[-1]
    J_prev = None
    for t in range(T - 2, -1, -1):
        Pf, Pp = filt.P_filt[t], filt.P_pred[t + 1]
        if J_prev is not None and np.array_equal(Pf, filt.P_filt[t + 1]) \
                and np.array_equal(Pp, filt.P_pred[t + 2]):
            J = J_prev
        else:
            J = np.linalg.solve(Pp.T, (Pf @ B.T).T).T
        xs[t] = filt.x_filt[t] + J @ (xs[t + 1] - B @ filt.x_filt[t])
        V[t] = symmetrize(Pf + J @ (V[t + 1] - Pp) @ J.T)
        lag1[t] = V[t + 1] @ J.T
        J_prev = J
    return xs, V, lag1


def kalman_loglik(model, S):
    return kalman_filter(model, S).loglik


def _m_step(model, S, xs, V, lag1, update_init=True):
    T = S.shape[0]
    Exx = V + np.einsum("ti,tj->tij", xs, xs)
    Exx_sum = Exx.sum(axis=0)
    A = (S.T @ xs) @ np.linalg.inv(Exx_sum)
    R = symmetrize((S.T @ S - A @ (xs.T @ S)) / T)
    cross = lag1.sum(axis=0) + xs[1:].T @ xs[:-1]  # sum_t E[x_{t+1} x_t^T]
    prev = Exx_sum - Exx[-1]
    nxt = Exx_sum - Exx[0]
    B = cross @ np.linalg.inv(prev)
    Q = symmetrize((nxt - B @ cross.T) / (T - 1))
    mu0, P0 = (xs[0].copy(), symmetrize(V[0])) if update_init else (model.mu0, model.P0)
    return KalmanModel(A, B, R, Q, mu0, P0, model.mean, model.loglik, model.n_iter)


def _pca_init(S, n_x):
    eig = sym_eig(S.T @ S / S.shape[0])
    n_s = S.shape[1]
    rest = eig.values[n_x:]
    # with no residual eigenvalues start the noise at a fraction of the weakest mode;
    # a near-zero start leaves EM crawling out of a degenerate corner
    sigma2 = float(rest.mean()) if rest.size else 0.25 * float(eig.values[-1])
    sigma2 = max(sigma2, 1e-6 * float(eig.values[0]))
    A = eig.top(n_x) * np.sqrt(np.clip(eig.values[:n_x] - sigma2, 1e-6 * eig.values[0], None))
    B = 0.5 * np.eye(n_x)
    return KalmanModel(A, B, sigma2 * np.eye(n_s), 0.75 * np.eye(n_x), np.zeros(n_x), np.eye(n_x))


def _random_init(S, n_x, rng):
    n_s = S.shape[1]
    scale = np.sqrt(np.mean(S ** 2))
    A = rng.standard_normal((n_s, n_x)) * scale / np.sqrt(n_x)
    B = rng.standard_normal((n_x, n_x))
    B *= 0.9 / max(np.max(np.abs(np.linalg.eigvals(B))), 1e-12)
    return KalmanModel(A, B, scale ** 2 * np.eye(n_s), np.eye(n_x), np.zeros(n_x), np.eye(n_x))


def kalman_em(series, N_x, max_iter=100, seed=0, init="pca", tol=1e-6, model=None,
              slack=1e-6):
    """Fit a linear-Gaussian state-space model by EM.

    Parameters
    ----------
    series : TimeSeries or array
        Observations; centered here (the mean is stored on the model).
    init : {"pca", "random"}
        PCA start (loadings from the top eigenvectors, ``B = 0.5 I``) or a
        random start drawn from ``seed``. Ignored when ``model`` is given.
    tol : float
        Stop once the log-likelihood improves by less than ``tol`` relative
        to its magnitude.

    Raises
    ------
    NumericError
        If the log-likelihood becomes non-finite.
    """
    ts = series if isinstance(series, TimeSeries) else TimeSeries(series)
    ts = center(ts)
    S = ts.data
    if not 1 <= N_x <= S.shape[1]:
        raise ParameterError(f"N_x must lie in [1, {S.shape[1]}]")
    if S.shape[0] < 3:
        raise DimensionError("need at least 3 time steps")
    if model is not None:
        cur = model.copy()
        cur.loglik = []
    elif init == "pca":
        cur = _pca_init(S, N_x)
    elif init == "random":
        cur = _random_init(S, N_x, np.random.default_rng(seed))
    else:
        raise ParameterError(f"unknown init {init!r}")
    cur.mean = ts.mean
    trace = []
    for it in range(max_iter + 1):
        try:
            filt = kalman_filter(cur, S)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"EM iteration {it}: {exc}") from exc
        if not np.isfinite(filt.loglik):
            raise NumericError(f"non-finite log-likelihood at EM iteration {it}")
        trace.append(filt.loglik)
        if it > 0:
            change = trace[-1] - trace[-2]
            if change < -slack * abs(trace[-2]):
                warnings.warn(f"log-likelihood decreased by {-change:.3g} at EM iteration {it}",
                              RuntimeWarning, stacklevel=2)
            if abs(change) < tol * abs(trace[-2]):
                break
        if it == max_iter:
            break
        xs, V, lag1 = kalman_smoother(cur, filt)
        cur = _m_step(cur, S, xs, V, lag1)
        cur.n_iter = it + 1
    cur.loglik = trace
    return cur


def kalman_predict(model, series, k=1):
    """Row ``t`` predicts ``s_{t+k}`` from ``s_0..s_t`` (``k = 0`` gives the filtered fit)."""
    if k < 0:
        raise ParameterError("k must be non-negative")
    ts = series if isinstance(series, TimeSeries) else TimeSeries(series)
    mean = np.zeros(ts.n_s) if model.mean is None else model.mean
    S = apply_center(ts, mean).data
    filt = kalman_filter(model, S)
    Bk = np.linalg.matrix_power(model.B_k, k)
    return filt.x_filt @ (model.A_k @ Bk).T + mean


# --------------------------------------------------------------------------
# benchmark harness
# --------------------------------------------------------------------------

METHODS = ("predpca", "ar", "pca", "kalman")
BENCH_COLUMNS = ["method", "T", "seed", "noise_ratio", "N_u", "test_error", "test_nmse"]


@dataclass
class Scenario:
    N_x: int = 5
    N_s: int = 30
    noise_ratio: float = 1.0
    spectral_radius: float = 0.9
    noise: str = "isotropic"
    K_p: int = 5
    test_T: int = 20000
    kalman_iter: int = 30


def _errors(pred, target):
    err = float(np.mean(np.sum((target - pred) ** 2, axis=1)))
    return err, err / float(np.mean(np.sum(target ** 2, axis=1)))


def run_case(method, T, seed, scenario):
    """One benchmark row; a pure function of its arguments."""
    sc = scenario
    gt = synth.gen_linear(sc.N_x, sc.N_s, sc.spectral_radius, sc.noise_ratio, seed=seed,
                          noise=sc.noise)
    train = TimeSeries(synth.simulate(gt, T, seed=10_000 + seed).observations)
    test = TimeSeries(synth.simulate(gt, sc.test_T, seed=20_000 + seed).observations)
    tr = center(train)
    ds = lag_embed(tr, sc.K_p, 1)
    te = lag_embed(apply_center(test, tr.mean), sc.K_p, 1)
    target = te.targets[0]
    stats = stats_from_dataset(ds)
    n_u = select(lambda K_p: ds, range(1, sc.N_s + 1), (sc.K_p,)).chosen_N_u
    if method == "predpca":
        pred = predict(fit_batch(ds, n_u), te.phi, add_mean=False)
    elif method == "ar":
        n_u = sc.N_s
        pred = predict(fit_ar(ds), te.phi, add_mean=False)
    elif method == "pca":
        pred = fit_pca_baseline(ds, n_u).predict(te.phi)
    elif method == "kalman":
        km = kalman_em(train, n_u, max_iter=sc.kalman_iter, seed=seed)
        full = kalman_predict(km, test, 1) - tr.mean
        # row t of full predicts s_{t+1}; align with the lag-embedded anchors
        pred = full[sc.K_p - 1: sc.K_p - 1 + te.n_rows]
    else:
        raise ParameterError(f"unknown method {method!r}")
    del stats
    err, nmse = _errors(pred, target)
    return {"method": method, "T": int(T), "seed": int(seed), "noise_ratio": sc.noise_ratio,
            "N_u": int(n_u), "test_error": err, "test_nmse": nmse}


def _run_case_star(args):
    return run_case(*args)


def resolve_jobs(jobs=None):
    """Worker count: explicit value, else ``PREDPCA_JOBS``, else 1; never above the CPU count."""
    if jobs is None:
        jobs = int(os.environ.get("PREDPCA_JOBS", "1") or 1)
    cap = os.environ.get("PREDPCA_JOBS")
    if cap:
        jobs = min(jobs, int(cap))
    return max(1, min(int(jobs), os.cpu_count() or 1))


def run_benchmark(methods=METHODS, T_grid=(1000, 10000), seeds=range(3), scenario=None,
                  jobs=None):
    """Full cross product of methods x T x seeds, sorted by (method, T, seed)."""
    scenario = scenario or Scenario()
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ParameterError(f"unknown methods {bad}; choose from {METHODS}")
    cases = [(m, int(T), int(s), scenario) for m in methods for T in T_grid for s in seeds]
    jobs = resolve_jobs(jobs)
    if jobs == 1:
        rows = [run_case(*c) for c in cases]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_case_star, cases))
    return sorted(rows, key=lambda r: (r["method"], r["T"], r["seed"]))


def write_benchmark(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
