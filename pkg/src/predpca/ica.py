"""Independent components of PredPCA codes, winner-takes-all labels and greedy rollout."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataio import load_bundle, save_bundle
from .errors import DimensionError, FormatError, NumericError, ParameterError
from .numerics import DEFAULT_REL_TOL, reg_inverse, sym_eig

BUNDLE_KIND = "ica-model"


@dataclass
class ICAModel:
    """Linear unmixing ``y = unmixing @ (u - mean)``.

    ``unmixing`` already includes the whitening step. ``label_map`` (when
    set) gives the category assigned to each output component.
    """

    unmixing: np.ndarray
    mean: np.ndarray
    n_iter: int
    final_update: float
    label_map: np.ndarray = None

    def transform(self, codes):
        return (np.atleast_2d(codes) - self.mean) @ self.unmixing.T

    def labels(self, codes):
        winners = np.argmax(self.transform(codes), axis=1)
        return winners if self.label_map is None else self.label_map[winners]


def save_ica(model, directory):
    arrays = {"unmixing": model.unmixing, "mean": model.mean}
    if model.label_map is not None:
        arrays["label_map"] = model.label_map.astype(float)
    save_bundle(directory, BUNDLE_KIND, arrays,
                {"n_iter": int(model.n_iter), "final_update": float(model.final_update)})


def load_ica(directory):
    kind, arr, meta = load_bundle(directory)
    if kind != BUNDLE_KIND:
        raise FormatError(f"{directory}: bundle kind {kind!r}, expected {BUNDLE_KIND!r}")
    label_map = arr.get("label_map")
    return ICAModel(arr["unmixing"], arr["mean"].ravel(), meta["n_iter"], meta["final_update"],
                    None if label_map is None else label_map.ravel().astype(int))


def _whitener(X, rel_tol):
    eig = sym_eig(X.T @ X / X.shape[0])
    vals = eig.values
    if vals[0] <= 0 or np.any(vals < rel_tol * vals[0]):
        raise NumericError("codes are rank deficient; reduce the number of components")
    return eig.vectors.T / np.sqrt(vals)[:, None]


def fit_ica(codes, rate=0.05, max_iter=2000, seed=0, tol=1e-6, center=True,
            rel_tol=DEFAULT_REL_TOL):
    """Natural-gradient ICA with a ``tanh`` score.

    The codes are whitened first (by their covariance, or by their second
    moment when ``center`` is False, which keeps the offset of non-negative
    categorical codes). Each epoch applies
    ``M += rate * (I - <tanh(y) y^T>) M`` over the whole series and stops once
    the Frobenius norm of the update falls below ``tol``. Components are
    finally signed to have non-negative skewness.

    Raises
    ------
    NumericError
        If the iteration diverges (try a smaller rate) or the codes are
        rank deficient.
    """
    U = np.asarray(codes, dtype=float)
    if U.ndim != 2 or U.shape[0] < 2:
        raise DimensionError("codes must be a 2-D array with at least two rows")
    mean = U.mean(axis=0) if center else np.zeros(U.shape[1])
    X = U - mean
    Wh = _whitener(X, rel_tol)
    Z = X @ Wh.T
    n = Z.shape[1]
    rng = np.random.default_rng(seed)
    # small random rotation away from the identity breaks symmetric saddles
    M = np.linalg.qr(np.eye(n) + 0.01 * rng.standard_normal((n, n)))[0]
    eye = np.eye(n)
    update = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        Y = Z @ M.T
        step = rate * (eye - np.tanh(Y).T @ Y / Z.shape[0]) @ M
        M = M + step
        update = float(np.linalg.norm(step))
        if not np.isfinite(update) or update > 1e6:
            raise NumericError(f"ICA diverged at epoch {it}; use a smaller rate")
        if update < tol:
            break
    unmixing = M @ Wh
    Y = X @ unmixing.T
    skew = np.mean((Y - Y.mean(axis=0)) ** 3, axis=0)
    unmixing *= np.where(skew < 0, -1.0, 1.0)[:, None]
    if abs(np.linalg.det(unmixing)) < 1e-12:
        raise NumericError("unmixing matrix became singular")
    return ICAModel(unmixing, mean, it, update)


def wta(y):
    """One-hot vector (or rows) at the argmax; ties go to the lowest index."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ParameterError("wta needs a non-empty input")
    out = np.zeros_like(y)
    if y.ndim == 1:
        out[np.argmax(y)] = 1.0
    else:
        out[np.arange(y.shape[0]), np.argmax(y, axis=1)] = 1.0
    return out


def fit_code_transition(codes_now, codes_next, rel_tol=DEFAULT_REL_TOL):
    """Least-squares ``B`` with ``codes_next ~ B codes_now`` (rows are samples)."""
    X = np.asarray(codes_now, dtype=float)
    Y = np.asarray(codes_next, dtype=float)
    if X.shape[0] != Y.shape[0]:
        raise DimensionError("code series must be row-aligned")
    n = X.shape[0]
    return (Y.T @ X / n) @ reg_inverse(X.T @ X / n, rel_tol)


def _kron_rows(a, b):
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def fit_code_transition2(codes1, codes2, codes3, rel_tol=DEFAULT_REL_TOL):
    """Second-order map ``codes3 ~ B (codes2 kron codes1)``; ``B`` is ``N x N^2``."""
    return fit_code_transition(_kron_rows(np.asarray(codes2, float), np.asarray(codes1, float)),
                               codes3, rel_tol)


def _label(v, label_map):
    i = int(np.argmax(v))
    return i if label_map is None else int(label_map[i])


def greedy_rollout(B_tilde, initial, horizon, label_map=None):
    """Labels of ``u_0, u_1, ...`` with ``u_k = B sigma(u_{k-1})``.

    The first label is that of ``initial`` itself; ``horizon`` labels are
    returned in total.
    """
    B_tilde = np.asarray(B_tilde, dtype=float)
    u = np.asarray(initial, dtype=float).ravel()
    if B_tilde.shape != (u.size, u.size):
        raise DimensionError(f"B_tilde must be {u.size}x{u.size}")
    if horizon < 0:
        raise ParameterError("horizon must be non-negative")
    labels = []
    for _ in range(horizon):
        labels.append(_label(u, label_map))
        u = B_tilde @ wta(u)
    return np.array(labels, dtype=int)


def greedy_rollout2(B_tilde, initial_pair, horizon, label_map=None):
    """Second-order rollout ``u_k = B (sigma(u_{k-1}) kron sigma(u_{k-2}))``.

    ``initial_pair`` is ``(u_0, u_1)``; their labels open the sequence.
    """
    u_prev, u = (np.asarray(v, dtype=float).ravel() for v in initial_pair)
    n = u.size
    B_tilde = np.asarray(B_tilde, dtype=float)
    if B_tilde.shape != (n, n * n):
        raise DimensionError(f"B_tilde must be {n}x{n * n}")
    if horizon < 0:
        raise ParameterError("horizon must be non-negative")
    labels = [_label(u_prev, label_map), _label(u, label_map)][:horizon]
    while len(labels) < horizon:
        u_prev, u = u, B_tilde @ np.kron(wta(u), wta(u_prev))
        labels.append(_label(u, label_map))
    return np.array(labels, dtype=int)


def match_components(components, labels, n_labels=None):
    """Greedy component-to-label assignment by co-activation count.

    Returns an integer array mapping each component to a label (``-1`` for
    components left unmatched when there are more components than labels).
    """
    Y = np.asarray(components, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if Y.shape[0] != labels.shape[0]:
        raise DimensionError("components and labels must have the same length")
    n_comp = Y.shape[1]
    n_labels = int(labels.max()) + 1 if n_labels is None else n_labels
    winners = np.argmax(Y, axis=1)
    co = np.zeros((n_comp, n_labels))
    np.add.at(co, (winners, labels), 1.0)
    mapping = -np.ones(n_comp, dtype=int)
    co = co.copy()
    for _ in range(min(n_comp, n_labels)):
        j, l = np.unravel_index(np.argmax(co), co.shape)
        mapping[j] = l
        co[j, :] = -1.0
        co[:, l] = -1.0
    return mapping


def categorization_error(components, labels, mapping=None):
    """False discovery rate of the winner-takes-all component after matching."""
    Y = np.asarray(components, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if mapping is None:
        mapping = match_components(Y, labels)
    predicted = np.asarray(mapping)[np.argmax(Y, axis=1)]
    return float(np.mean(predicted != labels))


def write_rollout(labels, path, truth=None):
    """CSV with columns ``step,label`` (plus ``truth,correct`` when given)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if truth is None:
            writer.writerow(["step", "label"])
            for k, lab in enumerate(labels):
                writer.writerow([k, int(lab)])
        else:
            writer.writerow(["step", "label", "truth", "correct"])
            for k, (lab, tru) in enumerate(zip(labels, truth)):
                writer.writerow([k, int(lab), int(tru), int(lab == tru)])
