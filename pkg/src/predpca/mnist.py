"""Digit-sequence experiments: IDX loading, sequence building, PCA compression and the
PredPCA + ICA categorical pipeline.

Works with any labelled image set; MNIST IDX files are read by :func:`load_mnist`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import ica
from .core import encode, fit_batch
from .dataio import TimeSeries, lag_embed, load_idx
from .errors import DataError, DimensionError, ParameterError
from .modelsel import choose_n_u
from .numerics import sym_eig

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}
ORDERS = ("ascending", "fibonacci")


def _find(directory, stem):
    for name in (stem, stem + ".gz"):
        path = Path(directory) / name
        if path.exists():
            return path
    raise DataError(f"{directory}: missing {stem}[.gz]")


def load_mnist(directory):
    """Return ``(train_images, train_labels, test_images, test_labels)``.

    Images come back flattened to rows of floats in ``[0, 1]``.
    """
    out = {}
    for key, stem in MNIST_FILES.items():
        arr = load_idx(_find(directory, stem))
        if key.endswith("images"):
            if arr.ndim != 3:
                raise DataError(f"{stem}: expected 3-D image data")
            arr = arr.reshape(arr.shape[0], -1).astype(float) / 255.0
        elif arr.ndim != 1:
            raise DataError(f"{stem}: expected 1-D labels")
        out[key] = arr
    for split in ("train", "test"):
        if out[f"{split}_images"].shape[0] != out[f"{split}_labels"].shape[0]:
            raise DataError(f"{split} image and label counts differ")
    return out["train_images"], out["train_labels"], out["test_images"], out["test_labels"]


def label_sequence(T, order="ascending", start=None, n_classes=10, rng=None):
    """Deterministic digit order: ``c+1`` (ascending) or ``c_{t-1}+c_{t-2}`` (Fibonacci), mod 10."""
    if order not in ORDERS:
        raise ParameterError(f"order must be one of {ORDERS}")
    rng = np.random.default_rng(0) if rng is None else rng
    c = np.empty(T, dtype=int)
    if T == 0:
        return c
    c[0] = rng.integers(n_classes) if start is None else start
    if T > 1:
        c[1] = (c[0] + 1) % n_classes if order == "ascending" else rng.integers(n_classes)
    for t in range(2, T):
        c[t] = (c[t - 1] + 1) % n_classes if order == "ascending" else (c[t - 1] + c[t - 2]) % n_classes
    return c


def build_sequence(images, labels, T, order="ascending", p_replace=0.1, p_invert=0.1, seed=0,
                   max_value=1.0):
    """Image sequence following a digit order, with random corruptions.

    With probability ``p_replace`` the displayed image is a random digit
    instead of the scheduled one (the schedule itself carries on); with
    probability ``p_invert`` the displayed image is inverted
    (``max_value - pixel``).

    Returns ``(frames, shown_labels)``.
    """
    images = np.asarray(images, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if images.shape[0] != labels.shape[0]:
        raise DimensionError("images and labels must have the same length")
    if not (0 <= p_replace <= 1 and 0 <= p_invert <= 1):
        raise ParameterError("probabilities must lie in [0, 1]")
    classes = np.unique(labels)
    n_classes = int(classes.max()) + 1
    pools = [np.flatnonzero(labels == c) for c in range(n_classes)]
    if any(p.size == 0 for p in pools):
        raise DataError("every class needs at least one image")
    rng = np.random.default_rng(seed)
    schedule = label_sequence(T, order, n_classes=n_classes, rng=rng)
    shown = schedule.copy()
    replace = rng.random(T) < p_replace
    shown[replace] = rng.integers(n_classes, size=int(replace.sum()))
    idx = np.array([pools[c][rng.integers(pools[c].size)] for c in shown], dtype=int)
    frames = images[idx].copy()
    invert = rng.random(T) < p_invert
    frames[invert] = max_value - frames[invert]
    return frames, shown


@dataclass
class Compressor:
    """Projection onto the top principal directions of the training images.

    The projection is applied to uncentered images so that the class
    offsets survive; that keeps one extra direction for the shared mean,
    which the winner-takes-all code needs to tell all classes apart.
    """

    components: np.ndarray  # (n, D)

    def __call__(self, images):
        return np.asarray(images, dtype=float) @ self.components.T


def fit_compressor(images, n=40):
    X = np.asarray(images, dtype=float)
    if not 1 <= n <= X.shape[1]:
        raise ParameterError(f"n must lie in [1, {X.shape[1]}]")
    Xc = X - X.mean(axis=0)
    # thin SVD is cheaper than the D x D covariance for large images
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:n]
    signs = np.sign(comps[np.arange(n), np.argmax(np.abs(comps), axis=1)])
    signs[signs == 0] = 1.0
    return Compressor(comps * signs[:, None])


@dataclass
class PipelineResult:
    N_u: int
    categorization_error: float
    rollout_errors: int
    rollout_horizon: int
    rollout: np.ndarray
    label_map: np.ndarray
    L_curve: dict


def run_pipeline(train_s, train_labels, test_s, test_labels, K_p=10, N_u=10, order="ascending",
                 horizon=10000, seed=0, sweep=None):
    """PredPCA on uncentered inputs, ICA of the codes, then WTA labels and greedy rollout.

    ``train_labels``/``test_labels`` are the labels shown at each step.
    Categorization error is measured on the test sequence for the predicted
    next digit. The rollout starts from the first test code and is compared
    with the clean digit schedule. ``sweep`` (an iterable of ``N_u``) adds
    the test-error expectation over those values to the result.
    """
    order_k = 2 if order == "ascending" else 3
    ds = lag_embed(TimeSeries(train_s), K_p, order_k)
    model = fit_batch(ds, N_u)
    codes = [encode(model, ds.phi, k) for k in range(1, order_k + 1)]
    icam = ica.fit_ica(codes[0], center=False, seed=seed)
    y = [icam.transform(c) for c in codes]
    next_train = np.asarray(train_labels)[K_p:K_p + ds.n_rows]
    label_map = ica.match_components(y[0], next_train)
    icam.label_map = label_map

    te = lag_embed(TimeSeries(test_s), K_p, 1)
    y_test = icam.transform(encode(model, te.phi, 1))
    next_test = np.asarray(test_labels)[K_p:K_p + te.n_rows]
    err = ica.categorization_error(y_test, next_test, label_map)

    if order == "ascending":
        Bt = ica.fit_code_transition(y[0], y[1])
        roll = ica.greedy_rollout(Bt, y_test[0], horizon, label_map)
        truth = label_sequence(horizon, "ascending", start=int(next_test[0]))
    else:
        Bt = ica.fit_code_transition2(y[0], y[1], y[2])
        y2 = icam.transform(encode(model, te.phi[1:2], 1))
        roll = ica.greedy_rollout2(Bt, (y_test[0], y2[0]), horizon, label_map)
        truth = np.empty(horizon, dtype=int)
        truth[:2] = next_test[:2][:horizon]
        for t in range(2, horizon):
            truth[t] = (truth[t - 1] + truth[t - 2]) % 10
    n_err = int(np.sum(roll != truth))
    curve = {}
    if sweep is not None:
        from .modelsel import loss_curve

        L = loss_curve(model)
        curve = {int(n): float(L[n]) for n in sweep}
    return PipelineResult(N_u, err, n_err, horizon, roll, label_map, curve)


def sweep_n_u(train_s, K_p, N_u_range):
    """``N_u`` minimizing the test-error expectation on a digit sequence."""
    ds = lag_embed(TimeSeries(train_s), K_p, 1)
    model = fit_batch(ds, 1)
    return choose_n_u(model, N_u_range)


def spectrum(images):
    """Eigenvalues of the image covariance (diagnostic)."""
    X = np.asarray(images, dtype=float)
    return sym_eig(np.cov(X.T)).values
