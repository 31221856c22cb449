import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predpca import core, dataio
from predpca.errors import DimensionError, NumericError, ParameterError


def _dataset(seed=0, T=400, n_s=4, K_p=2, K_f=2):
    data = np.random.default_rng(seed).standard_normal((T, n_s)).cumsum(axis=0) * 0.1
    return dataio.lag_embed(dataio.center(dataio.TimeSeries(data)), K_p, K_f)


def test_maps_match_lstsq_oracle():
    ds = _dataset()
    model = core.fit_batch(ds, 2)
    for k in range(2):
        coef, *_ = np.linalg.lstsq(ds.phi, ds.targets[k], rcond=None)
        np.testing.assert_allclose(model.Q[k], coef.T, atol=1e-8)


def test_predicted_covariance_oracle():
    ds = _dataset(1)
    model = core.fit_batch(ds, 3)
    preds = [ds.phi @ model.Q[k].T for k in range(2)]
    oracle = sum(p.T @ p / p.shape[0] for p in preds) / 2
    np.testing.assert_allclose(model.sigma_hat, oracle, atol=1e-10)
    np.testing.assert_allclose(model.W, model.eig.vectors[:, :3].T)


def test_full_rank_encoder_reproduces_regression():
    ds = _dataset(2)
    model = core.fit_batch(ds, ds.n_s)
    pred = core.predict(model, ds.phi, 1, add_mean=False)
    np.testing.assert_allclose(pred, ds.phi @ model.Q[0].T, atol=1e-10)


def test_encode_single_row_and_matrix_agree():
    ds = _dataset(3)
    model = core.fit_batch(ds, 2)
    np.testing.assert_allclose(core.encode(model, ds.phi[5]), core.encode(model, ds.phi)[5])
    with pytest.raises(DimensionError):
        core.encode(model, np.zeros(3))
    with pytest.raises(ParameterError):
        core.encode(model, ds.phi, k=5)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_orthonormal_encoder_and_monotone_training_error(seed, n_u):
    ds = _dataset(seed, T=200)
    model = core.fit_batch(ds, n_u)
    np.testing.assert_allclose(model.W @ model.W.T, np.eye(n_u), atol=1e-10)
    if n_u < ds.n_s:
        bigger = model.with_dims(n_u + 1)
        assert core.heldout_loss(bigger, ds) <= core.heldout_loss(model, ds) + 1e-12


def test_bad_n_u():
    with pytest.raises(ParameterError):
        core.fit_batch(_dataset(), 0)
    with pytest.raises(ParameterError):
        core.fit_batch(_dataset(), 9)


def test_empirical_error_against_manual():
    ds = _dataset(4)
    model = core.fit_batch(ds, 2)
    r = ds.targets[0] - ds.phi @ model.Q[0].T @ model.W.T @ model.W
    assert core.empirical_error(model, ds) == pytest.approx(np.mean(np.sum(r ** 2, axis=1)))
    assert 0 < core.empirical_error(model, ds, normalize=True) < 1.5


def test_online_matches_batch(linear_series):
    ds = dataio.lag_embed(linear_series, 5, 1)
    batch = core.fit_batch(ds, 5)
    online = core.fit_online(ds, 5, model=batch, lr=0.5 / batch.eig.values[0], tau=np.inf,
                             epochs=200)
    P_on = online.W.T @ online.W
    P_b = batch.W.T @ batch.W
    assert np.linalg.norm(P_on - P_b) < 1e-3
    assert np.linalg.norm(online.W @ online.W.T - np.eye(5)) < 1e-6


def test_online_minibatch_trace_and_divergence():
    ds = _dataset(5)
    model = core.fit_batch(ds, 2)
    _, trace = core.fit_online(ds, 2, model=model, lr=0.05, epochs=3, batch_size=50,
                               return_trace=True)
    assert trace.shape == (3,)
    with pytest.raises(NumericError):
        core.fit_online(ds, 2, model=model, lr=1e6, epochs=5)


def test_subspace_step_vanishes_at_top_eigenvectors():
    ds = _dataset(6)
    model = core.fit_batch(ds, 2)
    s_pred = np.stack([ds.phi @ model.Q[k].T for k in range(2)])
    # the gradient uses the predicted inputs on both sides at the fixed point
    grad = core.subspace_step(model.W, s_pred, s_pred)
    assert np.linalg.norm(grad) < 1e-10


def test_whitened_basis_shape():
    data = np.random.default_rng(0).standard_normal((20, 4))
    out = core.whitened_basis(data, np.eye(4)[:, :2], np.eye(4) * 2)
    np.testing.assert_allclose(out.data, data[:, :2] / 2)
