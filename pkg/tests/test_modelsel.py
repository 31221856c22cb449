import numpy as np
import pytest

from predpca import core, dataio, modelsel
from predpca.errors import ParameterError


def test_error_terms_oracle(linear_series):
    ds = dataio.lag_embed(linear_series, 2, 1)
    model = core.fit_batch(ds, 3)
    terms = modelsel.test_error_expectation(model, plugin_correction=False)
    P = model.W.T
    S_s = model.stats.sigma_s
    train = 0.5 * (np.trace(S_s) - model.eig.values[:3].sum())
    gen = 0.5 * ds.n_phi / ds.n_rows * np.trace(P.T @ (S_s - model.sigma_hat) @ P)
    assert terms.training_error == pytest.approx(train, rel=1e-10)
    assert terms.generalization_error == pytest.approx(gen, rel=1e-10)
    assert terms.L_hat == pytest.approx(train + gen, rel=1e-10)
    corrected = modelsel.test_error_expectation(model)
    assert corrected.L_hat == pytest.approx(train + 2 * gen, rel=1e-10)
    assert corrected.plugin_bias == pytest.approx(gen)


def test_training_error_equals_empirical_loss(linear_series):
    ds = dataio.lag_embed(linear_series, 3, 1)
    model = core.fit_batch(ds, 4)
    terms = modelsel.test_error_expectation(model)
    assert terms.training_error == pytest.approx(core.heldout_loss(model, ds), rel=1e-8)


def test_loss_curve_and_choice(linear_series):
    model = core.fit_batch(dataio.lag_embed(linear_series, 5, 1), 1)
    L = modelsel.loss_curve(model)
    assert L.shape == (31,)
    assert modelsel.choose_n_u(model) == int(np.argmin(L[1:]) + 1)
    assert modelsel.choose_n_u(model) == 5


def test_select_grid_and_csv(linear_series, tmp_path):
    rep = modelsel.select(linear_series, range(1, 11), K_p_range=(1, 5))
    assert len(rep.grid) == 20
    assert rep.chosen.L_hat == min(r.L_hat for r in rep.grid)
    assert (rep.chosen_N_u, rep.chosen_K_p) == (5, 5)
    rep.to_csv(tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert len(lines) == 21
    assert sum(line.endswith(",1") for line in lines[1:]) == 1


def test_select_rejects_bad_grid(linear_series):
    with pytest.raises(ParameterError):
        modelsel.select(linear_series, [])
    with pytest.raises(ParameterError):
        modelsel.select(linear_series, [0, 1])


def test_critical_sample_size_finite(linear_series):
    model = core.fit_batch(dataio.lag_embed(linear_series, 5, 1), 5)
    assert 0 < modelsel.critical_sample_size(model, 5) < np.inf
    assert modelsel.critical_sample_size(model, 40) == np.inf
