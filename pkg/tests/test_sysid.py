import csv
import warnings

import numpy as np
import pytest

from predpca import sysid, synth
from predpca.errors import NumericError, ParameterError
from predpca.numerics import EigenSystem


@pytest.fixture(scope="module")
def estimate(linear_system):
    gt, traj = linear_system
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = sysid.identify_all(traj.observations, K_p=5)
    return gt, est


def test_psi_oracle_on_clean_states():
    gt = synth.gen_linear(3, 6, 0.9, 0.1, seed=2)
    traj = synth.simulate(gt, 200000, seed=3)
    Psi = sysid.estimate_Psi(traj.states)
    np.testing.assert_allclose(Psi, gt.B, atol=0.02)
    S = sysid.estimate_sigma_psi(traj.states, Psi)
    np.testing.assert_allclose(S, np.eye(3), atol=0.03)


def test_psi_singular_raises():
    X = np.zeros((50, 2))
    X[:, 0] = np.random.default_rng(0).standard_normal(50)
    with pytest.raises(NumericError, match="modes"):
        sysid.estimate_Psi(X)


def test_sigma_psi_truncation_warns():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((500, 2))
    with pytest.warns(RuntimeWarning, match="not inverted"):
        sysid.estimate_sigma_psi(X, np.diag([1.0, 1e-6]))


def test_sigma_z_identity_when_no_transition():
    np.testing.assert_allclose(sysid.estimate_sigma_z(np.zeros((2, 3)), np.eye(3)), np.eye(2))


def test_n_x_gap_and_no_gap():
    assert sysid.estimate_N_x(np.array([10.0, 9.0, 8.5, 0.1, 0.09])) == 3
    with pytest.warns(RuntimeWarning, match="no spectrum gap"):
        assert sysid.estimate_N_x(np.array([1.0, 0.9, 0.8])) == 3
    with pytest.raises(ParameterError):
        sysid.estimate_N_x(np.zeros(3))


def test_estimate_states_whitens():
    eig = EigenSystem(np.array([4.0, 1.0]), np.eye(2))
    out = sysid.estimate_states(eig, 2, np.array([[2.0, 1.0]]))
    np.testing.assert_allclose(out, [[1.0, 1.0]])
    with pytest.raises(ParameterError):
        sysid.estimate_states(eig, 3, np.zeros((1, 2)))


def test_identify_all_recovers_linear_system(estimate):
    gt, est = estimate
    assert est.N_psi_hat == 5 and est.N_x_hat == 5
    m = sysid.compare_to_truth(est, gt)
    assert m["A.max_angle"] < 0.1
    assert m["Psi.spectrum"] < 0.1
    assert m["Sigma_omega.rel_frobenius"] < 0.2
    assert m["N_x.error"] == 0
    np.testing.assert_allclose(est.Sigma_x_hat, np.eye(5), atol=1e-8)


def test_predict_states_shape(estimate, linear_system):
    _, est = estimate
    obs = linear_system[1].observations[:100]
    assert est.predict_states(obs, 1).shape == (100 - 5 + 1 - 1, 5)
    with pytest.raises(ParameterError):
        est.predict_states(obs, 3)


def test_estimate_round_trip_and_report(estimate, tmp_path):
    gt, est = estimate
    sysid.save_estimate(est, tmp_path / "est")
    back = sysid.load_estimate(tmp_path / "est")
    np.testing.assert_array_equal(back.B_hat, est.B_hat)
    assert back.N_x_hat == est.N_x_hat
    sysid.write_report(est, tmp_path / "r.csv", sysid.compare_to_truth(est, gt))
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert {"estimator", "metric", "value"} == set(rows[0])
    assert any(r["metric"] == "truth_max_angle" for r in rows)
    for r in rows:
        float(r["value"])


def test_nonlinear_report_has_sigma_diagnostics():
    gt = synth.gen_nonlinear(2, 20, 40, seed=0, pilot=5000)
    traj = synth.simulate(gt, 20000, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = sysid.identify_all(traj.observations, K_p=1, N_x=2)
    m = sysid.compare_to_truth(est, gt)
    assert m["sigma_x"] > 0 and m["sigma_psi"] > 0


def test_stage_labels_errors(linear_system):
    obs = linear_system[1].observations[:4]
    with pytest.raises(Exception, match=r"\[lag_embed\]"):
        sysid.identify_all(obs, K_p=5)
