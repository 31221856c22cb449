import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predpca import synth
from predpca.errors import ParameterError


def test_linear_system_has_unit_state_covariance():
    gt = synth.gen_linear(4, 12, 0.9, 1.0, seed=3)
    np.testing.assert_allclose(gt.A.T @ gt.A, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(gt.B @ gt.B.T + gt.Sigma_z, np.eye(4), atol=1e-12)
    assert max(abs(np.linalg.eigvals(gt.B))) <= 0.9 + 1e-12
    assert np.trace(gt.Sigma_omega) == pytest.approx(4.0)


def test_noise_profiles():
    iso = synth.gen_linear(3, 10, noise_ratio=2.0, seed=0)
    an = synth.gen_linear(3, 10, noise_ratio=2.0, seed=0, noise="anisotropic")
    assert np.trace(iso.Sigma_omega) == pytest.approx(6.0)
    assert np.trace(an.Sigma_omega) == pytest.approx(6.0)
    d = np.linalg.eigvalsh(an.Sigma_omega)
    assert d.max() / d.min() > 10
    with pytest.raises(ParameterError):
        synth.gen_linear(3, 10, noise="pink")


def test_generator_validation():
    with pytest.raises(ParameterError):
        synth.gen_linear(6, 5)
    with pytest.raises(ParameterError):
        synth.gen_linear(2, 5, spectral_radius=1.0)
    with pytest.raises(ParameterError):
        synth.simulate(synth.gen_linear(2, 5), 0)


def test_simulation_deterministic_and_stationary():
    gt = synth.gen_linear(3, 8, 0.8, 0.5, seed=1)
    a = synth.simulate(gt, 50000, seed=2)
    b = synth.simulate(gt, 50000, seed=2)
    np.testing.assert_array_equal(a.observations, b.observations)
    np.testing.assert_allclose(np.cov(a.states.T), np.eye(3), atol=0.05)
    states, obs = a
    assert obs.shape == (50000, 8)


def test_gauss_hermite_moments():
    x, w = synth.gauss_hermite()
    assert np.sum(w) == pytest.approx(1.0)
    assert np.sum(w * x ** 2) == pytest.approx(1.0)
    assert np.sum(w * x ** 4) == pytest.approx(3.0)


def test_rho_statistics_identity():
    m2, d1, d3 = synth.rho_statistics("identity")
    assert (m2, d1) == (pytest.approx(1.0), pytest.approx(1.0))
    assert d3 == pytest.approx(0.0, abs=1e-12)
    assert synth.linearization_sigmas("identity", 3, 30) == (pytest.approx(0.0), pytest.approx(0.0))
    sx_small, _ = synth.linearization_sigmas("tanh", 3, 30)
    sx_big, _ = synth.linearization_sigmas("tanh", 3, 300)
    assert sx_big < sx_small


def test_nonlinear_features_nest_across_sizes():
    a = synth.gen_nonlinear(2, 10, 30, seed=5, pilot=2000)
    b = synth.gen_nonlinear(2, 20, 30, seed=5, pilot=2000)
    assert a.info["conditioning_ratio"] > 1 and b.info["conditioning_ratio"] > 1
    assert a.n_psi == 10 and b.n_psi == 20
    np.testing.assert_allclose(a.A.T @ a.A, np.eye(10), atol=1e-10)


def test_nonlinear_simulation_is_roughly_white():
    gt = synth.gen_nonlinear(2, 20, 30, seed=0)
    traj = synth.simulate(gt, 20000, seed=1)
    np.testing.assert_allclose(np.cov(traj.states.T), np.eye(2), atol=0.15)
    np.testing.assert_allclose(traj.bases.mean(axis=0), 0, atol=0.1)


def test_subspace_angle_known_value():
    U = np.array([[1.0], [0.0]])
    V = np.array([[1.0], [1.0]]) / np.sqrt(2)
    assert synth.subspace_angle(U, V)[0] == pytest.approx(np.pi / 4)


def test_spectrum_distance_oracle():
    assert synth.spectrum_distance(np.diag([1.0, 2.0]), np.diag([1.0, 3.0])) == pytest.approx(1.0)
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    # eigenvalues +-i matched against themselves
    assert synth.spectrum_distance(rot, rot.T) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_metrics_invariant_to_ambiguity(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((3, 3))
    S = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    assert synth.spectrum_distance(S @ M @ np.linalg.inv(S), M) < 1e-6
    O = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    A = np.linalg.qr(rng.standard_normal((6, 3)))[0]
    assert synth.subspace_angle(A @ O, A).max() < 1e-6
    assert synth.procrustes_ratio((A @ O).T, A.T) < 1e-10


def test_canonical_correlations_and_aligned_mse(rng):
    X = rng.standard_normal((500, 3))
    Y = X @ rng.standard_normal((3, 3))
    np.testing.assert_allclose(synth.canonical_correlations(X, Y), 1.0, atol=1e-10)
    assert synth.aligned_mse(Y, X) < 1e-20


def test_categorical_sequence_follows_cycle():
    tmpl = synth.categorical_templates(4, 6, seed=0)
    obs, labels = synth.categorical_sequence(tmpl, 50, noise=0.0, p_replace=0.0, seed=1)
    assert np.all(np.diff(labels) % 4 == 1)
    np.testing.assert_array_equal(obs, tmpl[labels])
