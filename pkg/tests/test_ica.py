import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predpca import ica
from predpca.errors import DimensionError, NumericError, ParameterError


def test_ica_unmixes_laplace_sources():
    rng = np.random.default_rng(0)
    src = rng.laplace(size=(5000, 3))
    mix = rng.standard_normal((3, 3))
    model = ica.fit_ica(src @ mix.T, seed=1)
    # the product of unmixing and mixing is a scaled permutation
    P = np.abs(model.unmixing @ mix)
    P /= P.max(axis=1, keepdims=True)
    assert np.sum(P > 0.2) == 3
    np.testing.assert_allclose(np.sort(P, axis=1)[:, -1], 1.0)


def test_ica_signs_give_positive_skew():
    rng = np.random.default_rng(1)
    src = rng.exponential(size=(4000, 2)) - 1.0
    y = ica.fit_ica(src @ np.array([[1.0, 0.5], [0.2, 1.0]]).T).transform(
        src @ np.array([[1.0, 0.5], [0.2, 1.0]]).T)
    skew = np.mean((y - y.mean(0)) ** 3, axis=0)
    assert np.all(skew > 0)


def test_ica_rank_deficient_and_divergence():
    X = np.random.default_rng(0).standard_normal((100, 1)) @ np.ones((1, 3))
    with pytest.raises(NumericError):
        ica.fit_ica(X)
    with pytest.raises(DimensionError):
        ica.fit_ica(np.zeros(5))


def test_ica_round_trip(tmp_path):
    X = np.random.default_rng(0).laplace(size=(500, 2))
    m = ica.fit_ica(X, max_iter=50)
    m.label_map = np.array([1, 0])
    ica.save_ica(m, tmp_path / "ica")
    back = ica.load_ica(tmp_path / "ica")
    np.testing.assert_array_equal(back.unmixing, m.unmixing)
    np.testing.assert_array_equal(back.labels(X[:20]), m.labels(X[:20]))


def test_wta_ties_and_rows():
    np.testing.assert_array_equal(ica.wta([1.0, 3.0, 3.0]), [0, 1, 0])
    np.testing.assert_array_equal(ica.wta(np.array([[0.0, 1.0], [2.0, 1.0]])), [[0, 1], [1, 0]])
    with pytest.raises(ParameterError):
        ica.wta([])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 100), st.integers(0, 30))
def test_rollout_of_permutation_cycles(n, start, horizon):
    start %= n
    perm = np.roll(np.eye(n), 1, axis=0)  # e_i -> e_{i+1}
    labels = ica.greedy_rollout(perm, np.eye(n)[start], horizon)
    np.testing.assert_array_equal(labels, (start + np.arange(horizon)) % n)


def test_rollout_validation():
    with pytest.raises(DimensionError):
        ica.greedy_rollout(np.eye(3), np.zeros(2), 5)
    with pytest.raises(ParameterError):
        ica.greedy_rollout(np.eye(2), np.zeros(2), -1)


def test_transition_oracle_and_rollout_from_data():
    n = 5
    seq = np.arange(200) % n
    codes = np.eye(n)[seq] + 0.01 * np.random.default_rng(0).standard_normal((200, n))
    B = ica.fit_code_transition(codes[:-1], codes[1:])
    labels = ica.greedy_rollout(B, codes[3], 12)
    np.testing.assert_array_equal(labels, (3 + np.arange(12)) % n)


def test_second_order_rollout_fibonacci():
    n = 10
    c = [0, 1]
    for _ in range(600):
        c.append((c[-1] + c[-2]) % n)
    codes = np.eye(n)[c]
    B = ica.fit_code_transition2(codes[:-2], codes[1:-1], codes[2:])
    assert B.shape == (n, n * n)
    labels = ica.greedy_rollout2(B, (codes[0], codes[1]), 30)
    np.testing.assert_array_equal(labels, c[:30])


def test_matching_and_categorization_error():
    labels = np.array([0, 1, 2, 0, 1, 2])
    comps = np.eye(3)[[2, 0, 1, 2, 0, 1]]
    mapping = ica.match_components(comps, labels)
    np.testing.assert_array_equal(mapping, [1, 2, 0])
    assert ica.categorization_error(comps, labels) == 0.0
    extra = np.hstack([comps, np.zeros((6, 1))])
    assert ica.match_components(extra, labels)[3] == -1
    assert ica.categorization_error(comps, labels, np.array([0, 1, 2])) == 1.0


def test_write_rollout(tmp_path):
    ica.write_rollout([], tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().strip() == "step,label"
    ica.write_rollout([1, 2], tmp_path / "b.csv", truth=[1, 3])
    lines = (tmp_path / "b.csv").read_text().split()
    assert lines == ["step,label,truth,correct", "0,1,1,1", "1,2,3,0"]
