import numpy as np
import pytest

from predpca import dataio, mnist
from predpca.errors import DataError, ParameterError


def test_label_sequences():
    np.testing.assert_array_equal(mnist.label_sequence(12, start=7), (7 + np.arange(12)) % 10)
    fib = mnist.label_sequence(20, "fibonacci", start=3)
    assert all(fib[t] == (fib[t - 1] + fib[t - 2]) % 10 for t in range(2, 20))
    with pytest.raises(ParameterError):
        mnist.label_sequence(5, "random")


def test_build_sequence_replacement_and_inversion():
    images = np.repeat(np.arange(10.0)[:, None] / 10, 4, axis=1)
    labels = np.arange(10)
    frames, shown = mnist.build_sequence(images, labels, 200, p_replace=0.0, p_invert=0.0)
    assert np.all(np.diff(shown) % 10 == 1)
    np.testing.assert_allclose(frames[:, 0], shown / 10)
    frames, shown = mnist.build_sequence(images, labels, 2000, p_replace=0.2, p_invert=0.2, seed=3)
    broken = np.mean(np.diff(shown) % 10 != 1)
    assert 0.2 < broken < 0.5  # a replaced frame breaks two transitions
    inverted = ~np.isclose(frames[:, 0], shown / 10)
    assert 0.15 < inverted.mean() < 0.25


def test_build_sequence_missing_class():
    with pytest.raises(DataError):
        mnist.build_sequence(np.zeros((3, 2)), np.array([0, 2, 2]), 5)


def test_load_mnist_from_idx(tmp_path):
    rng = np.random.default_rng(0)
    for key, stem in mnist.MNIST_FILES.items():
        n = 6 if key.startswith("train") else 4
        arr = rng.integers(0, 256, (n, 3, 3)) if key.endswith("images") else np.arange(n) % 10
        dataio.save_idx(arr, tmp_path / stem)
    tr_x, tr_y, te_x, te_y = mnist.load_mnist(tmp_path)
    assert tr_x.shape == (6, 9) and te_y.shape == (4,)
    assert 0.0 <= tr_x.min() and tr_x.max() <= 1.0
    (tmp_path / mnist.MNIST_FILES["test_labels"]).unlink()
    with pytest.raises(DataError):
        mnist.load_mnist(tmp_path)


def test_compressor_keeps_top_directions():
    X = np.random.default_rng(0).standard_normal((300, 6)) * np.array([5, 3, 1, 0.1, 0.1, 0.1])
    comp = mnist.fit_compressor(X, 3)
    assert comp(X).shape == (300, 3)
    assert np.abs(comp.components[:, :3]).max(axis=1).min() > 0.9


def test_pipeline_on_synthetic_categories():
    from predpca import synth

    tmpl = synth.categorical_templates(10, 30, seed=0)
    s_tr, l_tr = synth.categorical_sequence(tmpl, 6000, 0.3, 0.1, seed=1)
    s_te, l_te = synth.categorical_sequence(tmpl, 1000, 0.3, 0.0, seed=2)
    res = mnist.run_pipeline(s_tr, l_tr, s_te, l_te, K_p=1, N_u=10, horizon=200,
                             sweep=range(5, 16))
    assert res.categorization_error < 0.05
    assert res.rollout_errors == 0
    assert min(res.L_curve, key=res.L_curve.get) == 10
