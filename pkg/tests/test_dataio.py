import gzip

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from predpca import dataio
from predpca.errors import DataError, DimensionError, FormatError, ParameterError


def test_pmat_1x1_is_24_bytes(tmp_path):
    path = tmp_path / "one.pmat"
    dataio.save_matrix(np.array([[3.5]]), path)
    assert path.stat().st_size == 24
    assert dataio.load_matrix(path).data[0, 0] == 3.5


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_pmat_round_trip_is_bit_exact(m):
    back = dataio.decode_pmat(dataio.encode_pmat(m))
    assert back.shape == m.shape
    assert back.tobytes() == m.tobytes()


def test_pmat_rejects_bad_magic_and_truncation():
    buf = dataio.encode_pmat(np.eye(2))
    with pytest.raises(FormatError):
        dataio.decode_pmat(b"XXXX" + buf[4:])
    with pytest.raises(FormatError):
        dataio.decode_pmat(buf[:-3])
    with pytest.raises(FormatError):
        dataio.decode_pmat(buf[:5])


def test_pmat_rejects_nonfinite():
    with pytest.raises(DataError):
        dataio.encode_pmat(np.array([[np.nan]]))


def test_csv_round_trip(tmp_path):
    m = np.arange(6.0).reshape(3, 2) / 7
    dataio.save_csv(m, tmp_path / "m.csv")
    np.testing.assert_array_equal(dataio.load_series(tmp_path / "m.csv").data, m)


def test_csv_bad_content(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3,oops\n")
    with pytest.raises((FormatError, DataError)):
        dataio.load_csv(tmp_path / "bad.csv")


@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip(tmp_path, gz):
    arr = np.arange(24, dtype=np.uint8).reshape(2, 3, 4)
    path = tmp_path / "x-idx3-ubyte"
    dataio.save_idx(arr, path)
    if gz:
        gzpath = tmp_path / "x-idx3-ubyte.gz"
        gzpath.write_bytes(gzip.compress(path.read_bytes()))
        path = gzpath
    np.testing.assert_array_equal(dataio.load_idx(path), arr)


def test_idx_bad_magic(tmp_path):
    (tmp_path / "bad").write_bytes(b"\x00\x00\x0d\x01" + b"\x00" * 8)
    with pytest.raises(FormatError):
        dataio.load_idx(tmp_path / "bad")


def test_timeseries_validation():
    with pytest.raises(DataError):
        dataio.TimeSeries(np.array([[1.0, np.inf]]))
    with pytest.raises(DimensionError):
        dataio.TimeSeries(np.zeros((0, 3)))


def test_single_row_series_is_accepted():
    ts = dataio.TimeSeries(np.ones((1, 3)))
    assert ts.T == 1
    with pytest.raises(DimensionError):
        dataio.lag_embed(ts, 1, 1)


def test_lag_embed_layout():
    data = np.arange(10.0)[:, None] * np.array([[1.0, 10.0]])
    ds = dataio.lag_embed(dataio.TimeSeries(data), K_p=3, K_f=2)
    assert ds.n_rows == 10 - 3 + 1 - 2
    # first anchor is t=2: phi = (s_2, s_1, s_0), targets s_3 and s_4
    np.testing.assert_array_equal(ds.phi[0], [2, 20, 1, 10, 0, 0])
    np.testing.assert_array_equal(ds.targets[0, 0], [3, 30])
    np.testing.assert_array_equal(ds.targets[1, 0], [4, 40])
    np.testing.assert_array_equal(ds.current(), data[2:8])


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 5))
def test_lag_embed_row_count(K_p, K_f, extra):
    T = K_p + K_f + extra
    ds = dataio.lag_embed(np.zeros((T, 2)), K_p, K_f)
    assert ds.n_rows == T - K_p + 1 - K_f
    assert ds.phi.shape == (ds.n_rows, 2 * K_p)


def test_lag_embed_parameters():
    with pytest.raises(ParameterError):
        dataio.lag_embed(np.zeros((5, 1)), 0, 1)


def test_center_and_apply_center_preserve_raw():
    data = np.random.default_rng(0).normal(3.0, 1.0, (50, 4))
    c = dataio.center(dataio.TimeSeries(data))
    np.testing.assert_allclose(c.data.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(c.raw(), data)
    other = dataio.apply_center(dataio.TimeSeries(data[:10]), c.mean)
    np.testing.assert_allclose(other.data, data[:10] - c.mean)


def test_split_contiguous():
    ts = dataio.TimeSeries(np.arange(10.0)[:, None])
    a, b = dataio.split_contiguous(ts, 0.8)
    assert a.T == 8 and b.T == 2
    with pytest.raises(ParameterError):
        dataio.split_contiguous(ts, 1.0)


def test_bundle_round_trip(tmp_path):
    arrays = {"A": np.eye(3), "v": np.arange(3.0)}
    dataio.save_bundle(tmp_path / "b", "thing", arrays, {"n": 3, "name": "x"})
    kind, back, meta = dataio.load_bundle(tmp_path / "b")
    assert kind == "thing" and meta["n"] == 3 and meta["name"] == "x"
    np.testing.assert_array_equal(back["A"], np.eye(3))
    np.testing.assert_array_equal(np.ravel(back["v"]), np.arange(3.0))
