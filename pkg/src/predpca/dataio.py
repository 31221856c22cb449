"""Observation sequences, lag embedding and on-disk formats.

PMAT layout (little-endian)::

    b"PMAT" | u32 version (=1) | u32 rows | u32 cols | rows*cols float64, row-major

A *bundle* is a directory holding ``manifest.txt`` (versioned ``key = value``
lines, values JSON-encoded) plus one PMAT file per matrix field.
"""

from __future__ import annotations

import gzip
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError, ParameterError

PMAT_MAGIC = b"PMAT"
PMAT_VERSION = 1
PMAT_HEADER = struct.Struct("<4sIII")

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801

MANIFEST_NAME = "manifest.txt"
MANIFEST_HEADER = "predpca-bundle"
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class TimeSeries:
    """A ``T x N_s`` observation sequence (rows are time steps).

    ``mean`` holds the vector that was subtracted from the raw data (zeros when
    the data were never centered).
    """

    data: np.ndarray
    mean: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise DimensionError(f"time series must be a non-empty 2-D array, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise DataError("time series contains NaN or Inf")
        mean = np.zeros(data.shape[1]) if self.mean is None else np.asarray(self.mean, dtype=float)
        if mean.shape != (data.shape[1],):
            raise DimensionError("mean length must equal the number of columns")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mean", mean)

    @property
    def T(self):
        return self.data.shape[0]

    @property
    def n_s(self):
        return self.data.shape[1]

    def raw(self):
        """Data in original (uncentered) units."""
        return self.data + self.mean


@dataclass(frozen=True)
class LagDataset:
    """Paired regressors ``phi_t`` and targets ``s_{t+k}`` for ``k = 1..K_f``.

    Row ``i`` of ``phi`` is ``(s_t, s_{t-1}, ..., s_{t-K_p+1})`` with
    ``t = K_p - 1 + i``; row ``i`` of ``targets[k-1]`` is ``s_{t+k}``.
    """

    phi: np.ndarray
    targets: np.ndarray  # (K_f, T', N_s)
    K_p: int
    K_f: int
    mean: np.ndarray = field(default=None)

    @property
    def n_rows(self):
        return self.phi.shape[0]

    @property
    def n_s(self):
        return self.targets.shape[2]

    @property
    def n_phi(self):
        return self.phi.shape[1]

    def current(self):
        """The ``s_t`` block of ``phi`` (newest lag)."""
        return self.phi[:, : self.n_s]


# --------------------------------------------------------------------------
# PMAT
# --------------------------------------------------------------------------

def _as_matrix(m):
    if isinstance(m, TimeSeries):
        return m.data
    arr = np.asarray(m, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"PMAT stores 2-D matrices, got {arr.ndim}-D")
    return arr


def encode_pmat(m):
    arr = _as_matrix(m)
    if not np.all(np.isfinite(arr)):
        raise DataError("cannot store non-finite entries")
    rows, cols = arr.shape
    header = PMAT_HEADER.pack(PMAT_MAGIC, PMAT_VERSION, rows, cols)
    return header + np.ascontiguousarray(arr, dtype="<f8").tobytes()


def decode_pmat(buf):
    if len(buf) < PMAT_HEADER.size:
        raise FormatError(f"PMAT data too short ({len(buf)} bytes)")
    magic, version, rows, cols = PMAT_HEADER.unpack_from(buf)
    if magic != PMAT_MAGIC:
        raise FormatError(f"bad PMAT magic {magic!r}")
    if version != PMAT_VERSION:
        raise FormatError(f"unsupported PMAT version {version}")
    expected = rows * cols * 8  # python ints, no overflow
    payload = len(buf) - PMAT_HEADER.size
    if payload != expected:
        raise FormatError(f"PMAT payload is {payload} bytes, header implies {expected}")
    arr = np.frombuffer(buf, dtype="<f8", offset=PMAT_HEADER.size).reshape(rows, cols)
    if not np.all(np.isfinite(arr)):
        raise DataError("PMAT file contains NaN or Inf")
    return arr.astype(float)


def save_matrix(m, path):
    """Write a matrix (or the data of a :class:`TimeSeries`) as PMAT."""
    Path(path).write_bytes(encode_pmat(m))


def load_matrix(path):
    """Read a PMAT file into a :class:`TimeSeries` with zero mean."""
    arr = decode_pmat(Path(path).read_bytes())
    if arr.size == 0:
        raise DimensionError("PMAT file holds an empty matrix")
    return TimeSeries(arr, name=Path(path).stem)


def load_csv(path):
    """Comma-separated floats, one row per line, no header."""
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if arr.size == 0:
        raise FormatError(f"{path}: empty CSV")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{path}: non-finite values")
    return TimeSeries(arr, name=Path(path).stem)


def save_csv(m, path):
    np.savetxt(path, _as_matrix(m), delimiter=",", fmt="%.17g")


def load_series(path):
    """Dispatch on suffix: ``.csv`` is parsed as text, anything else as PMAT."""
    if str(path).lower().endswith(".csv"):
        return load_csv(path)
    return load_matrix(path)


# --------------------------------------------------------------------------
# IDX (MNIST container)
# --------------------------------------------------------------------------

def load_idx(path):
    """Read an IDX file (optionally gzip-compressed) into a ``uint8`` array.

    Only the unsigned-byte element type is supported, which covers the MNIST
    image (``0x00000803``) and label (``0x00000801``) files.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 4:
        raise FormatError(f"{path}: too short for an IDX header")
    magic = struct.unpack(">I", buf[:4])[0]
    if magic >> 8 != 0x08 or not 1 <= (magic & 0xFF) <= 3:
        raise FormatError(f"{path}: unknown IDX magic 0x{magic:08x}")
    ndim = magic & 0xFF
    if len(buf) < 4 + 4 * ndim:
        raise FormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(">" + "I" * ndim, buf[4:4 + 4 * ndim])
    n = math.prod(dims)
    body = buf[4 + 4 * ndim:]
    if len(body) != n:
        raise FormatError(f"{path}: expected {n} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims).copy()


def save_idx(arr, path):
    arr = np.asarray(arr, dtype=np.uint8)
    header = struct.pack(">I", 0x0800 | arr.ndim) + struct.pack(">" + "I" * arr.ndim, *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


# --------------------------------------------------------------------------
# preprocessing
# --------------------------------------------------------------------------

def center(series):
    """Subtract column means; the subtracted vector is added to ``mean``."""
    mu = series.data.mean(axis=0)
    return TimeSeries(series.data - mu, series.mean + mu, series.name)


def apply_center(series, mean):
    """Center ``series`` with an externally supplied (training) mean."""
    mean = np.asarray(mean, dtype=float)
    raw = series.raw()
    return TimeSeries(raw - mean, mean, series.name)


def lag_embed(series, K_p, K_f):
    """Build the lag-embedded design: boundary rows are dropped, not padded."""
    if K_p < 1 or K_f < 1:
        raise ParameterError("K_p and K_f must be >= 1")
    data = series.data if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    T = data.shape[0]
    if T <= K_p + K_f - 1:
        raise DimensionError(f"series of length {T} too short for K_p={K_p}, K_f={K_f}")
    n = T - K_p + 1 - K_f
    anchors = np.arange(K_p - 1, K_p - 1 + n)
    phi = np.hstack([data[anchors - j] for j in range(K_p)])
    targets = np.stack([data[anchors + k] for k in range(1, K_f + 1)])
    mean = series.mean if isinstance(series, TimeSeries) else np.zeros(data.shape[1])
    return LagDataset(phi, targets, K_p, K_f, mean)


def split_contiguous(series, train_fraction):
    """First ``floor(fraction * T)`` rows for training, the rest for testing."""
    if not 0 < train_fraction < 1:
        raise ParameterError("train_fraction must lie strictly between 0 and 1")
    cut = int(math.floor(train_fraction * series.T))
    if cut < 1 or cut >= series.T:
        raise DimensionError(f"split of {series.T} rows at {train_fraction} leaves an empty part")
    return (TimeSeries(series.data[:cut], series.mean, series.name),
            TimeSeries(series.data[cut:], series.mean, series.name))


# --------------------------------------------------------------------------
# bundles
# --------------------------------------------------------------------------

def save_bundle(directory, kind, arrays, meta=None):
    """Write ``arrays`` (name -> matrix) and JSON-able ``meta`` to a directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [f"{MANIFEST_HEADER} {MANIFEST_VERSION}", f"kind = {json.dumps(kind)}"]
    for name in sorted(arrays):
        value = np.asarray(arrays[name], dtype=float)
        fname = f"{name}.pmat"
        save_matrix(value.reshape(value.shape[0], -1) if value.ndim > 1 else value[None, :],
                    directory / fname)
        lines.append(f"field.{name} = {json.dumps({'file': fname, 'shape': list(value.shape)})}")
    for key in sorted(meta or {}):
        lines.append(f"meta.{key} = {json.dumps(meta[key])}")
    (directory / MANIFEST_NAME).write_text("\n".join(lines) + "\n")


def load_bundle(directory):
    """Inverse of :func:`save_bundle`; returns ``(kind, arrays, meta)``."""
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.exists():
        raise FormatError(f"{directory}: no {MANIFEST_NAME}")
    lines = manifest.read_text().splitlines()
    if not lines or lines[0].split() != [MANIFEST_HEADER, str(MANIFEST_VERSION)]:
        raise FormatError(f"{manifest}: bad header {lines[:1]}")
    kind, arrays, meta = None, {}, {}
    for line in lines[1:]:
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise FormatError(f"{manifest}: malformed line {line!r}")
        value = json.loads(value)
        if key == "kind":
            kind = value
        elif key.startswith("field."):
            raw = decode_pmat((directory / value["file"]).read_bytes())
            arrays[key[6:]] = raw.reshape(value["shape"])
        elif key.startswith("meta."):
            meta[key[5:]] = value
        else:
            raise FormatError(f"{manifest}: unknown key {key!r}")
    return kind, arrays, meta
