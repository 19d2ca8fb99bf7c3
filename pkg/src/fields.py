"""
3D fields with a pluggable linear index mapping and level 1 operations.

Two layouts are supported:

    VERTICAL_CONTIGUOUS    (i, j, k) -> n_z*(m*i + j) + k
    HORIZONTAL_CONTIGUOUS  (i, j, k) -> m*(n_z*j + k) + i

Reductions (``dot``, ``nrm2``) sum each column in ascending k and combine
the column partials in a fixed pairwise tree, so they are bit-identical for
any worker count.
"""

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from . import kernels
from .errors import GridIndexError, InvalidArgumentError
from .models import Layout, Precision


def index(layout: Layout, i: int, j: int, k: int, m: int, n_z: int) -> int:
    """Linear index of cell (i, j, k)."""
    if __debug__:
        if not (0 <= i < m and 0 <= j < m and 0 <= k < n_z):
            raise GridIndexError(f"({i}, {j}, {k}) outside {m}x{m}x{n_z} grid")
    if layout is Layout.VERTICAL_CONTIGUOUS:
        return n_z * (m * i + j) + k
    return m * (n_z * j + k) + i


def index_array(layout: Layout, i, j, k, m: int, n_z: int) -> np.ndarray:
    """Vectorised :func:`index` (no bounds check)."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    if layout is Layout.VERTICAL_CONTIGUOUS:
        return n_z * (m * i + j) + k
    return m * (n_z * j + k) + i


@lru_cache(maxsize=64)
def _column_bases(layout: Layout, m: int, n_z: int) -> Tuple[np.ndarray, int]:
    cols = np.arange(m * m, dtype=np.int64)
    i, j = np.divmod(cols, m)
    col_base = index_array(layout, i, j, 0, m, n_z)
    col_base.setflags(write=False)
    stride = 1 if layout is Layout.VERTICAL_CONTIGUOUS else m
    return col_base, stride


def column_bases(layout: Layout, m: int, n_z: int) -> Tuple[np.ndarray, int]:
    """
    Linear index of (i, j, 0) for every column ``i*m + j`` and the stride
    between consecutive levels of a column.
    """
    return _column_bases(Layout(layout), int(m), int(n_z))


@dataclass
class Field3D:
    """A scalar field on an m x m x n_z grid stored in one flat array."""

    m: int
    n_z: int
    layout: Layout
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 1 or self.data.size != self.m * self.m * self.n_z:
            raise InvalidArgumentError(
                f"data must be flat with {self.m * self.m * self.n_z} entries "
                f"(got shape {self.data.shape})"
            )
        if self.data.dtype not in (np.float32, np.float64):
            raise InvalidArgumentError(f"unsupported scalar type {self.data.dtype}")

    @classmethod
    def zeros(cls, m: int, n_z: int, layout: Layout = Layout.VERTICAL_CONTIGUOUS,
              dtype=np.float64) -> 'Field3D':
        return cls(m, n_z, layout, np.zeros(m * m * n_z, dtype=dtype))

    @classmethod
    def from_array(cls, values: np.ndarray, layout: Layout = Layout.VERTICAL_CONTIGUOUS,
                   dtype=None) -> 'Field3D':
        """Build a field from a logical (m, m, n_z) array indexed [i, j, k]."""
        values = np.asarray(values)
        if values.ndim != 3 or values.shape[0] != values.shape[1]:
            raise InvalidArgumentError(f"expected an (m, m, n_z) array (got {values.shape})")
        m, _, n_z = values.shape
        dtype = dtype or (values.dtype if values.dtype in (np.float32, np.float64) else np.float64)
        if layout is Layout.VERTICAL_CONTIGUOUS:
            data = np.ascontiguousarray(values, dtype=dtype).reshape(-1)
        else:
            # stored as [j, k, i]
            data = np.ascontiguousarray(values.transpose(1, 2, 0), dtype=dtype).reshape(-1)
        return cls(m, n_z, layout, data)

    @classmethod
    def random(cls, m: int, n_z: int, layout: Layout = Layout.VERTICAL_CONTIGUOUS,
               dtype=np.float64, seed: int = 0) -> 'Field3D':
        """Uniform [-1, 1) values; the logical values do not depend on the layout."""
        rng = np.random.default_rng(seed)
        values = rng.uniform(-1.0, 1.0, size=(m, m, n_z))
        return cls.from_array(values, layout, dtype)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def precision(self) -> Precision:
        return Precision.from_dtype(self.dtype)

    def to_array(self) -> np.ndarray:
        """Logical (m, m, n_z) view indexed [i, j, k]."""
        if self.layout is Layout.VERTICAL_CONTIGUOUS:
            return self.data.reshape(self.m, self.m, self.n_z)
        return self.data.reshape(self.m, self.n_z, self.m).transpose(2, 0, 1)

    def at(self, i: int, j: int, k: int) -> float:
        return self.data[index(self.layout, i, j, k, self.m, self.n_z)]

    def copy(self) -> 'Field3D':
        return Field3D(self.m, self.n_z, self.layout, self.data.copy())

    def zeros_like(self) -> 'Field3D':
        return Field3D(self.m, self.n_z, self.layout, np.zeros_like(self.data))

    def astype(self, dtype) -> 'Field3D':
        return Field3D(self.m, self.n_z, self.layout, self.data.astype(dtype))

    def conforms(self, other: 'Field3D') -> bool:
        return (self.m == other.m and self.n_z == other.n_z
                and self.layout is other.layout and self.dtype == other.dtype)


def check_conformant(*fields: Field3D):
    """Raise unless all fields share grid, layout and scalar type."""
    first = fields[0]
    for other in fields[1:]:
        if not first.conforms(other):
            raise InvalidArgumentError(
                f"fields do not match: {first.m}x{first.m}x{first.n_z} {first.layout.value} "
                f"{first.dtype} vs {other.m}x{other.m}x{other.n_z} {other.layout.value} {other.dtype}"
            )


def check_distinct(*fields: Field3D):
    """Raise if two of the fields share memory."""
    for a in range(len(fields)):
        for b in range(a + 1, len(fields)):
            if np.shares_memory(fields[a].data, fields[b].data):
                raise InvalidArgumentError("input and output fields must not alias")


def relayout(x: Field3D, target: Layout) -> Field3D:
    """Same values under another index mapping (a copy, even if unchanged)."""
    if x.layout is target:
        return x.copy()
    return Field3D.from_array(x.to_array(), target, x.dtype)


def _scalar(x: Field3D, alpha: float):
    return x.dtype.type(alpha)


def axpy(alpha: float, x: Field3D, y: Field3D, workers: int = 1):
    """y <- alpha*x + y."""
    check_conformant(x, y)
    nchunks = kernels.set_workers(workers)
    kernels.flat_axpy(_scalar(y, alpha), x.data, y.data, nchunks)


def scal(alpha: float, x: Field3D, workers: int = 1):
    """x <- alpha*x."""
    nchunks = kernels.set_workers(workers)
    kernels.flat_scal(_scalar(x, alpha), x.data, nchunks)


def column_partials(x: Field3D, y: Field3D, workers: int = 1) -> np.ndarray:
    """Per-column partial sums of x*y, indexed by ``i*m + j``."""
    check_conformant(x, y)
    nchunks = kernels.set_workers(workers)
    col_base, ks = column_bases(x.layout, x.m, x.n_z)
    partials = np.empty(x.m * x.m, dtype=x.dtype)
    kernels.column_dot(x.data, y.data, col_base, ks, x.m, x.n_z, nchunks, partials)
    return partials


def dot(x: Field3D, y: Field3D, workers: int = 1) -> float:
    """<x, y> with the deterministic column-then-tree summation order."""
    return float(kernels.tree_sum(column_partials(x, y, workers)))


def nrm2(x: Field3D, workers: int = 1) -> float:
    """Euclidean norm with the same summation order as :func:`dot`."""
    partials = column_partials(x, x, workers)
    return float(np.sqrt(kernels.tree_sum(partials)))


def dump_field(x: Field3D, output_path: str) -> str:
    """
    Write a header line followed by the raw little-endian data.

    Header: ``# m=<m> n_z=<n_z> layout=<layout> precision=<precision>``
    """
    header = (f"# m={x.m} n_z={x.n_z} layout={x.layout.value} "
              f"precision={x.precision.value}\n")
    little = x.data.astype(x.dtype.newbyteorder("<"), copy=False)
    path = Path(output_path)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(little.tobytes())
    return str(path)


def load_field(input_path: str, expected_size: Optional[int] = None) -> Field3D:
    """Read a field written by :func:`dump_field`."""
    with open(input_path, "rb") as f:
        header = f.readline().decode("ascii").strip()
        raw = f.read()

    if not header.startswith("#"):
        raise InvalidArgumentError(f"{input_path}: missing field header")
    try:
        meta = dict(item.split("=", 1) for item in header[1:].split())
        m, n_z = int(meta["m"]), int(meta["n_z"])
        layout = Layout(meta["layout"])
        precision = Precision(meta["precision"])
    except (KeyError, ValueError) as e:
        raise InvalidArgumentError(f"{input_path}: malformed field header ({e})") from None

    dtype = precision.dtype.newbyteorder("<")
    try:
        data = np.frombuffer(raw, dtype=dtype).astype(precision.dtype)
    except ValueError as e:
        raise InvalidArgumentError(f"{input_path}: truncated field data ({e})") from None
    if data.size != m * m * n_z or (expected_size is not None and data.size != expected_size):
        raise InvalidArgumentError(
            f"{input_path}: {data.size} values do not match {m}x{m}x{n_z}"
        )
    return Field3D(m, n_z, layout, data)
