import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from sklearn.datasets import dump_svmlight_file

logger = logging.getLogger(__name__)

CONTAINER_MAGIC: bytes = b"MHSPARSE"
CONTAINER_VERSION: int = 1


class DataFormatError(ValueError):
    """Raised when a dataset file or container cannot be parsed."""


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """
    Row-major sparse matrix with entries in [-1, 1].

    Stores the design X in CSR layout: the column indices of row i are
    col_indices[row_offsets[i]:row_offsets[i + 1]], strictly increasing
    and 0-based, with no explicitly stored zeros. Setting ``bounded`` to
    False lifts the |v| <= 1 check for matrices that are not designs
    (eg. unscaled toy data or raw simulation draws).
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    bounded: bool = field(default=True)

    def __post_init__(self):
        row_offsets = np.array(self.row_offsets, dtype=np.int64)
        col_indices = np.array(self.col_indices, dtype=np.int64)
        values = np.array(self.values, dtype=np.float64)

        if self.n_rows < 0 or self.n_cols < 0:
            raise ValueError(
                f"Matrix dimensions must be non-negative, got ({self.n_rows}, {self.n_cols})."
            )
        if len(row_offsets) != self.n_rows + 1:
            raise ValueError(
                f"row_offsets must have length n_rows + 1 = {self.n_rows + 1}, "
                f"but has length {len(row_offsets)}."
            )
        if row_offsets[0] != 0 or np.any(np.diff(row_offsets) < 0):
            raise ValueError("row_offsets must start at 0 and be non-decreasing.")
        if row_offsets[-1] != len(col_indices) or len(col_indices) != len(values):
            raise ValueError(
                f"row_offsets end at {row_offsets[-1]} but {len(col_indices)} column "
                f"indices and {len(values)} values were passed."
            )
        if len(col_indices) > 0:
            if col_indices.min() < 0 or col_indices.max() >= self.n_cols:
                raise ValueError(
                    f"Column indices must lie in [0, {self.n_cols}), "
                    f"got range [{col_indices.min()}, {col_indices.max()}]."
                )
            # Within-row increase is checked on all consecutive pairs that share a row:
            steps = np.diff(col_indices)
            row_starts = row_offsets[1:-1]
            same_row = np.ones(len(steps), dtype=bool)
            same_row[row_starts[(row_starts > 0) & (row_starts < len(col_indices))] - 1] = False
            if np.any(steps[same_row] <= 0):
                raise ValueError("Column indices must be strictly increasing within rows.")
        if np.any(values == 0):
            raise ValueError("Explicit zero values cannot be stored.")
        if not np.all(np.isfinite(values)):
            raise ValueError("Matrix values must be finite.")
        if self.bounded and np.any(np.abs(values) > 1):
            raise ValueError(
                f"Matrix values must satisfy |v| <= 1, but max |v| = {np.abs(values).max()}."
            )

        for array in (row_offsets, col_indices, values):
            array.setflags(write=False)
        object.__setattr__(self, "row_offsets", row_offsets)
        object.__setattr__(self, "col_indices", col_indices)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_csr(cls, matrix: sp.spmatrix, bounded: bool = True) -> "SparseMatrix":
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.eliminate_zeros()
        csr.sort_indices()
        return cls(
            n_rows=csr.shape[0],
            n_cols=csr.shape[1],
            row_offsets=csr.indptr,
            col_indices=csr.indices,
            values=csr.data,
            bounded=bounded,
        )

    @classmethod
    def from_dense(cls, array: np.ndarray, bounded: bool = True) -> "SparseMatrix":
        return cls.from_csr(sp.csr_matrix(np.atleast_2d(np.asarray(array, dtype=float))), bounded)

    @classmethod
    def from_rows(
        cls,
        rows: Sequence[Dict[int, float]],
        n_cols: int,
        bounded: bool = True,
    ) -> "SparseMatrix":
        """
        Build a matrix from per-row {column: value} dictionaries (0-based columns).
        """
        row_offsets = [0]
        col_indices, values = [], []
        for row in rows:
            for col in sorted(row):
                col_indices.append(col)
                values.append(row[col])
            row_offsets.append(len(col_indices))
        return cls(
            n_rows=len(rows),
            n_cols=n_cols,
            row_offsets=np.array(row_offsets),
            col_indices=np.array(col_indices, dtype=np.int64),
            values=np.array(values, dtype=float),
            bounded=bounded,
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @property
    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def is_binary(self) -> bool:
        return bool(np.all(self.values == 1))

    @property
    def max_abs(self) -> float:
        return float(np.abs(self.values).max()) if self.nnz > 0 else 0.0

    def row_support(self, i: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[i] : self.row_offsets[i + 1]]

    def row_values(self, i: int) -> np.ndarray:
        return self.values[self.row_offsets[i] : self.row_offsets[i + 1]]

    def row_ids(self) -> np.ndarray:
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.n_rows), self.row_nnz)

    def to_csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values.copy(), self.col_indices.copy(), self.row_offsets.copy()),
            shape=self.shape,
        )

    def toarray(self) -> np.ndarray:
        return self.to_csr().toarray()

    def dot(self, vector: np.ndarray) -> np.ndarray:
        return self.to_csr() @ np.asarray(vector, dtype=float)

    def with_values(self, values: np.ndarray, bounded: Optional[bool] = None) -> "SparseMatrix":
        return SparseMatrix(
            n_rows=self.n_rows,
            n_cols=self.n_cols,
            row_offsets=self.row_offsets,
            col_indices=self.col_indices,
            values=values,
            bounded=self.bounded if bounded is None else bounded,
        )

    def without_column(self, k: int) -> "SparseMatrix":
        """
        Copy of the matrix with column k set to zero.
        """
        if not 0 <= k < self.n_cols:
            raise ValueError(f"Column {k} is out of range for {self.n_cols} columns.")
        keep = self.col_indices != k
        kept_per_row = np.bincount(self.row_ids()[keep], minlength=self.n_rows)
        row_offsets = np.concatenate([[0], np.cumsum(kept_per_row)])
        return SparseMatrix(
            n_rows=self.n_rows,
            n_cols=self.n_cols,
            row_offsets=row_offsets,
            col_indices=self.col_indices[keep],
            values=self.values[keep],
            bounded=self.bounded,
        )


@dataclass(frozen=True, eq=False)
class SparsityProfile:
    """
    Row sparsity statistics entering the approximation bounds.
    """

    q_per_row: np.ndarray
    q_max: int
    q_min: int
    delta_per_row: np.ndarray
    delta_bar: float
    total_nnz: int
    n_empty_rows: int
    v_delta: Optional[float] = None

    @property
    def delta_min(self) -> float:
        # Empty rows are excluded; a design without non-zeros has delta_min = 0.
        non_empty = self.delta_per_row[self.q_per_row > 0]
        if len(non_empty) == 0:
            return 0.0
        return float(non_empty.min())

    @property
    def equal_sparsity(self) -> bool:
        return self.q_min == self.q_max


class SvmlightDataset(NamedTuple):
    X: SparseMatrix
    y: np.ndarray
    scale: float


def sparsity_profile(X: SparseMatrix, signal: Optional[np.ndarray] = None) -> SparsityProfile:
    """
    Compute row sparsity statistics of a design.

    Parameters
    ----------
    X :
        Design matrix.
    signal :
        Optional per-row signal f (typically X beta). When passed, the
        signal-weighted spread of the row sparsities around their mean
        is computed as sum_i f_i^2 (delta_i - delta_bar)^2 / ||f||^2.

    Returns
    -------
    profile :
        Sparsity profile of X.
    """
    if X.n_rows < 1:
        raise ValueError("Sparsity profiles need at least one row.")

    q_per_row = X.row_nnz.astype(np.int64)
    p = X.n_cols
    delta_per_row = q_per_row / p
    total_nnz = int(q_per_row.sum())
    non_empty = q_per_row > 0
    n_empty_rows = int(np.sum(~non_empty))
    n_non_empty = X.n_rows - n_empty_rows
    delta_bar = total_nnz / (n_non_empty * p) if n_non_empty > 0 else 0.0

    if n_empty_rows > 0:
        logger.warning(
            f"{n_empty_rows} rows have no non-zero entries; they hash to the empty sentinel."
        )

    v_delta = None
    if signal is not None:
        signal = np.asarray(signal, dtype=float)
        if signal.shape != (X.n_rows,):
            raise ValueError(
                f"Signal must have length {X.n_rows}, but has shape {signal.shape}."
            )
        signal_norm_sq = float(signal @ signal)
        if signal_norm_sq == 0:
            v_delta = 0.0
        else:
            v_delta = float(
                np.sum(signal**2 * (delta_per_row - delta_bar) ** 2) / signal_norm_sq
            )

    profile = SparsityProfile(
        q_per_row=q_per_row,
        q_max=int(q_per_row.max()),
        q_min=int(q_per_row[non_empty].min()) if n_non_empty > 0 else 0,
        delta_per_row=delta_per_row,
        delta_bar=delta_bar,
        total_nnz=total_nnz,
        n_empty_rows=n_empty_rows,
        v_delta=v_delta,
    )
    logger.debug(
        f"Sparsity profile: q in [{profile.q_min}, {profile.q_max}], delta_bar={delta_bar}"
    )
    return profile


def pad_equal_sparsity(X: SparseMatrix) -> SparseMatrix:
    """
    Add dummy columns of ones so that every row has q_max non-zeros.

    Row i receives ones in the first q_max - q_i dummy columns, which
    are appended after the original p columns.

    Parameters
    ----------
    X :
        Binary design matrix.

    Returns
    -------
    padded :
        Binary matrix with p + q_max - q_min columns and constant row nnz.
    """
    if not X.is_binary:
        raise ValueError("Only binary matrices can be padded to equal sparsity.")

    q_per_row = X.row_nnz
    q_max, q_min = int(q_per_row.max()), int(q_per_row.min())
    n_dummy = q_max - q_min
    if n_dummy == 0:
        return X

    rows = []
    for i in range(X.n_rows):
        row = {int(k): 1.0 for k in X.row_support(i)}
        for j in range(q_max - int(q_per_row[i])):
            row[X.n_cols + j] = 1.0
        rows.append(row)
    logger.debug(f"Padding design with {n_dummy} dummy columns.")

    return SparseMatrix.from_rows(rows, n_cols=X.n_cols + n_dummy, bounded=X.bounded)


def _parse_svmlight_line(line: str, line_number: int) -> Tuple[float, List[int], List[float]]:
    tokens = line.split()
    try:
        label = float(tokens[0])
    except ValueError:
        raise DataFormatError(f"Line {line_number}: malformed label '{tokens[0]}'.")

    indices, values = [], []
    for token in tokens[1:]:
        index_text, separator, value_text = token.partition(":")
        if separator != ":":
            raise DataFormatError(f"Line {line_number}: malformed feature '{token}'.")
        try:
            index = int(index_text)
            value = float(value_text)
        except ValueError:
            raise DataFormatError(f"Line {line_number}: malformed feature '{token}'.")
        if index < 1:
            raise DataFormatError(
                f"Line {line_number}: feature indices are 1-based, got {index}."
            )
        if indices and index <= indices[-1]:
            raise DataFormatError(
                f"Line {line_number}: feature indices must be strictly increasing "
                f"({index} follows {indices[-1]})."
            )
        if value == 0:
            raise DataFormatError(
                f"Line {line_number}: explicit zero stored for feature {index}."
            )
        if not np.isfinite(value):
            raise DataFormatError(f"Line {line_number}: non-finite value '{value_text}'.")
        indices.append(index - 1)
        values.append(value)

    return label, indices, values


def read_svmlight(
    path: str,
    rescale: bool = False,
    n_features: Optional[int] = None,
    bounded: bool = True,
) -> SvmlightDataset:
    """
    Load a svmlight / libsvm file into a bounded sparse design.

    Each line reads ``label idx:val idx:val ...`` with 1-based strictly
    increasing indices. Text after a '#' is ignored, as are blank lines.

    Parameters
    ----------
    path :
        Path to the file to load.
    rescale :
        Whether to divide all values by the dataset's max |val| so they
        fit in [-1, 1]. If False, any |val| > 1 is an error.
    n_features :
        Number of columns p. Inferred as the largest index if None.
    bounded :
        If False, values are kept as read and the design is flagged as
        unbounded instead of failing on |val| > 1.

    Returns
    -------
    dataset :
        Design matrix, labels in file order and the applied scale factor
        (1.0 when no rescaling happened).
    """
    labels = []
    row_offsets = [0]
    col_indices, values = [], []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw_line in enumerate(f, start=1):
            line = raw_line.split("#", 1)[0].strip()
            if line == "":
                continue
            label, indices, row_values = _parse_svmlight_line(line, line_number)
            labels.append(label)
            col_indices.extend(indices)
            values.extend(row_values)
            row_offsets.append(len(col_indices))

    if len(labels) == 0:
        raise DataFormatError(f"{path}: no rows.")

    inferred_features = max(col_indices) + 1 if col_indices else 0
    if n_features is None:
        n_features = max(inferred_features, 1)
    elif n_features < inferred_features:
        raise DataFormatError(
            f"{path}: n_features={n_features} but index {inferred_features} was found."
        )

    values = np.array(values, dtype=float)
    scale = 1.0
    max_abs = float(np.abs(values).max()) if len(values) > 0 else 0.0
    if rescale and max_abs > 0:
        scale = max_abs
        values = values / scale
    elif max_abs > 1 and bounded:
        raise DataFormatError(
            f"{path}: values must satisfy |val| <= 1 (max |val| = {max_abs}); "
            "rescale to divide by the maximum."
        )

    X = SparseMatrix(
        n_rows=len(labels),
        n_cols=n_features,
        row_offsets=np.array(row_offsets),
        col_indices=np.array(col_indices, dtype=np.int64),
        values=values,
        bounded=max_abs <= 1 or rescale,
    )
    logger.debug(f"Read {X.n_rows}x{X.n_cols} design with {X.nnz} non-zeros from {path}.")

    return SvmlightDataset(X=X, y=np.array(labels, dtype=float), scale=scale)


def write_svmlight(X: SparseMatrix, y: np.ndarray, path: str) -> None:
    """
    Write a design and its labels in svmlight format with 1-based indices.
    """
    y = np.asarray(y)
    if y.shape != (X.n_rows,):
        raise ValueError(f"Labels must have length {X.n_rows}, but have shape {y.shape}.")
    dump_svmlight_file(X.to_csr(), y, path, zero_based=False)


def save_container(X: SparseMatrix, path: str) -> None:
    """
    Save a matrix to the binary container.

    Layout, little-endian: 8-byte magic, uint32 version, uint32 flags
    (bit 0 set if bounded), uint64 n_rows, uint64 n_cols, uint64 nnz,
    then int64 row_offsets, int64 col_indices and float64 values.
    """
    header = np.array([CONTAINER_VERSION, int(X.bounded)], dtype="<u4").tobytes()
    dims = np.array([X.n_rows, X.n_cols, X.nnz], dtype="<u8").tobytes()
    with open(path, "wb") as f:
        f.write(CONTAINER_MAGIC)
        f.write(header)
        f.write(dims)
        f.write(X.row_offsets.astype("<i8").tobytes())
        f.write(X.col_indices.astype("<i8").tobytes())
        f.write(X.values.astype("<f8").tobytes())


def load_container(path: str) -> SparseMatrix:
    """
    Load a matrix saved by ``save_container``.
    """
    with open(path, "rb") as f:
        payload = f.read()

    prefix_len = len(CONTAINER_MAGIC) + 8 + 24
    if len(payload) < prefix_len or payload[: len(CONTAINER_MAGIC)] != CONTAINER_MAGIC:
        raise DataFormatError(f"{path}: not a sparse matrix container.")

    offset = len(CONTAINER_MAGIC)
    version, flags = np.frombuffer(payload, dtype="<u4", count=2, offset=offset)
    if version != CONTAINER_VERSION:
        raise DataFormatError(f"{path}: unsupported container version {version}.")
    offset += 8
    n_rows, n_cols, nnz = (
        int(v) for v in np.frombuffer(payload, dtype="<u8", count=3, offset=offset)
    )
    offset += 24

    expected_len = offset + 8 * (n_rows + 1) + 16 * nnz
    if len(payload) != expected_len:
        raise DataFormatError(
            f"{path}: container holds {len(payload)} bytes, expected {expected_len}."
        )
    row_offsets = np.frombuffer(payload, dtype="<i8", count=n_rows + 1, offset=offset)
    offset += 8 * (n_rows + 1)
    col_indices = np.frombuffer(payload, dtype="<i8", count=nnz, offset=offset)
    offset += 8 * nnz
    values = np.frombuffer(payload, dtype="<f8", count=nnz, offset=offset)

    try:
        return SparseMatrix(
            n_rows=n_rows,
            n_cols=n_cols,
            row_offsets=row_offsets,
            col_indices=col_indices,
            values=values,
            bounded=bool(flags & 1),
        )
    except ValueError as e:
        raise DataFormatError(f"{path}: corrupt container ({e}).")
