"""
Core data containers, deterministic random streams, sample splitting and
CSV ingestion.
"""

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from os.path import exists
from typing import List, Optional, Sequence, Tuple

import numpy as np

from nwmclust._types import ArrayT, Indices, IndexT, PathT
from nwmclust.errors import DataError, ValidationError

logger = logging.getLogger(__name__)

STANDARDIZE_TOL = 1e-10


def _frozen(array: ArrayT) -> ArrayT:
    """Return a read-only float copy of `array`."""
    result = np.array(array, dtype=float, copy=True)
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class Standardization:
    """Parameters of the centering/scaling applied by :func:`standardize`."""

    x_mean: ArrayT
    x_scale: ArrayT
    y_mean: float

    def back_map_coefficients(self, beta_std: Sequence[float]) -> Tuple[ArrayT, float]:
        """Map coefficients of the standardized model back to raw units.

        :param beta_std: coefficients fitted on standardized predictors and a
                         centered response (no intercept)
        :return: (raw slopes, raw intercept)
        """
        slopes = np.asarray(beta_std, dtype=float) / self.x_scale
        intercept = float(self.y_mean - self.x_mean @ slopes)
        return slopes, intercept


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response vector `y` and predictor matrix `X` with column names."""

    y: ArrayT
    X: ArrayT
    names: Tuple[str, ...]
    standardized: bool = False
    transform: Optional[Standardization] = None

    def __post_init__(self):
        y = _frozen(self.y)
        X = _frozen(self.X)
        if X.ndim == 1:
            X = _frozen(X.reshape(-1, 1))
        object.__setattr__(self, 'y', y)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'names', tuple(str(name) for name in self.names))

        if y.ndim != 1 or X.ndim != 2 or X.shape[0] != y.shape[0]:
            msg = f'y has shape {y.shape} but X has shape {X.shape}'
            raise DataError(msg)
        if self.n < 2 or self.p < 1:
            raise DataError(f'need n >= 2 and p >= 1, got n={self.n}, p={self.p}')
        if len(self.names) != self.p:
            raise DataError(f'{len(self.names)} names for {self.p} predictor columns')
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError('dataset contains non-finite entries')
        if self.standardized:
            means = X.mean(axis=0)
            sds = X.std(axis=0, ddof=1)
            if np.any(np.abs(means) > STANDARDIZE_TOL) or np.any(np.abs(sds - 1) > STANDARDIZE_TOL):
                raise DataError('dataset flagged as standardized but columns are not')

    @property
    def n(self) -> int:
        """Number of observations."""
        return self.X.shape[0]

    @property
    def p(self) -> int:
        """Number of predictors."""
        return self.X.shape[1]

    def subset(self, rows: Optional[IndexT] = None, cols: Optional[IndexT] = None) -> 'Dataset':
        """Return the dataset restricted to given rows and predictor columns.

        The result is no longer flagged as standardized: sub-samples of a
        standardized dataset are not themselves standardized.
        """
        rows_ = np.arange(self.n) if rows is None else np.asarray(rows, dtype=int)
        cols_ = np.arange(self.p) if cols is None else np.asarray(cols, dtype=int)
        return Dataset(
            y=self.y[rows_],
            X=self.X[np.ix_(rows_, cols_)],
            names=tuple(self.names[j] for j in cols_),
        )


@dataclass(frozen=True)
class SplitPair:
    """Random partition of the rows into a selection and an inference half."""

    d1: Indices
    d2: Indices
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        d1, d2 = set(self.d1), set(self.d2)
        if d1 & d2:
            raise ValidationError('split halves overlap', stage='split')
        if d1 | d2 != set(range(len(d1) + len(d2))):
            raise ValidationError('split halves do not cover all rows', stage='split')

    @property
    def n(self) -> int:
        """Total number of rows covered by the split."""
        return len(self.d1) + len(self.d2)


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream named by (seed, stream_id).

    Streams are derived with numpy's ``SeedSequence`` spawn keys, so distinct
    stream ids (and distinct child paths) give independent PCG64 streams.
    """

    seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.seed < 0 or self.stream_id < 0 or any(key < 0 for key in self.path):
            raise ValidationError('seed and stream ids must be nonnegative', stage='rng')

    def generator(self) -> np.random.Generator:
        """Return a fresh generator positioned at the start of the stream."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,) + self.path)
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, key: int) -> 'RngStream':
        """Return the sub-stream `key` of this stream."""
        return replace(self, path=self.path + (int(key),))


def split_half(n: int, rng: RngStream) -> SplitPair:
    """Split rows ``0..n-1`` uniformly at random into halves of size
    ``n // 2`` and ``n - n // 2``.

    :param n: int - number of rows
    :param rng: RngStream - source of randomness
    :return: SplitPair
    :raises: ValidationError if n < 4
    """
    if n < 4:
        raise ValidationError(f'cannot split {n} rows, need at least 4', stage='split')
    perm = rng.generator().permutation(n)
    cut = n // 2
    d1 = tuple(sorted(int(i) for i in perm[:cut]))
    d2 = tuple(sorted(int(i) for i in perm[cut:]))
    return SplitPair(d1=d1, d2=d2, seed=rng.seed, stream_id=rng.stream_id)


def _parse_cell(cell: str, row_no: int, column: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        value = math.nan
    if not math.isfinite(value):
        msg = f'non-numeric cell {cell!r} at row {row_no}, column {column!r}'
        raise DataError(msg, stage='load-csv', hint='clean the file or drop the row')
    return value


def load_csv(path: PathT, response_column: str) -> Dataset:
    """Load a dataset from a CSV file with a header row.

    :param path: str or Path - the CSV file
    :param response_column: str - header name of the response
    :return: Dataset with X made of all other columns, in header order
    :raises: FileNotFoundError if the file is missing, DataError on bytes
             that are not UTF-8, a missing/duplicate column, a ragged row
             or a non-numeric cell
    """
    if not exists(path):
        raise FileNotFoundError(f'Cannot find CSV file {str(path)!r}')

    with open(path, 'rb') as fd:
        raw = fd.read()
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as err:
        msg = f'{str(path)!r} is not UTF-8: byte 0x{raw[err.start]:02x} at offset {err.start}'
        raise DataError(msg, stage='load-csv', hint='re-save the file as UTF-8') from None

    with io.StringIO(text, newline='') as fd:
        reader = csv.reader(fd)
        header = next(reader, None)
        if not header:
            raise DataError(f'{str(path)!r} has no header row', stage='load-csv')
        header = [name.strip() for name in header]
        duplicates = sorted({name for name in header if header.count(name) > 1})
        if duplicates:
            raise DataError(f'duplicate column(s) {duplicates} in header', stage='load-csv')
        if response_column not in header:
            msg = f'response column {response_column!r} not found in header {header}'
            raise DataError(msg, stage='load-csv')
        rows: List[List[float]] = []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue  # blank line
            if len(row) != len(header):
                msg = f'row {row_no} has {len(row)} cells, header has {len(header)}'
                raise DataError(msg, stage='load-csv')
            rows.append([_parse_cell(cell.strip(), row_no, name) for cell, name in zip(row, header)])

    table = np.array(rows, dtype=float).reshape(len(rows), len(header))
    y_col = header.index(response_column)
    x_cols = [j for j in range(len(header)) if j != y_col]
    logger.info('Loaded %d rows and %d predictors from %s', len(rows), len(x_cols), path)
    return Dataset(
        y=table[:, y_col],
        X=table[:, x_cols],
        names=tuple(header[j] for j in x_cols),
    )


def standardize(d: Dataset) -> Dataset:
    """Center and scale every predictor to unit sample standard deviation and
    center the response.

    :param d: Dataset - raw dataset
    :return: standardized Dataset carrying its :class:`Standardization`
    :raises: DataError naming the first constant column
    """
    x_mean = d.X.mean(axis=0)
    x_scale = d.X.std(axis=0, ddof=1)
    for j, scale in enumerate(x_scale):
        if not scale > 1e-12 * (1.0 + abs(x_mean[j])):
            msg = f'column {d.names[j]!r} is constant'
            raise DataError(msg, stage='standardize', hint='drop constant predictors')

    y_mean = float(d.y.mean())
    transform = Standardization(x_mean=_frozen(x_mean), x_scale=_frozen(x_scale), y_mean=y_mean)
    return Dataset(
        y=d.y - y_mean,
        X=(d.X - x_mean) / x_scale,
        names=d.names,
        standardized=True,
        transform=transform,
    )
