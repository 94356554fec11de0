"""
CSV ingestion, return computation and the chronological split.

Normalization uses the population (1/n) variance of the training segment, so
the normalized training segment has mean 0 and variance 1 under that same
definition.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = ["ReturnSeries", "SeriesSplit", "load_csv", "write_csv", "split_normalize",
           "apply_split", "split_sizes"]

MIN_SPLIT_LENGTH = 50
TRAIN_FRACTION = 0.8
VALIDATION_FRACTION = 0.1


@dataclass
class ReturnSeries:
    values: np.ndarray
    timestamps: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DataError("series values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise DataError("series contains non-finite values")
        if not self.timestamps:
            self.timestamps = [str(i) for i in range(len(self.values))]
        elif len(self.timestamps) != len(self.values):
            raise DataError("timestamps and values differ in length")

    def __len__(self):
        return len(self.values)

    def slice(self, start: int, stop: int) -> "ReturnSeries":
        return ReturnSeries(self.values[start:stop].copy(), list(self.timestamps[start:stop]))


@dataclass
class SeriesSplit:
    train: ReturnSeries
    validation: ReturnSeries
    test: ReturnSeries
    norm_mean: float
    norm_std: float

    @property
    def offsets(self) -> tuple[int, int, int]:
        """Start index of each segment in the original series."""
        n_tr = len(self.train)
        return 0, n_tr, n_tr + len(self.validation)

    def normalize(self, values):
        return (np.asarray(values, dtype=float) - self.norm_mean) / self.norm_std

    def denormalize(self, values):
        return np.asarray(values, dtype=float) * self.norm_std + self.norm_mean

    def segment(self, name: str) -> ReturnSeries:
        if name not in ("train", "validation", "test"):
            raise ValueError(f"unknown segment {name!r}")
        return getattr(self, name)


def load_csv(path, column: str, input_kind: str = "returns",
             timestamp_column: str | None = None) -> ReturnSeries:
    """Read one numeric column from a headed CSV file.

    Parameters
    ----------
    path : str or os.PathLike
    column : str
        Header name of the value column.
    input_kind : {"returns", "prices"}
        With ``"prices"`` the simple returns ``P_t / P_{t-1} - 1`` are returned
        (one fewer element, labelled by the later timestamp).
    timestamp_column : str, optional
        Column holding opaque time labels. Defaults to row positions.

    Raises
    ------
    DataError
        Missing file, missing column, fewer than two rows, or an unparsable
        cell (the message names the file line).
    """
    if input_kind not in ("returns", "prices"):
        raise DataError(f"input kind must be 'returns' or 'prices', got {input_kind!r}")
    if not os.path.isfile(path):
        raise DataError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if column not in header:
            raise DataError(f"{path}: column {column!r} not in header {header}")
        col = header.index(column)
        ts_col = None
        if timestamp_column is not None:
            if timestamp_column not in header:
                raise DataError(f"{path}: column {timestamp_column!r} not in header {header}")
            ts_col = header.index(timestamp_column)
        values, stamps = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            cell = row[col].strip() if col < len(row) else ""
            try:
                x = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {line_no}: cannot parse {cell!r} "
                                f"in column {column!r}") from None
            if not math.isfinite(x):
                raise DataError(f"{path}: line {line_no}: non-finite value {cell!r}")
            values.append(x)
            stamps.append(row[ts_col].strip() if ts_col is not None else str(len(stamps)))
    if len(values) < 2:
        raise DataError(f"{path}: need at least 2 rows, found {len(values)}")
    values = np.array(values)
    if input_kind == "prices":
        if np.any(values[:-1] == 0.0):
            raise DataError(f"{path}: zero price makes the return undefined")
        return ReturnSeries(values[1:] / values[:-1] - 1.0, stamps[1:])
    return ReturnSeries(values, stamps)


def write_csv(path, series: ReturnSeries, column: str = "r", timestamp_column: str = "t"):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([timestamp_column, column])
        for t, x in zip(series.timestamps, series.values):
            w.writerow([t, repr(float(x))])


def split_sizes(n: int) -> tuple[int, int, int]:
    n_train = int(math.floor(TRAIN_FRACTION * n))
    n_val = int(math.floor(VALIDATION_FRACTION * n))
    return n_train, n_val, n - n_train - n_val


def split_normalize(series: ReturnSeries) -> SeriesSplit:
    """4/5 - 1/10 - remainder chronological split, normalized by train statistics."""
    n = len(series)
    if n < MIN_SPLIT_LENGTH:
        raise DataError(f"series too short to split: {n} < {MIN_SPLIT_LENGTH}")
    n_train, n_val, _ = split_sizes(n)
    train = series.values[:n_train]
    mean = float(np.mean(train))
    std = float(np.sqrt(np.mean((train - mean) ** 2)))
    if not std > 1e-12 * max(1.0, abs(mean)):
        raise DataError("training segment has zero variance; cannot normalize")
    return apply_split(series, mean, std)


def apply_split(series: ReturnSeries, mean: float, std: float) -> SeriesSplit:
    """Split ``series`` by its length and normalize with given constants."""
    n = len(series)
    n_train, n_val, _ = split_sizes(n)
    z = (series.values - mean) / std
    normed = ReturnSeries(z, list(series.timestamps))
    return SeriesSplit(
        train=normed.slice(0, n_train),
        validation=normed.slice(n_train, n_train + n_val),
        test=normed.slice(n_train + n_val, n),
        norm_mean=mean,
        norm_std=std,
    )
