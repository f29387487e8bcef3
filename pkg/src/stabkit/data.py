"""Core data containers, loss families, and CSV ingestion.

Two loss families are supported: squared-error loss for continuous
responses and the negative Bernoulli log-likelihood for binary
responses coded {0, 1}. The squared loss carries a factor 1/2 so that
its negative gradient is exactly the residual ``y - eta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

__all__ = [
    "Family",
    "Dataset",
    "LoadError",
    "MissingColumnError",
    "DuplicateColumnError",
    "NonNumericCellError",
    "ResponseCodingError",
    "load_csv",
    "write_csv",
    "loss",
    "negative_gradient",
    "empirical_risk",
    "sigmoid",
]


class Family(str, Enum):
    """Loss family of the response."""

    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"


class LoadError(ValueError):
    """Base class for CSV ingestion failures."""


class MissingColumnError(LoadError):
    pass


class DuplicateColumnError(LoadError):
    pass


class NonNumericCellError(LoadError):
    def __init__(self, row: int, column: str, cell: str):
        self.row = row
        self.column = column
        super().__init__(
            f"non-numeric cell {cell!r} at row {row}, column {column!r}"
        )


class ResponseCodingError(LoadError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Immutable design matrix with named columns and a response vector.

    ``X`` is stored column-major since the boosting loop scans columns.
    Arrays are made read-only so a Dataset can be shared across workers.
    """

    X: np.ndarray
    y: np.ndarray
    col_names: tuple[str, ...]
    family: Family

    def __post_init__(self):
        X = np.asfortranarray(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        names = tuple(str(c) for c in self.col_names)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        n, p = X.shape
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise ValueError(f"y has length {y.shape[0]}, expected {n}")
        if len(names) != p:
            raise ValueError(f"{len(names)} column names for p={p} columns")
        if len(set(names)) != p:
            dupes = sorted({c for c in names if names.count(c) > 1})
            raise DuplicateColumnError(f"duplicate column names: {dupes}")
        if not np.all(np.isfinite(X)):
            raise ValueError("X contains non-finite entries")
        if not np.all(np.isfinite(y)):
            raise ValueError("y contains non-finite entries")
        if self.family == Family.BINOMIAL and not np.all(
            (y == 0.0) | (y == 1.0)
        ):
            bad = y[(y != 0.0) & (y != 1.0)][0]
            raise ResponseCodingError(
                f"binomial response not in {{0,1}}: found {bad!r}"
            )
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "col_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset_rows(self, rows: np.ndarray) -> "Dataset":
        """Dataset restricted to the given row indices."""
        return Dataset(self.X[rows, :], self.y[rows], self.col_names, self.family)


def load_csv(path: str | Path, response: str, family: Family) -> Dataset:
    """Read an RFC-4180 CSV (header row mandatory, '.' decimals, UTF-8).

    The ``response`` column becomes ``y``; the remaining columns form
    ``X`` in file order. Every cell must parse as a finite number and,
    for the binomial family, the response must be coded {0, 1}.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({c for c in header if header.count(c) > 1})
            raise DuplicateColumnError(f"{path}: duplicate columns {dupes}")
        if response not in header:
            raise MissingColumnError(
                f"{path}: response column {response!r} not in header"
            )
        rows = []
        for i, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise LoadError(
                    f"{path}: row {i} has {len(rec)} cells, expected {len(header)}"
                )
            vals = []
            for name, cell in zip(header, rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise NonNumericCellError(i, name, cell) from None
                if not math.isfinite(v):
                    raise NonNumericCellError(i, name, cell)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise LoadError(f"{path}: no data rows")
    M = np.asarray(rows, dtype=float)
    yi = header.index(response)
    y = M[:, yi]
    X = np.delete(M, yi, axis=1)
    names = tuple(c for c in header if c != response)
    if family == Family.BINOMIAL and not np.all((y == 0.0) | (y == 1.0)):
        bad_row = int(np.nonzero((y != 0.0) & (y != 1.0))[0][0]) + 2
        raise ResponseCodingError(
            f"{path}: response not in {{0,1}} at row {bad_row}"
        )
    return Dataset(X, y, names, family)


def write_csv(data: Dataset, path: str | Path, response: str = "y") -> None:
    """Serialize a Dataset back to CSV (response appended as last column)."""
    if response in data.col_names:
        raise DuplicateColumnError(f"response name {response!r} collides")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(data.col_names) + [response])
        for i in range(data.n):
            w.writerow([repr(v) for v in data.X[i, :]] + [repr(data.y[i])])


def sigmoid(eta):
    """Numerically stable logistic response 1 / (1 + exp(-eta))."""
    eta = np.asarray(eta, dtype=float)
    out = 0.5 * (1.0 + np.tanh(0.5 * eta))
    return out if out.ndim else float(out)


def loss(family: Family, y, eta):
    """Pointwise loss.

    gaussian: (y - eta)^2 / 2
    binomial: -[y log h + (1-y) log(1-h)] with h the logistic response,
    evaluated in an overflow-free form (softplus(eta) - y*eta).
    """
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if family == Family.GAUSSIAN:
        out = 0.5 * (y - eta) ** 2
    else:
        out = np.logaddexp(0.0, eta) - y * eta
    return out if out.ndim else float(out)


def negative_gradient(family: Family, y, eta) -> np.ndarray:
    """Negative gradient of the loss in eta (the working residuals)."""
    y = np.asarray(y, dtype=float).ravel()
    eta = np.asarray(eta, dtype=float).ravel()
    if y.shape != eta.shape:
        raise ValueError(f"length mismatch: y has {y.shape[0]}, eta {eta.shape[0]}")
    if family == Family.GAUSSIAN:
        return y - eta
    return y - sigmoid(eta)


def empirical_risk(family: Family, y, eta) -> float:
    """Mean loss over the sample."""
    return float(np.mean(loss(family, y, eta)))
