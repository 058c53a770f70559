"""Dataset container and delimited-text ingestion."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .families import DomainError, ObservedInterval, Observation

__all__ = ["Dataset", "DataParseError", "read_data"]


class DataParseError(ValueError):
    """Malformed data file; ``line`` is the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Dataset:
    """Responses ``y`` (n,), covariates ``X`` (n, p) and censoring intervals."""

    y: np.ndarray
    X: np.ndarray
    intervals: tuple

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(len(y), -1)
        if X.shape[0] != len(y) or len(self.intervals) != len(y):
            raise ValueError("y, X and intervals must have the same number of rows")
        if len(y) == 0:
            raise ValueError("empty dataset")
        if not np.all(np.isfinite(X)):
            raise DomainError("covariates must be finite")
        y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "intervals", tuple(self.intervals))

    @classmethod
    def from_arrays(cls, y, zl, zr, X=None):
        """Build from endpoint arrays using the ``[zl, zr)`` / ``[z, z]`` convention."""
        zl = np.asarray(zl, dtype=float)
        zr = np.asarray(zr, dtype=float)
        intervals = tuple(ObservedInterval.censored(a, b) for a, b in zip(zl, zr))
        if X is None:
            X = np.empty((len(zl), 0))
        return cls(y, X, intervals)

    @classmethod
    def from_observations(cls, observations):
        observations = list(observations)
        X = np.array([o.x for o in observations], dtype=float).reshape(len(observations), -1)
        return cls([o.y for o in observations], X, [o.interval for o in observations])

    @property
    def n(self):
        return len(self.y)

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def left(self):
        return np.array([iv.left for iv in self.intervals])

    @property
    def right(self):
        return np.array([iv.right for iv in self.intervals])

    @property
    def exact(self):
        return np.array([iv.is_exact for iv in self.intervals])

    def midpoints(self):
        return 0.5 * (self.left + self.right)

    def observations(self):
        return [Observation(float(y), tuple(x), iv) for y, x, iv in zip(self.y, self.X, self.intervals)]

    def subset(self, n):
        return Dataset(self.y[:n], self.X[:n], self.intervals[:n])


_TRUE = {"1", "true", "t", "yes", "closed"}
_FALSE = {"0", "false", "f", "no", "open"}


def _flag(value, line, column):
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise DataParseError(f"column {column!r}: cannot read {value!r} as a boolean", line)


def read_data(path, delimiter=None, require_response=True):
    """Read a delimited text file with columns ``y, zl, zr[, x1..xp]``.

    Optional ``zl_closed`` / ``zr_closed`` columns override the default
    ``[zl, zr)`` convention; rows with ``zl == zr`` are exact observations.
    """
    with open(path, newline="") as fh:
        text = fh.read()
    if delimiter is None:
        try:
            delimiter = csv.Sniffer().sniff(text.splitlines()[0], delimiters=",;\t ").delimiter
        except (csv.Error, IndexError):
            delimiter = ","
    reader = csv.reader(text.splitlines(), delimiter=delimiter, skipinitialspace=True)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataParseError("empty file", 1) from None
    required = ["zl", "zr"] + (["y"] if require_response else [])
    missing = [c for c in required if c not in header]
    if missing:
        raise DataParseError(f"missing required column(s) {', '.join(missing)}", 1)
    xcols = sorted((h for h in header if h.startswith("x") and h[1:].isdigit()), key=lambda h: int(h[1:]))
    col = {h: k for k, h in enumerate(header)}

    ys, xs, ivs = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataParseError(f"expected {len(header)} fields, found {len(row)}", lineno)
        try:
            zl = float(row[col["zl"]])
            zr = float(row[col["zr"]])
            y = float(row[col["y"]]) if "y" in col else float("nan")
            x = [float(row[col[c]]) for c in xcols]
        except ValueError as exc:
            raise DataParseError(str(exc), lineno) from None
        if not (np.isfinite(zl) and np.isfinite(zr)):
            raise DataParseError("interval endpoints must be finite", lineno)
        if zl > zr:
            raise DataParseError(f"zl ({zl:g}) > zr ({zr:g})", lineno)
        if zl == zr:
            iv = ObservedInterval.exact(zl)
        else:
            lc = _flag(row[col["zl_closed"]], lineno, "zl_closed") if "zl_closed" in col else True
            rc = _flag(row[col["zr_closed"]], lineno, "zr_closed") if "zr_closed" in col else False
            iv = ObservedInterval(zl, zr, lc, rc)
        ys.append(y)
        xs.append(x)
        ivs.append(iv)
    if not ys:
        raise DataParseError("no data rows", 2)
    return Dataset(np.array(ys), np.array(xs, dtype=float).reshape(len(ys), len(xcols)), ivs)
