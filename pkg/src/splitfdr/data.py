"""Observation matrices, sample splits, ground truth and seeded randomness."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "DataMatrix",
    "GroundTruth",
    "SplitPlan",
    "RngHandle",
    "load_matrix",
    "random_split",
]


@dataclass(frozen=True)
class DataMatrix:
    """Dense n x p observation matrix; rows are samples, columns are features.

    Entries must be finite and n >= 4 so that each half of a split can still
    hold a 2-cluster assignment with at least one sample per cluster.
    """

    values: np.ndarray
    row_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"expected a 2-d matrix, got ndim={values.ndim}")
        n, p = values.shape
        if n < 4:
            raise DataError(f"need at least 4 samples, got n={n}")
        if p < 1:
            raise DataError("need at least 1 feature")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite value at row {i + 1}, column {j + 1}")
        if self.row_labels is not None and len(self.row_labels) != n:
            raise DataError("row_labels length does not match sample count")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def take_rows(self, idx: np.ndarray) -> np.ndarray:
        return self.values[np.asarray(idx, dtype=np.intp)]


@dataclass(frozen=True)
class GroundTruth:
    """Partition of feature indices (0-based) into relevant and null sets."""

    relevant: frozenset[int]
    p: int

    def __post_init__(self):
        rel = frozenset(int(j) for j in self.relevant)
        if rel and (min(rel) < 0 or max(rel) >= self.p):
            raise DataError("relevant indices out of range")
        object.__setattr__(self, "relevant", rel)

    @property
    def null(self) -> frozenset[int]:
        return frozenset(range(self.p)) - self.relevant


@dataclass(frozen=True)
class SplitPlan:
    """A partition of row indices {0..n-1} into two near-equal halves."""

    half1: np.ndarray
    half2: np.ndarray
    seed: int

    def __post_init__(self):
        h1 = np.asarray(self.half1, dtype=np.intp)
        h2 = np.asarray(self.half2, dtype=np.intp)
        n = h1.size + h2.size
        merged = np.concatenate([h1, h2])
        if not np.array_equal(np.sort(merged), np.arange(n)):
            raise DataError("halves must partition 0..n-1")
        if abs(h1.size - h2.size) > 1:
            raise DataError("halves must differ in size by at most 1")
        h1.setflags(write=False)
        h2.setflags(write=False)
        object.__setattr__(self, "half1", h1)
        object.__setattr__(self, "half2", h2)

    @property
    def n(self) -> int:
        return self.half1.size + self.half2.size


@dataclass(frozen=True)
class RngHandle:
    """Seeded, hierarchical random stream.

    The same (seed, path) always produces the identical draw sequence, and
    children derived with distinct paths are statistically independent, so
    replicate workers can each own a child without any coordination.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *idx: int) -> "RngHandle":
        return RngHandle(self.seed, self.path + tuple(int(i) for i in idx))


def _parse_cell(token: str, row: int, col: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"parse error at row {row}, column {col}: {token!r}") from None
    if not np.isfinite(value):
        raise DataError(f"non-finite value at row {row}, column {col}")
    return value


def read_table(
    path: str | os.PathLike,
    fmt: str = "csv",
    has_header: bool = False,
    has_row_labels: bool = False,
) -> tuple[np.ndarray, tuple[str, ...] | None]:
    """Parse a rectangular CSV/TSV of finite reals without shape constraints.

    Returns (values, row_labels); used both for observation matrices and for
    square covariance files.
    """
    if fmt not in ("csv", "tsv"):
        raise ConfigError(f"unknown format {fmt!r}, expected 'csv' or 'tsv'")
    sep = "," if fmt == "csv" else "\t"

    if hasattr(path, "read"):
        lines = path.read().splitlines()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip() != ""]
    if has_header:
        lines = lines[1:]
    if not lines:
        raise DataError("no data rows in input")

    rows = []
    labels = []
    width = None
    for r, line in enumerate(lines, start=1):
        cells = line.split(sep)
        if has_row_labels:
            labels.append(cells[0])
            cells = cells[1:]
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise DataError(f"ragged row {r}: expected {width} cells, got {len(cells)}")
        rows.append([_parse_cell(tok, r, c) for c, tok in enumerate(cells, start=1)])

    values = np.asarray(rows, dtype=np.float64)
    return values, tuple(labels) if labels else None


def load_matrix(
    path: str | os.PathLike,
    fmt: str = "csv",
    has_header: bool = False,
    has_row_labels: bool = False,
    transpose: bool = False,
) -> DataMatrix:
    """Read a dense CSV/TSV observation matrix of finite reals.

    ``has_row_labels`` drops (but preserves) a leading label column;
    ``transpose`` flips a features-by-samples file into the samples-by-features
    convention used everywhere else.
    """
    values, labels = read_table(path, fmt=fmt, has_header=has_header, has_row_labels=has_row_labels)
    if transpose:
        values = values.T
        labels = None
    return DataMatrix(values, row_labels=labels)


def random_split(n: int, rng: RngHandle) -> SplitPlan:
    """Uniformly random near-equal split of {0..n-1}.

    Half sizes are (n//2, n - n//2); when n is odd, which half receives the
    extra sample is itself randomized.
    """
    if n < 4:
        raise DataError(f"need n >= 4 to split, got n={n}")
    gen = rng.generator()
    perm = gen.permutation(n)
    size1 = n // 2
    if n % 2 == 1 and gen.integers(0, 2) == 1:
        size1 = n - n // 2
    return SplitPlan(half1=perm[:size1], half2=perm[size1:], seed=rng.seed)
