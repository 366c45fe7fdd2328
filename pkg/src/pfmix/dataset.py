"""Dataset containers and the CSV schema shared by the generators and the CLI.

Flat data uses the header ``x0,...,x{D-1},y``; sequence data prepends
``seq_id,t`` columns. Labels are 0-based integers. Ground-truth generator
metadata (relevance mask, component indices, generator spec) travels in a
JSON sidecar next to the CSV, never inside it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core_stats import philox_rng
from .exceptions import DataError

LABEL_COLUMN = "y"


@dataclass
class Dataset:
    """Flat observations with optional integer class labels.

    Attributes:
        X: (N, D) float matrix.
        y: (N,) int vector, or None for unlabeled data.
        relevance_mask: (D,) bool ground-truth relevance, when known.
        meta: generator provenance (spec values, seed, component indices).
    """

    X: np.ndarray
    y: np.ndarray | None = None
    relevance_mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dims(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.y is None:
            raise DataError("dataset has no labels")
        return int(self.y.max()) + 1

    def subset(self, idx) -> "Dataset":
        y = None if self.y is None else self.y[idx]
        return Dataset(self.X[idx], y, self.relevance_mask, dict(self.meta))


@dataclass
class Sequence:
    """One observation sequence with optional per-step labels."""

    X: np.ndarray  # (T, D)
    y: np.ndarray | None = None  # (T,)

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class SequenceDataset:
    """A list of sequences with consistent dimensionality and label arity."""

    sequences: list[Sequence]
    relevance_mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.sequences)

    @property
    def dims(self) -> int:
        return self.sequences[0].X.shape[1]

    @property
    def total_steps(self) -> int:
        return sum(len(s) for s in self.sequences)

    @property
    def n_classes(self) -> int:
        labels = [s.y for s in self.sequences if s.y is not None]
        if not labels:
            raise DataError("sequence dataset has no labels")
        return int(max(int(y.max()) for y in labels)) + 1

    def flatten(self) -> Dataset:
        """Pool all timesteps into one flat dataset (order preserved)."""
        X = np.vstack([s.X for s in self.sequences])
        if all(s.y is not None for s in self.sequences):
            y = np.concatenate([s.y for s in self.sequences])
        else:
            y = None
        return Dataset(X, y, self.relevance_mask, dict(self.meta))

    def subset(self, idx) -> "SequenceDataset":
        seqs = [self.sequences[i] for i in idx]
        return SequenceDataset(seqs, self.relevance_mask, dict(self.meta))


def train_test_split(data, test_fraction: float, seed: int):
    """Deterministic shuffled split; sequences split at the sequence level."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test fraction must be in (0, 1), got {test_fraction}")
    rng = philox_rng(seed)
    n = data.n
    perm = rng.permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    if n_test >= n:
        raise DataError("split leaves an empty training set")
    return data.subset(perm[n_test:]), data.subset(perm[:n_test])


def _format_value(v) -> str:
    return repr(float(v))


def write_flat_csv(data: Dataset, path) -> None:
    if data.y is None:
        raise DataError("CSV schema requires labels")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{d}" for d in range(data.dims)] + [LABEL_COLUMN])
        for row, label in zip(data.X, data.y):
            writer.writerow([_format_value(v) for v in row] + [str(int(label))])


def read_flat_csv(path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != LABEL_COLUMN:
            raise DataError(f"{path}: expected trailing '{LABEL_COLUMN}' column, got {header!r}")
        dims = len(header) - 1
        xs, ys = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dims + 1:
                raise DataError(f"{path}:{lineno}: expected {dims + 1} columns, got {len(row)}")
            try:
                xs.append([float(v) for v in row[:-1]])
                ys.append(int(row[-1]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    data = Dataset(np.asarray(xs, dtype=float), np.asarray(ys, dtype=np.int64))
    _check_finite_rows(data.X, path)
    return data


def write_sequence_csv(data: SequenceDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["seq_id", "t"] + [f"x{d}" for d in range(data.dims)] + [LABEL_COLUMN]
        )
        for sid, seq in enumerate(data.sequences):
            if seq.y is None:
                raise DataError("CSV schema requires labels")
            for t in range(len(seq)):
                writer.writerow(
                    [str(sid), str(t)]
                    + [_format_value(v) for v in seq.X[t]]
                    + [str(int(seq.y[t]))]
                )


def read_sequence_csv(path) -> SequenceDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["seq_id", "t"] or header[-1] != LABEL_COLUMN:
            raise DataError(f"{path}: not a sequence CSV (header {header!r})")
        dims = len(header) - 3
        rows: dict[int, list[tuple[int, list[float], int]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dims + 3:
                raise DataError(f"{path}:{lineno}: expected {dims + 3} columns, got {len(row)}")
            try:
                sid, t = int(row[0]), int(row[1])
                x = [float(v) for v in row[2:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            rows.setdefault(sid, []).append((t, x, label))
    sequences = []
    for sid in sorted(rows):
        steps = sorted(rows[sid], key=lambda item: item[0])
        X = np.asarray([x for _, x, _ in steps], dtype=float)
        y = np.asarray([label for _, _, label in steps], dtype=np.int64)
        _check_finite_rows(X, path)
        sequences.append(Sequence(X, y))
    return SequenceDataset(sequences)


def _check_finite_rows(X, path) -> None:
    if not np.all(np.isfinite(X)):
        bad = np.argwhere(~np.isfinite(X))[0]
        raise DataError(f"{path}: non-finite value at row {bad[0]}, column x{bad[1]}")


def write_meta(data, path) -> None:
    """Write the ground-truth sidecar as deterministic JSON."""
    payload = dict(data.meta)
    if data.relevance_mask is not None:
        payload["relevance_mask"] = [bool(b) for b in data.relevance_mask]
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_meta(path) -> dict:
    return json.loads(Path(path).read_text())
