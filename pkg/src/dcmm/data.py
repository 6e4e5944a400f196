"""Datasets as record lists, their marginals, and synthetic data."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import Schema, canonical_subset, subset_key


@dataclass(frozen=True)
class DatasetHandle:
    """Immutable ``n x m`` integer record matrix; values of column ``i`` lie in ``[0, d_i)``."""

    schema: Schema
    records: np.ndarray

    def __post_init__(self):
        rec = np.asarray(self.records, dtype=np.int64).reshape(-1, len(self.schema))
        rec.setflags(write=False)
        object.__setattr__(self, "records", rec)
        sizes = np.array(self.schema.sizes)
        bad = np.nonzero(np.any((rec < 0) | (rec >= sizes), axis=1))[0]
        if bad.size:
            raise ValueError(f"record {bad[0]} has a value outside the attribute domains: {rec[bad[0]].tolist()}")

    def __len__(self):
        return self.records.shape[0]


@dataclass(frozen=True)
class MarginalVector:
    subset: tuple[int, ...]
    values: np.ndarray

    def tensor(self, schema: Schema) -> np.ndarray:
        return self.values.reshape(schema.shape(self.subset))


def marginal(handle: DatasetHandle, subset) -> MarginalVector:
    """Counts per value tuple of ``subset``, flattened row-major; ``()`` gives ``[n]``."""
    subset = handle.schema.check_subset(subset)
    shape = handle.schema.shape(subset)
    if not subset:
        return MarginalVector((), np.array([float(len(handle))]))
    flat = np.ravel_multi_index(tuple(handle.records[:, list(subset)].T), shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape)))
    return MarginalVector(subset, counts.astype(np.float64))


def load_csv(path, schema: Schema, categories: dict | str | Path | None = None) -> DatasetHandle:
    """Read a CSV whose header names the schema's attributes (any column order).

    Cells are integer codes, or labels translated through ``categories``
    (``{attribute: [label0, label1, ...]}`` or a path to such a JSON file).
    Row numbers in errors count the header as row 1.
    """
    if isinstance(categories, (str, Path)):
        categories = json.loads(Path(categories).read_text())
    categories = categories or {}
    lookup = {name: {str(lab): i for i, lab in enumerate(labels)} for name, labels in categories.items()}
    for name in lookup:
        if name not in schema.names:
            raise ValueError(f"category dictionary names unknown attribute {name!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return DatasetHandle(schema, np.zeros((0, len(schema)), dtype=np.int64))
        header = [h.strip() for h in header]
        unknown = [h for h in header if h not in schema.names]
        missing = [n for n in schema.names if n not in header]
        if unknown or missing:
            raise ValueError(f"CSV header mismatch: unknown columns {unknown}, missing attributes {missing}")
        cols = [header.index(n) for n in schema.names]
        rows = []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"row {rownum}: expected {len(header)} fields, got {len(row)}")
            rec = []
            for attr, c in zip(schema.attributes, cols):
                cell = row[c].strip()
                if attr.name in lookup:
                    if cell not in lookup[attr.name]:
                        raise ValueError(f"row {rownum}: unknown label {cell!r} for attribute {attr.name!r}")
                    v = lookup[attr.name][cell]
                else:
                    try:
                        v = int(cell)
                    except ValueError:
                        raise ValueError(f"row {rownum}: attribute {attr.name!r} value {cell!r} is not an integer code") from None
                if not 0 <= v < attr.size:
                    raise ValueError(f"row {rownum}: attribute {attr.name!r} value {v} outside [0, {attr.size})")
                rec.append(v)
            rows.append(rec)
    return DatasetHandle(schema, np.array(rows, dtype=np.int64).reshape(-1, len(schema)))


def synth(schema: Schema, n: int, seed: int = 0, distribution: str = "uniform", s: float = 1.1) -> DatasetHandle:
    """``n`` independent records; ``zipf`` draws value ``v`` with probability ∝ (v+1)^-s per attribute."""
    rng = np.random.default_rng(seed)
    cols = []
    for d in schema.sizes:
        if distribution == "uniform":
            cols.append(rng.integers(0, d, size=n))
        elif distribution == "zipf":
            p = np.arange(1, d + 1, dtype=np.float64) ** -s
            cols.append(rng.choice(d, size=n, p=p / p.sum()))
        else:
            raise ValueError(f"unknown distribution {distribution!r}")
    return DatasetHandle(schema, np.stack(cols, axis=1) if cols else np.zeros((n, 0), dtype=np.int64))


def dump_marginals(handle: DatasetHandle, subsets, path=None) -> dict:
    out = {subset_key(canonical_subset(s)): marginal(handle, s).values.tolist() for s in subsets}
    if path is not None:
        Path(path).write_text(json.dumps(out, indent=1))
    return out
