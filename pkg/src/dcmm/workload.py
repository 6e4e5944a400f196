"""Weighted linear queries over marginals and the standard workload families.

Each query lives on the marginal of an attribute subset; its coefficients are
the row-major flattening of a tensor shaped like that marginal. Higher-arity
queries of the axis-aligned families are Kronecker products of 1-way factors,
which matches row-major flattening.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import comb, prod
from pathlib import Path
from typing import Iterator

import numpy as np

from .schema import Schema, canonical_subset

FAMILIES = ("marginal", "prefix", "range", "circular", "affine", "abs", "random", "hybrid")
AXIS_FAMILIES = ("marginal", "prefix", "range", "circular")
PAIR_FAMILIES = ("affine", "abs")


@dataclass(frozen=True)
class LinearQuery:
    subset: tuple[int, ...]
    coeffs: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "subset", canonical_subset(self.subset))
        coeffs = np.asarray(self.coeffs, dtype=np.float64).ravel()
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "weight", float(self.weight))
        if self.weight < 0:
            raise ValueError(f"query weight must be >= 0, got {self.weight}")

    def tensor(self, schema: Schema) -> np.ndarray:
        return self.coeffs.reshape(schema.shape(self.subset))


@dataclass
class Workload:
    schema: Schema
    queries: list[LinearQuery] = field(default_factory=list)

    def __post_init__(self):
        for i, q in enumerate(self.queries):
            self._check(i, q)

    def _check(self, i, q):
        self.schema.check_subset(q.subset)
        if q.coeffs.size != self.schema.cells(q.subset):
            raise ValueError(
                f"query {i}: {q.coeffs.size} coefficients but marginal on {q.subset} has {self.schema.cells(q.subset)} cells"
            )

    def __len__(self):
        return len(self.queries)

    def __iter__(self) -> Iterator[LinearQuery]:
        return iter(self.queries)

    def append(self, q: LinearQuery):
        self._check(len(self.queries), q)
        self.queries.append(q)

    @property
    def weights(self) -> np.ndarray:
        return np.array([q.weight for q in self.queries], dtype=np.float64)

    def with_weights(self, weights) -> "Workload":
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (len(self),):
            raise ValueError("need one weight per query")
        return Workload(self.schema, [LinearQuery(q.subset, q.coeffs, w) for q, w in zip(self.queries, weights)])

    def groups(self) -> dict[tuple[int, ...], np.ndarray]:
        """Query indices grouped by subset, in first-appearance order."""
        out: dict[tuple[int, ...], list[int]] = {}
        for i, q in enumerate(self.queries):
            out.setdefault(q.subset, []).append(i)
        return {k: np.array(v, dtype=np.int64) for k, v in out.items()}

    def __add__(self, other: "Workload") -> "Workload":
        if other.schema != self.schema:
            raise ValueError("cannot concatenate workloads over different schemas")
        return Workload(self.schema, self.queries + other.queries)

    # columnar JSON: one list per field
    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "subsets": [list(q.subset) for q in self.queries],
            "coeffs": [q.coeffs.tolist() for q in self.queries],
            "weights": [q.weight for q in self.queries],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "Workload":
        schema = Schema.from_dict(obj["schema"])
        qs = [LinearQuery(tuple(s), np.array(c), w) for s, c, w in zip(obj["subsets"], obj["coeffs"], obj["weights"])]
        return cls(schema, qs)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Workload":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class WorkloadSpec:
    """Which family to build, on which arities, with which parameters.

    ``params`` keys used by the builders:

    * ``p`` (random): flip probability, default 0.3
    * ``seed`` (random): generator seed, default 0
    * ``per_cell`` (random): queries per marginal cell, default 3
    * ``one_way`` (affine/abs): family used for arity 1, default ``"prefix"``;
      ``None`` forbids arity 1
    """

    family: str
    arities: tuple[int, ...] = (1, 2)
    params: dict = field(default_factory=dict)
    weights: object = "unit"

    def __post_init__(self):
        self.arities = tuple(sorted(set(int(a) for a in self.arities)))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown workload family {self.family!r}; expected one of {FAMILIES}")
        if not self.arities or self.arities[0] < 1:
            raise ValueError(f"arities must be positive integers, got {self.arities}")
        if self.weights != "unit" and not (isinstance(self.weights, dict) and "random_seed" in self.weights):
            raise ValueError('weights must be "unit" or {"random_seed": int}')

    @classmethod
    def from_dict(cls, obj: dict) -> "WorkloadSpec":
        return cls(obj["family"], tuple(obj.get("arities", (1, 2))), dict(obj.get("params", {})), obj.get("weights", "unit"))

    @classmethod
    def load(cls, path) -> "WorkloadSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"family": self.family, "arities": list(self.arities), "params": self.params, "weights": self.weights}


# ---------------------------------------------------------------- 1-way factors

def marginal_factor(d: int) -> np.ndarray:
    return np.eye(d)


def prefix_factor(d: int) -> np.ndarray:
    """Row ``c`` counts ``A <= c``."""
    return np.tril(np.ones((d, d)))


def range_factor(d: int) -> np.ndarray:
    """Rows ``A in [c1, c2]`` for all ``c1 <= c2``, ordered by ``(c1, c2)``."""
    x = np.arange(d)
    return np.array([(x >= a) & (x <= b) for a in range(d) for b in range(a, d)], dtype=np.float64)


def circular_factor(d: int) -> np.ndarray:
    """Wrap-around ranges: every start position times every length ``1..d``."""
    x = np.arange(d)
    rows = [((x - s) % d) < length for s in range(d) for length in range(1, d + 1)]
    return np.array(rows, dtype=np.float64)


_FACTORS = {"marginal": marginal_factor, "prefix": prefix_factor, "range": range_factor, "circular": circular_factor}


def _factor_rows(family: str, d: int) -> int:
    return {"marginal": d, "prefix": d, "range": d * (d + 1) // 2, "circular": d * d}[family]


def affine_block(d1: int, d2: int) -> np.ndarray:
    """``A_i + A_j <= c`` for ``c = 0 .. d1+d2-2``."""
    s = np.add.outer(np.arange(d1), np.arange(d2)).ravel()
    return np.array([s <= c for c in range(d1 + d2 - 1)], dtype=np.float64)


def abs_block(d1: int, d2: int) -> np.ndarray:
    """``|A_i - A_j| <= c`` for ``c = 0 .. max(d1,d2)-1``."""
    s = np.abs(np.subtract.outer(np.arange(d1), np.arange(d2))).ravel()
    return np.array([s <= c for c in range(max(d1, d2))], dtype=np.float64)


def kron_all(factors) -> np.ndarray:
    out = np.ones((1, 1))
    for f in factors:
        out = np.kron(out, f)
    return out


def _random_block(schema: Schema, subset, spec: WorkloadSpec) -> np.ndarray:
    p = float(spec.params.get("p", 0.3))
    per_cell = int(spec.params.get("per_cell", 3))
    cells = schema.cells(subset)
    # independent stream per marginal so adding attributes never reshuffles others
    ss = np.random.SeedSequence(int(spec.params.get("seed", 0)), spawn_key=(len(subset), *subset))
    rng = np.random.default_rng(ss)
    return (rng.random((per_cell * cells, cells)) < p).astype(np.float64)


def _one_way_family(spec: WorkloadSpec) -> str:
    fam = spec.params.get("one_way", "prefix")
    if fam is None:
        raise ValueError(f"{spec.family} queries are 2-way only; set params.one_way to allow arity 1")
    if fam not in AXIS_FAMILIES:
        raise ValueError(f"one_way family must be one of {AXIS_FAMILIES}, got {fam!r}")
    return fam


def _check_arities(schema: Schema, spec: WorkloadSpec):
    if spec.arities[-1] > len(schema):
        raise ValueError(f"arity {spec.arities[-1]} exceeds the number of attributes ({len(schema)})")
    if spec.family in PAIR_FAMILIES:
        bad = [a for a in spec.arities if a not in (1, 2)]
        if bad:
            raise ValueError(f"{spec.family} queries are defined for arity 2 only (arity 1 via one_way), got {bad}")
        if 1 in spec.arities:
            _one_way_family(spec)


def block_for(schema: Schema, subset: tuple[int, ...], spec: WorkloadSpec) -> np.ndarray:
    """Coefficient matrix (one row per query) of ``spec``'s family on ``subset``."""
    fam = spec.family
    sizes = schema.shape(subset)
    if fam in PAIR_FAMILIES:
        if len(subset) == 1:
            return _FACTORS[_one_way_family(spec)](sizes[0])
        return (affine_block if fam == "affine" else abs_block)(*sizes)
    if fam == "random":
        return _random_block(schema, subset, spec)
    if fam == "hybrid":
        kinds = [schema.attributes[i].kind for i in subset]
        return kron_all(marginal_factor(d) if k == "categorical" else prefix_factor(d) for d, k in zip(sizes, kinds))
    return kron_all(_FACTORS[fam](d) for d in sizes)


def block_rows(schema: Schema, subset: tuple[int, ...], spec: WorkloadSpec) -> int:
    """Number of rows ``block_for`` would produce, without building it."""
    fam = spec.family
    sizes = schema.shape(subset)
    if fam in PAIR_FAMILIES:
        if len(subset) == 1:
            return _factor_rows(_one_way_family(spec), sizes[0])
        return sizes[0] + sizes[1] - 1 if fam == "affine" else max(sizes)
    if fam == "random":
        return int(spec.params.get("per_cell", 3)) * prod(sizes)
    if fam == "hybrid":
        return prod(sizes)
    return prod(_factor_rows(fam, d) for d in sizes)


def build_workload(schema: Schema, spec: WorkloadSpec) -> Workload:
    """All queries of ``spec.family`` over every attribute subset of the requested arities."""
    _check_arities(schema, spec)
    queries = []
    for arity in spec.arities:
        for subset in schema.subsets(arity):
            for row in block_for(schema, subset, spec):
                queries.append(LinearQuery(subset, row, 1.0))
    wl = Workload(schema, queries)
    if isinstance(spec.weights, dict):
        wl = assign_random_weights(wl, int(spec.weights["random_seed"]))
    return wl


def query_count(schema: Schema, spec: WorkloadSpec) -> int:
    """Size of ``build_workload(schema, spec)`` computed without materializing it.

    Subsets of the same arity on a uniform schema share a row count, so only
    one representative per (arity, shape) is inspected.
    """
    _check_arities(schema, spec)
    total = 0
    for arity in spec.arities:
        if len(set(schema.sizes)) == 1 and spec.family != "hybrid":
            total += comb(len(schema), arity) * block_rows(schema, tuple(range(arity)), spec)
        else:
            total += sum(block_rows(schema, s, spec) for s in schema.subsets(arity))
    return total


def assign_random_weights(workload: Workload, seed: int) -> Workload:
    """Replace every weight with an integer drawn uniformly from 1..5."""
    rng = np.random.default_rng(seed)
    return workload.with_weights(rng.integers(1, 6, size=len(workload)).astype(np.float64))


def concat(*workloads: Workload) -> Workload:
    out = workloads[0]
    for w in workloads[1:]:
        out = out + w
    return out
