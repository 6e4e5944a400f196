"""Data schemas and attribute subsets.

Attribute values are the integers ``0 .. size-1``. An attribute subset is a
sorted, duplicate-free tuple of attribute indices; ``()`` is the empty subset
whose marginal is the record count.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from math import prod
from pathlib import Path
from typing import Iterable, Sequence

KINDS = ("categorical", "numeric")


@dataclass(frozen=True)
class Attribute:
    name: str
    size: int
    kind: str = "numeric"

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 2:
            raise ValueError(f"attribute {self.name!r}: domain size must be an integer >= 2, got {self.size}")
        if self.kind not in KINDS:
            raise ValueError(f"attribute {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    attributes: tuple[Attribute, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValueError(f"attribute names must be unique: {names}")

    @classmethod
    def from_sizes(cls, sizes: Sequence[int], kinds: Sequence[str] | None = None, prefix: str = "A") -> "Schema":
        kinds = kinds or ["numeric"] * len(sizes)
        return cls(tuple(Attribute(f"{prefix}{i + 1}", int(s), k) for i, (s, k) in enumerate(zip(sizes, kinds))))

    @classmethod
    def uniform(cls, n: int, d: int) -> "Schema":
        """The ``[n]^d`` schema: ``d`` numeric attributes of size ``n``."""
        return cls.from_sizes([n] * d)

    @classmethod
    def from_dict(cls, obj: dict) -> "Schema":
        return cls(tuple(Attribute(a["name"], int(a["size"]), a.get("kind", "numeric")) for a in obj["attributes"]))

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {"attributes": [{"name": a.name, "size": a.size, "kind": a.kind} for a in self.attributes]}

    def __len__(self):
        return len(self.attributes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def shape(self, subset: Iterable[int]) -> tuple[int, ...]:
        return tuple(self.attributes[i].size for i in subset)

    def cells(self, subset: Iterable[int]) -> int:
        return prod(self.shape(subset))

    @property
    def domain_size(self) -> int:
        return prod(self.sizes)

    def subsets(self, arity: int) -> list[tuple[int, ...]]:
        return list(itertools.combinations(range(len(self)), arity))

    def check_subset(self, subset: Sequence[int]) -> tuple[int, ...]:
        subset = canonical_subset(subset)
        if subset and (subset[0] < 0 or subset[-1] >= len(self)):
            raise ValueError(f"subset {subset} does not index into a schema with {len(self)} attributes")
        return subset


def canonical_subset(subset: Iterable[int]) -> tuple[int, ...]:
    """Sort and validate an attribute subset; duplicates are an error."""
    out = tuple(sorted(int(i) for i in subset))
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate attribute in subset {out}")
    return out


def subsets_of(subset: Sequence[int]) -> list[tuple[int, ...]]:
    """All subsets of ``subset`` (including ``()`` and ``subset`` itself) in a fixed order."""
    subset = tuple(subset)
    return [c for r in range(len(subset) + 1) for c in itertools.combinations(subset, r)]


def subset_key(subset: Sequence[int]) -> str:
    """String form used in JSON files, e.g. ``"0,3"``; ``""`` for the empty subset."""
    return ",".join(str(i) for i in subset)


def parse_subset_key(key: str) -> tuple[int, ...]:
    return canonical_subset(int(t) for t in key.split(",") if t != "")
