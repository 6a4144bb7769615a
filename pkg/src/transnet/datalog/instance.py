"""Facts and instances: sets of ground atoms grouped by relation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping

from .syntax import Constant, const_key, tuple_key


@dataclass(frozen=True, order=False)
class Fact:
    relation: str
    values: tuple[Constant, ...]

    def __post_init__(self):
        if not isinstance(self.values, tuple):
            object.__setattr__(self, "values", tuple(self.values))

    @property
    def arity(self) -> int:
        return len(self.values)

    def sort_key(self) -> tuple:
        return (self.relation, len(self.values), tuple_key(self.values))

    def __lt__(self, other: "Fact") -> bool:
        return self.sort_key() < other.sort_key()

    def __str__(self) -> str:
        return f"{self.relation}({', '.join(format_constant(v) for v in self.values)})"


def format_constant(value: Constant) -> str:
    if isinstance(value, int):
        return str(value)
    if value and (value[0].isalpha() or value[0] == "_") and value.replace("_", "a").isalnum():
        return value
    escaped = value.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


class Instance(Mapping[str, frozenset]):
    """Immutable set of facts, indexed by relation name.

    Relations with no tuples are not stored, so two instances compare
    equal exactly when they hold the same facts.
    """

    __slots__ = ("_rels", "_hash")

    def __init__(self, relations: Mapping[str, Iterable[tuple]] | None = None):
        rels: dict[str, frozenset] = {}
        for name, tuples in (relations or {}).items():
            ts = frozenset(tuple(t) for t in tuples)
            if ts:
                rels[name] = ts
        self._rels = rels
        self._hash = None

    @classmethod
    def from_facts(cls, facts: Iterable[Fact]) -> "Instance":
        rels: dict[str, set] = {}
        for f in facts:
            rels.setdefault(f.relation, set()).add(f.values)
        return cls(rels)

    def __getitem__(self, name: str) -> frozenset:
        return self._rels.get(name, frozenset())

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._rels))

    def __len__(self) -> int:
        return len(self._rels)

    def __contains__(self, name: object) -> bool:
        return name in self._rels

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Instance):
            return self._rels == other._rels
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._rels.items()))
        return self._hash

    def __repr__(self) -> str:
        return "Instance{" + ", ".join(str(f) for f in self.facts()) + "}"

    def relation(self, name: str) -> frozenset:
        return self._rels.get(name, frozenset())

    def facts(self) -> list[Fact]:
        """All facts in canonical sorted order."""
        out = []
        for name in sorted(self._rels):
            for values in sorted(self._rels[name], key=lambda t: (len(t), tuple_key(t))):
                out.append(Fact(name, values))
        return out

    def size(self) -> int:
        return sum(len(ts) for ts in self._rels.values())

    def is_empty(self) -> bool:
        return not self._rels

    def has(self, fact: Fact) -> bool:
        return fact.values in self._rels.get(fact.relation, ())

    def adom(self) -> set[Constant]:
        return {v for ts in self._rels.values() for t in ts for v in t}

    def union(self, *others: "Instance") -> "Instance":
        rels = {k: set(v) for k, v in self._rels.items()}
        for o in others:
            for k, v in o._rels.items():
                rels.setdefault(k, set()).update(v)
        return Instance(rels)

    __or__ = union

    def difference(self, other: "Instance") -> "Instance":
        return Instance({k: v - other.relation(k) for k, v in self._rels.items()})

    __sub__ = difference

    def intersection(self, other: "Instance") -> "Instance":
        return Instance({k: v & other.relation(k) for k, v in self._rels.items()})

    __and__ = intersection

    def issubset(self, other: "Instance") -> bool:
        return all(v <= other.relation(k) for k, v in self._rels.items())

    __le__ = issubset

    def restrict(self, names: Iterable[str]) -> "Instance":
        keep = set(names)
        return Instance({k: v for k, v in self._rels.items() if k in keep})

    def without(self, names: Iterable[str]) -> "Instance":
        drop = set(names)
        return Instance({k: v for k, v in self._rels.items() if k not in drop})

    def rename(self, mapping: Mapping[str, str]) -> "Instance":
        rels: dict[str, set] = {}
        for k, v in self._rels.items():
            rels.setdefault(mapping.get(k, k), set()).update(v)
        return Instance(rels)

    def map_constants(self, fn: Callable[[Constant], Constant]) -> "Instance":
        return Instance({k: {tuple(fn(x) for x in t) for t in v} for k, v in self._rels.items()})

    def filter(self, pred: Callable[[Fact], bool]) -> "Instance":
        return Instance.from_facts(f for f in self.facts() if pred(f))

    def as_dict(self) -> dict[str, frozenset]:
        return dict(self._rels)


EMPTY = Instance()


def sorted_constants(values: Iterable[Constant]) -> list[Constant]:
    return sorted(values, key=const_key)
