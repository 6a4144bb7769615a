"""Parallelization strategies: hash families, key-sets, partitions and delivery functions."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .datalog import INF, Constant, Fact, Instance, SchemaError, const_key

NodeId = int


def encode_constant(value: Constant) -> bytes:
    if isinstance(value, int):
        return f"i:{value}".encode()
    return f"s:{value}".encode()


def keyed_hash(seed: int, data: bytes) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    return int.from_bytes(hashlib.blake2b(data, key=key, digest_size=8).digest(), "little")


class HashMode(enum.Enum):
    SEEDED = "seeded"
    PINNED = "pinned"
    CONSTANT = "constant"


@dataclass(frozen=True)
class HashFamily:
    """A family of unary hash functions dom -> N, realized as one function.

    `active` is the codomain (the nodes that can ever receive a hashed
    fact); None means every node of the configuration.
    """

    mode: HashMode = HashMode.SEEDED
    seed: int = 0
    active: frozenset[NodeId] | None = None
    pinned: tuple[tuple[Constant, NodeId], ...] = ()
    constant: NodeId | None = None

    def __post_init__(self):
        if self.active is not None:
            object.__setattr__(self, "active", frozenset(self.active))
            if not self.active:
                raise ValueError("a hash family needs at least one active node")
        if self.mode is HashMode.CONSTANT and self.constant is None:
            raise ValueError("constant family needs a target node")
        object.__setattr__(
            self, "pinned", tuple(sorted(dict(self.pinned).items(), key=lambda kv: const_key(kv[0])))
        )

    @classmethod
    def seeded(cls, seed: int = 0, active: Iterable[NodeId] | None = None) -> "HashFamily":
        return cls(HashMode.SEEDED, seed, None if active is None else frozenset(active))

    @classmethod
    def pinned_map(
        cls, mapping: Mapping[Constant, NodeId], seed: int = 0, active: Iterable[NodeId] | None = None
    ) -> "HashFamily":
        return cls(HashMode.PINNED, seed, None if active is None else frozenset(active),
                   tuple(mapping.items()))

    @classmethod
    def constant_node(cls, node: NodeId, active: Iterable[NodeId] | None = None) -> "HashFamily":
        return cls(HashMode.CONSTANT, 0, None if active is None else frozenset(active), (), node)

    def active_nodes(self, nodes: Iterable[NodeId]) -> list[NodeId]:
        nodes = set(nodes)
        active = nodes if self.active is None else set(self.active)
        if not active <= nodes:
            raise ValueError(f"active nodes {sorted(active - nodes)} are not in the node set")
        if self.mode is HashMode.CONSTANT and self.constant not in active:
            raise ValueError(f"constant target {self.constant} is not active")
        if self.mode is HashMode.PINNED:
            stray = {n for _, n in self.pinned} - active
            if stray:
                raise ValueError(f"pinned targets {sorted(stray)} are not active")
        return sorted(active)

    def is_partitioned(self, nodes: Iterable[NodeId]) -> bool:
        nodes = set(nodes)
        return set(self.active_nodes(nodes)) != nodes

    def h(self, value: Constant, nodes: Iterable[NodeId]) -> NodeId:
        active = self.active_nodes(nodes)
        if self.mode is HashMode.CONSTANT:
            return self.constant
        if self.mode is HashMode.PINNED:
            pins = dict(self.pinned)
            if value in pins:
                return pins[value]
        return active[keyed_hash(self.seed, encode_constant(value)) % len(active)]

    def describe(self) -> str:
        active = "" if self.active is None else f", active=[{', '.join(map(str, sorted(self.active)))}]"
        if self.mode is HashMode.SEEDED:
            return f"seeded(seed={self.seed}{active})"
        if self.mode is HashMode.CONSTANT:
            return f"constant({self.constant}{active})"
        pins = ", ".join(f"{k}:{v}" for k, v in self.pinned)
        return f"pinned{{{pins}}}(seed={self.seed}{active})"


def hash_address(
    fact: Fact, key_set: Mapping[str, object], family: HashFamily, nodes: Iterable[NodeId]
) -> frozenset[NodeId]:
    """Destination nodes of an emitted fact: union of h over its key positions."""
    if fact.relation not in key_set or key_set[fact.relation] is None:
        raise SchemaError(f"no key declared for {fact.relation}")
    k = key_set[fact.relation]
    nodes = list(nodes)
    if k is INF:
        return frozenset(family.active_nodes(nodes))
    return frozenset(family.h(v, nodes) for v in fact.values[:k])


class CommunicationKind(enum.Enum):
    BROADCAST = "broadcast"
    COMM_FREE = "comm-free"
    HASHING = "hashing"


def destinations(
    fact: Fact,
    source: NodeId,
    kind: CommunicationKind,
    key_set: Mapping[str, object],
    family: HashFamily,
    nodes: Iterable[NodeId],
) -> frozenset[NodeId]:
    if kind is CommunicationKind.BROADCAST:
        return frozenset(nodes)
    if kind is CommunicationKind.COMM_FREE:
        return frozenset({source})
    return hash_address(fact, key_set, family, nodes)


def deliver_set(
    emissions: Mapping[NodeId, Instance],
    kind: CommunicationKind,
    key_set: Mapping[str, object],
    family: HashFamily,
    nodes: Iterable[NodeId] | None = None,
) -> dict[NodeId, Instance]:
    """Per-node inboxes for one round of emissions under the given delivery function."""
    nodes = sorted(emissions if nodes is None else nodes)
    boxes: dict[NodeId, list[Fact]] = {n: [] for n in nodes}
    for src in sorted(emissions):
        for f in emissions[src].facts():
            for dst in destinations(f, src, kind, key_set, family, nodes):
                boxes[dst].append(f)
    return {n: Instance.from_facts(fs) for n, fs in boxes.items()}


class PartitionMode(enum.Enum):
    REPLICATE_ALL = "replicate-all"
    SINGLE_NODE = "single-node"
    HASH_SPLIT = "hash-split"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class Partition:
    """How the input instance is installed on the nodes."""

    mode: PartitionMode = PartitionMode.REPLICATE_ALL
    node: NodeId | None = None
    seed: int = 0
    explicit: tuple[tuple[NodeId, Instance], ...] = field(default=())

    @classmethod
    def replicate_all(cls) -> "Partition":
        return cls(PartitionMode.REPLICATE_ALL)

    @classmethod
    def single_node(cls, node: NodeId) -> "Partition":
        return cls(PartitionMode.SINGLE_NODE, node=node)

    @classmethod
    def hash_split(cls, seed: int = 0) -> "Partition":
        return cls(PartitionMode.HASH_SPLIT, seed=seed)

    @classmethod
    def from_map(cls, mapping: Mapping[NodeId, Instance]) -> "Partition":
        return cls(PartitionMode.EXPLICIT, explicit=tuple(sorted(mapping.items())))

    def apply(self, instance: Instance, nodes: Iterable[NodeId]) -> dict[NodeId, Instance]:
        nodes = sorted(set(nodes))
        if len(nodes) == 1:
            return {nodes[0]: instance}
        if self.mode is PartitionMode.REPLICATE_ALL:
            return {n: instance for n in nodes}
        if self.mode is PartitionMode.SINGLE_NODE:
            if self.node not in nodes:
                raise ValueError(f"partition assigns facts to unknown node {self.node}")
            return {n: instance if n == self.node else Instance() for n in nodes}
        if self.mode is PartitionMode.HASH_SPLIT:
            parts: dict[NodeId, list[Fact]] = {n: [] for n in nodes}
            for f in instance.facts():
                data = f.relation.encode() + b"|" + b"|".join(encode_constant(v) for v in f.values)
                parts[nodes[keyed_hash(self.seed, data) % len(nodes)]].append(f)
            return {n: Instance.from_facts(fs) for n, fs in parts.items()}
        mapping = dict(self.explicit)
        unknown = set(mapping) - set(nodes)
        if unknown:
            raise ValueError(f"partition assigns facts to unknown nodes {sorted(unknown)}")
        parts = {n: mapping.get(n, Instance()) & instance for n in nodes}
        covered = Instance().union(*parts.values())
        if covered != instance:
            raise ValueError("explicit partition does not cover the input instance")
        return parts

    def describe(self) -> str:
        if self.mode is PartitionMode.SINGLE_NODE:
            return f"single-node({self.node})"
        if self.mode is PartitionMode.HASH_SPLIT:
            return f"hash-split(seed={self.seed})"
        if self.mode is PartitionMode.EXPLICIT:
            return "explicit{" + "; ".join(
                f"{n}: {' '.join(str(f) for f in inst.facts())}" for n, inst in self.explicit) + "}"
        return self.mode.value


def is_communication_free_run(trace) -> bool:
    """True iff every emitted fact was addressed only to the node that emitted it."""
    return all(e.destinations == frozenset({e.source}) for e in trace.emissions())
