"""Syncausality graphs of traces and detection of the coordination pattern."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import networkx as nx

from .datalog import Fact, Instance, dependency_graph
from .network import (
    Budget,
    BudgetExhausted,
    Configuration,
    Dimension,
    SemanticsKind,
    Trace,
    enumerate_configurations,
    run,
)
from .strategy import NodeId
from .transducer import NULL_PREFIX, TransducerSpec


@dataclass(frozen=True, order=True)
class Point:
    node: NodeId
    round: int

    def __str__(self) -> str:
        return f"({self.node}, {self.round})"


class EdgeKind(enum.Enum):
    DIRECT_LOCAL = "direct-local"
    DIRECT_MESSAGE = "direct-message"
    INDIRECT_NULL = "indirect-null"


@dataclass(frozen=True)
class CausalEdge:
    source: Point
    target: Point
    kind: EdgeKind
    relation: str | None = None  # None for local successor edges
    fact: Fact | None = None
    derived: bool = False  # local edge where memory or output grew

    def __post_init__(self):
        if self.kind is EdgeKind.DIRECT_LOCAL:
            if self.source.node != self.target.node or self.target.round != self.source.round + 1:
                raise ValueError(f"local edge must link (i, s) to (i, s+1): {self}")
        elif self.target.round < self.source.round + 1:
            raise ValueError(f"edge goes backwards in time: {self}")

    def predicate_level(self) -> bool:
        """Edges that carry syncausality between predicates (not bare local succession)."""
        return self.kind is not EdgeKind.DIRECT_LOCAL or self.derived

    def record(self) -> dict:
        rec = {
            "type": "edge",
            "kind": self.kind.value,
            "from": [self.source.node, self.source.round],
            "to": [self.target.node, self.target.round],
            "relation": self.relation,
        }
        if self.fact is not None:
            rec["fact"] = str(self.fact)
        return rec


@dataclass
class SyncausalityGraph:
    points: list[Point] = field(default_factory=list)
    edges: list[CausalEdge] = field(default_factory=list)

    def __post_init__(self):
        self._out: dict[Point, list[CausalEdge]] = {}
        for e in self.edges:
            self._out.setdefault(e.source, []).append(e)

    def add(self, e: CausalEdge) -> None:
        self.edges.append(e)
        self._out.setdefault(e.source, []).append(e)

    def out_edges(self, p: Point) -> list[CausalEdge]:
        return self._out.get(p, [])

    def of_kind(self, kind: EdgeKind) -> list[CausalEdge]:
        return [e for e in self.edges if e.kind is kind]

    def to_networkx(self, kinds: Iterable[EdgeKind] | None = None) -> nx.MultiDiGraph:
        wanted = set(EdgeKind if kinds is None else kinds)
        g = nx.MultiDiGraph()
        g.add_nodes_from(self.points)
        for e in self.edges:
            if e.kind in wanted:
                g.add_edge(e.source, e.target, kind=e.kind, relation=e.relation)
        return g

    def happen_before(self) -> set[tuple[Point, Point]]:
        """Transitive closure of the direct edges: Lamport's happen-before over points."""
        g = self.to_networkx([EdgeKind.DIRECT_LOCAL, EdgeKind.DIRECT_MESSAGE])
        return {(p, q) for p in g for q in nx.descendants(g, p)}

    def syncausal(self) -> set[tuple[Point, Point]]:
        g = self.to_networkx()
        return {(p, q) for p in g for q in nx.descendants(g, p)}

    def reach(self, start: Iterable[Point], max_round: int) -> dict[NodeId, int]:
        """Earliest round each node is reached from `start` along predicate-level edges."""
        best: dict[NodeId, int] = {}
        seen = set()
        queue = deque(p for p in start if p.round <= max_round)
        while queue:
            p = queue.popleft()
            if p in seen:
                continue
            seen.add(p)
            if p.round < best.get(p.node, p.round + 1):
                best[p.node] = p.round
            for e in self.out_edges(p):
                if e.predicate_level() and e.target.round <= max_round:
                    queue.append(e.target)
        return best

    def records(self) -> Iterator[dict]:
        for e in sorted(self.edges, key=_edge_key):
            yield e.record()


def _edge_key(e: CausalEdge) -> tuple:
    return (e.source.round, e.source.node, e.target.round, e.target.node,
            e.kind.value, e.relation or "", e.fact.sort_key() if e.fact else ())


def negation_relevant(spec: TransducerSpec) -> frozenset[str]:
    """Emit relations that feed a negated or COUNT/SUM-aggregated literal, directly or not."""
    g = dependency_graph(spec.program.all_rules())
    blocking = {u for u, _, d in g.edges(data=True) if d["negative"]}
    out = set()
    for r in spec.schema.names("emt"):
        if r not in g:
            continue
        if r in blocking or blocking & nx.descendants(g, r):
            out.add(r)
    return frozenset(out)


def sealed_relation(relation: str) -> str | None:
    """The relation an explicit end-of-relation marker seals, if `relation` is one."""
    if relation.startswith(NULL_PREFIX) and len(relation) > len(NULL_PREFIX):
        return relation[len(NULL_PREFIX):]
    return None


def build_graph(trace: Trace, spec: TransducerSpec | None = None) -> SyncausalityGraph:
    spec = trace.spec if spec is None else spec
    if spec.schema != trace.spec.schema:
        raise ValueError("trace was produced by a different spec")
    nodes = list(trace.config.nodes)
    rounds = [g.round for g in trace.states]
    g = SyncausalityGraph([Point(n, s) for s in rounds for n in nodes])
    for steps in trace.steps:
        for n, st in sorted(steps.items()):
            g.add(CausalEdge(Point(n, st.round), Point(n, st.round + 1),
                             EdgeKind.DIRECT_LOCAL, derived=st.changed))
    for d in trace.delivery_events:
        src, dst = Point(d.source, d.emit_round), Point(d.dest, d.round)
        g.add(CausalEdge(src, dst, EdgeKind.DIRECT_MESSAGE, d.fact.relation, d.fact))
        sealed = sealed_relation(d.fact.relation)
        if sealed is not None and trace.config.semantics.kind is not SemanticsKind.RSFD:
            g.add(CausalEdge(src, dst, EdgeKind.INDIRECT_NULL, sealed))
    if trace.config.semantics.kind is SemanticsKind.RSFD:
        relevant = sorted(negation_relevant(spec))
        active = trace.config.active()
        for steps in trace.steps:
            s = next(iter(steps.values())).round
            for i in nodes:
                for j in active:
                    if i == j:
                        continue
                    for r in relevant:
                        g.add(CausalEdge(Point(i, s), Point(j, s + 1), EdgeKind.INDIRECT_NULL, r))
    return g


@dataclass(frozen=True)
class CoordinationPattern:
    master: Point
    relation: str
    reached: tuple[tuple[NodeId, int], ...]  # node, earliest round reached

    def describe(self) -> str:
        reach = ", ".join(f"{n}@{r}" for n, r in self.reached)
        return f"master {self.master} via {self.relation} reaches {reach}"


def detect_coordination_pattern(
    g: SyncausalityGraph, trace: Trace, active: Iterable[NodeId] | None = None
) -> CoordinationPattern | None:
    """First point whose syncausal reach through one emit relation covers all other active nodes.

    Under rsfd the reach must land exactly one round later; under the
    variable-delay semantics any arrival no later than quiescence counts.
    """
    if not trace.quiescent:
        raise ValueError("coordination pattern is only defined on quiescent traces")
    active = sorted(trace.config.active() if active is None else active)
    q = trace.quiescence
    fixed = trace.config.semantics.kind is SemanticsKind.RSFD
    for s in range(trace.t0, q):
        for i in trace.config.nodes:
            others = [j for j in active if j != i]
            if not others:
                continue
            first: dict[str, list[CausalEdge]] = {}
            for e in g.out_edges(Point(i, s)):
                if e.kind is not EdgeKind.DIRECT_LOCAL and e.target.round <= q:
                    first.setdefault(e.relation, []).append(e)
            for rel in sorted(first):
                if fixed:
                    hit = {e.target.node: e.target.round for e in first[rel]
                           if e.target.round == s + 1}
                else:
                    hit = g.reach([e.target for e in first[rel]], q)
                if all(j in hit for j in others):
                    reached = tuple((j, hit[j]) for j in others)
                    return CoordinationPattern(Point(i, s), rel, reached)
    return None


class Freeness(enum.Enum):
    FREE = "FREE"
    NOT_FREE = "NOT_FREE"


@dataclass(frozen=True)
class FreenessVerdict:
    verdict: Freeness
    runs: int
    witness: Configuration | None = None
    pattern: CoordinationPattern | None = None  # from the first non-free run
    non_quiescent: int = 0

    @property
    def free(self) -> bool:
        return self.verdict is Freeness.FREE


def check_coordination_freeness(
    spec: TransducerSpec, instance: Instance, budget: Budget = Budget()
) -> FreenessVerdict:
    """Search non-trivial configurations for a run without a coordination master."""
    runs = skipped = 0
    example = None
    for cfg in enumerate_configurations(budget, Dimension.ALL, instance):
        if len(cfg.nodes) < 2 or len(cfg.active()) < 2:
            continue
        trace = run(spec, cfg, instance)
        runs += 1
        if not trace.quiescent:
            skipped += 1
            continue
        pattern = detect_coordination_pattern(build_graph(trace, spec), trace)
        if pattern is None:
            return FreenessVerdict(Freeness.FREE, runs, cfg, None, skipped)
        if example is None:
            example = pattern
    if runs == skipped:
        raise BudgetExhausted("no non-trivial configuration reached quiescence")
    return FreenessVerdict(Freeness.NOT_FREE, runs, None, example, skipped)
