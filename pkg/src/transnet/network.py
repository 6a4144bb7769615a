"""Transducer networks: global transitions, delivery schedules, traces and quiescence."""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field, replace
from itertools import takewhile
from typing import Iterable, Iterator, Sequence

from .datalog import Fact, Instance, SchemaError
from .strategy import CommunicationKind, HashFamily, NodeId, Partition, destinations
from .transducer import (
    TIME,
    LocalState,
    TransducerSpec,
    build_environment,
    configure,
    environment_state,
    local_transition,
)


class SemanticsKind(enum.Enum):
    RSFD = "rsfd"
    RSBV = "rsbv"
    RSYNC = "rsync"


@dataclass(frozen=True)
class DeliverySemantics:
    kind: SemanticsKind = SemanticsKind.RSFD
    var: int = 0
    fifo: bool = False
    max_delay: int = 0

    def __post_init__(self):
        if self.kind is SemanticsKind.RSBV and self.var < 1:
            raise ValueError("rsbv needs var >= 1")
        if self.kind is SemanticsKind.RSYNC and self.max_delay < 1:
            raise ValueError("rsync needs max_delay >= 1")

    @classmethod
    def rsfd(cls) -> "DeliverySemantics":
        return cls()

    @classmethod
    def rsbv(cls, var: int, fifo: bool = False) -> "DeliverySemantics":
        return cls(SemanticsKind.RSBV, var=var, fifo=fifo)

    @classmethod
    def rsync(cls, max_delay: int) -> "DeliverySemantics":
        return cls(SemanticsKind.RSYNC, max_delay=max_delay)

    def window(self, emit_round: int) -> tuple[int, int]:
        """Inclusive range of rounds in which a message emitted at `emit_round` may arrive."""
        if self.kind is SemanticsKind.RSFD:
            return emit_round + 1, emit_round + 1
        spread = self.var if self.kind is SemanticsKind.RSBV else self.max_delay
        return emit_round + 1, emit_round + 1 + spread

    def describe(self) -> str:
        if self.kind is SemanticsKind.RSBV:
            return f"rsbv(var={self.var}, fifo={'true' if self.fifo else 'false'})"
        if self.kind is SemanticsKind.RSYNC:
            return f"rsync(max_delay={self.max_delay})"
        return "rsfd"


RSFD = DeliverySemantics.rsfd()


@dataclass(frozen=True)
class Configuration:
    nodes: tuple[NodeId, ...] = (1,)
    t0: int = 0
    partition: Partition = Partition()
    family: HashFamily = HashFamily()
    semantics: DeliverySemantics = RSFD
    seed: int = 0
    max_rounds: int = 50
    communication: CommunicationKind = CommunicationKind.HASHING

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(set(self.nodes))))
        if not self.nodes:
            raise ValueError("a configuration needs at least one node")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")
        self.family.active_nodes(self.nodes)  # validates active set

    @property
    def trivial(self) -> bool:
        return len(self.nodes) == 1

    def active(self) -> list[NodeId]:
        """Nodes that can receive facts; all nodes unless the family is partitioned."""
        if self.communication is CommunicationKind.HASHING:
            return self.family.active_nodes(self.nodes)
        return list(self.nodes)

    def describe(self) -> str:
        parts = [
            f"nodes=[{', '.join(map(str, self.nodes))}]",
            f"t0={self.t0}",
            f"partition={self.partition.describe()}",
            f"hash={self.family.describe()}",
            f"semantics={self.semantics.describe()}",
            f"seed={self.seed}",
            f"communication={self.communication.value}",
        ]
        return " ".join(parts)


@dataclass(frozen=True)
class Message:
    fact: Fact
    source: NodeId
    dest: NodeId
    emit_round: int
    due_round: int


@dataclass(frozen=True)
class EmissionEvent:
    round: int
    source: NodeId
    fact: Fact
    destinations: frozenset[NodeId]


@dataclass(frozen=True)
class DeliveryEvent:
    round: int
    source: NodeId
    dest: NodeId
    fact: Fact
    emit_round: int


@dataclass(frozen=True)
class NodeStep:
    """What one node did in the transition at `round`."""

    round: int
    node: NodeId
    inbox: Instance
    emitted: Instance
    inserted: Instance
    deleted: Instance
    derived_out: Instance

    @property
    def changed(self) -> bool:
        return not (self.inserted.is_empty() and self.deleted.is_empty()
                    and self.derived_out.is_empty())


@dataclass(frozen=True)
class GlobalState:
    round: int
    env: LocalState
    nodes: tuple[tuple[NodeId, LocalState], ...]
    in_flight: tuple[Message, ...] = ()

    def node(self, n: NodeId) -> LocalState:
        return dict(self.nodes)[n]

    def out(self) -> Instance:
        return Instance().union(*(s.out for _, s in self.nodes))


@dataclass
class Trace:
    spec: TransducerSpec
    config: Configuration
    states: list[GlobalState] = field(default_factory=list)
    steps: list[dict[NodeId, NodeStep]] = field(default_factory=list)
    emission_events: list[EmissionEvent] = field(default_factory=list)
    delivery_events: list[DeliveryEvent] = field(default_factory=list)
    quiescence: int | None = None
    detected_at: int | None = None

    @property
    def t0(self) -> int:
        return self.config.t0

    @property
    def quiescent(self) -> bool:
        return self.quiescence is not None

    @property
    def pending(self) -> tuple[Message, ...]:
        """Messages still in flight when the run stopped (due after quiescence)."""
        return self.states[-1].in_flight if self.states else ()

    @property
    def last_round(self) -> int:
        return self.states[-1].round

    def state_at(self, round_: int) -> GlobalState:
        return self.states[round_ - self.t0]

    def step_at(self, round_: int) -> dict[NodeId, NodeStep]:
        return self.steps[round_ - self.t0]

    @property
    def out_star(self) -> Instance | None:
        if self.quiescence is None:
            return None
        return self.state_at(self.quiescence).out()

    def emissions(self) -> Iterator[EmissionEvent]:
        return iter(self.emission_events)

    def records(self) -> Iterator[dict]:
        """Line-delimited records in a stable order and field layout."""
        yield {"type": "config", "spec": self.spec.name, "config": self.config.describe()}
        by_round_e: dict[int, list[EmissionEvent]] = {}
        for e in self.emission_events:
            by_round_e.setdefault(e.round, []).append(e)
        by_round_d: dict[int, list[DeliveryEvent]] = {}
        for d in self.delivery_events:
            by_round_d.setdefault(d.round, []).append(d)
        for k, g in enumerate(self.states):
            yield {
                "type": "state",
                "round": g.round,
                "nodes": {
                    str(n): {
                        "mem": [str(f) for f in s.mem.facts()],
                        "out": [str(f) for f in s.out.facts()],
                    }
                    for n, s in g.nodes
                },
                "in_flight": len(g.in_flight),
            }
            if k < len(self.steps):
                for d in by_round_d.get(g.round, []):
                    yield {"type": "deliver", "round": d.round, "source": d.source,
                           "dest": d.dest, "fact": str(d.fact), "emitted": d.emit_round}
                for e in by_round_e.get(g.round, []):
                    yield {"type": "emit", "round": e.round, "source": e.source,
                           "fact": str(e.fact), "to": sorted(e.destinations)}
        for m in self.pending:
            yield {"type": "pending", "source": m.source, "dest": m.dest, "fact": str(m.fact),
                   "emitted": m.emit_round, "due": m.due_round}
        out = self.out_star
        yield {
            "type": "quiescence",
            "round": self.quiescence,
            "out": None if out is None else [str(f) for f in out.facts()],
        }

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, separators=(", ", ": ")) + "\n" for r in self.records())


class Network:
    """A transducer network (spec, environment, configuration) that can be stepped."""

    def __init__(self, spec: TransducerSpec, config: Configuration):
        self.spec = spec
        self.env_spec = build_environment(spec)
        self.config = config
        self.active = config.active()

    def initial_state(self, instance: Instance) -> GlobalState:
        bad = [n for n in instance if n not in self.spec.schema.names("db")]
        if bad:
            raise SchemaError(f"input holds facts over non-db relations {bad}")
        cfg = self.config
        parts = cfg.partition.apply(instance, cfg.nodes)
        nodes = tuple(
            (n, configure(self.spec, cfg.nodes, n, self.active, parts[n], cfg.t0))
            for n in cfg.nodes
        )
        return GlobalState(cfg.t0, environment_state(self.env_spec, cfg.t0), nodes, ())

    def due_round(self, rng: random.Random, emit_round: int) -> int:
        lo, hi = self.config.semantics.window(emit_round)
        return lo if lo == hi else rng.randint(lo, hi)

    def transition(
        self,
        g: GlobalState,
        rng: random.Random,
        last_due: dict[tuple[NodeId, NodeId], int],
        firing_order: Sequence[NodeId] | None = None,
    ) -> tuple[GlobalState, dict[NodeId, NodeStep], list[EmissionEvent], list[DeliveryEvent]]:
        s = g.round
        clock = next(iter(g.env.mem.relation(TIME)))[0]
        due = [m for m in g.in_flight if m.due_round == s]
        waiting = [m for m in g.in_flight if m.due_round != s]
        inboxes: dict[NodeId, list[Fact]] = {n: [] for n, _ in g.nodes}
        deliveries = []
        for m in sorted(due, key=_message_key):
            inboxes[m.dest].append(m.fact)
            deliveries.append(DeliveryEvent(s, m.source, m.dest, m.fact, m.emit_round))
        states = dict(g.nodes)
        order = list(firing_order) if firing_order is not None else [n for n, _ in g.nodes]
        if sorted(order) != sorted(states):
            raise ValueError("firing order must be a permutation of the nodes")
        results = {}
        for n in order:
            inbox = Instance.from_facts(inboxes[n])
            results[n] = (inbox, local_transition(self.spec, states[n], inbox, clock))
        steps: dict[NodeId, NodeStep] = {}
        emitted_all = []
        for n in sorted(results):
            inbox, r = results[n]
            steps[n] = NodeStep(s, n, inbox, r.emitted, r.inserted, r.deleted, r.derived_out)
            emitted_all.append(r.emitted)
        env_result = local_transition(self.env_spec, g.env, Instance().union(*emitted_all), clock)
        emissions = []
        new_msgs = []
        rank = {name: i for i, name in enumerate(self.spec.emission_order)}
        cfg = self.config
        for n in sorted(results):
            emitted = steps[n].emitted
            facts = sorted(emitted.facts(), key=lambda f: (rank[f.relation], f.sort_key()))
            for f in facts:
                dests = destinations(
                    f, n, cfg.communication, self.spec.key_set, cfg.family, cfg.nodes
                )
                emissions.append(EmissionEvent(s, n, f, dests))
                for d in sorted(dests):
                    when = self.due_round(rng, s)
                    if cfg.semantics.fifo:
                        when = max(when, last_due.get((n, d), when))
                        last_due[(n, d)] = when
                    new_msgs.append(Message(f, n, d, s, when))
        new_state = GlobalState(
            s + 1,
            env_result.state,
            tuple((n, results[n][1].state) for n in sorted(results)),
            tuple(waiting) + tuple(new_msgs),
        )
        return new_state, steps, emissions, deliveries


def _message_key(m: Message) -> tuple:
    return (m.dest, m.source, m.emit_round, m.fact.sort_key())


def global_transition(
    spec: TransducerSpec,
    g: GlobalState,
    cfg: Configuration,
    rng: random.Random,
    last_due: dict | None = None,
) -> GlobalState:
    """One synchronous round: deliver, let every node transition, address the emissions."""
    return Network(spec, cfg).transition(g, rng, {} if last_due is None else last_due)[0]


def run(
    spec: TransducerSpec,
    cfg: Configuration,
    instance: Instance,
    firing_order: Sequence[NodeId] | None = None,
) -> Trace:
    """Iterate global transitions from the initial state until quiescence or max_rounds."""
    net = Network(spec, cfg)
    rng = random.Random(cfg.seed)
    trace = Trace(spec, cfg)
    g = net.initial_state(instance)
    trace.states.append(g)
    last_due: dict = {}
    last_change: int | None = None
    for _ in range(cfg.max_rounds):
        s = g.round
        g, steps, emissions, deliveries = net.transition(g, rng, last_due, firing_order)
        trace.states.append(g)
        trace.steps.append(steps)
        trace.emission_events.extend(emissions)
        trace.delivery_events.extend(deliveries)
        if any(st.changed for st in steps.values()):
            last_change = s
        lo = s - (net.config.semantics.window(s)[1] - s - 1)
        recent = list(takewhile(lambda e: e.round >= lo, reversed(trace.emission_events)))
        if _quiescent(net, g, steps, emissions, recent):
            trace.quiescence = cfg.t0 if last_change is None else last_change + 1
            trace.detected_at = s
            break
    return trace


def _quiescent(net: Network, g: GlobalState, steps, emissions, recent) -> bool:
    """True when no delivery pattern can change the network any more.

    The stream addressed to a node is everything emitted towards it in the
    rounds whose messages may still arrive (`recent`). The state must be a
    fixpoint of one round in which every node receives its full stream, and
    that round may only emit facts already in the stream. Any later inbox is
    then a subset of the stream, so monotone transitions stay put. Under
    rsfd the next inbox is exactly this round's emissions, so the emissions
    must repeat exactly.
    """
    # no node changed its memory or output this round
    if any(st.changed for st in steps.values()):
        return False
    exact = net.config.semantics.kind is SemanticsKind.RSFD
    if exact:
        # nothing in flight carries a fact its source no longer emits
        for m in g.in_flight:
            if not steps[m.source].emitted.has(m.fact):
                return False
        recent = emissions
    full: dict[NodeId, list[Fact]] = {n: [] for n in steps}
    sent: dict[NodeId, set[Fact]] = {n: set() for n in steps}
    for e in recent:
        sent[e.source].add(e.fact)
        for d in e.destinations:
            full[d].append(e.fact)
    states = dict(g.nodes)
    for n, st in steps.items():
        r = local_transition(net.spec, states[n], Instance.from_facts(full[n]), g.round)
        if not (r.inserted.is_empty() and r.deleted.is_empty() and r.derived_out.is_empty()):
            return False
        if exact and r.emitted != st.emitted:
            return False
        if not exact and not set(r.emitted.facts()) <= sent[n]:
            return False
    return True


def out_schema(spec: TransducerSpec) -> tuple:
    return tuple(sorted((d.name, d.arity) for d in spec.schema.out))


@dataclass(frozen=True)
class ConsistencyVerdict:
    consistent: bool
    reason: str

    def __bool__(self) -> bool:
        return self.consistent


def check_eventual_consistency(a: Trace, b: Trace) -> ConsistencyVerdict:
    if out_schema(a.spec) != out_schema(b.spec):
        raise SchemaError("traces have different output schemas")
    if not a.quiescent and not b.quiescent:
        return ConsistencyVerdict(False, "neither run reached quiescence")
    if not a.quiescent or not b.quiescent:
        return ConsistencyVerdict(False, "one run never reached quiescence")
    if a.out_star != b.out_star:
        return ConsistencyVerdict(False, "outputs differ")
    return ConsistencyVerdict(True, "same output")


def check_reliability(trace: Trace) -> list[str]:
    """Problems with R1 (no delivery without emission) and R2 (every address served once)."""
    problems = []
    emitted: dict[tuple, int] = {}
    for e in trace.emission_events:
        for d in e.destinations:
            key = (e.fact, e.source, d, e.round)
            emitted[key] = emitted.get(key, 0) + 1
    served: dict[tuple, int] = {}
    lo_hi = trace.config.semantics.window
    for d in trace.delivery_events:
        key = (d.fact, d.source, d.dest, d.emit_round)
        if key not in emitted:
            problems.append(f"delivery without emission: {d}")
        lo, hi = lo_hi(d.emit_round)
        if not lo <= d.round <= hi:
            problems.append(f"delivery outside its window: {d}")
        served[key] = served.get(key, 0) + 1
    for m in trace.pending:
        key = (m.fact, m.source, m.dest, m.emit_round)
        served[key] = served.get(key, 0) + 1
    for key, count in emitted.items():
        if served.get(key, 0) != count:
            problems.append(f"emission {key} served {served.get(key, 0)} times, expected {count}")
    for key in served:
        if key not in emitted:
            problems.append(f"pending message without emission: {key}")
    return problems


def check_fifo(trace: Trace) -> list[str]:
    """Per channel, messages must arrive in the order they were sent."""
    problems = []
    arrivals: dict[tuple, list[tuple[int, int]]] = {}
    for d in trace.delivery_events:
        arrivals.setdefault((d.source, d.dest), []).append((d.emit_round, d.round))
    for ch, pairs in arrivals.items():
        pairs.sort()
        for (e1, r1), (e2, r2) in zip(pairs, pairs[1:]):
            if e1 < e2 and r1 > r2:
                problems.append(f"channel {ch}: emitted at {e1} arrived {r1}, after {e2}/{r2}")
    return problems


# independence checks


class Dimension(enum.Enum):
    NETWORK = "network"
    TIME = "time"
    PARTITION = "partition"
    STRATEGY = "strategy"
    ALL = "all"


@dataclass(frozen=True)
class Budget:
    node_counts: tuple[int, ...] = (1, 2, 3)
    t0s: tuple[int, ...] = (0, 3)
    partition_seeds: tuple[int, ...] = (0, 1)
    family_seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    seeds: tuple[int, ...] = (0,)
    semantics: DeliverySemantics = RSFD
    communication: CommunicationKind = CommunicationKind.HASHING
    max_rounds: int = 40
    max_configs: int = 2000
    partitioned_families: bool = True


def partitions_for(nodes: Sequence[NodeId], budget: Budget) -> list[Partition]:
    out = [Partition.replicate_all()]
    if len(nodes) > 1:
        out.append(Partition.single_node(nodes[0]))
        out.extend(Partition.hash_split(s) for s in budget.partition_seeds)
    return out


def families_for(
    nodes: Sequence[NodeId], budget: Budget, instance: Instance = Instance()
) -> list[HashFamily]:
    out = [HashFamily.seeded(s) for s in budget.family_seeds]
    if len(nodes) > 1:
        out.extend(HashFamily.constant_node(n) for n in nodes)
        constants = sorted(instance.adom(), key=lambda c: (isinstance(c, str), str(c)))
        for s in budget.family_seeds[:2]:
            pins = {c: nodes[(i + s) % len(nodes)] for i, c in enumerate(constants)}
            out.append(HashFamily.pinned_map(pins, seed=s))
        if budget.partitioned_families:
            for k in range(1, len(nodes)):
                out.extend(HashFamily.seeded(s, nodes[:k]) for s in budget.family_seeds[:2])
    return out


def enumerate_configurations(
    budget: Budget, dimension: Dimension = Dimension.ALL, instance: Instance = Instance()
) -> Iterator[Configuration]:
    """Configurations ordered by node count, then partition, family and seed."""
    base_n = max(budget.node_counts)
    counts = budget.node_counts if dimension in (Dimension.NETWORK, Dimension.ALL) else (base_n,)
    t0s = budget.t0s if dimension in (Dimension.TIME, Dimension.ALL) else budget.t0s[:1]
    produced = 0
    for n in counts:
        nodes = tuple(range(1, n + 1))
        parts = partitions_for(nodes, budget)
        if dimension not in (Dimension.PARTITION, Dimension.ALL):
            parts = parts[-1:] if dimension is Dimension.STRATEGY else parts[:1]
        fams = families_for(nodes, budget, instance)
        if dimension not in (Dimension.STRATEGY, Dimension.ALL):
            fams = fams[:1]
        for t0 in t0s:
            for p in parts:
                for fam in fams:
                    for seed in budget.seeds:
                        if produced >= budget.max_configs:
                            return
                        produced += 1
                        yield Configuration(
                            nodes, t0, p, fam, budget.semantics, seed,
                            budget.max_rounds, budget.communication,
                        )


class Convergence(enum.Enum):
    CONVERGENT = "CONVERGENT"
    DIVERGENT = "DIVERGENT"


@dataclass(frozen=True)
class IndependenceVerdict:
    verdict: Convergence
    runs: int
    witness: tuple[tuple[Configuration, Instance], ...] = ()
    non_quiescent: int = 0

    @property
    def convergent(self) -> bool:
        return self.verdict is Convergence.CONVERGENT


class BudgetExhausted(RuntimeError):
    pass


def check_independence(
    spec: TransducerSpec,
    instance: Instance,
    dimension: Dimension = Dimension.ALL,
    budget: Budget = Budget(),
) -> IndependenceVerdict:
    """Run over every configuration that varies `dimension` and compare outputs."""
    first: tuple[Configuration, Instance] | None = None
    runs = skipped = 0
    for cfg in enumerate_configurations(budget, dimension, instance):
        trace = run(spec, cfg, instance)
        runs += 1
        if not trace.quiescent:
            skipped += 1
            continue
        if first is None:
            first = (cfg, trace.out_star)
        elif trace.out_star != first[1]:
            return IndependenceVerdict(
                Convergence.DIVERGENT, runs, (first, (cfg, trace.out_star)), skipped
            )
    if first is None:
        raise BudgetExhausted("no enumerated configuration reached quiescence")
    return IndependenceVerdict(Convergence.CONVERGENT, runs, (first,), skipped)


def single_node_output(spec: TransducerSpec, instance: Instance, **kw) -> Instance | None:
    """Output of the trivial configuration (the whole instance on one node)."""
    cfg = Configuration(nodes=(1,), **kw)
    return run(spec, cfg, instance).out_star


def with_config(cfg: Configuration, **changes) -> Configuration:
    return replace(cfg, **changes)


def nodes_of(n: int) -> tuple[NodeId, ...]:
    return tuple(range(1, n + 1))


def union_out(states: Iterable[LocalState]) -> Instance:
    return Instance().union(*(s.out for s in states))
