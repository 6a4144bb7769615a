"""Static classification of queries and transducer specs into the coordination taxonomy."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx

from .datalog import (
    AggKind,
    Atom,
    Comparison,
    Const,
    INF,
    Fact,
    Instance,
    Literal,
    Program,
    Rule,
    dependency_graph,
    evaluate,
    is_recursive,
    stratify_rules,
)
from .network import Configuration, RSFD, SemanticsKind, Trace, run
from .strategy import HashFamily, Partition, hash_address
from .transducer import RESERVED, TIME, TransducerSpec


class CoordinationClass(enum.Enum):
    NONE = "NONE"
    SNAPSHOT = "SNAPSHOT"
    BROADCAST = "BROADCAST"
    SYNCHRONIZED = "SYNCHRONIZED"


SEMANTICS = (SemanticsKind.RSFD, SemanticsKind.RSBV, SemanticsKind.RSYNC)


@dataclass(frozen=True)
class TaxonomyReport:
    monotone: bool
    chained: bool
    recursion_bounded: bool
    hashing: bool
    embarrassingly_parallel: dict[SemanticsKind, bool]
    coordination_class: dict[SemanticsKind, CoordinationClass]
    notes: tuple[str, ...] = ()
    unchained_rules: tuple[str, ...] = ()

    def coordination_free(self, semantics: SemanticsKind = SemanticsKind.RSFD) -> bool:
        return self.coordination_class[semantics] is CoordinationClass.NONE

    def record(self) -> dict:
        """Stable-field record for structured output."""
        return {
            "monotone": self.monotone,
            "chained": self.chained,
            "recursion_bounded": self.recursion_bounded,
            "hashing": self.hashing,
            "embarrassingly_parallel": {s.value: self.embarrassingly_parallel[s] for s in SEMANTICS},
            "coordination": {s.value: self.coordination_class[s].value for s in SEMANTICS},
            "notes": list(self.notes),
        }

    def summary(self, semantics: SemanticsKind = SemanticsKind.RSFD) -> str:
        words = ["monotone" if self.monotone else "non-monotone",
                 "chained" if self.chained else "unchained"]
        if not self.monotone:
            words.append("recursion-bounded" if self.recursion_bounded else "recursion-unbounded")
        words.append("hashing" if self.hashing else "not-shown-hashing")
        cls = self.coordination_class[semantics]
        if cls is CoordinationClass.NONE:
            words.append(f"coordination-free({semantics.value})")
        else:
            words.append(f"{cls.value.lower()}-coordination({semantics.value})")
        return " ".join(words)


# chain graphs


def chain_graph(rule: Rule) -> nx.Graph:
    """Vertices are body atom positions; edges join atoms sharing a non-wildcard variable."""
    g = nx.Graph()
    atoms = [(i, b.atom) for i, b in enumerate(rule.body) if isinstance(b, Literal)]
    for i, _ in atoms:
        g.add_node(i)
    for x, (i, a) in enumerate(atoms):
        va = {v for v in a.variables() if not v.is_wildcard}
        for j, b in atoms[x + 1 :]:
            if va & {v for v in b.variables() if not v.is_wildcard}:
                g.add_edge(i, j)
    return g


def rule_is_chained(rule: Rule) -> bool:
    atoms = [b.atom for b in rule.body if isinstance(b, Literal)]
    if not atoms:
        return True
    if any(a.arity == 0 for a in atoms):
        return False
    return nx.is_connected(chain_graph(rule))


def is_chained(q: Program | Sequence[Rule]) -> tuple[bool, list[Rule]]:
    rules = q.rules if isinstance(q, Program) else q
    bad = [r for r in rules if not rule_is_chained(r)]
    return not bad, bad


def negation_levels(rules: Sequence[Rule]) -> dict[str, int]:
    """Coarsest stratification: the most negated or aggregated edges on any path into a relation."""
    strata = stratify_rules(rules)  # also rejects unstratifiable programs
    g = dependency_graph(rules)
    level: dict[str, int] = {}
    for comp in strata:
        lv = 0
        for name in comp:
            for src, _, d in g.in_edges(name, data=True):
                if src in level:
                    lv = max(lv, level[src] + int(d["negative"]))
        for name in comp:
            level[name] = lv
    return level


def is_recursion_bounded(q: Program | Sequence[Rule]) -> bool:
    """Every recursive component sits in the topmost stratum of the coarsest stratification."""
    rules = list(q.rules if isinstance(q, Program) else q)
    level = negation_levels(rules)
    if not level:
        return True
    top = max(level.values())
    return all(
        level[next(iter(comp))] == top
        for comp in stratify_rules(rules)
        if is_recursive(comp, rules)
    )


def is_monotone(q: Program | Sequence[Rule]) -> bool:
    rules = q.rules if isinstance(q, Program) else q
    for r in rules:
        if r.has_negation():
            return False
        if r.aggregate is not None and r.aggregate.kind is not AggKind.FS_COUNT:
            return False
    return True


def logical_rules(spec: TransducerSpec) -> list[Rule]:
    """The query a spec computes, seen as one program.

    Emission heads are identified with the relation they feed, memory
    updates are dropped, and guard atoms (nullary memory relations, Id,
    All, Time) are removed from bodies so they do not affect chaining.
    """
    mem0 = {d.name for d in spec.schema.mem if d.arity == 0}
    ignore = mem0 | set(RESERVED)
    out = []
    for r in spec.program.q_local + spec.program.q_emt + spec.program.q_out:
        body = tuple(
            b for b in r.body if not (isinstance(b, Literal) and b.atom.relation in ignore)
        )
        out.append(Rule(r.head, body, r.aggregate, None, r.line))
    return out


def broadcast_relations(spec: TransducerSpec) -> list[str]:
    """Emit relations with an unbounded key that some rule reads."""
    read = {a.relation for r in spec.program.all_rules() for a in r.atoms()}
    return sorted(d.name for d in spec.schema.emt if d.key == INF and d.name in read)


def _target_rules(target: Program | TransducerSpec | Sequence[Rule]) -> list[Rule]:
    if isinstance(target, TransducerSpec):
        return logical_rules(target)
    if isinstance(target, Program):
        return list(target.rules)
    return list(target)


def classify(target: Program | TransducerSpec | Sequence[Rule]) -> TaxonomyReport:
    rules = _target_rules(target)
    notes: list[str] = []
    mono = is_monotone(rules)
    chained, bad = is_chained(rules)
    rb = is_recursion_bounded(rules)
    hashing = chained and (mono or rb)
    if not mono:
        notes.append("UNKNOWN-MONOTONE: syntactically non-monotone, semantic monotonicity not decided")
    if not hashing:
        notes.append("NOT-SHOWN-HASHING: outside the chained monotone / chained recursion-bounded classes")
    rsfd = _rsfd_class(mono, chained, rb)
    if not mono and rb and not chained:
        notes.append("non-monotone recursion-bounded unchained: classed as BROADCAST")
    if isinstance(target, TransducerSpec) and rsfd in (CoordinationClass.NONE, CoordinationClass.SNAPSHOT):
        sent = broadcast_relations(target)
        if sent:
            rsfd = CoordinationClass.BROADCAST
            notes.append(f"spec broadcasts {', '.join(sent)}: classed as BROADCAST")
    rsbv = rsfd
    if rsbv is CoordinationClass.SNAPSHOT:
        notes.append("rsbv: SNAPSHOT requires an injected snapshot protocol")
    rsync = CoordinationClass.NONE if mono else rsfd
    ep = {
        SemanticsKind.RSFD: mono or (rb and chained),
        SemanticsKind.RSBV: mono,
        SemanticsKind.RSYNC: mono,
    }
    return TaxonomyReport(
        monotone=mono,
        chained=chained,
        recursion_bounded=rb,
        hashing=hashing,
        embarrassingly_parallel=ep,
        coordination_class={
            SemanticsKind.RSFD: rsfd,
            SemanticsKind.RSBV: rsbv,
            SemanticsKind.RSYNC: rsync,
        },
        notes=tuple(notes),
        unchained_rules=tuple(r.head_text() for r in bad),
    )


def _rsfd_class(mono: bool, chained: bool, rb: bool) -> CoordinationClass:
    if mono:
        return CoordinationClass.NONE if chained else CoordinationClass.BROADCAST
    if not rb:
        return CoordinationClass.SYNCHRONIZED
    return CoordinationClass.SNAPSHOT if chained else CoordinationClass.BROADCAST


# runtime strategy audit


@dataclass
class StrategyAudit:
    live: list[str] = field(default_factory=list)
    safety: list[str] = field(default_factory=list)
    proper: list[str] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not (self.live or self.safety or self.proper)


def _ground(atom: Atom, b: dict) -> Fact:
    return Fact(atom.relation, tuple(t.value if isinstance(t, Const) else b[t] for t in atom.terms))


def _valuations(body: Sequence, inst: Instance) -> list[dict]:
    """All valuations of the positive part of a body (plus its comparisons) over `inst`."""
    positives = [b for b in body if isinstance(b, Literal) and not b.negated]
    bound = {v for b in positives for v in b.variables()}
    comps = [c for c in body if isinstance(c, Comparison) and c.variables() <= bound]
    vars_ = sorted(bound, key=lambda v: v.name)
    head = Atom("__valuation", tuple(vars_))
    probe = Rule(head, tuple(positives) + tuple(comps))
    rows = evaluate([probe], inst).relation("__valuation")
    return [dict(zip(vars_, row)) for row in sorted(rows, key=repr)]


def check_strategy(
    spec: TransducerSpec,
    family: HashFamily,
    samples: Iterable[Instance],
    nodes: Sequence[int] = (1, 2, 3),
    partition: Partition = Partition(),
    key_set: dict | None = None,
    max_rounds: int = 40,
) -> StrategyAudit:
    """Audit liveness, safety and proper-instance conditions on sample runs."""
    if key_set is not None:
        spec = _with_keys(spec, key_set)
    keys = spec.key_set
    emt = spec.schema.names("emt")
    audit = StrategyAudit()
    for sample in samples:
        cfg = Configuration(tuple(nodes), 0, partition, family, RSFD, 0, max_rounds)
        trace = run(spec, cfg, sample)
        global_emitted = Instance.from_facts(e.fact for e in trace.emission_events)
        addr = {f: hash_address(f, keys, family, cfg.nodes) for f in global_emitted.facts()}
        for r in spec.program.all_rules():
            emit_atoms = [b for b in r.body if isinstance(b, Literal) and not b.negated
                          and b.atom.relation in emt]
            if len(emit_atoms) >= 2:
                for b in _valuations(emit_atoms, global_emitted):
                    facts = [_ground(lit.atom, b) for lit in emit_atoms]
                    common = frozenset(cfg.nodes)
                    for f in facts:
                        common &= addr[f]
                    if not common:
                        msg = f"{r.head_text()}: {', '.join(map(str, facts))} share no node"
                        if msg not in audit.live:
                            audit.live.append(msg)
            negs = [b.atom for b in r.body if isinstance(b, Literal) and b.negated
                    and b.atom.relation in emt]
            if negs:
                _audit_safety(spec, trace, r, negs, global_emitted, addr, audit)
        _audit_proper(trace, global_emitted, addr, audit)
    return audit


def _audit_safety(spec, trace: Trace, rule: Rule, negs, global_emitted, addr, audit) -> None:
    for k, steps in enumerate(trace.steps):
        g = trace.states[k]
        for n, step in steps.items():
            st = g.node(n)
            view = st.instance() | step.inbox
            if TIME not in spec.schema.names("mem"):
                view = view | Instance({TIME: {(g.round,)}})
            view = evaluate(spec.combined_rules, view, spec.combined_strata)
            for b in _valuations(rule.body, view):
                for atom in negs:
                    f = _ground(atom, b)
                    if global_emitted.has(f) and n not in addr[f]:
                        msg = f"{rule.head_text()}: node {n} evaluates not {f} but is not in H({f})"
                        if msg not in audit.safety:
                            audit.safety.append(msg)


def _audit_proper(trace: Trace, global_emitted: Instance, addr, audit) -> None:
    """Every addressed node must have received each hashed fact, or have it in flight, by quiescence."""
    if not trace.quiescent:
        return
    got = {(d.fact, d.dest) for d in trace.delivery_events if d.round <= trace.detected_at}
    got |= {(m.fact, m.dest) for m in trace.pending}
    for f in global_emitted.facts():
        for n in sorted(addr[f]):
            if (f, n) not in got:
                msg = f"node {n} is addressed {f} but never received it"
                if msg not in audit.proper:
                    audit.proper.append(msg)


def _with_keys(spec: TransducerSpec, key_set: dict) -> TransducerSpec:
    from dataclasses import replace

    from .datalog import RelationDecl

    emt = tuple(RelationDecl(d.name, d.arity, key_set.get(d.name, d.key), d.section)
                for d in spec.schema.emt)
    return TransducerSpec(replace(spec.schema, emt=emt), spec.program, spec.name)
