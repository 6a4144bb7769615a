"""Relational transducers: schema, program, local state and the local transition."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .datalog import (
    INF,
    Action,
    AggKind,
    Atom,
    Fact,
    Instance,
    Program,
    RelationDecl,
    Rule,
    SchemaError,
    Section,
    evaluate,
    format_program,
    parse_program,
    stratify_rules,
)

TIME = "Time"
ID = "Id"
ALL = "All"
SYSTEM_RELATIONS = (ID, ALL)
RESERVED = (TIME, ID, ALL)
BUILTIN_DECLS = tuple(RelationDecl(n, 1) for n in RESERVED)
GENERATED_PREFIX = "_"  # relations introduced by rewrites
NULL_PREFIX = "_Null"  # explicit end-of-relation markers of the snapshot protocols

_ACTION_OF_SECTION = {Section.MEM: Action.INS, Section.EMT: Action.EMT, Section.OUT: Action.OUT}
_SECTION_OF_ACTION = {
    Action.INS: Section.MEM,
    Action.DEL: Section.MEM,
    Action.EMT: Section.EMT,
    Action.OUT: Section.OUT,
}


@dataclass(frozen=True)
class TransducerSchema:
    db: tuple[RelationDecl, ...] = ()
    mem: tuple[RelationDecl, ...] = ()
    emt: tuple[RelationDecl, ...] = ()
    out: tuple[RelationDecl, ...] = ()
    local: tuple[RelationDecl, ...] = ()  # intermediate relations, recomputed every round

    def __post_init__(self):
        seen: dict[str, str] = {}
        for part in ("db", "mem", "emt", "out", "local"):
            for d in getattr(self, part):
                if d.name in seen:
                    raise SchemaError(f"relation {d.name} appears in both {seen[d.name]} and {part}")
                if d.name in RESERVED and not (d.name == TIME and part == "mem"):
                    raise SchemaError(f"relation name {d.name} is reserved")
                if part != "emt" and d.key is not None:
                    raise SchemaError(f"key declared on non-emit relation {d.name}")
                if part == "emt" and d.key is None:
                    raise SchemaError(f"emit relation {d.name} has no key")
                seen[d.name] = part

    def names(self, part: str) -> set[str]:
        return {d.name for d in getattr(self, part)}

    def all_decls(self) -> tuple[RelationDecl, ...]:
        return self.db + self.mem + self.emt + self.out + self.local

    def decl(self, name: str) -> RelationDecl:
        for d in self.all_decls():
            if d.name == name:
                return d
        raise KeyError(name)


@dataclass(frozen=True)
class TransducerProgram:
    q_ins: tuple[Rule, ...] = ()
    q_del: tuple[Rule, ...] = ()
    q_out: tuple[Rule, ...] = ()
    q_emt: tuple[Rule, ...] = ()
    q_local: tuple[Rule, ...] = ()

    def all_rules(self) -> tuple[Rule, ...]:
        return self.q_local + self.q_ins + self.q_del + self.q_emt + self.q_out


def _mark(name: str, action: Action | None) -> str:
    """Internal name for a head inside the combined transition program."""
    if action in (Action.INS, Action.DEL, Action.EMT):
        return f"{name}@{action.value}"
    return name


@dataclass(frozen=True)
class TransducerSpec:
    schema: TransducerSchema
    program: TransducerProgram
    name: str = field(default="", compare=False)

    @property
    def key_set(self) -> dict[str, object]:
        return {d.name: d.key for d in self.schema.emt}

    @classmethod
    def from_program(cls, p: Program, name: str = "") -> "TransducerSpec":
        parts: dict[str, list] = {k: [] for k in ("db", "mem", "emt", "out", "local")}
        for d in p.decls:
            if d.name in RESERVED and d in BUILTIN_DECLS:
                continue
            part = d.section.value if d.section is not None else "local"
            parts[part].append(RelationDecl(d.name, d.arity, d.key, Section(part)))
        schema = TransducerSchema(**{k: tuple(v) for k, v in parts.items()})
        sections = {d.name: d.section for d in schema.all_decls()}
        buckets: dict[Action | None, list[Rule]] = {a: [] for a in (*Action, None)}
        for r in p.rules:
            sec = sections.get(r.head.relation)
            if sec is None:
                raise SchemaError(f"line {r.line}: rule derives reserved relation {r.head.relation}")
            action = r.action
            if action is None:
                if sec is Section.DB:
                    raise SchemaError(f"line {r.line}: rule derives db relation {r.head.relation}")
                action = _ACTION_OF_SECTION.get(sec)
            elif _SECTION_OF_ACTION[action] is not sec:
                raise SchemaError(f"line {r.line}: {action.value} rule for {r.head.relation}")
            buckets[action].append(Rule(r.head, r.body, r.aggregate, action, r.line))
        program = TransducerProgram(
            q_ins=tuple(buckets[Action.INS]),
            q_del=tuple(buckets[Action.DEL]),
            q_out=tuple(buckets[Action.OUT]),
            q_emt=tuple(buckets[Action.EMT]),
            q_local=tuple(buckets[None]),
        )
        spec = cls(schema, program, name)
        spec.combined_strata  # validate stratifiability early
        return spec

    @classmethod
    def parse(cls, text: str, name: str = "") -> "TransducerSpec":
        return cls.from_program(parse_program(text, BUILTIN_DECLS), name)

    def to_program(self) -> Program:
        decls = tuple(self.schema.local + self.schema.db + self.schema.mem
                      + self.schema.emt + self.schema.out)
        return Program(decls, self.program.all_rules())

    def text(self, header: str = "") -> str:
        return format_program(self.to_program(), header)

    # the combined program evaluated by every transition

    @cached_property
    def combined_rules(self) -> tuple[Rule, ...]:
        out = []
        for r in self.program.all_rules():
            head = Atom(_mark(r.head.relation, r.action), r.head.terms)
            out.append(Rule(head, r.body, r.aggregate, None, r.line))
        return tuple(out)

    @cached_property
    def combined_strata(self) -> list[frozenset[str]]:
        return stratify_rules(self.combined_rules)

    @cached_property
    def emission_order(self) -> tuple[str, ...]:
        """Emit relations in the order their derivations complete within a round."""
        rank = {}
        for i, stratum in enumerate(self.combined_strata):
            for name in stratum:
                if name.endswith("@emt"):
                    rank[name[:-4]] = i
        return tuple(sorted(self.schema.names("emt"), key=lambda n: (rank.get(n, -1), n)))

    # syntactic flags

    def _reads(self, names: Iterable[str]) -> bool:
        wanted = set(names)
        return any(a.relation in wanted for r in self.program.all_rules() for a in r.atoms())

    @property
    def time_oblivious(self) -> bool:
        return not self._reads([TIME])

    @property
    def space_oblivious(self) -> bool:
        return not self._reads(SYSTEM_RELATIONS)

    @property
    def oblivious(self) -> bool:
        return self.time_oblivious and self.space_oblivious

    @property
    def inflationary(self) -> bool:
        return not self.program.q_del

    @property
    def monotone(self) -> bool:
        for r in self.program.all_rules():
            if r.has_negation():
                return False
            if r.aggregate is not None and r.aggregate.kind is not AggKind.FS_COUNT:
                return False
        return True


@dataclass(frozen=True)
class LocalState:
    db: Instance = Instance()
    mem: Instance = Instance()
    out: Instance = Instance()
    sys: Instance = Instance()
    clock: int = 0

    def instance(self) -> Instance:
        return self.db | self.mem | self.out | self.sys


def system_instance(me: int, active: Iterable[int]) -> Instance:
    facts = [Fact(ID, (me,))] + [Fact(ALL, (j,)) for j in sorted(active)]
    return Instance.from_facts(facts)


def configure(
    spec: TransducerSpec,
    nodes: Iterable[int],
    me: int,
    active: Iterable[int] | None = None,
    db: Instance = Instance(),
    clock: int = 0,
) -> LocalState:
    """Initial local state for node `me`; All holds every node reachable by the strategy."""
    nodes = set(nodes)
    if me not in nodes:
        raise ValueError(f"node {me} is not in the node set {sorted(nodes)}")
    active = nodes if active is None else set(active)
    if not active <= nodes:
        raise ValueError("active nodes must be a subset of the node set")
    bad = [n for n in db if n not in spec.schema.names("db")]
    if bad:
        raise SchemaError(f"initial database uses non-db relations {bad}")
    return LocalState(db=db, sys=system_instance(me, active), clock=clock)


@dataclass(frozen=True)
class TransitionResult:
    state: LocalState
    emitted: Instance
    inserted: Instance  # mem facts actually added
    deleted: Instance  # mem facts actually removed
    derived_out: Instance  # out facts new in this transition


def local_transition(
    spec: TransducerSpec, state: LocalState, inbox: Instance, clock: int
) -> TransitionResult:
    """One deterministic transition of a transducer at round `clock`."""
    emt = spec.schema.names("emt")
    stray = [n for n in inbox if n not in emt]
    if stray:
        raise SchemaError(f"inbox holds facts over non-emit relations {stray}")
    if clock < state.clock:
        raise ValueError(f"clock went backwards: {clock} < {state.clock}")
    edb = state.instance() | inbox
    if TIME not in spec.schema.names("mem"):
        edb = edb | Instance({TIME: {(clock,)}})
    result = evaluate(spec.combined_rules, edb, spec.combined_strata)
    mem_names = spec.schema.names("mem")
    ins = Instance({n: result.relation(f"{n}@ins") for n in mem_names})
    dele = Instance({n: result.relation(f"{n}@del") for n in mem_names})
    ins_plus = ins - dele
    del_minus = dele - ins
    new_mem = (state.mem | ins_plus) - del_minus
    new_out = result.restrict(spec.schema.names("out"))
    emitted = Instance({n: result.relation(f"{n}@emt") for n in emt})
    new_state = LocalState(state.db, new_mem, new_out, state.sys, clock)
    return TransitionResult(
        new_state,
        emitted,
        inserted=new_mem - state.mem,
        deleted=state.mem - new_mem,
        derived_out=new_out - state.out,
    )


def prime(name: str) -> str:
    return name + "'"


def build_environment(spec: TransducerSpec) -> TransducerSpec:
    """The environment transducer: memorize and relay every emission, drive the clock."""
    taken = {d.name for d in spec.schema.all_decls()}
    mem, emt, rules = [], [], []
    for d in spec.schema.emt:
        memo = prime(d.name)
        if memo in taken:
            raise SchemaError(f"relation {memo} collides with the environment memory of {d.name}")
        mem.append(RelationDecl(memo, d.arity, None, Section.MEM))
        emt.append(RelationDecl(d.name, d.arity, INF, Section.EMT))
        vars_ = ", ".join(f"u{i}" for i in range(d.arity))
        rules.append(f"{memo}_ins({vars_}) <- {d.name}({vars_}).")
        rules.append(f"{d.name}_emt({vars_}) <- {d.name}({vars_}).")
    if "STime" in taken:
        raise SchemaError("relation STime is reserved for the environment clock")
    mem.append(RelationDecl(TIME, 1, None, Section.MEM))
    emt.append(RelationDecl("STime", 1, INF, Section.EMT))
    rules += [
        "Time_ins(s) <- Time(t), s = t + 1.",
        "Time_del(t) <- Time(t).",
        "STime_emt(t) <- Time(t).",
    ]
    decls = tuple(mem + emt) + BUILTIN_DECLS[1:]
    program = parse_program("\n".join(rules), decls)
    return TransducerSpec.from_program(program, name=f"environment of {spec.name}".strip())


def environment_state(env: TransducerSpec, t0: int) -> LocalState:
    return LocalState(mem=Instance({TIME: {(t0,)}}), clock=t0)
