"""Source-to-source constructions: broadcast and hashing networks, snapshot injection."""

from __future__ import annotations

import enum
from typing import Iterable, Sequence

from .analyzer import classify, is_monotone
from .datalog import (
    INF,
    Action,
    Atom,
    Comparison,
    DatalogError,
    Literal,
    Program,
    RelationDecl,
    Rule,
    Section,
    Var,
    format_program,
    is_recursive,
    stratify_rules,
)
from .transducer import NULL_PREFIX, RESERVED, TransducerSpec, prime


class RewriteError(DatalogError):
    pass


class RewriteTarget(enum.Enum):
    BROADCAST = "broadcast"
    HASHING = "hashing"
    SNAPSHOT_FIFO = "snapshot-fifo"
    SNAPSHOT_GENERIC = "snapshot-generic"


READY = "Ready"
_VAR_NAMES = ("u", "v", "w", "x", "y", "z")


def _vars(n: int) -> tuple[Var, ...]:
    if n <= len(_VAR_NAMES):
        return tuple(Var(v) for v in _VAR_NAMES[:n])
    return tuple(Var(f"u{i}") for i in range(n))


def _atom(name: str, terms: Sequence) -> Atom:
    return Atom(name, tuple(terms))


def _lit(name: str, terms: Sequence = (), negated: bool = False) -> Literal:
    return Literal(_atom(name, terms), negated)


def _rename_body(body: Iterable, mapping: dict[str, str]) -> tuple:
    out = []
    for b in body:
        if isinstance(b, Literal) and b.atom.relation in mapping:
            out.append(Literal(Atom(mapping[b.atom.relation], b.atom.terms), b.negated))
        else:
            out.append(b)
    return tuple(out)


def _check_free(names: Iterable[str], taken: set[str]) -> None:
    for n in names:
        if n in taken or n in RESERVED:
            raise RewriteError(f"generated relation {n} collides with an existing relation")


def _build(decls: list[RelationDecl], rules: list[Rule], name: str) -> TransducerSpec:
    order = {Section.DB: 0, Section.MEM: 1, Section.EMT: 2, Section.OUT: 3, Section.LOCAL: 4}
    decls = sorted(decls, key=lambda d: order[d.section])
    # print and re-parse so every generated spec is valid text
    text = format_program(Program(tuple(decls), tuple(rules)))
    return TransducerSpec.parse(text, name)


def _io(q: Program) -> tuple[list[RelationDecl], list[RelationDecl], list[RelationDecl]]:
    """Input, output and intermediate relations of a query, in declaration order."""
    inputs, outputs = q.inputs(), q.outputs()
    idb = q.idb()
    ins = [d for d in q.decls if d.name in inputs]
    outs = [d for d in q.decls if d.name in outputs and d.name in idb]
    mids = [d for d in q.decls if d.name in idb and d.name not in outputs]
    bad = inputs & idb
    if bad:
        raise RewriteError(f"input relations {sorted(bad)} are derived by the query")
    return ins, outs, mids


# broadcast network: every node ships its whole database, then evaluates locally


def to_broadcast_network(q: Program, name: str = "") -> TransducerSpec:
    ins, outs, mids = _io(q)
    taken = set(q.schema)
    primes = {d.name: prime(d.name) for d in ins}
    _check_free(primes.values(), taken)
    mono = is_monotone(q)
    decls = [RelationDecl(d.name, d.arity, None, Section.DB) for d in ins]
    decls += [RelationDecl(primes[d.name], d.arity, INF, Section.EMT) for d in ins]
    decls += [RelationDecl(d.name, d.arity, None, Section.OUT) for d in outs]
    decls += [RelationDecl(d.name, d.arity, None, Section.LOCAL) for d in mids]
    rules = []
    if not mono:
        _check_free([READY], taken)
        decls.append(RelationDecl(READY, 0, None, Section.MEM))
        rules.append(Rule(_atom(READY, ()), (_lit(READY, (), True),), None, Action.INS))
    for d in ins:
        us = _vars(d.arity)
        rules.append(Rule(_atom(primes[d.name], us), (_lit(d.name, us),), None, Action.EMT))
    out_names = {d.name for d in outs}
    for r in q.rules:
        body = _rename_body(r.body, primes)
        if not mono:
            body += (_lit(READY),)
        action = Action.OUT if r.head.relation in out_names else None
        rules.append(Rule(r.head, body, r.aggregate, action))
    return _build(decls, rules, name or "broadcast")


# hashing network: maximal keys, binarized joins, located negation, stage sequencing


class _Namer:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)
        self.counts: dict[str, int] = {}

    def __call__(self, prefix: str) -> str:
        while True:
            self.counts[prefix] = self.counts.get(prefix, 0) + 1
            name = f"{prefix}{self.counts[prefix]}"
            if name not in self.taken:
                self.taken.add(name)
                return name


def _ordered_vars(atoms: Iterable[Atom]) -> tuple[Var, ...]:
    seen: list[Var] = []
    for a in atoms:
        for t in a.terms:
            if isinstance(t, Var) and not t.is_wildcard and t not in seen:
                seen.append(t)
    return tuple(seen)


def _join_order(pos: list[Atom], rule: Rule) -> list[Atom]:
    """Order positive atoms so each one shares a variable with those before it."""
    order, rest = [pos[0]], pos[1:]
    bound = set(_ordered_vars(order))
    while rest:
        for a in rest:
            if bound & set(_ordered_vars([a])):
                order.append(a)
                rest.remove(a)
                bound |= set(_ordered_vars([a]))
                break
        else:
            raise RewriteError(f"positive body of {rule.head_text()} is not connected")
    return order


def _split_rule(r: Rule, namer: _Namer, arity: dict[str, int]) -> list[Rule]:
    """Rewrite one rule so every join is binary and every negation is evaluated where its facts live."""
    pos = list(r.positive())
    negs = list(r.negative())
    comps = [b for b in r.body if isinstance(b, Comparison)]
    out: list[Rule] = []

    def emit(name: str, terms: tuple, body: tuple) -> Atom:
        arity[name] = len(terms)
        head = Atom(name, terms)
        out.append(Rule(head, body))
        return head

    if len(pos) > 1:
        pos = _join_order(pos, r)
    while len(pos) > 2:
        a, b = pos[0], pos[1]
        j = emit(namer("_J"), _ordered_vars([a, b]), (Literal(a), Literal(b)))
        pos = [j] + pos[2:]
    pvars = set(_ordered_vars(pos))
    local_negs, located = [], []
    for n in negs:
        nvars = set(_ordered_vars([n]))
        (local_negs if pvars <= nvars else located).append(n)
    for k, n in enumerate(located):
        args = tuple(t for t in n.terms if not (isinstance(t, Var) and t.is_wildcard))
        if not any(isinstance(t, Var) for t in args):
            raise RewriteError(f"negated atom {n} in {r.head_text()} has no variable to locate it by")
        if len(pos) > 1:
            pos = [emit(namer("_J"), _ordered_vars(pos), tuple(Literal(a) for a in pos))]
        loc = emit(namer("_Loc"), args, (Literal(pos[0]),))
        step = (Literal(pos[0]), Literal(loc), Literal(n, True))
        if k < len(located) - 1:
            pos = [emit(namer("_Neg"), _ordered_vars(pos), step)]
        else:
            pos = list(pos) + [loc]
            local_negs.insert(0, n)
    body = tuple(Literal(a) for a in pos) + tuple(Literal(n, True) for n in local_negs)
    out.append(Rule(r.head, body + tuple(comps), r.aggregate))
    return out


def stage_levels(rules: Sequence[Rule], base: Iterable[str]) -> dict[str, int]:
    """Stage of every derived relation: longest dependency path below the last stratum."""
    strata = stratify_rules(rules)
    for s in strata[:-1]:
        if is_recursive(s, rules):
            raise RewriteError(f"recursive relations {sorted(s)} below the last stratum")
    level = {b: 0 for b in base}
    for s in strata[:-1]:
        for name in sorted(s):
            deps = [a.relation for r in rules if r.head.relation == name for a in r.atoms()]
            level[name] = 1 + max((level.get(d, 0) for d in deps), default=0)
    top = 1 + max((level[n] for s in strata[:-1] for n in s), default=0)
    for name in strata[-1] if strata else ():
        level[name] = top
    return level


def to_hashing_network(q: Program, name: str = "") -> TransducerSpec:
    report = classify(q)
    if not report.chained:
        raise RewriteError(
            "query is not chained (" + "; ".join(report.unchained_rules) + "); "
            + " ".join(report.notes)
        )
    if not report.monotone and not report.recursion_bounded:
        raise RewriteError("non-monotone query is not recursion-bounded")
    if any(r.aggregate is not None for r in q.rules):
        raise RewriteError("aggregate rules are outside the hashing construction")
    ins, outs, mids = _io(q)
    taken = set(q.schema)
    primes = {d.name: prime(d.name) for d in ins + outs + mids}
    _check_free(primes.values(), taken)
    namer = _Namer(taken | set(primes.values()))
    arity = {primes[d.name]: d.arity for d in ins + outs + mids}
    logical: list[Rule] = []
    for r in q.rules:
        pr = Rule(Atom(primes[r.head.relation], r.head.terms), _rename_body(r.body, primes))
        logical.extend(_split_rule(pr, namer, arity))
    stages = 0
    if not report.monotone:
        level = stage_levels(logical, [primes[d.name] for d in ins])
        stages = max(level[r.head.relation] for r in logical)
        logical = [r.with_body(r.body + (_lit(f"_Stage{level[r.head.relation]}"),))
                   for r in logical]
    decls = [RelationDecl(d.name, d.arity, None, Section.DB) for d in ins]
    decls += [RelationDecl(n, a, a if a else INF, Section.EMT) for n, a in arity.items()]
    decls += [RelationDecl(d.name, d.arity, None, Section.OUT) for d in outs]
    rules: list[Rule] = []
    if stages:
        names = [f"_Stage{j}" for j in range(1, stages + 1)]
        _check_free(names, taken)
        decls += [RelationDecl(n, 0, None, Section.MEM) for n in names]
        rules.append(Rule(_atom(names[0], ()), tuple(_lit(n, (), True) for n in names),
                          None, Action.INS))
        for lo, hi in zip(names, names[1:]):
            rules.append(Rule(_atom(hi, ()), (_lit(lo),), None, Action.INS))
    for d in ins:
        us = _vars(d.arity)
        rules.append(Rule(_atom(primes[d.name], us), (_lit(d.name, us),), None, Action.EMT))
    rules += [r.with_head(r.head, Action.EMT) for r in logical]
    for d in outs:
        us = _vars(d.arity)
        rules.append(Rule(_atom(d.name, us), (_lit(primes[d.name], us),), None, Action.OUT))
    return _build(decls, rules, name or "hashing")


# snapshot injection for variable-delay semantics


def negated_emit_relations(spec: TransducerSpec) -> list[str]:
    emt = spec.schema.names("emt")
    return sorted({a.relation for r in spec.program.all_rules() for a in r.negative()
                   if a.relation in emt})


def _upstream(spec: TransducerSpec, rel: str) -> set[str]:
    emt = spec.schema.names("emt")
    return {a.relation for r in spec.program.q_emt if r.head.relation == rel
            for a in r.positive() if a.relation in emt}


def _sealed_closure(spec: TransducerSpec, roots: Iterable[str]) -> list[str]:
    todo, seen = list(roots), set()
    while todo:
        r = todo.pop()
        if r in seen:
            continue
        seen.add(r)
        todo.extend(_upstream(spec, r))
    for r in seen:
        reach, frontier = set(), list(_upstream(spec, r))
        while frontier:
            x = frontier.pop()
            if x not in reach:
                reach.add(x)
                frontier.extend(_upstream(spec, x))
        if r in reach:
            raise RewriteError(f"cannot seal {r}: it is emitted recursively")
    return sorted(seen)


def is_injected(spec: TransducerSpec) -> bool:
    return any(d.name.startswith(NULL_PREFIX) for d in spec.schema.emt)


def inject_snapshot_fifo(spec: TransducerSpec) -> TransducerSpec:
    """Gate negation on emitted relations behind end-of-relation markers; needs FIFO channels."""
    return _inject(spec, fifo=True)


def inject_snapshot_generic(spec: TransducerSpec) -> TransducerSpec:
    """Gate negation behind end-of-relation markers plus per-sender gap detection."""
    return _inject(spec, fifo=False)


def _inject(spec: TransducerSpec, fifo: bool) -> TransducerSpec:
    if is_injected(spec):
        return spec
    negated = negated_emit_relations(spec)
    if not negated:
        return spec
    sealed = _sealed_closure(spec, negated)
    schema = spec.schema
    taken = {d.name for d in schema.all_decls()}
    emt_decls = {d.name: d for d in schema.emt}
    mem0 = {d.name for d in schema.mem if d.arity == 0}

    decls = list(schema.all_decls())
    new_emt: list[RelationDecl] = []
    text_rules: list[str] = []
    local: list[RelationDecl] = []

    def add_local(n: str, a: int) -> None:
        local.append(RelationDecl(n, a, None, Section.LOCAL))

    def terms(n: int) -> str:
        return ", ".join(v.name for v in _vars(n))

    def sc(r: str) -> str:
        return f"_SC{r}"

    rcv = {e: f"_Rcv{e}" for e in emt_decls}
    add_local("_CntAll", 1)
    text_rules.append("_CntAll(count<a>) <- All(a).")
    for r in sealed:
        k = emt_decls[r].arity
        us = terms(k)
        emitters = [e for e in spec.program.q_emt if e.head.relation == r]
        guards = sorted({a.relation for e in emitters for a in e.positive() if a.relation in mem0})
        gate = [f"{g}()" for g in guards] + [f"{sc(x)}()" for x in sorted(_upstream(spec, r))]
        add_local(f"_Bc{r}", k)
        add_local(f"_Cnt{r}", 1)
        add_local(sc(r), 0)
        for e in emitters:
            body = _rename_body(e.body, rcv)
            text_rules.append(str(Rule(Atom(f"_Bc{r}", e.head.terms), body, e.aggregate)))
        text_rules.append(f"_Cnt{r}(count<{us}>) <- _Bc{r}({us}).")
        null = f"{NULL_PREFIX}{r}"
        tail = "".join(", " + g for g in gate)
        if fifo:
            new_emt.append(RelationDecl(null, 1, INF, Section.EMT))
            text_rules.append(f"{null}_emt(i) <- _Cnt{r}(c), Id(i){tail}.")
            add_local(f"_CntNull{r}", 1)
            text_rules.append(f"_CntNull{r}(fs_count<i>) <- _Rcv{null}(i).")
            text_rules.append(f"{sc(r)}() <- _CntNull{r}(n), _CntAll(n).")
        else:
            man = f"_Man{r}"
            new_emt.append(RelationDecl(null, 2, INF, Section.EMT))
            new_emt.append(RelationDecl(man, k + 1, INF, Section.EMT))
            text_rules.append(f"{null}_emt(i, c) <- _Cnt{r}(c), Id(i){tail}.")
            mt = f"i, {us}" if k else "i"
            text_rules.append(f"{man}_emt({mt}) <- _Bc{r}({us}), Id(i).")
            for n, a in ((f"_Got{r}", 2), (f"_Ok{r}", 1), (f"_CntOk{r}", 1), (f"_Known{r}", k)):
                add_local(n, a)
            text_rules += [
                f"_Got{r}(i, count<{us}>) <- _Rcv{man}({mt}).",
                f"_Ok{r}(i) <- _Rcv{null}(i, c), _Got{r}(i, c).",
                f"_Ok{r}(i) <- _Rcv{null}(i, 0).",
                f"_CntOk{r}(fs_count<i>) <- _Ok{r}(i).",
                f"{sc(r)}() <- _CntOk{r}(n), _CntAll(n).",
                f"_Known{r}({us}) <- _Rcv{man}({mt}).",
            ]
    # every received fact is remembered, so reads see all deliveries so far
    for d in list(schema.emt) + new_emt:
        rcv[d.name] = f"_Rcv{d.name}"
        us = terms(d.arity)
        decls.append(RelationDecl(f"_Mem{d.name}", d.arity, None, Section.MEM))
        add_local(f"_Rcv{d.name}", d.arity)
        text_rules += [
            f"_Mem{d.name}_ins({us}) <- {d.name}({us}).",
            f"_Rcv{d.name}({us}) <- {d.name}({us}).",
            f"_Rcv{d.name}({us}) <- _Mem{d.name}({us}).",
        ]
    decls += new_emt + local
    _check_free([d.name for d in new_emt + local] + [f"_Mem{d.name}" for d in schema.emt], taken)

    neg_names = {r: (f"_Rcv{r}" if fifo else f"_Known{r}") for r in negated}
    user_rules = []
    for r in spec.program.all_rules():
        body = []
        gates = []
        for b in r.body:
            if isinstance(b, Literal) and b.atom.relation in emt_decls:
                rel = b.atom.relation
                if b.negated:
                    body.append(Literal(Atom(neg_names[rel], b.atom.terms), True))
                    if sc(rel) not in gates:
                        gates.append(sc(rel))
                else:
                    body.append(Literal(Atom(rcv[rel], b.atom.terms)))
            else:
                body.append(b)
        body += [_lit(g) for g in gates]
        user_rules.append(Rule(r.head, tuple(body), r.aggregate, r.action))
    order = {Section.DB: 0, Section.MEM: 1, Section.EMT: 2, Section.OUT: 3, Section.LOCAL: 4}
    decls = sorted(decls, key=lambda d: order[d.section])
    text = format_program(Program(tuple(decls), tuple(user_rules)))
    text += "\n".join(text_rules) + "\n"
    return TransducerSpec.parse(text, spec.name)


def rewrite(q, target: RewriteTarget, name: str = ""):
    """Dispatch used by the command line; snapshot targets take a spec, the others a query."""
    if target is RewriteTarget.BROADCAST:
        return to_broadcast_network(q, name)
    if target is RewriteTarget.HASHING:
        return to_hashing_network(q, name)
    if target is RewriteTarget.SNAPSHOT_FIFO:
        return inject_snapshot_fifo(q)
    return inject_snapshot_generic(q)
