"""Stratified semi-naive evaluation with arithmetic and aggregates."""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

from .errors import EvaluationError
from .instance import Instance
from .stratify import stratify_rules
from .syntax import (
    AggKind,
    Atom,
    BinOp,
    Comparison,
    Const,
    Constant,
    Literal,
    Program,
    Rule,
    Var,
    const_key,
    expr_vars,
)

Binding = dict


def eval_expr(e, b: Binding) -> Constant:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return b[e]
    left, right = eval_expr(e.left, b), eval_expr(e.right, b)
    if not (isinstance(left, int) and isinstance(right, int)):
        raise EvaluationError(f"arithmetic on non-integer constants in {e}")
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    return left * right


def compare(op: str, left: Constant, right: Constant) -> bool:
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    lk, rk = const_key(left), const_key(right)
    return {"<": lk < rk, "<=": lk <= rk, ">": lk > rk, ">=": lk >= rk}[op]


class _Store:
    """Relations plus lazily built hash indexes on bound positions."""

    def __init__(self, rels: dict[str, set]):
        self.rels = rels
        self._index: dict[tuple, dict] = {}

    def lookup(self, name: str, positions: tuple[int, ...], key: tuple) -> Iterable[tuple]:
        tuples = self.rels.get(name, ())
        if not positions:
            return tuples
        idx = self._index.get((name, positions))
        if idx is None:
            idx = {}
            for t in tuples:
                idx.setdefault(tuple(t[i] for i in positions), []).append(t)
            self._index[(name, positions)] = idx
        return idx.get(key, ())


def _plan(rule: Rule) -> list:
    """Order body items: each positive atom followed by whatever it enables."""
    pending = [b for b in rule.body if not (isinstance(b, Literal) and not b.negated)]
    bound: set[Var] = set()
    steps: list = []

    def flush():
        progress = True
        while progress:
            progress = False
            for item in list(pending):
                if isinstance(item, Literal):
                    if item.variables() <= bound:
                        steps.append(("neg", item.atom))
                        pending.remove(item)
                        progress = True
                    continue
                vs = item.variables()
                if vs <= bound:
                    steps.append(("test", item))
                    pending.remove(item)
                    progress = True
                elif item.op == "=":
                    for target, source in ((item.left, item.right), (item.right, item.left)):
                        if isinstance(target, Var) and target not in bound and expr_vars(source) <= bound:
                            steps.append(("assign", target, source))
                            bound.add(target)
                            pending.remove(item)
                            progress = True
                            break

    flush()
    for i, b in enumerate(rule.body):
        if isinstance(b, Literal) and not b.negated:
            steps.append(("scan", i, b.atom))
            bound |= b.atom.variables()
            flush()
    if pending:
        raise EvaluationError(f"cannot order body of unsafe rule {rule}")
    return steps


def _match_atom(atom: Atom, t: tuple, b: Binding) -> Binding | None:
    nb = None
    for term, value in zip(atom.terms, t):
        if isinstance(term, Const):
            if term.value != value:
                return None
            continue
        current = (nb if nb is not None else b).get(term, _MISSING)
        if current is _MISSING:
            if nb is None:
                nb = dict(b)
            nb[term] = value
        elif current != value:
            return None
    return nb if nb is not None else dict(b)


_MISSING = object()


def _bindings(
    steps: list, full: _Store, delta: _Store | None = None, delta_pos: int = -1
) -> Iterator[Binding]:
    """All satisfying valuations; the scan at body index `delta_pos` reads `delta`."""

    def run(k: int, b: Binding) -> Iterator[Binding]:
        if k == len(steps):
            yield b
            return
        step = steps[k]
        kind = step[0]
        if kind == "scan":
            _, pos, atom = step
            store = delta if pos == delta_pos else full
            positions, key = [], []
            for i, term in enumerate(atom.terms):
                if isinstance(term, Const):
                    positions.append(i)
                    key.append(term.value)
                elif term in b:
                    positions.append(i)
                    key.append(b[term])
            for t in store.lookup(atom.relation, tuple(positions), tuple(key)):
                nb = _match_atom(atom, t, b)
                if nb is not None:
                    yield from run(k + 1, nb)
        elif kind == "neg":
            atom = step[1]
            t = tuple(term.value if isinstance(term, Const) else b[term] for term in atom.terms)
            if t not in full.rels.get(atom.relation, ()):
                yield from run(k + 1, b)
        elif kind == "test":
            c: Comparison = step[1]
            if compare(c.op, eval_expr(c.left, b), eval_expr(c.right, b)):
                yield from run(k + 1, b)
        else:
            _, target, source = step
            nb = dict(b)
            nb[target] = eval_expr(source, b)
            yield from run(k + 1, nb)

    yield from run(0, {})


def head_tuple(rule: Rule, b: Binding) -> tuple:
    return tuple(t.value if isinstance(t, Const) else b[t] for t in rule.head.terms)


def ground_guards(rule: Rule) -> list:
    """Body literals and comparisons without variables (nullary guards and the like).

    A body made only of such literals is what the aggregate collects, so it
    has no guards.
    """
    ground = [b for b in rule.body if not b.variables()]
    return ground if len(ground) < len(rule.body) else []


def aggregate_results(
    rule: Rule, valuations: Iterable[Binding], guards_hold: bool = True
) -> set[tuple]:
    """Group distinct valuations by head terms and apply the aggregate.

    A groupless aggregate over no valuations still yields its empty value
    (0 for COUNT and SUM), but only while the body's ground guards hold.
    """
    agg = rule.aggregate
    groups: dict[tuple, set] = {}
    all_vars = sorted({v for b in rule.body for v in b.variables()}, key=lambda v: v.name)
    for b in valuations:
        g = head_tuple(rule, b)
        if agg.kind is AggKind.SUM:
            item = tuple(b[v] for v in all_vars)
        else:
            item = tuple(b[v] for v in agg.args)
        groups.setdefault(g, set()).add(item)
    if not rule.head.terms and () not in groups and guards_hold:
        groups[()] = set()
    out: set[tuple] = set()
    for g, items in groups.items():
        if agg.kind is AggKind.COUNT:
            out.add(g + (len(items),))
        elif agg.kind is AggKind.SUM:
            pos = all_vars.index(agg.args[0])
            total = 0
            for item in items:
                v = item[pos]
                if not isinstance(v, int):
                    raise EvaluationError(f"sum over non-integer value {v!r} in {rule}")
                total += v
            out.add(g + (total,))
        else:
            start = 0 if not rule.head.terms else 1
            for m in range(start, len(items) + 1):
                out.add(g + (m,))
    return out


def _guards_hold(rule: Rule, store) -> bool:
    guards = ground_guards(rule)
    if rule.head.terms or not guards:
        return True
    probe = Rule(Atom("__guard", ()), tuple(guards))
    return any(True for _ in _bindings(_plan(probe), store))


def _rules_of(p: Program | Sequence[Rule]) -> Sequence[Rule]:
    return p.rules if isinstance(p, Program) else p


def evaluate(
    p: Program | Sequence[Rule],
    edb: Instance,
    strata: Sequence[frozenset[str]] | None = None,
) -> Instance:
    """Stratum-by-stratum semi-naive fixpoint; returns edb plus every derived fact."""
    rules = list(_rules_of(p))
    if strata is None:
        strata = stratify_rules(rules)
    rels: dict[str, set] = {k: set(v) for k, v in edb.as_dict().items()}
    plans = {id(r): _plan(r) for r in rules}
    for stratum in strata:
        srules = [r for r in rules if r.head.relation in stratum]
        plain = [r for r in srules if r.aggregate is None]
        aggs = [r for r in srules if r.aggregate is not None]
        recursive_aggs = [r for r in aggs if any(a.relation in stratum for a in r.positive())]

        def derive_aggs(which: list[Rule]) -> dict[str, set]:
            store = _Store(rels)
            found: dict[str, set] = {}
            for r in which:
                res = aggregate_results(r, _bindings(plans[id(r)], store), _guards_hold(r, store))
                found.setdefault(r.head.relation, set()).update(res)
            return found

        new: dict[str, set] = {}
        store = _Store(rels)
        for r in plain:
            for b in _bindings(plans[id(r)], store):
                new.setdefault(r.head.relation, set()).add(head_tuple(r, b))
        for name, ts in derive_aggs(aggs).items():
            new.setdefault(name, set()).update(ts)
        delta = _absorb(rels, new)
        while delta:
            full = _Store(rels)
            dstore = _Store(delta)
            new = {}
            for r in plain:
                for i, b in enumerate(r.body):
                    if (
                        isinstance(b, Literal)
                        and not b.negated
                        and b.atom.relation in stratum
                        and b.atom.relation in delta
                    ):
                        for bind in _bindings(plans[id(r)], full, dstore, i):
                            new.setdefault(r.head.relation, set()).add(head_tuple(r, bind))
            for name, ts in derive_aggs(recursive_aggs).items():
                new.setdefault(name, set()).update(ts)
            delta = _absorb(rels, new)
    return Instance(rels)


def _absorb(rels: dict[str, set], new: dict[str, set]) -> dict[str, set]:
    delta = {}
    for name, ts in new.items():
        fresh = ts - rels.get(name, set())
        if fresh:
            rels.setdefault(name, set()).update(fresh)
            delta[name] = fresh
    return delta


def derived(p: Program | Sequence[Rule], edb: Instance) -> Instance:
    """Only the facts over head relations."""
    rules = _rules_of(p)
    return evaluate(rules, edb).restrict({r.head.relation for r in rules})
