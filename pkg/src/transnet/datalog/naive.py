"""Naive evaluation: re-derive everything each iteration until nothing changes.

Kept deliberately separate from the semi-naive engine (no indexes, no
join planning, its own aggregate code) so the two can cross-check.
"""

from __future__ import annotations

from typing import Iterator, Sequence

from .errors import EvaluationError
from .instance import Instance
from .stratify import stratify_rules
from .syntax import AggKind, Comparison, Const, Literal, Program, Rule, Var, const_key


def _value(e, env: dict):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    a, b = _value(e.left, env), _value(e.right, env)
    if type(a) is not int or type(b) is not int:
        raise EvaluationError(f"arithmetic on non-integer constants in {e}")
    return {"+": a + b, "-": a - b, "*": a * b}[e.op]


def _holds(c: Comparison, env: dict) -> bool:
    a, b = _value(c.left, env), _value(c.right, env)
    if c.op == "=":
        return a == b
    if c.op == "!=":
        return a != b
    ka, kb = const_key(a), const_key(b)
    return {"<": ka < kb, "<=": ka <= kb, ">": ka > kb, ">=": ka >= kb}[c.op]


def _ground(terms, env) -> tuple | None:
    out = []
    for t in terms:
        if isinstance(t, Const):
            out.append(t.value)
        elif t.name in env:
            out.append(env[t.name])
        else:
            return None
    return tuple(out)


def _solve(body: list, env: dict, db: dict[str, set]) -> Iterator[dict]:
    """Backtracking search: positive atoms drive the search, the rest wait until ground."""
    for idx, item in enumerate(body):
        if isinstance(item, Literal) and not item.negated:
            rest = body[:idx] + body[idx + 1 :]
            for t in db.get(item.atom.relation, ()):
                env2 = dict(env)
                ok = True
                for term, v in zip(item.atom.terms, t):
                    if isinstance(term, Const):
                        ok = term.value == v
                    elif term.name in env2:
                        ok = env2[term.name] == v
                    else:
                        env2[term.name] = v
                    if not ok:
                        break
                if ok:
                    yield from _solve(rest, env2, db)
            return
    # only negations and comparisons remain
    pending = list(body)
    while pending:
        progressed = False
        for item in list(pending):
            if isinstance(item, Literal):
                t = _ground(item.atom.terms, env)
                if t is not None:
                    if t in db.get(item.atom.relation, ()):
                        return
                    pending.remove(item)
                    progressed = True
            else:
                names = {v.name for v in item.variables()}
                if names <= env.keys():
                    if not _holds(item, env):
                        return
                    pending.remove(item)
                    progressed = True
                elif item.op == "=":
                    for lhs, rhs in ((item.left, item.right), (item.right, item.left)):
                        if (
                            isinstance(lhs, Var)
                            and lhs.name not in env
                            and {v.name for v in _vars(rhs)} <= env.keys()
                        ):
                            env = dict(env)
                            env[lhs.name] = _value(rhs, env)
                            pending.remove(item)
                            progressed = True
                            break
        if not progressed:
            raise EvaluationError("unsafe rule body")
    yield env


def _vars(e) -> set:
    if isinstance(e, Var):
        return {e}
    if isinstance(e, Const):
        return set()
    return _vars(e.left) | _vars(e.right)


def _fire(rule: Rule, db: dict[str, set]) -> set[tuple]:
    envs = list(_solve(list(rule.body), {}, db))
    if rule.aggregate is None:
        return {_ground(rule.head.terms, env) for env in envs}
    kind = rule.aggregate.kind
    per_group: dict[tuple, set] = {}
    for env in envs:
        key = _ground(rule.head.terms, env)
        if kind is AggKind.SUM:
            # distinct valuations of the whole body
            per_group.setdefault(key, set()).add(tuple(sorted(env.items())))
        else:
            per_group.setdefault(key, set()).add(tuple(env[a.name] for a in rule.aggregate.args))
    if len(rule.head.terms) == 0:
        guards = [b for b in rule.body if not b.variables()]
        if len(guards) == len(rule.body):
            guards = []  # an all-ground body is what gets counted, not a guard
        if not guards or any(True for _ in _solve(guards, {}, db)):
            per_group.setdefault((), set())
    result = set()
    for key, members in per_group.items():
        if kind is AggKind.COUNT:
            result.add(key + (len(members),))
        elif kind is AggKind.SUM:
            name = rule.aggregate.args[0].name
            vals = [dict(m)[name] for m in members]
            if any(type(v) is not int for v in vals):
                raise EvaluationError("sum over non-integer values")
            result.add(key + (sum(vals),))
        else:
            lowest = 1 if rule.head.terms else 0
            result.update(key + (n,) for n in range(lowest, len(members) + 1))
    return result


def evaluate_naive(p: Program | Sequence[Rule], edb: Instance) -> Instance:
    rules = list(p.rules if isinstance(p, Program) else p)
    db: dict[str, set] = {k: set(v) for k, v in edb.as_dict().items()}
    for stratum in stratify_rules(rules):
        mine = [r for r in rules if r.head.relation in stratum]
        while True:
            grew = False
            for r in mine:
                derived = _fire(r, db)
                target = db.setdefault(r.head.relation, set())
                if not derived <= target:
                    target |= derived
                    grew = True
            if not grew:
                break
    return Instance(db)
