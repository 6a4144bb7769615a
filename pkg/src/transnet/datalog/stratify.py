"""Predicate dependency graph and canonical stratification.

The canonical stratification puts every strongly connected component of
the dependency graph (restricted to derived relations) in its own
stratum, ordered topologically with ties broken by relation name.
It is the finest legal stratification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import networkx as nx

from .errors import StratificationError
from .syntax import Program, Rule


@dataclass(frozen=True)
class Dependency:
    source: str  # body relation
    target: str  # head relation
    negative: bool  # through negation or a COUNT/SUM aggregate


def dependencies(rules: Iterable[Rule]) -> list[Dependency]:
    out = set()
    for r in rules:
        head = r.head.relation
        blocking = r.aggregate is not None and r.aggregate.kind.stratified
        for lit_atom in r.positive():
            out.add(Dependency(lit_atom.relation, head, blocking))
        for lit_atom in r.negative():
            out.add(Dependency(lit_atom.relation, head, True))
    return sorted(out, key=lambda d: (d.source, d.target, d.negative))


def dependency_graph(rules: Sequence[Rule]) -> nx.DiGraph:
    """Directed graph body relation -> head relation; edge attr `negative`."""
    g = nx.DiGraph()
    for r in rules:
        g.add_node(r.head.relation)
    for d in dependencies(rules):
        if g.has_edge(d.source, d.target):
            g[d.source][d.target]["negative"] |= d.negative
        else:
            g.add_edge(d.source, d.target, negative=d.negative)
    return g


def _offending_cycle(g: nx.DiGraph, source: str, target: str) -> list[str]:
    if source == target:
        return [source, source]
    back = nx.shortest_path(g, target, source)
    return [source] + back


def stratify_rules(rules: Sequence[Rule]) -> list[frozenset[str]]:
    """Canonical strata over the head relations of `rules`."""
    g = dependency_graph(rules)
    idb = {r.head.relation for r in rules}
    sub = g.subgraph(idb).copy()
    comp_of: dict[str, int] = {}
    comps = [frozenset(c) for c in nx.strongly_connected_components(sub)]
    for idx, comp in enumerate(comps):
        for name in comp:
            comp_of[name] = idx
    for u, v, data in sorted(sub.edges(data=True)):
        if data["negative"] and comp_of[u] == comp_of[v]:
            raise StratificationError(
                "not stratifiable, cycle through negation or aggregation",
                _offending_cycle(sub, u, v),
            )
    # a recursive aggregate keeps producing new values, even the monotone fs_count
    for r in rules:
        if r.aggregate is None:
            continue
        head = r.head.relation
        for a in r.positive():
            if a.relation in comp_of and comp_of[a.relation] == comp_of[head]:
                raise StratificationError(
                    "not stratifiable, recursion through an aggregate",
                    _offending_cycle(sub, a.relation, head),
                )
    dag = nx.DiGraph()
    dag.add_nodes_from(range(len(comps)))
    for u, v in sub.edges():
        if comp_of[u] != comp_of[v]:
            dag.add_edge(comp_of[u], comp_of[v])
    order = nx.lexicographical_topological_sort(dag, key=lambda c: min(comps[c]))
    return [comps[c] for c in order]


def stratify(p: Program) -> list[frozenset[str]]:
    return stratify_rules(p.rules)


def is_recursive(component: frozenset[str], rules: Sequence[Rule]) -> bool:
    """True if the component has a dependency cycle (including self-loops)."""
    if len(component) > 1:
        return True
    (name,) = tuple(component)
    return any(
        r.head.relation == name and any(a.relation == name for a in r.atoms()) for r in rules
    )
