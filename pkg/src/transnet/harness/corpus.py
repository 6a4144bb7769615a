"""The example corpus: programs, inputs, configurations and what they should do."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..analyzer import check_strategy, classify
from ..causality import check_coordination_freeness
from ..datalog import DatalogError, Instance, Program, evaluate, parse_facts, parse_program
from ..network import Budget, BudgetExhausted, Dimension, check_independence, run
from ..rewriter import RewriteTarget, rewrite
from ..transducer import TransducerSpec
from .config import input_schema, load_config

CORPUS_DIR = Path(str(resources.files("transnet") / "corpus"))

# kept small so `corpus --all` finishes in seconds
CHECK_BUDGET = Budget(
    node_counts=(1, 2, 3),
    t0s=(0, 2),
    partition_seeds=(0,),
    family_seeds=(0, 1, 2),
    max_configs=120,
)


@dataclass(frozen=True)
class Run:
    """Expected out(*) of the spec on `input` under `config`; None means no quiescence."""

    input: str
    config: str
    output: str | None


@dataclass(frozen=True)
class Audit:
    input: str
    config: str
    violations: tuple[str, ...]  # subset of live, safety, proper; empty means clean


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    about: str
    spec: str | None = None
    query: str | None = None
    summary: str = ""  # analyzer summary of the spec under rsfd
    query_summary: str = ""
    runs: tuple[Run, ...] = ()
    answers: tuple[tuple[str, str], ...] = ()  # (input, query result restricted to out relations)
    independence: tuple[tuple[str, Dimension, bool], ...] = ()  # (input, dimension, convergent)
    audits: tuple[Audit, ...] = ()
    free_on: str | None = None  # input for the runtime coordination-freeness check
    # what that check runs: the entry's spec, or a rewrite of its query when
    # the spec itself is not independent
    free_target: str = "spec"
    rejects: str | None = None  # error class the spec must raise
    tags: frozenset[str] = field(default_factory=frozenset)

    def spec_text(self) -> str:
        return read(self.spec)

    def load_spec(self) -> TransducerSpec:
        return TransducerSpec.parse(self.spec_text(), self.name)

    def load_query(self) -> Program:
        return parse_program(read(self.query))

    def coordination_spec(self) -> TransducerSpec:
        if self.free_target == "spec":
            return self.load_spec()
        return rewrite(self.load_query(), RewriteTarget(self.free_target), self.name)


def read(name: str) -> str:
    return (CORPUS_DIR / name).read_text()


def facts(name: str) -> Instance:
    return parse_facts(read(name))


def _r(inp: str, cfg: str, out: str | None) -> Run:
    return Run(f"{inp}.facts", f"{cfg}.cfg", out)


JOIN = "Q(a, b, x). Q(b, c, y). Q(c, d, z)."
GUARDED = "Q(a, b). Q(c, d). Q(e, f)."
TC = "T(a, b). T(a, c). T(a, d). T(b, c). T(b, d). T(c, d)."

ENTRIES: tuple[CorpusEntry, ...] = (
    CorpusEntry(
        "join_local", "join computed by each node on its own fragment",
        spec="join_local.tn",
        summary="monotone chained hashing coordination-free(rsfd)",
        runs=(_r("join", "n1", JOIN), _r("join", "n3-replicate", JOIN),
              _r("join", "n3-split", "Q(a, b, x).")),
        free_on="join.facts",
    ),
    CorpusEntry(
        "join_broadcast", "broadcast join, independent of the configuration",
        spec="join_broadcast.tn",
        summary="monotone chained hashing broadcast-coordination(rsfd)",
        runs=(_r("join", "n1", JOIN), _r("join", "n3-replicate", JOIN),
              _r("join", "n3-split", JOIN)),
        # broadcasts reach only active nodes, so partitioned families are excluded
        independence=(("join.facts", Dimension.NETWORK, True),
                      ("join.facts", Dimension.TIME, True),
                      ("join.facts", Dimension.PARTITION, True)),
        free_on="join.facts",
    ),
    CorpusEntry(
        "ready_quorum", "outputs R once three nodes announce themselves",
        spec="ready_quorum.tn",
        summary="non-monotone unchained recursion-bounded not-shown-hashing "
                "broadcast-coordination(rsfd)",
        runs=(_r("quorum", "n1", ""), _r("quorum", "n3-replicate", "T(a). T(b)."),
              _r("quorum", "n3-single", "")),
        independence=(("quorum.facts", Dimension.NETWORK, False),
                      ("quorum.facts", Dimension.PARTITION, False)),
    ),
    CorpusEntry(
        "emptiness", "T() iff R is empty, by broadcasting S()",
        spec="emptiness.tn",
        summary="non-monotone unchained recursion-bounded not-shown-hashing "
                "broadcast-coordination(rsfd)",
        runs=(_r("empty", "n1", "T()."), _r("empty", "n3-replicate", "T()."),
              _r("nonempty", "n1", ""), _r("nonempty", "n3-replicate", ""),
              _r("nonempty", "n3-split", "")),
        independence=(("nonempty.facts", Dimension.NETWORK, True),
                      ("nonempty.facts", Dimension.PARTITION, True),
                      ("empty.facts", Dimension.PARTITION, True)),
        free_on="nonempty.facts",
        tags=frozenset({"emptiness"}),
    ),
    CorpusEntry(
        "emptiness_partitioned", "emptiness under a partitioned family outputs T() wrongly",
        spec="emptiness.tn",
        summary="non-monotone unchained recursion-bounded not-shown-hashing "
                "broadcast-coordination(rsfd)",
        runs=(_r("nonempty", "n3-partitioned", "T()."),),
        independence=(("nonempty.facts", Dimension.STRATEGY, False),),
        audits=(Audit("nonempty.facts", "n3-partitioned.cfg", ("safety",)),),
    ),
    CorpusEntry(
        "join_hashed", "join with both inputs hashed on the join column",
        spec="join_hashed.tn",
        summary="monotone chained hashing coordination-free(rsfd)",
        runs=(_r("join_first", "n1", "J(a, b, x). J(b, c, y)."),
              _r("join_first", "n3-replicate", "J(a, b, x). J(b, c, y)."),
              _r("join_first", "n3-split", "J(a, b, x). J(b, c, y).")),
        independence=(("join_first.facts", Dimension.ALL, True),),
        audits=(Audit("join_first.facts", "n3-split.cfg", ()),),
        free_on="join_first.facts",
    ),
    CorpusEntry(
        "join_misrouted", "the hashed join keyed on the non-join columns",
        spec="join_misrouted.tn",
        summary="monotone chained hashing coordination-free(rsfd)",
        runs=(_r("join_first", "n1", "J(a, b, x). J(b, c, y)."),
              _r("join_first", "n3-split", "J(b, c, y).")),
        independence=(("join_first.facts", Dimension.STRATEGY, False),),
        audits=(Audit("join_first.facts", "n3-split.cfg", ("live",)),),
    ),
    CorpusEntry(
        "local_count", "counts the facts hashed to each node",
        spec="local_count.tn",
        summary="non-monotone chained recursion-bounded hashing snapshot-coordination(rsfd)",
        runs=(_r("count", "n1", "T(3)."), _r("count", "n3-split", "T(0). T(1). T(2).")),
        independence=(("count.facts", Dimension.STRATEGY, False),),
        free_on="count.facts",
    ),
    CorpusEntry(
        "filter_count", "filter then count per group, hashed on the group",
        spec="filter_count.tn",
        summary="non-monotone chained recursion-bounded hashing snapshot-coordination(rsfd)",
        runs=(_r("filter", "n1", "T(a, 4). T(b, 1)."),
              _r("filter", "n3-replicate", "T(a, 4). T(b, 1).")),
        free_on="filter.facts",
    ),
    CorpusEntry(
        "filter_partial_count", "filter_count with per-node partial counts summed",
        spec="filter_partial_count.tn",
        summary="non-monotone chained recursion-bounded hashing snapshot-coordination(rsfd)",
        runs=(_r("filter", "n1", "T(a, 4). T(b, 1)."),
              _r("filter", "n3-replicate", "T(a, 4). T(b, 1).")),
        free_on="filter.facts",
    ),
    CorpusEntry(
        "filter_count_misrouted", "filter_count hashed on the counted column",
        spec="filter_count_misrouted.tn",
        summary="non-monotone chained recursion-bounded hashing snapshot-coordination(rsfd)",
        runs=(_r("filter", "n1", "T(a, 4). T(b, 1)."),
              _r("filter", "n3-replicate", "T(a, 2). T(b, 1)."),
              _r("filter", "n3-split", "T(a, 1). T(b, 1).")),
        independence=(("filter.facts", Dimension.NETWORK, False),
                      ("filter.facts", Dimension.STRATEGY, False)),
    ),
    CorpusEntry(
        "path_count", "path counting that aggregates its output over itself",
        spec="path_count.tn",
        rejects="StratificationError",
    ),
    CorpusEntry(
        "guarded_copy", "R whenever T is nonempty, with maximal keys",
        spec="guarded_copy.tn", query="guarded_copy.dl",
        summary="monotone unchained not-shown-hashing broadcast-coordination(rsfd)",
        query_summary="monotone unchained not-shown-hashing broadcast-coordination(rsfd)",
        runs=(_r("guarded", "n1", GUARDED), _r("guarded", "n3-single", GUARDED),
              _r("guarded", "n3-split", "Q(a, b).")),
        answers=(("guarded.facts", GUARDED),),
        independence=(("guarded.facts", Dimension.STRATEGY, False),),
        free_on="guarded.facts",
        free_target="broadcast",
        tags=frozenset({"monotone-unchained"}),
    ),
    CorpusEntry(
        "guarded_copy_rsync", "guarded_copy that can also read the local T",
        spec="guarded_copy_rsync.tn",
        summary="monotone unchained not-shown-hashing broadcast-coordination(rsfd)",
        runs=(_r("guarded", "n1", GUARDED), _r("guarded", "n3-rsync", GUARDED)),
        free_on="guarded.facts",
        tags=frozenset({"rsync"}),
    ),
    CorpusEntry(
        "tc_complement", "facts of T outside the transitive closure of R",
        spec="tc_complement.tn", query="tc_complement.dl",
        summary="non-monotone chained recursion-unbounded not-shown-hashing "
                "synchronized-coordination(rsfd)",
        query_summary="non-monotone chained recursion-unbounded not-shown-hashing "
                      "synchronized-coordination(rsfd)",
        # negation runs before the closure is complete, so Q(a, c) slips out
        runs=(_r("tc_complement", "n1", "Q(a, c). Q(a, d)."),),
        answers=(("tc_complement.facts", "Q(a, d)."),),
        free_on="tc_complement.facts",
    ),
    CorpusEntry(
        "anti_join", "second columns of R whose first column is not in T",
        spec="anti_join.tn",
        summary="non-monotone chained recursion-bounded hashing snapshot-coordination(rsfd)",
        runs=(_r("anti_join", "n1", "Q(d)."), _r("anti_join", "n3-replicate", "Q(d)."),
              _r("anti_join", "n3-split", "Q(d)."), _r("anti_join", "n3-single", "Q(d).")),
        independence=(("anti_join.facts", Dimension.ALL, True),),
        audits=(Audit("anti_join.facts", "n3-split.cfg", ()),),
        free_on="anti_join.facts",
    ),
    CorpusEntry(
        "tc_local_first", "local derivation with hashed re-emission",
        spec="tc_local_first.tn",
        summary="monotone chained hashing coordination-free(rsfd)",
        runs=(_r("tc", "n1", "T(a, b). T(b, b). T(b, c). T(b, d). T(c, b). T(c, c). "
                              "T(c, d). T(d, b). T(d, c). T(d, d)."),),
        free_on="tc.facts",
    ),
    CorpusEntry(
        "semijoin", "semijoin and its broadcast rewrite",
        spec="semijoin_broadcast.tn", query="semijoin.dl",
        summary="monotone chained hashing broadcast-coordination(rsfd)",
        query_summary="monotone chained hashing coordination-free(rsfd)",
        runs=(_r("semijoin", "n1", "T(a, b). T(c, d)."),
              _r("semijoin", "n3-split", "T(a, b). T(c, d).")),
        answers=(("semijoin.facts", "T(a, b). T(c, d)."),),
        free_on="semijoin.facts",
        tags=frozenset({"broadcast-corpus"}),
    ),
    CorpusEntry(
        "path_minus", "two-stratum query and its broadcast rewrite",
        spec="path_minus_broadcast.tn", query="path_minus.dl",
        summary="non-monotone chained recursion-bounded hashing broadcast-coordination(rsfd)",
        query_summary="non-monotone chained recursion-bounded hashing "
                      "snapshot-coordination(rsfd)",
        runs=(_r("path_minus", "n1", "Q(x, d). Q(y, c). Q(z, c)."),
              _r("path_minus", "n3-split", "Q(x, d). Q(y, c). Q(z, c).")),
        answers=(("path_minus.facts", "Q(x, d). Q(y, c). Q(z, c)."),),
        free_on="path_minus.facts",
        tags=frozenset({"broadcast-corpus"}),
    ),
    CorpusEntry(
        "tc", "transitive closure and a hand-written hashed spec",
        spec="tc_hashed.tn", query="tc.dl",
        summary="monotone chained hashing coordination-free(rsfd)",
        query_summary="monotone chained hashing coordination-free(rsfd)",
        runs=(_r("tc", "n1", TC), _r("tc", "n3-split", TC), _r("cycle", "n3-split",
              "T(a, a). T(a, b). T(a, c). T(a, d). T(b, a). T(b, b). T(b, c). T(b, d). "
              "T(c, a). T(c, b). T(c, c). T(c, d).")),
        answers=(("tc.facts", TC),),
        independence=(("tc.facts", Dimension.ALL, True),),
        free_on="tc.facts",
        tags=frozenset({"broadcast-corpus", "hashing-corpus"}),
    ),
    CorpusEntry(
        "filtered_tc", "closure over filtered edges and a hand-written staged spec",
        spec="filtered_tc_staged.tn", query="filtered_tc.dl",
        summary="non-monotone chained recursion-bounded hashing snapshot-coordination(rsfd)",
        query_summary="non-monotone chained recursion-bounded hashing "
                      "snapshot-coordination(rsfd)",
        runs=(_r("filtered_tc", "n1", "Q(a, b). Q(b, b). Q(c, b). Q(c, d). Q(d, b). "
                                      "Q(d, d). Q(e, b). Q(e, d)."),),
        answers=(("filtered_tc.facts", "T(a, b). T(a, d). T(b, d). T(c, d)."),),
        free_on="filtered_tc.facts",
        tags=frozenset({"broadcast-corpus", "hashing-corpus"}),
    ),
)


def entry(name: str) -> CorpusEntry:
    for e in ENTRIES:
        if e.name == name:
            return e
    raise KeyError(f"no corpus entry named {name!r}")


def query_output(q: Program, instance: Instance) -> Instance:
    """The query's answer: its output relations evaluated on one node."""
    outs = {d.name for d in q.decls if d.section is not None and d.section.value == "out"}
    return evaluate(q, instance).restrict(outs)


@dataclass
class EntryReport:
    name: str
    failures: list[str] = field(default_factory=list)
    checks: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures

    def expect(self, cond: bool, msg: str) -> None:
        self.checks += 1
        if not cond:
            self.failures.append(msg)


def check_entry(e: CorpusEntry, deep: bool = True) -> EntryReport:
    """Check every recorded expectation of one entry.

    `deep` adds the budget searches (independence and coordination freeness).
    """
    rep = EntryReport(e.name)
    if e.rejects is not None:
        try:
            e.load_spec()
        except DatalogError as err:
            rep.expect(type(err).__name__ == e.rejects,
                       f"expected {e.rejects}, got {type(err).__name__}: {err}")
        else:
            rep.expect(False, f"expected {e.rejects}, spec parsed")
        return rep
    spec = e.load_spec() if e.spec else None
    if spec is not None:
        rep.expect(TransducerSpec.parse(spec.text()) == spec, "spec does not round-trip")
        got = classify(spec).summary()
        rep.expect(got == e.summary, f"spec summary {got!r} != {e.summary!r}")
        schema = input_schema(spec)
        for r in e.runs:
            trace = run(spec, load_config(CORPUS_DIR / r.config), parse_facts(read(r.input), schema))
            want = None if r.output is None else parse_facts(r.output)
            rep.expect(trace.out_star == want,
                       f"{r.input} under {r.config}: out(*) {trace.out_star} != {want}")
        for a in e.audits:
            cfg = load_config(CORPUS_DIR / a.config)
            audit = check_strategy(spec, cfg.family, [facts(a.input)], cfg.nodes, cfg.partition)
            found = tuple(k for k in ("live", "safety", "proper") if getattr(audit, k))
            rep.expect(found == a.violations, f"audit on {a.input}: {found} != {a.violations}")
    if e.query:
        q = e.load_query()
        got = classify(q).summary()
        rep.expect(got == e.query_summary, f"query summary {got!r} != {e.query_summary!r}")
        for inp, want in e.answers:
            ans = query_output(q, facts(inp))
            rep.expect(ans == parse_facts(want), f"query on {inp}: {ans} != {want}")
    if deep and spec is not None:
        for inp, dim, convergent in e.independence:
            v = check_independence(spec, facts(inp), dim, CHECK_BUDGET)
            rep.expect(v.convergent == convergent,
                       f"{dim.value} independence on {inp}: {v.verdict.value}")
        if e.free_on is not None:
            target = e.coordination_spec()
            expected_free = classify(target).coordination_free()
            try:
                v = check_coordination_freeness(target, facts(e.free_on), CHECK_BUDGET)
                rep.expect(v.free == expected_free,
                           f"runtime verdict {v.verdict.value} disagrees with the analyzer")
            except BudgetExhausted as err:
                rep.expect(False, f"coordination check: {err}")
    return rep
