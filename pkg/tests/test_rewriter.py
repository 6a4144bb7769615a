import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randprog import random_instance, random_program
from transnet.datalog import INF, evaluate, parse_program
from transnet.harness.corpus import ENTRIES, entry, facts, query_output
from transnet.network import Configuration, DeliverySemantics, nodes_of, run
from transnet.rewriter import (
    RewriteError,
    RewriteTarget,
    inject_snapshot_fifo,
    inject_snapshot_generic,
    is_injected,
    negated_emit_relations,
    rewrite,
    to_broadcast_network,
    to_hashing_network,
)
from transnet.strategy import HashFamily, Partition
from transnet.transducer import TransducerSpec

QUERIES = [e for e in ENTRIES if e.query]


def reparse(spec):
    return TransducerSpec.parse(spec.text(), spec.name)


@pytest.mark.parametrize("e", QUERIES, ids=lambda e: e.name)
def test_broadcast_rewrite_round_trips(e):
    spec = to_broadcast_network(e.load_query(), e.name)
    assert reparse(spec) == spec


@pytest.mark.parametrize("e", [e for e in QUERIES if e.name in ("tc", "filtered_tc", "semijoin",
                                                                   "path_minus")],
                         ids=lambda e: e.name)
def test_hashing_rewrite_round_trips(e):
    spec = to_hashing_network(e.load_query(), e.name)
    assert reparse(spec) == spec
    assert all(k is not INF for k in spec.key_set.values())


def test_broadcast_shape():
    spec = to_broadcast_network(entry("semijoin").load_query())
    assert spec.key_set == {"R'": INF, "P'": INF}
    assert spec.schema.names("db") == {"R", "P"}
    assert not spec.schema.names("mem")  # monotone: no Ready guard
    guarded = to_broadcast_network(entry("path_minus").load_query())
    assert guarded.schema.names("mem") == {"Ready"}
    assert all(any(a.relation == "Ready" for a in r.atoms()) for r in guarded.program.q_out)


def test_hashing_rejections():
    with pytest.raises(RewriteError, match="not chained"):
        to_hashing_network(entry("guarded_copy").load_query())
    with pytest.raises(RewriteError, match="aggregate"):
        to_hashing_network(parse_program("decl R/1. decl T/1. T(count<u>) <- R(u)."))
    with pytest.raises(RewriteError):
        to_hashing_network(entry("tc_complement").load_query())


def test_name_clash_is_reported():
    with pytest.raises(RewriteError):
        to_broadcast_network(parse_program("decl R/1. decl R'/1. decl T/1. T(u) <- R(u), R'(u)."))


def test_hashing_stages_negation():
    spec = to_hashing_network(entry("filtered_tc").load_query())
    stages = sorted(n for n in spec.schema.names("mem") if n.startswith("_Stage"))
    assert stages == ["_Stage1", "_Stage2"]
    negating = [r for r in spec.program.q_emt if r.has_negation()]
    assert negating and all(any(a.relation == "_Stage2" for a in r.atoms()) for r in negating)


def test_snapshot_injection():
    base = entry("emptiness").load_spec()
    assert negated_emit_relations(base) == ["S"]
    for inject in (inject_snapshot_fifo, inject_snapshot_generic):
        spec = inject(base)
        assert is_injected(spec) and not is_injected(base)
        assert reparse(spec) == spec
        assert spec.key_set["_NullS"] is INF
    assert spec.schema.decl("_NullS").arity == 2  # generic markers carry a count


def test_injection_refuses_recursive_emits():
    with pytest.raises(RewriteError, match="recursively"):
        inject_snapshot_fifo(entry("tc_complement").load_spec())


def test_rewrite_dispatch():
    q = entry("tc").load_query()
    assert rewrite(q, RewriteTarget.BROADCAST, "x") == to_broadcast_network(q, "x")
    assert rewrite(q, RewriteTarget.HASHING, "x") == to_hashing_network(q, "x")
    s = entry("anti_join").load_spec()
    assert rewrite(s, RewriteTarget.SNAPSHOT_GENERIC) == inject_snapshot_generic(s)


def test_injected_emptiness_is_correct_on_empty_input():
    spec = inject_snapshot_fifo(entry("emptiness").load_spec())
    for seed in range(10):
        cfg = Configuration(nodes_of(3), 0, Partition.replicate_all(), HashFamily.seeded(0),
                            DeliverySemantics.rsbv(2, fifo=True), seed, 60)
        assert run(spec, cfg, facts("empty.facts")).out_star.relation("T") == {()}
        assert not run(spec, cfg, facts("nonempty.facts")).out_star.relation("T")


def _config(seed):
    return Configuration(nodes_of(3), seed % 3, Partition.hash_split(seed),
                         HashFamily.seeded(seed), max_rounds=80)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_broadcast_rewrite_computes_any_program(seed):
    rng = random.Random(seed)
    q = random_program(rng)
    inst = random_instance(rng, 12)
    cfg = _config(seed)
    tr = run(to_broadcast_network(q), cfg, inst)
    assert tr.out_star == evaluate(q, inst).restrict(q.outputs())
    assert tr.quiescence <= cfg.t0 + 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_hashing_rewrite_computes_accepted_programs(seed):
    rng = random.Random(seed)
    q = random_program(rng)
    inst = random_instance(rng, 12)
    try:
        spec = to_hashing_network(q)
    except RewriteError:
        return
    assert run(spec, _config(seed), inst).out_star == evaluate(q, inst).restrict(q.outputs())


def test_query_output_restricts_to_outputs():
    out = query_output(entry("tc_complement").load_query(), facts("tc_complement.facts"))
    assert set(out) == {"Q"}
