import hashlib

import pytest
from hypothesis import given
from hypothesis import strategies as st

from transnet.datalog import INF, Fact, Instance, SchemaError, parse_facts
from transnet.strategy import (
    CommunicationKind,
    HashFamily,
    Partition,
    deliver_set,
    hash_address,
)

values = st.one_of(st.integers(-50, 50), st.sampled_from(list("abcdefgh")))
node_sets = st.integers(1, 5).map(lambda n: list(range(1, n + 1)))


def reference_h(seed, value, nodes):
    # recomputed from the definition: keyed blake2b, 8-byte little-endian, mod |active|
    tag = ("i:" if isinstance(value, int) else "s:") + str(value)
    key = seed.to_bytes(8, "little")
    digest = hashlib.blake2b(tag.encode(), key=key, digest_size=8).digest()
    return sorted(nodes)[int.from_bytes(digest, "little") % len(nodes)]


@given(st.integers(0, 1000), values, node_sets)
def test_seeded_hash_matches_reference(seed, v, nodes):
    assert HashFamily.seeded(seed).h(v, nodes) == reference_h(seed, v, nodes)


def test_seeded_hash_frozen_values():
    fam = HashFamily.seeded(0)
    assert [fam.h(v, [1, 2, 3]) for v in "abcdef"] == [reference_h(0, v, [1, 2, 3]) for v in "abcdef"]
    # int 1 and string "1" are distinct constants
    assert fam.h(1, range(1, 50)) != fam.h("1", range(1, 50))


@given(st.integers(0, 100), values, node_sets)
def test_active_subset_is_the_codomain(seed, v, nodes):
    active = nodes[: max(1, len(nodes) // 2)]
    assert HashFamily.seeded(seed, active).h(v, nodes) in active


def test_constant_and_pinned():
    assert HashFamily.constant_node(2).h("z", [1, 2, 3]) == 2
    fam = HashFamily.pinned_map({"a": 3, "b": 1})
    assert fam.h("a", [1, 2, 3]) == 3 and fam.h("b", [1, 2, 3]) == 1
    assert fam.h("q", [1, 2, 3]) == HashFamily.seeded(0).h("q", [1, 2, 3])
    with pytest.raises(ValueError):
        HashFamily.constant_node(4).h("a", [1, 2, 3])
    with pytest.raises(ValueError):
        HashFamily.seeded(0, active=[]).h("a", [1])
    assert HashFamily.seeded(0, active=[1]).is_partitioned([1, 2])
    assert not HashFamily.seeded(0).is_partitioned([1, 2])


def test_hash_address_uses_the_key_prefix():
    fam = HashFamily.pinned_map({"a": 1, "b": 2, "c": 3})
    f = Fact("S", ("a", "b", "c"))
    nodes = [1, 2, 3]
    assert hash_address(f, {"S": 1}, fam, nodes) == {1}
    assert hash_address(f, {"S": 2}, fam, nodes) == {1, 2}
    assert hash_address(f, {"S": 3}, fam, nodes) == {1, 2, 3}
    assert hash_address(f, {"S": INF}, HashFamily.seeded(0, active=[2, 3]), nodes) == {2, 3}
    with pytest.raises(SchemaError):
        hash_address(f, {}, fam, nodes)


def test_hash_address_nullary_fact_broadcasts_under_inf():
    assert hash_address(Fact("Ready", ()), {"Ready": INF}, HashFamily.seeded(1), [1, 2]) == {1, 2}


def test_deliver_set_kinds():
    em = {1: parse_facts("S(a)."), 2: parse_facts("S(b).")}
    keys = {"S": 1}
    fam = HashFamily.pinned_map({"a": 2, "b": 2})
    assert deliver_set(em, CommunicationKind.BROADCAST, keys, fam, [1, 2, 3]) == {
        1: parse_facts("S(a). S(b)."), 2: parse_facts("S(a). S(b)."), 3: parse_facts("S(a). S(b)."),
    }
    assert deliver_set(em, CommunicationKind.COMM_FREE, keys, fam) == em
    hashed = deliver_set(em, CommunicationKind.HASHING, keys, fam)
    assert hashed == {1: Instance(), 2: parse_facts("S(a). S(b).")}


inst_facts = st.lists(
    st.tuples(st.sampled_from(["R", "T"]), values, values), max_size=12
).map(lambda fs: Instance.from_facts([Fact(r, (a, b)) for r, a, b in fs]))


@given(inst_facts, node_sets, st.integers(0, 20))
def test_hash_split_is_a_disjoint_cover(inst, nodes, seed):
    parts = Partition.hash_split(seed).apply(inst, nodes)
    assert sorted(parts) == nodes
    assert Instance().union(*parts.values()) == inst
    assert sum(len(p.facts()) for p in parts.values()) == len(inst.facts())


@given(inst_facts, node_sets)
def test_replicate_and_single_node(inst, nodes):
    assert all(p == inst for p in Partition.replicate_all().apply(inst, nodes).values())
    parts = Partition.single_node(nodes[-1]).apply(inst, nodes)
    assert parts[nodes[-1]] == inst
    assert all(not parts[n] for n in nodes[:-1])


def test_explicit_partition_must_cover():
    inst = parse_facts("R(a, b). R(c, d).")
    ok = Partition.from_map({1: parse_facts("R(a, b)."), 2: parse_facts("R(c, d). R(a, b).")})
    assert ok.apply(inst, [1, 2])[2] == inst
    with pytest.raises(ValueError):
        Partition.from_map({1: parse_facts("R(a, b).")}).apply(inst, [1, 2])
    with pytest.raises(ValueError):
        Partition.from_map({5: inst}).apply(inst, [1, 2])
    with pytest.raises(ValueError):
        Partition.single_node(4).apply(inst, [1, 2])


def test_single_node_network_gets_everything():
    inst = parse_facts("R(a, b).")
    assert Partition.single_node(3).apply(inst, [1]) == {1: inst}
