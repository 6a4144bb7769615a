import pytest

from transnet.datalog import INF, Fact, Instance, SchemaError, StratificationError, parse_facts
from transnet.transducer import (
    LocalState,
    TransducerSpec,
    build_environment,
    configure,
    environment_state,
    local_transition,
)

JOIN_BCAST = """
@db
decl R/2. decl T/2.
@emt
decl S/2 key=inf.
@out
decl Q/3.

S_emt(u, v) <- R(u, v).
Q_out(u, v, w) <- S(u, v), T(v, w).
"""

COUNTER = """
@db
decl R/1.
@mem
decl Seen/1. decl Done/0.
@emt
decl A/1 key=1.
@out
decl Q/1.

A_emt(u) <- R(u), not Seen(u).
Seen_ins(u) <- R(u).
Done_ins() <- Seen(u).
Seen_del(u) <- Seen(u), Done().
Q_out(u) <- A(u), Id(i).
"""


def spec(text, name="t"):
    return TransducerSpec.parse(text, name)


def test_sections_and_keys():
    s = spec(JOIN_BCAST)
    assert s.schema.names("db") == {"R", "T"}
    assert s.key_set == {"S": INF}
    assert [r.head.relation for r in s.program.q_emt] == ["S"]
    assert [r.head.relation for r in s.program.q_out] == ["Q"]


def test_unsuffixed_mem_head_is_insert():
    s = spec("@db\ndecl R/1.\n@mem\ndecl M/1.\nM(u) <- R(u).")
    assert len(s.program.q_ins) == 1


def test_text_round_trip():
    s = spec(COUNTER)
    again = spec(s.text())
    assert again == s
    assert again.text() == s.text()


def test_flags():
    s = spec(COUNTER)
    assert not s.monotone
    assert not s.inflationary
    assert s.time_oblivious
    assert not s.space_oblivious
    b = spec(JOIN_BCAST)
    assert b.monotone and b.inflationary and b.oblivious


@pytest.mark.parametrize(
    "text, error",
    [
        ("@db\ndecl R/1.\nR(u) <- R(u).", SchemaError),  # rule derives db
        ("@emt\ndecl S/1.", SchemaError),  # emit without key
        ("@out\ndecl Q/1 key=1.", SchemaError),  # key on out
        ("@db\ndecl Id/1.", SchemaError),  # reserved
        ("@db\ndecl R/1.\n@out\ndecl Q/1.\nQ_emt(u) <- R(u).", SchemaError),  # wrong action
        ("@db\ndecl R/1.\n@local\ndecl L/1.\nL(u) <- R(u), not L(u).", StratificationError),
    ],
)
def test_rejects(text, error):
    with pytest.raises(error):
        spec(text)


def test_configure_system_relations():
    s = spec(JOIN_BCAST)
    st = configure(s, [1, 2, 3], 2, active=[1, 2])
    assert st.sys.relation("Id") == {(2,)}
    assert st.sys.relation("All") == {(1,), (2,)}
    with pytest.raises(ValueError):
        configure(s, [1, 2], 3)
    with pytest.raises(SchemaError):
        configure(s, [1], 1, db=parse_facts("Q(a, b, c)."))


def test_local_transition_join():
    s = spec(JOIN_BCAST)
    st = configure(s, [1, 2], 1, db=parse_facts("R(a, b). T(b, c)."))
    r = local_transition(s, st, Instance(), 0)
    assert r.emitted == parse_facts("S(a, b).")
    assert not r.state.out
    r2 = local_transition(s, r.state, r.emitted, 1)
    assert r2.state.out == parse_facts("Q(a, b, c).")
    assert r2.derived_out == r2.state.out


def test_out_accumulates():
    s = spec(JOIN_BCAST)
    st = configure(s, [1], 1, db=parse_facts("T(b, c). T(d, e)."))
    r = local_transition(s, st, parse_facts("S(a, b)."), 0)
    assert r.state.out == parse_facts("Q(a, b, c).")
    r = local_transition(s, r.state, parse_facts("S(a, d)."), 1)
    assert r.state.out == parse_facts("Q(a, b, c). Q(a, d, e).")
    assert r.derived_out == parse_facts("Q(a, d, e).")


def test_memory_update_reads_the_old_state():
    s = spec("@db\ndecl R/1.\n@mem\ndecl P/1.\nP(u) <- R(u), not P(u).")
    st = configure(s, [1], 1, db=parse_facts("R(a)."))
    r = local_transition(s, st, Instance(), 0)
    assert r.state.mem == parse_facts("P(a).")
    assert local_transition(s, r.state, Instance(), 1).state.mem == r.state.mem


def test_insert_delete_conflict_is_a_no_op():
    s = spec(COUNTER)
    st = configure(s, [1], 1, db=parse_facts("R(a)."))
    r1 = local_transition(s, st, Instance(), 0)
    assert r1.inserted == parse_facts("Seen(a).")
    r2 = local_transition(s, r1.state, Instance(), 1)
    assert r2.inserted == parse_facts("Done().")
    # Seen(a) is both inserted (R(a)) and deleted (Done): unchanged
    r3 = local_transition(s, r2.state, Instance(), 2)
    assert r3.state.mem == r2.state.mem
    assert not r3.deleted


def test_inbox_must_hold_emit_facts():
    s = spec(JOIN_BCAST)
    st = configure(s, [1], 1)
    with pytest.raises(SchemaError):
        local_transition(s, st, parse_facts("R(a, b)."), 0)
    with pytest.raises(ValueError):
        local_transition(s, LocalState(clock=3), Instance(), 2)


def test_time_is_available_to_rules():
    s = spec("@out\ndecl Q/1.\nQ_out(t) <- Time(t).")
    r = local_transition(s, configure(s, [1], 1), Instance(), 7)
    assert r.state.out == Instance.from_facts([Fact("Q", (7,))])


def test_environment_relays_and_ticks():
    s = spec(JOIN_BCAST)
    env = build_environment(s)
    st = environment_state(env, 5)
    r = local_transition(env, st, parse_facts("S(a, b)."), 5)
    assert r.emitted.relation("S") == {("a", "b")}
    assert r.emitted.relation("STime") == {(5,)}
    assert r.state.mem.relation("Time") == {(6,)}
    assert r.state.mem.relation("S'") == {("a", "b")}
