import io
import json
import subprocess
import sys

import pytest

from transnet.datalog import SchemaError, parse_facts
from transnet.harness.cli import main
from transnet.harness.config import (
    ConfigError,
    input_schema,
    load_instance,
    override,
    parse_config,
    parse_family,
    parse_semantics,
)
from transnet.harness.corpus import CORPUS_DIR, ENTRIES, check_entry, entry
from transnet.network import Configuration, DeliverySemantics
from transnet.strategy import CommunicationKind, HashFamily, Partition
from transnet.transducer import TransducerSpec

C = CORPUS_DIR


def cli(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out)
    return code, out.getvalue()


# configuration files


def test_parse_full_config():
    cfg = parse_config("""
        nodes = 3                # three nodes
        t0 = 2
        partition = hash_split(seed=1)
        hash = seeded(seed=7, active=[1, 2])
        semantics = rsbv var=2 fifo=true
        seed = 4
        max_rounds = 60
        communication = hashing
    """)
    assert cfg == Configuration((1, 2, 3), 2, Partition.hash_split(1), HashFamily.seeded(7, [1, 2]),
                                DeliverySemantics.rsbv(2, True), 4, 60, CommunicationKind.HASHING)


def test_config_defaults_and_node_lists():
    assert parse_config("") == Configuration()
    assert parse_config("nodes = 1, 2, 5").nodes == (1, 2, 5)


def test_explicit_partition():
    cfg = parse_config("nodes = 2\npartition.1 = R(a).\npartition.2 = R(b). R(c).")
    parts = cfg.partition.apply(parse_facts("R(a). R(b). R(c)."), cfg.nodes)
    assert parts[1] == parse_facts("R(a).")
    assert parts[2] == parse_facts("R(b). R(c).")


@pytest.mark.parametrize(
    "text, family",
    [
        ("pinned{a:1, b:3}", HashFamily.pinned_map({"a": 1, "b": 3})),
        ("pinned{a:2, 7:1}(seed=3, active=[1, 2])", HashFamily.pinned_map({"a": 2, 7: 1}, 3, [1, 2])),
        ("constant(2)", HashFamily.constant_node(2)),
        ("seeded(4)", HashFamily.seeded(4)),
    ],
)
def test_parse_family(text, family):
    assert parse_family(text) == family


def test_parse_semantics():
    assert parse_semantics("rsfd") == DeliverySemantics.rsfd()
    assert parse_semantics("rsync max_delay=3") == DeliverySemantics.rsync(3)
    assert parse_semantics("RSBV var=1").fifo is False


@pytest.mark.parametrize(
    "text",
    [
        "colour = blue",
        "nodes = three",
        "nodes = 0",
        "partition = striped",
        "hash = random()",
        "semantics = rsbv var=0",
        "semantics = lossy",
        "communication = carrier-pigeon",
        "partition = explicit",
        "nodes = 2\nhash = constant(5)",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_override_ignores_missing_values():
    cfg = Configuration(seed=3)
    assert override(cfg, seed=None, max_rounds=9) == Configuration(seed=3, max_rounds=9)


def test_load_instance(tmp_path):
    spec = entry("join_local").load_spec()
    f = tmp_path / "i.facts"
    f.write_text("R(a,b).\nT(b,c).")
    assert len(load_instance(f, input_schema(spec)).facts()) == 2
    f.write_text("")
    assert not load_instance(f, input_schema(spec))
    f.write_text("R(a).")
    with pytest.raises(SchemaError):
        load_instance(f, input_schema(spec))


# corpus


def test_every_corpus_spec_round_trips():
    for e in ENTRIES:
        if e.spec and not e.rejects:
            s = e.load_spec()
            assert TransducerSpec.parse(s.text(), s.name) == s, e.name


@pytest.mark.parametrize("e", ENTRIES, ids=lambda e: e.name)
def test_corpus_entry_expectations(e):
    report = check_entry(e, deep=False)
    assert report.ok, report.failures
    assert report.checks > 0


def test_corpus_names_are_unique():
    assert len({e.name for e in ENTRIES}) == len(ENTRIES)
    with pytest.raises(KeyError):
        entry("no-such-entry")


# command line


def test_cli_run_emptiness():
    code, out = cli("run", C / "emptiness.tn", "--input", C / "empty.facts",
                    "--config", C / "n3-replicate.cfg")
    assert code == 0
    assert out.splitlines()[-1] == "out(*): {T()}"
    code, out = cli("run", C / "emptiness.tn", "--input", C / "nonempty.facts",
                    "--config", C / "n3-replicate.cfg")
    assert out.splitlines()[-1] == "out(*): {}"


def test_cli_run_structured_is_deterministic():
    args = ("run", C / "tc_hashed.tn", "--input", C / "tc.facts", "--config", C / "n3-split.cfg",
            "--semantics", "rsbv var=2", "--seed", "5", "--format", "structured")
    code, a = cli(*args)
    _, b = cli(*args)
    assert code == 0 and a == b
    recs = [json.loads(line) for line in a.splitlines()]
    assert recs[0]["type"] == "config" and "rsbv(var=2" in recs[0]["config"]
    assert recs[-1]["type"] == "quiescence"


def test_cli_run_without_quiescence_exits_1(tmp_path):
    spec = tmp_path / "clock.tn"
    spec.write_text("@out\ndecl Q/1.\nQ_out(t) <- Time(t).")
    code, out = cli("run", spec, "--max-rounds", "5")
    assert code == 1
    assert "no quiescence within 5 rounds" in out
    assert out.splitlines()[-1] == "out(*): ⊥"


def test_cli_analyze():
    assert cli("analyze", C / "tc.dl") == (0, "monotone chained hashing coordination-free(rsfd)\n")
    code, out = cli("analyze", C / "guarded_copy.dl", "--semantics", "rsync")
    assert out.startswith("monotone unchained not-shown-hashing coordination-free(rsync)")
    code, out = cli("analyze", C / "filtered_tc.dl", "--format", "structured")
    rec = json.loads(out)
    assert rec["type"] == "taxonomy" and rec["coordination"]["rsfd"] == "SNAPSHOT"


def test_cli_rewrite(tmp_path):
    target = tmp_path / "tc_bcast.tn"
    assert cli("rewrite", C / "tc.dl", "--target", "broadcast", "-o", target) == (0, "")
    spec = TransducerSpec.parse(target.read_text())
    assert set(spec.key_set) == {"R'"}
    code, out = cli("rewrite", C / "guarded_copy.dl", "--target", "hashing")
    assert code == 1 and out == ""
    code, out = cli("rewrite", C / "emptiness.tn", "--target", "snapshot-generic")
    assert code == 0 and "_NullS" in out


def test_cli_check_consistency():
    code, out = cli("check-consistency", C / "join_local.tn", C / "join_broadcast.tn",
                    "--input", C / "join.facts", "--config", C / "n3-replicate.cfg")
    assert code == 0 and out.startswith("CONSISTENT")
    code, out = cli("check-consistency", C / "join_local.tn", C / "join_broadcast.tn",
                    "--input", C / "join.facts", "--config", C / "n3-split.cfg")
    assert code == 1 and out.startswith("INCONSISTENT")


def test_cli_check_independence():
    code, out = cli("check-independence", C / "guarded_copy.tn", "--input", C / "guarded.facts",
                    "--dimension", "strategy")
    assert code == 1 and out.startswith("DIVERGENT (strategy)")
    code, out = cli("check-independence", C / "tc_hashed.tn", "--input", C / "tc.facts",
                    "--budget", "30", "--format", "structured")
    assert code == 0 and json.loads(out.splitlines()[0])["verdict"] == "CONVERGENT"


def test_cli_coordination():
    code, out = cli("coordination", C / "tc_hashed.tn", "--input", C / "tc.facts",
                    "--budget", "40", "--graph")
    assert code == 0 and out.startswith("FREE")
    assert any(json.loads(line)["type"] == "edge" for line in out.splitlines()[2:])
    code, out = cli("coordination", C / "join_broadcast.tn", "--input", C / "join.facts",
                    "--budget", "20", "--nodes", "2,3")
    assert code == 1 and "pattern: master" in out


def test_cli_corpus():
    code, out = cli("corpus", "--list")
    assert code == 0 and len(out.splitlines()) == len(ENTRIES)
    code, out = cli("corpus", "join_local", "tc", "--quick")
    assert code == 0 and out.splitlines()[-1] == "2/2 entries pass"


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        ["run"],
        ["run", "/no/such/file.tn"],
        ["corpus"],
        ["corpus", "no-such-entry"],
        ["analyze", str(C / "join.facts")],
        ["run", str(C / "join_local.tn"), "--config", str(C / "join.facts")],
        ["run", str(C / "join_local.tn"), "--input", str(C / "quorum.facts")],
    ],
)
def test_cli_usage_errors_exit_2(argv, capsys):
    assert main(argv, io.StringIO()) == 2


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "transnet.harness.cli", "analyze", str(C / "tc.dl")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "monotone chained hashing coordination-free(rsfd)"
