"""Run configuration files and fact files.

A configuration file holds one `key = value` per line, `#` starts a comment::

    nodes = 3                     # or an explicit list: 1, 2, 5
    t0 = 0
    partition = hash_split(seed=1)
    hash = seeded(seed=7, active=[1, 2, 3])
    semantics = rsbv var=2 fifo=true
    seed = 4
    max_rounds = 60

Partitions: replicate_all, single_node(N), hash_split(seed=S), explicit.
An explicit partition lists each node's fragment as `partition.N = R(a). T(b).`
Hash families: seeded(seed=S, active=[...]), pinned{a:1, b:3}(seed=S, active=[...]),
constant(N, active=[...]).
"""

from __future__ import annotations

import configparser
import re
from dataclasses import replace
from pathlib import Path

from ..datalog import DatalogError, Instance, RelationDecl, parse_facts
from ..network import Configuration, DeliverySemantics
from ..strategy import CommunicationKind, HashFamily, Partition
from ..transducer import TransducerSpec


class ConfigError(ValueError):
    pass


_KEYS = {"nodes", "t0", "partition", "hash", "semantics", "seed", "max_rounds", "communication"}


def _int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{what}: expected an integer, got {value!r}") from None


def _int_list(text: str, what: str) -> list[int]:
    text = text.strip().strip("[]")
    return [_int(x.strip(), what) for x in text.split(",") if x.strip()]


def parse_nodes(value: str) -> tuple[int, ...]:
    items = _int_list(value, "nodes")
    if len(items) == 1 and "," not in value:
        if items[0] < 1:
            raise ConfigError("nodes: need at least one node")
        return tuple(range(1, items[0] + 1))
    if not items:
        raise ConfigError("nodes: empty node list")
    return tuple(items)


def _kwargs(text: str, what: str) -> tuple[list[str], dict[str, str]]:
    """Split `a, k=v, l=[1, 2]` into positional and keyword parts."""
    parts = re.findall(r"[^,\[]+(?:\[[^\]]*\][^,]*)?", text)
    pos, kw = [], {}
    for p in (x.strip() for x in parts):
        if not p:
            continue
        if "=" in p:
            k, v = p.split("=", 1)
            kw[k.strip()] = v.strip()
        elif kw:
            raise ConfigError(f"{what}: positional argument after keyword")
        else:
            pos.append(p)
    return pos, kw


def _call(value: str, what: str) -> tuple[str, str]:
    m = re.fullmatch(r"([a-z_-]+)\s*(?:\((.*)\))?", value.strip())
    if m is None:
        raise ConfigError(f"{what}: cannot parse {value!r}")
    return m.group(1).replace("-", "_"), m.group(2) or ""


def parse_partition(value: str, fragments: dict[int, Instance] | None = None) -> Partition:
    name, args = _call(value, "partition")
    pos, kw = _kwargs(args, "partition")
    if name == "replicate_all":
        return Partition.replicate_all()
    if name == "single_node":
        node = pos[0] if pos else kw.get("node")
        if node is None:
            raise ConfigError("partition: single_node needs a node")
        return Partition.single_node(_int(node, "partition"))
    if name == "hash_split":
        seed = pos[0] if pos else kw.get("seed", "0")
        return Partition.hash_split(_int(seed, "partition"))
    if name == "explicit":
        if not fragments:
            raise ConfigError("partition: explicit partition needs partition.N entries")
        return Partition.from_map(fragments)
    raise ConfigError(f"partition: unknown mode {name!r}")


def parse_family(value: str) -> HashFamily:
    value = value.strip()
    m = re.fullmatch(r"pinned\s*\{([^}]*)\}\s*(?:\((.*)\))?", value)
    if m is not None:
        pins = {}
        for item in filter(None, (x.strip() for x in m.group(1).split(","))):
            if ":" not in item:
                raise ConfigError(f"hash: pinned entry {item!r} is not constant:node")
            c, n = (x.strip() for x in item.split(":", 1))
            const = int(c) if re.fullmatch(r"-?\d+", c) else c.strip('"')
            pins[const] = _int(n, "hash")
        _, kw = _kwargs(m.group(2) or "", "hash")
        active = _int_list(kw["active"], "hash") if "active" in kw else None
        return HashFamily.pinned_map(pins, _int(kw.get("seed", "0"), "hash"), active)
    name, args = _call(value, "hash")
    pos, kw = _kwargs(args, "hash")
    active = _int_list(kw["active"], "hash") if "active" in kw else None
    if name == "seeded":
        seed = pos[0] if pos else kw.get("seed", "0")
        return HashFamily.seeded(_int(seed, "hash"), active)
    if name == "constant":
        node = pos[0] if pos else kw.get("node")
        if node is None:
            raise ConfigError("hash: constant needs a node")
        return HashFamily.constant_node(_int(node, "hash"), active)
    raise ConfigError(f"hash: unknown family {name!r}")


def parse_semantics(value: str) -> DeliverySemantics:
    words = value.split()
    if not words:
        raise ConfigError("semantics: empty value")
    kind, opts = words[0].lower(), {}
    for w in words[1:]:
        if "=" not in w:
            raise ConfigError(f"semantics: expected key=value, got {w!r}")
        k, v = w.split("=", 1)
        opts[k] = v
    try:
        if kind == "rsfd":
            return DeliverySemantics.rsfd()
        if kind == "rsbv":
            fifo = opts.get("fifo", "false").lower() in ("1", "true", "yes", "on")
            return DeliverySemantics.rsbv(_int(opts.get("var", "1"), "semantics"), fifo)
        if kind == "rsync":
            return DeliverySemantics.rsync(_int(opts.get("max_delay", "1"), "semantics"))
    except ValueError as e:
        raise ConfigError(f"semantics: {e}") from None
    raise ConfigError(f"semantics: unknown kind {kind!r}")


def parse_communication(value: str) -> CommunicationKind:
    v = value.strip().lower().replace("_", "-")
    for kind in CommunicationKind:
        if kind.value == v:
            return kind
    raise ConfigError(f"communication: unknown kind {value!r}")


def parse_config(text: str) -> Configuration:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as e:
        raise ConfigError(f"malformed configuration: {e}") from None
    items = dict(cp["run"])
    fragments: dict[int, Instance] = {}
    for k in list(items):
        if k.startswith("partition."):
            node = _int(k.split(".", 1)[1], "partition")
            try:
                fragments[node] = parse_facts(items.pop(k))
            except DatalogError as e:
                raise ConfigError(f"{k}: {e}") from None
    unknown = set(items) - _KEYS
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
    kw: dict = {}
    if "nodes" in items:
        kw["nodes"] = parse_nodes(items["nodes"])
    for k in ("t0", "seed", "max_rounds"):
        if k in items:
            kw[k] = _int(items[k], k)
    if "partition" in items:
        kw["partition"] = parse_partition(items["partition"], fragments)
    elif fragments:
        kw["partition"] = Partition.from_map(fragments)
    if "hash" in items:
        kw["family"] = parse_family(items["hash"])
    if "semantics" in items:
        kw["semantics"] = parse_semantics(items["semantics"])
    if "communication" in items:
        kw["communication"] = parse_communication(items["communication"])
    try:
        return Configuration(**kw)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def load_config(path: str | Path) -> Configuration:
    return parse_config(Path(path).read_text())


def override(cfg: Configuration, **changes) -> Configuration:
    """Apply command-line overrides; None values leave the field alone."""
    kept = {k: v for k, v in changes.items() if v is not None}
    try:
        return replace(cfg, **kept)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def input_schema(spec: TransducerSpec) -> dict[str, RelationDecl]:
    return {d.name: d for d in spec.schema.db}


def load_instance(path: str | Path, schema: dict[str, RelationDecl] | None = None) -> Instance:
    """Parse a fact file; with a schema, unknown relations and arity mismatches are errors."""
    return parse_facts(Path(path).read_text(), schema)
