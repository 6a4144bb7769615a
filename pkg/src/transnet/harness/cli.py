"""Command line entry point.

Exit status: 0 on success, 1 on a negative verdict (divergent, not free,
inconsistent, no quiescence, failed corpus check), 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from ..analyzer import classify
from ..causality import Freeness, build_graph, check_coordination_freeness
from ..datalog import DatalogError, Instance, Program, parse_program
from ..network import (
    Budget,
    BudgetExhausted,
    Configuration,
    Dimension,
    SemanticsKind,
    check_eventual_consistency,
    check_independence,
    run,
)
from ..rewriter import RewriteError, RewriteTarget, rewrite
from ..transducer import TransducerSpec
from .config import ConfigError, input_schema, load_config, load_instance, override, parse_semantics
from .corpus import ENTRIES, check_entry, entry

OK, NEGATIVE, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(record: dict, out) -> None:
    out.write(json.dumps(record, separators=(", ", ": ")) + "\n")


def _show(inst: Instance | None) -> str:
    if inst is None:
        return "⊥"
    return "{" + ", ".join(str(f) for f in inst.facts()) + "}"


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e.strerror}") from None


def load_spec(path: str) -> TransducerSpec:
    return TransducerSpec.parse(_read(path), Path(path).stem)


def load_query(path: str) -> Program:
    return parse_program(_read(path))


def _instance(path: str | None, spec: TransducerSpec) -> Instance:
    if path is None:
        return Instance()
    _read(path)
    return load_instance(path, input_schema(spec))


def _config(args) -> Configuration:
    cfg = load_config(args.config) if getattr(args, "config", None) else Configuration()
    sem = parse_semantics(args.semantics) if getattr(args, "semantics", None) else None
    return override(cfg, seed=args.seed, max_rounds=args.max_rounds, semantics=sem)


def _budget(args) -> Budget:
    kw = {}
    if args.budget is not None:
        kw["max_configs"] = args.budget
    if args.nodes:
        kw["node_counts"] = tuple(int(x) for x in args.nodes.split(","))
    if args.seed is not None:
        kw["seeds"] = (args.seed,)
    if args.max_rounds is not None:
        kw["max_rounds"] = args.max_rounds
    if args.semantics:
        kw["semantics"] = parse_semantics(args.semantics)
    return Budget(**kw)


# subcommands


def cmd_run(args, out) -> int:
    spec = load_spec(args.spec)
    cfg = _config(args)
    trace = run(spec, cfg, _instance(args.input, spec))
    if args.format == "structured":
        out.write(trace.to_jsonl())
    else:
        out.write(f"config: {cfg.describe()}\n")
        for steps in trace.steps:
            s = next(iter(steps.values())).round
            changed = [n for n, st in steps.items() if st.changed]
            emitted = sum(1 for e in trace.emission_events if e.round == s)
            delivered = sum(1 for d in trace.delivery_events if d.round == s)
            out.write(f"round {s}: delivered {delivered}, emitted {emitted}, "
                      f"changed {changed}\n")
        if trace.pending:
            out.write(f"in flight after the run: {len(trace.pending)} message(s)\n")
        if trace.quiescent:
            out.write(f"quiescence: round {trace.quiescence}\n")
        else:
            out.write(f"no quiescence within {cfg.max_rounds} rounds\n")
        out.write(f"out(*): {_show(trace.out_star)}\n")
    return OK if trace.quiescent else NEGATIVE


def cmd_analyze(args, out) -> int:
    target = load_query(args.file) if args.file.endswith(".dl") else load_spec(args.file)
    report = classify(target)
    sem = SemanticsKind(args.semantics)
    if args.format == "structured":
        _emit({"type": "taxonomy", "file": Path(args.file).name, **report.record()}, out)
    else:
        out.write(report.summary(sem) + "\n")
        for n in report.notes:
            out.write(f"note: {n}\n")
        for r in report.unchained_rules:
            out.write(f"unchained: {r}\n")
    return OK


def cmd_rewrite(args, out) -> int:
    target = RewriteTarget(args.target)
    if target in (RewriteTarget.BROADCAST, RewriteTarget.HASHING):
        src = load_query(args.file)
    else:
        src = load_spec(args.file)
    spec = rewrite(src, target, Path(args.file).stem)
    text = spec.text()
    if args.output:
        Path(args.output).write_text(text)
    else:
        out.write(text)
    return OK


def cmd_check_consistency(args, out) -> int:
    a, b = load_spec(args.spec_a), load_spec(args.spec_b)
    inst = _instance(args.input, a)
    cfg_a = _config(args)
    cfg_b = override(load_config(args.config_b), seed=args.seed, max_rounds=args.max_rounds) \
        if args.config_b else cfg_a
    ta, tb = run(a, cfg_a, inst), run(b, cfg_b, inst)
    verdict = check_eventual_consistency(ta, tb)
    if args.format == "structured":
        _emit({"type": "consistency", "consistent": verdict.consistent, "reason": verdict.reason,
               "out_a": None if ta.out_star is None else [str(f) for f in ta.out_star.facts()],
               "out_b": None if tb.out_star is None else [str(f) for f in tb.out_star.facts()]},
              out)
    else:
        out.write(f"{'CONSISTENT' if verdict else 'INCONSISTENT'}: {verdict.reason}\n")
        out.write(f"out(*) a: {_show(ta.out_star)}\nout(*) b: {_show(tb.out_star)}\n")
    return OK if verdict else NEGATIVE


def cmd_check_independence(args, out) -> int:
    spec = load_spec(args.spec)
    dim = Dimension(args.dimension)
    v = check_independence(spec, _instance(args.input, spec), dim, _budget(args))
    if args.format == "structured":
        _emit({"type": "independence", "dimension": dim.value, "verdict": v.verdict.value,
               "runs": v.runs, "non_quiescent": v.non_quiescent}, out)
        for cfg, o in v.witness:
            _emit({"type": "witness", "config": cfg.describe(),
                   "out": [str(f) for f in o.facts()]}, out)
    else:
        out.write(f"{v.verdict.value} ({dim.value}) after {v.runs} runs"
                  f", {v.non_quiescent} without quiescence\n")
        for cfg, o in v.witness:
            out.write(f"  {cfg.describe()}\n    out(*): {_show(o)}\n")
    return OK if v.convergent else NEGATIVE


def cmd_coordination(args, out) -> int:
    spec = load_spec(args.spec)
    inst = _instance(args.input, spec)
    v = check_coordination_freeness(spec, inst, _budget(args))
    structured = args.format == "structured"
    if structured:
        rec = {"type": "coordination", "verdict": v.verdict.value, "runs": v.runs,
               "non_quiescent": v.non_quiescent,
               "witness": v.witness.describe() if v.witness else None,
               "pattern": v.pattern.describe() if v.pattern else None}
        _emit(rec, out)
    else:
        out.write(f"{v.verdict.value} after {v.runs} runs\n")
        if v.witness is not None:
            out.write(f"witness: {v.witness.describe()}\n")
        if v.pattern is not None:
            out.write(f"pattern: {v.pattern.describe()}\n")
    if args.graph and v.witness is not None:
        trace = run(spec, v.witness, inst)
        for rec in build_graph(trace, spec).records():
            _emit(rec, out)
    return OK if v.verdict is Freeness.FREE else NEGATIVE


def cmd_corpus(args, out) -> int:
    if args.list:
        for e in ENTRIES:
            files = ", ".join(f for f in (e.spec, e.query) if f)
            out.write(f"{e.name:24} {files:40} {e.about}\n")
        return OK
    if not args.all and not args.names:
        raise UsageError("corpus: give entry names, --all or --list")
    try:
        chosen = list(ENTRIES) if args.all else [entry(n) for n in args.names]
    except KeyError as e:
        raise UsageError(str(e.args[0])) from None
    failed = 0
    for e in chosen:
        rep = check_entry(e, deep=not args.quick)
        failed += not rep.ok
        if args.format == "structured":
            _emit({"type": "corpus", "entry": e.name, "ok": rep.ok, "checks": rep.checks,
                   "failures": rep.failures}, out)
        else:
            out.write(f"{'PASS' if rep.ok else 'FAIL'} {e.name} ({rep.checks} checks)\n")
            for f in rep.failures:
                out.write(f"  {f}\n")
    if args.format != "structured":
        out.write(f"{len(chosen) - failed}/{len(chosen)} entries pass\n")
    return NEGATIVE if failed else OK


# parser


def _common(p: argparse.ArgumentParser, config: bool = True) -> None:
    if config:
        p.add_argument("--config", help="run configuration file")
    p.add_argument("--seed", type=int, help="delivery seed (overrides the config)")
    p.add_argument("--max-rounds", type=int, help="round cap (overrides the config)")
    p.add_argument("--semantics", help="rsfd | 'rsbv var=2 fifo=true' | 'rsync max_delay=3'")
    p.add_argument("--format", choices=("text", "structured"), default="text")


def _search(p: argparse.ArgumentParser) -> None:
    p.add_argument("--budget", type=int, help="maximum number of configurations to run")
    p.add_argument("--nodes", help="comma-separated node counts to enumerate, e.g. 1,2,3")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="transnet", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate a spec on an input")
    p.add_argument("spec")
    p.add_argument("--input", help="fact file")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("analyze", help="classify a query (.dl) or spec")
    p.add_argument("file")
    p.add_argument("--semantics", choices=[s.value for s in SemanticsKind], default="rsfd")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("rewrite", help="generate a transducer spec")
    p.add_argument("file")
    p.add_argument("--target", required=True, choices=[t.value for t in RewriteTarget])
    p.add_argument("-o", "--output", help="write the spec here instead of standard output")
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("check-consistency", help="compare the outputs of two specs")
    p.add_argument("spec_a")
    p.add_argument("spec_b")
    p.add_argument("--input", help="fact file")
    p.add_argument("--config-b", help="configuration for the second spec (default: --config)")
    _common(p)
    p.set_defaults(func=cmd_check_consistency)

    p = sub.add_parser("check-independence", help="compare outputs across configurations")
    p.add_argument("spec")
    p.add_argument("--input", help="fact file")
    p.add_argument("--dimension", choices=[d.value for d in Dimension], default="all")
    _common(p, config=False)
    _search(p)
    p.set_defaults(func=cmd_check_independence)

    p = sub.add_parser("coordination", help="search for a run without a coordination pattern")
    p.add_argument("spec")
    p.add_argument("--input", help="fact file")
    p.add_argument("--graph", action="store_true", help="emit the witness run's edges")
    _common(p, config=False)
    _search(p)
    p.set_defaults(func=cmd_coordination)

    p = sub.add_parser("corpus", help="check the bundled examples")
    p.add_argument("names", nargs="*")
    p.add_argument("--all", action="store_true")
    p.add_argument("--list", action="store_true")
    p.add_argument("--quick", action="store_true", help="skip the budget searches")
    p.add_argument("--format", choices=("text", "structured"), default="text")
    p.set_defaults(func=cmd_corpus)
    return ap


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return USAGE if e.code else OK
    try:
        return args.func(args, out)
    except (UsageError, ConfigError, DatalogError, ValueError) as e:
        if isinstance(e, RewriteError):
            print(f"rewrite rejected: {e}", file=sys.stderr)
            return NEGATIVE
        print(f"error: {e}", file=sys.stderr)
        return USAGE
    except BudgetExhausted as e:
        print(f"no verdict: {e}", file=sys.stderr)
        return NEGATIVE


if __name__ == "__main__":
    sys.exit(main())
