"""Datalog with stratified negation, arithmetic and aggregates."""

from .errors import (
    DatalogError,
    EvaluationError,
    ParseError,
    SafetyError,
    SchemaError,
    StratificationError,
)
from .evaluate import derived, evaluate
from .instance import EMPTY, Fact, Instance, format_constant
from .naive import evaluate_naive
from .parser import check_safety, parse_facts, parse_program, parse_rule, resolve
from .printer import format_instance, format_program
from .stratify import dependency_graph, is_recursive, stratify, stratify_rules
from .syntax import (
    INF,
    Action,
    AggKind,
    Aggregate,
    Atom,
    BinOp,
    Comparison,
    Const,
    Constant,
    Literal,
    Program,
    RelationDecl,
    Rule,
    Section,
    Var,
    const_key,
)

__all__ = [
    "Action",
    "AggKind",
    "Aggregate",
    "Atom",
    "BinOp",
    "Comparison",
    "Const",
    "Constant",
    "DatalogError",
    "EMPTY",
    "EvaluationError",
    "Fact",
    "INF",
    "Instance",
    "Literal",
    "ParseError",
    "Program",
    "RelationDecl",
    "Rule",
    "SafetyError",
    "SchemaError",
    "Section",
    "StratificationError",
    "Var",
    "check_safety",
    "const_key",
    "dependency_graph",
    "derived",
    "evaluate",
    "evaluate_naive",
    "format_constant",
    "format_instance",
    "format_program",
    "is_recursive",
    "parse_facts",
    "parse_program",
    "parse_rule",
    "resolve",
    "stratify",
    "stratify_rules",
]
