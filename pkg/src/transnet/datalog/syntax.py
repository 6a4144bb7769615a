"""Abstract syntax for Datalog programs with negation and aggregates."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Union

Constant = Union[str, int]


class _Infinite:
    """Key value meaning "address every reachable node"."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __reduce__(self):
        return (_Infinite, ())


INF = _Infinite()


def const_key(value: Constant) -> tuple:
    """Total order over constants: integers first, then strings."""
    if isinstance(value, bool):
        raise TypeError("booleans are not constants")
    if isinstance(value, int):
        return (0, value, "")
    return (1, 0, value)


def tuple_key(values: tuple) -> tuple:
    return tuple(const_key(v) for v in values)


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def is_wildcard(self) -> bool:
        return self.name.startswith("_#")

    def __str__(self) -> str:
        return "_" if self.is_wildcard else self.name


@dataclass(frozen=True)
class Const:
    value: Constant

    def __str__(self) -> str:
        if isinstance(self.value, int):
            return str(self.value)
        escaped = self.value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'


Term = Union[Var, Const]


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - *
    left: "Expr"
    right: "Expr"

    def __str__(self) -> str:
        return f"{_expr_str(self.left, True)} {self.op} {_expr_str(self.right, True)}"


Expr = Union[Var, Const, BinOp]


def _expr_str(e: Expr, nested: bool = False) -> str:
    if isinstance(e, BinOp) and nested:
        return f"({e})"
    return str(e)


def expr_vars(e: Expr) -> set[Var]:
    if isinstance(e, Var):
        return {e}
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    return set()


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple[Term, ...]

    @property
    def arity(self) -> int:
        return len(self.terms)

    def variables(self) -> set[Var]:
        return {t for t in self.terms if isinstance(t, Var)}

    def __str__(self) -> str:
        return f"{self.relation}({', '.join(str(t) for t in self.terms)})"


@dataclass(frozen=True)
class Literal:
    atom: Atom
    negated: bool = False

    def variables(self) -> set[Var]:
        return self.atom.variables()

    def __str__(self) -> str:
        return ("not " if self.negated else "") + str(self.atom)


COMPARISON_OPS = ("=", "!=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Comparison:
    op: str
    left: Expr
    right: Expr

    def variables(self) -> set[Var]:
        return expr_vars(self.left) | expr_vars(self.right)

    def __str__(self) -> str:
        return f"{self.left} {self.op} {self.right}"


BodyItem = Union[Literal, Comparison]


class AggKind(enum.Enum):
    COUNT = "count"
    SUM = "sum"
    FS_COUNT = "fs_count"

    @property
    def stratified(self) -> bool:
        """COUNT and SUM need their body complete; FS_COUNT grows monotonically."""
        return self is not AggKind.FS_COUNT


@dataclass(frozen=True)
class Aggregate:
    kind: AggKind
    args: tuple[Var, ...]

    def __str__(self) -> str:
        return f"{self.kind.value}<{', '.join(str(a) for a in self.args)}>"


class Action(enum.Enum):
    """What a rule does with its head relation inside a transducer."""

    INS = "ins"
    DEL = "del"
    EMT = "emt"
    OUT = "out"


@dataclass(frozen=True)
class Rule:
    head: Atom  # non-aggregate head terms only
    body: tuple[BodyItem, ...] = ()
    aggregate: Aggregate | None = None
    action: Action | None = None
    line: int = field(default=0, compare=False)

    @property
    def head_arity(self) -> int:
        return self.head.arity + (1 if self.aggregate else 0)

    def positive(self) -> Iterator[Atom]:
        for b in self.body:
            if isinstance(b, Literal) and not b.negated:
                yield b.atom

    def negative(self) -> Iterator[Atom]:
        for b in self.body:
            if isinstance(b, Literal) and b.negated:
                yield b.atom

    def atoms(self) -> Iterator[Atom]:
        for b in self.body:
            if isinstance(b, Literal):
                yield b.atom

    def comparisons(self) -> Iterator[Comparison]:
        for b in self.body:
            if isinstance(b, Comparison):
                yield b

    def variables(self) -> set[Var]:
        out = set(self.head.variables())
        if self.aggregate:
            out |= set(self.aggregate.args)
        for b in self.body:
            out |= b.variables()
        return out

    def has_negation(self) -> bool:
        return any(True for _ in self.negative())

    def with_head(self, head: Atom, action: Action | None = None) -> "Rule":
        return Rule(head, self.body, self.aggregate, action, self.line)

    def with_body(self, body: tuple[BodyItem, ...]) -> "Rule":
        return Rule(self.head, tuple(body), self.aggregate, self.action, self.line)

    def head_text(self) -> str:
        name = self.head.relation
        if self.action is not None:
            name = f"{name}_{self.action.value}"
        terms = [str(t) for t in self.head.terms]
        if self.aggregate:
            terms.append(str(self.aggregate))
        return f"{name}({', '.join(terms)})"

    def __str__(self) -> str:
        if not self.body:
            return f"{self.head_text()}."
        return f"{self.head_text()} <- {', '.join(str(b) for b in self.body)}."


class Section(enum.Enum):
    DB = "db"
    MEM = "mem"
    EMT = "emt"
    OUT = "out"
    LOCAL = "local"


@dataclass(frozen=True)
class RelationDecl:
    name: str
    arity: int
    key: object = None  # int, INF, or None for non-emit relations
    section: Section | None = None

    def __post_init__(self):
        if self.arity < 0:
            raise ValueError(f"negative arity for {self.name}")
        if isinstance(self.key, int) and not 1 <= self.key <= self.arity:
            raise ValueError(f"key {self.key} out of range for {self.name}/{self.arity}")

    def __str__(self) -> str:
        text = f"decl {self.name}/{self.arity}"
        if self.key is INF:
            text += " key=inf"
        elif self.key is not None:
            text += f" key={self.key}"
        return text + "."


@dataclass(frozen=True)
class Program:
    decls: tuple[RelationDecl, ...] = ()
    rules: tuple[Rule, ...] = ()

    @property
    def schema(self) -> dict[str, RelationDecl]:
        return {d.name: d for d in self.decls}

    def decl(self, name: str) -> RelationDecl:
        return self.schema[name]

    def idb(self) -> set[str]:
        return {r.head.relation for r in self.rules}

    def edb(self) -> set[str]:
        return set(self.schema) - self.idb()

    def section(self, section: Section) -> list[RelationDecl]:
        return [d for d in self.decls if d.section is section]

    def inputs(self) -> set[str]:
        """Designated input relations: the @db section, else relations never derived."""
        db = self.section(Section.DB)
        if db:
            return {d.name for d in db}
        return self.edb()

    def outputs(self) -> set[str]:
        """Designated output relations: the @out section, else every derived relation."""
        out = self.section(Section.OUT)
        if out:
            return {d.name for d in out}
        return self.idb()
