"""Recursive-descent parser for program text and fact files.

Program text::

    % comment
    @emt
    decl S/2 key=1.
    S_emt(u, v) <- R(u, v), not F(u), w = u + 1.
    T(u, count<v>) <- S(u, v).

In rules, bare identifiers in term position are variables and `_` is a
fresh anonymous variable; constants are integers or quoted strings.
In fact files bare identifiers are constants.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable

from .errors import ParseError, SafetyError, SchemaError
from .instance import Fact, Instance
from .syntax import (
    COMPARISON_OPS,
    INF,
    Action,
    AggKind,
    Aggregate,
    Atom,
    BinOp,
    Comparison,
    Const,
    Literal,
    Program,
    RelationDecl,
    Rule,
    Section,
    Var,
    expr_vars,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>%[^\n]*)
  | (?P<arrow><-|:-|←)
  | (?P<op>!=|<=|>=|≠|≤|≥|[<>=+*\-/(),.@¬])
  | (?P<int>\d+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<ident>[A-Za-z_][A-Za-z0-9_']*)
    """,
    re.VERBOSE,
)

_UNICODE_OPS = {"≠": "!=", "≤": "<=", "≥": ">=", "←": "<-", ":-": "<-", "¬": "not"}
_ACTION_SUFFIXES = {f"_{a.value}": a for a in Action}
_SECTION_FOR_ACTION = {
    Action.INS: Section.MEM,
    Action.DEL: Section.MEM,
    Action.EMT: Section.EMT,
    Action.OUT: Section.OUT,
}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            if kind in ("arrow", "op"):
                value = _UNICODE_OPS.get(value, value)
                kind = "op"
            tokens.append(Token(kind, value, line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(text: str) -> str:
    return re.sub(r"\\(.)", r"\1", text[1:-1])


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0
        self._wild = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, message: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        found = tok.text or "end of input"
        return ParseError(f"{message} (found {found!r})", tok.line, tok.column)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        return self.advance()

    def advance(self) -> Token:
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error("expected identifier")
        return self.advance()

    # program level

    def program(self) -> tuple[list[RelationDecl], list[Rule]]:
        decls: list[RelationDecl] = []
        rules: list[Rule] = []
        section: Section | None = None
        while self.tok.kind != "eof":
            if self.at("@"):
                self.advance()
                name = self.ident()
                try:
                    section = Section(name.text)
                except ValueError:
                    raise self.error("unknown section", name) from None
            elif self.at("decl") and self.peek().kind == "ident":
                decls.append(self.declaration(section))
            else:
                rules.append(self.rule())
        return decls, rules

    def declaration(self, section: Section | None) -> RelationDecl:
        start = self.expect("decl")
        name = self.ident().text
        self.expect("/")
        if self.tok.kind != "int":
            raise self.error("expected arity")
        arity = int(self.advance().text)
        key = None
        if self.at("key"):
            self.advance()
            self.expect("=")
            if self.at("inf"):
                self.advance()
                key = INF
            elif self.tok.kind == "int":
                key = int(self.advance().text)
            else:
                raise self.error("expected key value")
        self.expect(".")
        try:
            return RelationDecl(name, arity, key, section)
        except ValueError as e:
            raise ParseError(str(e), start.line, start.column) from None

    def rule(self) -> Rule:
        self._wild = 0
        start = self.tok
        name = self.ident().text
        terms, aggregate = self.head_terms()
        body: list = []
        if self.at("<-"):
            self.advance()
            body.append(self.body_item())
            while self.at(","):
                self.advance()
                body.append(self.body_item())
        self.expect(".")
        return Rule(Atom(name, tuple(terms)), tuple(body), aggregate, None, start.line)

    def head_terms(self):
        self.expect("(")
        terms = []
        aggregate = None
        while not self.at(")"):
            if terms or aggregate:
                self.expect(",")
            if aggregate is not None:
                raise self.error("aggregate must be the last head term")
            if (
                self.tok.kind == "ident"
                and self.tok.text in {k.value for k in AggKind}
                and self.peek().text == "<"
            ):
                aggregate = self.aggregate()
            else:
                terms.append(self.term())
        self.expect(")")
        return terms, aggregate

    def aggregate(self) -> Aggregate:
        kind = AggKind(self.advance().text)
        self.expect("<")
        args = []
        while not self.at(">"):
            if args:
                self.expect(",")
            t = self.term()
            if not isinstance(t, Var):
                raise self.error("aggregate arguments must be variables")
            args.append(t)
        self.expect(">")
        if kind is AggKind.SUM and len(args) != 1:
            raise self.error("sum takes exactly one variable")
        return Aggregate(kind, tuple(args))

    def body_item(self):
        negated = False
        if self.at("not") and self.peek().kind == "ident":
            self.advance()
            negated = True
        if self.tok.kind == "ident" and self.peek().text == "(":
            return Literal(self.atom(), negated)
        if negated:
            raise self.error("expected atom after negation")
        left = self.expr()
        if self.tok.text not in COMPARISON_OPS:
            raise self.error("expected comparison operator")
        op = self.advance().text
        right = self.expr()
        return Comparison(op, left, right)

    def atom(self) -> Atom:
        name = self.ident().text
        self.expect("(")
        terms = []
        while not self.at(")"):
            if terms:
                self.expect(",")
            terms.append(self.term())
        self.expect(")")
        return Atom(name, tuple(terms))

    def term(self):
        tok = self.tok
        if tok.kind == "int":
            self.advance()
            return Const(int(tok.text))
        if tok.text == "-" and self.peek().kind == "int":
            self.advance()
            return Const(-int(self.advance().text))
        if tok.kind == "string":
            self.advance()
            return Const(_unquote(tok.text))
        if tok.kind == "ident":
            self.advance()
            if tok.text == "_":
                self._wild += 1
                return Var(f"_#{self._wild}")
            return Var(tok.text)
        raise self.error("expected term")

    def expr(self):
        left = self.product()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.advance().text
            left = BinOp(op, left, self.product())
        return left

    def product(self):
        left = self.primary()
        while self.at("*"):
            self.advance()
            left = BinOp("*", left, self.primary())
        return left

    def primary(self):
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        return self.term()


def check_safety(rule: Rule) -> None:
    """Raise SafetyError unless every variable is bound positively or by `x = expr`."""
    bound: set[Var] = set()
    for a in rule.positive():
        bound |= a.variables()
    changed = True
    while changed:
        changed = False
        for c in rule.comparisons():
            if c.op != "=":
                continue
            for target, source in ((c.left, c.right), (c.right, c.left)):
                if isinstance(target, Var) and target not in bound and expr_vars(source) <= bound:
                    bound.add(target)
                    changed = True
    needed: list[tuple[str, set[Var]]] = [("head", rule.head.variables())]
    if rule.aggregate:
        needed.append(("aggregate", set(rule.aggregate.args)))
    for a in rule.negative():
        needed.append((f"negated {a.relation}", a.variables()))
    for c in rule.comparisons():
        needed.append(("comparison", c.variables()))
    for where, vs in needed:
        free = sorted(v.name if not v.is_wildcard else "_" for v in vs - bound)
        if free:
            raise SafetyError(
                f"line {rule.line}: unsafe rule {rule.head_text()}: "
                f"variable(s) {', '.join(free)} in {where} not bound by a positive atom"
            )


def resolve(decls: Iterable[RelationDecl], rules: Iterable[Rule]) -> Program:
    """Check declarations, resolve action suffixes and validate every rule."""
    schema: dict[str, RelationDecl] = {}
    for d in decls:
        if d.name in schema:
            raise SchemaError(f"relation {d.name} declared twice")
        schema[d.name] = d
    resolved = []
    for rule in rules:
        check_safety(rule)
        name, action = rule.head.relation, rule.action
        if name not in schema:
            for suffix, act in _ACTION_SUFFIXES.items():
                base = name[: -len(suffix)]
                if name.endswith(suffix) and base in schema:
                    name, action = base, act
                    break
            else:
                raise SchemaError(f"line {rule.line}: undeclared relation {name}")
        decl = schema[name]
        if action is not None and decl.section is not None:
            if _SECTION_FOR_ACTION[action] is not decl.section:
                raise SchemaError(
                    f"line {rule.line}: {action.value} rule for {name} "
                    f"which is declared in @{decl.section.value}"
                )
        head = Atom(name, rule.head.terms)
        r = Rule(head, rule.body, rule.aggregate, action, rule.line)
        if r.head_arity != decl.arity:
            raise SchemaError(
                f"line {rule.line}: head {name} has arity {r.head_arity}, declared {decl.arity}"
            )
        for a in r.atoms():
            if a.relation not in schema:
                raise SchemaError(f"line {rule.line}: undeclared relation {a.relation}")
            if a.arity != schema[a.relation].arity:
                raise SchemaError(
                    f"line {rule.line}: {a.relation} used with arity {a.arity}, "
                    f"declared {schema[a.relation].arity}"
                )
        resolved.append(r)
    return Program(tuple(schema.values()), tuple(resolved))


def parse_program(text: str, schema: Iterable[RelationDecl] = ()) -> Program:
    """Parse program text; `schema` supplies extra declarations."""
    decls, rules = _Parser(text).program()
    return resolve(list(schema) + decls, rules)


def parse_rule(text: str) -> Rule:
    """Parse a single rule without schema resolution (for building programs in code)."""
    p = _Parser(text)
    r = p.rule()
    if p.tok.kind != "eof":
        raise p.error("trailing input after rule")
    return r


def parse_facts(text: str, schema: dict[str, RelationDecl] | None = None) -> Instance:
    """Parse a fact file: one ground atom per line, e.g. `R(a, 2).`"""
    p = _Parser(text)
    facts = []
    while p.tok.kind != "eof":
        start = p.tok
        name = p.ident().text
        p.expect("(")
        values = []
        while not p.at(")"):
            if values:
                p.expect(",")
            tok = p.tok
            if tok.kind == "int":
                values.append(int(p.advance().text))
            elif tok.text == "-" and p.peek().kind == "int":
                p.advance()
                values.append(-int(p.advance().text))
            elif tok.kind == "string":
                values.append(_unquote(p.advance().text))
            elif tok.kind == "ident":
                values.append(p.advance().text)
            else:
                raise p.error("expected constant")
        p.expect(")")
        p.expect(".")
        if schema is not None:
            if name not in schema:
                raise SchemaError(f"line {start.line}: unknown relation {name}")
            if schema[name].arity != len(values):
                raise SchemaError(
                    f"line {start.line}: {name} has arity {schema[name].arity}, got {len(values)}"
                )
        facts.append(Fact(name, tuple(values)))
    return Instance.from_facts(facts)
