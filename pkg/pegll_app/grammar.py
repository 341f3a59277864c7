"""
Grammar DSL, desugaring, static analyses and slot-table compilation.

    start S ;
    skip ws = / +/ ;
    id = /[a-z]+/ ;
    S : "a" S / "b" ;        // ordered choice
    T : A | B ;              // unordered choice

The pipeline is parse_grammar -> desugar -> check_left_recursion ->
compile_slots; build_grammar runs all of it and compiles the token table.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import json
import logging

import pyparsing as pp
from django.core.exceptions import ValidationError
from django.db import models

from .lexer import END_TOKEN, LexTable, PatternError, TokenDef, compile_tokens

logger = logging.getLogger(__name__)

FRESH_SEPARATOR = "#"


# =========================
#  DIAGNOSTICS
# =========================

@dataclass(frozen=True)
class SourceLocation:
    line: int
    column: int

    def __str__(self):
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class Diagnostic:
    line: int
    column: int
    message: str
    code: str
    subjects: tuple[str, ...] = ()

    @classmethod
    def at(cls, loc: SourceLocation | None, message: str, code: str, subjects=()):
        if loc is None:
            return cls(0, 0, message, code, tuple(subjects))
        return cls(loc.line, loc.column, message, code, tuple(subjects))

    def __str__(self):
        return f"{self.line}:{self.column}: {self.message}"


class GrammarError(ValidationError):
    """
    The grammar was rejected; `diagnostics` lists every problem found.
    """

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__([ValidationError(str(d), code=d.code) for d in self.diagnostics])


# =========================
#  EXPRESSIONS
# =========================

@dataclass(frozen=True)
class Expr:
    loc: SourceLocation | None = field(default=None, compare=False, kw_only=True)


@dataclass(frozen=True)
class Literal(Expr):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Nonterminal(Expr):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Empty(Expr):
    def __str__(self):
        return "eps"


@dataclass(frozen=True)
class Fail(Expr):
    def __str__(self):
        return "fail"


@dataclass(frozen=True)
class Seq(Expr):
    items: tuple[Expr, ...]

    def __str__(self):
        return " ".join(_wrap(x, Seq) for x in self.items)


@dataclass(frozen=True)
class Ordered(Expr):
    alts: tuple[Expr, ...]

    def __str__(self):
        return " / ".join(_wrap(a, Ordered) for a in self.alts)


@dataclass(frozen=True)
class Unordered(Expr):
    alts: tuple[Expr, ...]

    def __str__(self):
        return " | ".join(_wrap(a, Unordered) for a in self.alts)


@dataclass(frozen=True)
class And(Expr):
    body: Expr

    def __str__(self):
        return "&" + _wrap(self.body, And)


@dataclass(frozen=True)
class Not(Expr):
    body: Expr

    def __str__(self):
        return "!" + _wrap(self.body, Not)


@dataclass(frozen=True)
class Opt(Expr):
    body: Expr
    greedy: bool = True

    def __str__(self):
        return _wrap(self.body, Opt) + "?" + ("" if self.greedy else "~")


@dataclass(frozen=True)
class Star(Expr):
    body: Expr
    greedy: bool = True

    def __str__(self):
        return _wrap(self.body, Star) + "*" + ("" if self.greedy else "~")


@dataclass(frozen=True)
class Plus(Expr):
    body: Expr
    greedy: bool = True

    def __str__(self):
        return _wrap(self.body, Plus) + "+" + ("" if self.greedy else "~")


@dataclass(frozen=True)
class Group(Expr):
    body: Expr

    def __str__(self):
        return f"({self.body})"


ATOMS = (Literal, Nonterminal, Empty, Fail, Group)
CHOICES = (Ordered, Unordered)
SUGAR = (Opt, Star, Plus, Group)


def _wrap(expr: Expr, parent: type) -> str:
    if isinstance(expr, ATOMS):
        return str(expr)
    if parent in (Ordered, Unordered) and isinstance(expr, (Seq, And, Not, Opt, Star, Plus)):
        return str(expr)
    if parent is Seq and isinstance(expr, (And, Not, Opt, Star, Plus)):
        return str(expr)
    if parent in (And, Not) and isinstance(expr, (Opt, Star, Plus)):
        return str(expr)
    return f"({expr})"


def alternatives(body: Expr) -> tuple[type, tuple[Expr, ...]]:
    """Top-level choice kind and alternates of a rule body."""
    if isinstance(body, CHOICES):
        return type(body), body.alts
    return Ordered, (body,)


def literal_name(text: str) -> str:
    return json.dumps(text, ensure_ascii=False)


def literal_text(name: str) -> str:
    return json.loads(name)


# =========================
#  GRAMMAR
# =========================

@dataclass(frozen=True)
class Grammar:
    rules: dict[str, Expr]
    start: str
    tokens: tuple[TokenDef, ...] = ()
    skip: tuple[TokenDef, ...] = ()
    rule_locs: dict[str, SourceLocation] = field(default_factory=dict, compare=False)

    @property
    def nonterminals(self) -> list[str]:
        return list(self.rules)

    @property
    def token_defs(self) -> tuple[TokenDef, ...]:
        return self.tokens + self.skip

    def __str__(self):
        lines = []
        for tdef in self.skip:
            lines.append(f"skip {tdef.name} = /{tdef.pattern}/ ;")
        for tdef in self.tokens:
            if not tdef.is_literal:
                lines.append(f"{tdef.name} = /{tdef.pattern}/ ;")
        lines.append(f"start {self.start} ;")
        for name, body in self.rules.items():
            lines.append(f"{name} : {body} ;")
        return "\n".join(lines)


@dataclass(frozen=True)
class _Statement:
    kind: str
    name: str
    value: object
    loc: SourceLocation


def _loc(s: str, loc: int) -> SourceLocation:
    return SourceLocation(pp.lineno(loc, s), pp.col(loc, s))


def _dsl_syntax(mixed: list[Diagnostic]) -> pp.ParserElement:
    LPAR, RPAR, COLON, SEMI, EQ = map(pp.Suppress, "():;=")
    kw_start, kw_skip, kw_eps, kw_fail = (pp.Keyword(w) for w in ("start", "skip", "eps", "fail"))
    ident = ~(kw_start | kw_skip | kw_eps | kw_fail) + pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")
    string = pp.QuotedString('"', esc_char="\\")
    regex = pp.Regex(r"/(?:\\.|[^/\\\n])+/").set_parse_action(lambda t: t[0][1:-1])

    def unit(s, l, t):
        items = list(t)
        prefix = items.pop(0) if isinstance(items[0], str) else None
        expr = items.pop(0)
        if items:
            greedy = len(items) == 1
            expr = {"?": Opt, "*": Star, "+": Plus}[items[0]](expr, greedy, loc=_loc(s, l))
        if prefix is not None:
            expr = (And if prefix == "&" else Not)(expr, loc=_loc(s, l))
        return expr

    def sequence(s, l, t):
        if len(t) == 1:
            return t[0]
        return Seq(tuple(t), loc=_loc(s, l))

    def choice(s, l, t):
        if len(t) == 1:
            return t[0]
        ops = set(t[1::2])
        alts = tuple(t[0::2])
        if len(ops) > 1:
            mixed.append(Diagnostic.at(_loc(s, l), "mixed choice operators '/' and '|'; use parentheses", "mixed-choice"))
        if "|" in ops and len(ops) == 1:
            return Unordered(alts, loc=_loc(s, l))
        return Ordered(alts, loc=_loc(s, l))

    expr = pp.Forward()
    primary = (
        string.copy().set_parse_action(lambda s, l, t: Literal(literal_name(t[0]), loc=_loc(s, l)))
        | pp.Literal(END_TOKEN).set_parse_action(lambda s, l, t: Literal(END_TOKEN, loc=_loc(s, l)))
        | kw_eps.copy().set_parse_action(lambda s, l, t: Empty(loc=_loc(s, l)))
        | kw_fail.copy().set_parse_action(lambda s, l, t: Fail(loc=_loc(s, l)))
        | ident.copy().set_parse_action(lambda s, l, t: Nonterminal(t[0], loc=_loc(s, l)))
        | (LPAR + expr + RPAR).set_parse_action(lambda s, l, t: Group(t[0], loc=_loc(s, l)))
    )
    prefixed = pp.Optional(pp.one_of("& !")) + primary + pp.Optional(pp.one_of("? * +") + pp.Optional("~"))
    seq = pp.OneOrMore(prefixed.set_parse_action(unit)).set_parse_action(sequence)
    expr <<= (seq + pp.ZeroOrMore(pp.one_of("/ |") + seq)).set_parse_action(choice)

    def statement(kind):
        return lambda s, l, t: _Statement(kind, t[0], t[1] if len(t) > 1 else None, _loc(s, l))

    rule = (ident + COLON - (expr + SEMI)).set_parse_action(statement("rule"))
    token_def = (ident + EQ - (regex + SEMI)).set_parse_action(statement("token"))
    skip_def = (kw_skip.suppress() - (ident + EQ + regex + SEMI)).set_parse_action(statement("skip"))
    start_dir = (kw_start.suppress() - (ident + SEMI)).set_parse_action(statement("start"))

    syntax = pp.ZeroOrMore(start_dir | skip_def | token_def | rule)
    syntax.ignore(pp.dbl_slash_comment)
    return syntax


def _map_expr(expr: Expr, fn) -> Expr:
    """Rebuild expr bottom-up, applying fn to every node."""
    if isinstance(expr, Seq):
        expr = Seq(tuple(_map_expr(x, fn) for x in expr.items), loc=expr.loc)
    elif isinstance(expr, CHOICES):
        expr = type(expr)(tuple(_map_expr(a, fn) for a in expr.alts), loc=expr.loc)
    elif isinstance(expr, (Opt, Star, Plus)):
        expr = type(expr)(_map_expr(expr.body, fn), expr.greedy, loc=expr.loc)
    elif isinstance(expr, (And, Not, Group)):
        expr = type(expr)(_map_expr(expr.body, fn), loc=expr.loc)
    return fn(expr)


def walk(expr: Expr):
    yield expr
    if isinstance(expr, Seq):
        for x in expr.items:
            yield from walk(x)
    elif isinstance(expr, CHOICES):
        for a in expr.alts:
            yield from walk(a)
    elif isinstance(expr, (And, Not, Opt, Star, Plus, Group)):
        yield from walk(expr.body)


def parse_grammar(text: str) -> Grammar:
    """
    Parse DSL source into a Grammar; raises GrammarError with every diagnostic.
    """
    diagnostics: list[Diagnostic] = []
    try:
        statements = _dsl_syntax(diagnostics).parse_string(text, parse_all=True)
    except pp.ParseBaseException as exc:
        raise GrammarError([Diagnostic(exc.lineno, exc.col, f"syntax error: {exc.msg}", "syntax")])

    rules: dict[str, Expr] = {}
    rule_locs: dict[str, SourceLocation] = {}
    tokens: dict[str, TokenDef] = {}
    skips: dict[str, TokenDef] = {}
    start = None
    start_loc = None

    for stmt in statements:
        if stmt.kind == "rule":
            if stmt.name in rules:
                diagnostics.append(Diagnostic.at(stmt.loc, f"duplicate rule {stmt.name}", "duplicate-rule", [stmt.name]))
                continue
            rules[stmt.name] = stmt.value
            rule_locs[stmt.name] = stmt.loc
        elif stmt.kind in ("token", "skip"):
            if stmt.name in tokens or stmt.name in skips:
                diagnostics.append(Diagnostic.at(stmt.loc, f"duplicate token {stmt.name}", "duplicate-token", [stmt.name]))
                continue
            tdef = TokenDef(
                stmt.name, stmt.value, is_skip=stmt.kind == "skip", line=stmt.loc.line, column=stmt.loc.column
            )
            (skips if tdef.is_skip else tokens)[stmt.name] = tdef
        elif start is not None:
            diagnostics.append(Diagnostic.at(stmt.loc, "duplicate start directive", "syntax"))
        else:
            start, start_loc = stmt.name, stmt.loc

    for name in rules:
        if name in tokens or name in skips:
            diagnostics.append(
                Diagnostic.at(rule_locs[name], f"{name} is both a token and a nonterminal", "name-clash", [name])
            )

    def resolve(expr):
        if not isinstance(expr, Nonterminal) or expr.name in rules:
            return expr
        if expr.name in tokens:
            return Literal(expr.name, loc=expr.loc)
        if expr.name in skips:
            diagnostics.append(
                Diagnostic.at(expr.loc, f"skip token {expr.name} cannot appear in a rule", "skip-reference", [expr.name])
            )
        else:
            diagnostics.append(
                Diagnostic.at(expr.loc, f"unknown nonterminal {expr.name}", "unknown-nonterminal", [expr.name])
            )
        return expr

    rules = {name: _map_expr(body, resolve) for name, body in rules.items()}

    if not rules:
        diagnostics.append(Diagnostic(1, 1, "grammar defines no rules", "syntax"))
    elif start is None:
        start = next(iter(rules))
    elif start not in rules:
        diagnostics.append(Diagnostic.at(start_loc, f"unknown start symbol {start}", "unknown-start", [start]))

    literals: dict[str, TokenDef] = {}
    for name, body in rules.items():
        for node in walk(body):
            if isinstance(node, Literal) and node.name.startswith('"') and node.name not in literals:
                line, column = (node.loc.line, node.loc.column) if node.loc else (0, 0)
                literals[node.name] = TokenDef(
                    node.name, literal_text(node.name), is_literal=True, line=line, column=column
                )

    if diagnostics:
        raise GrammarError(sorted(diagnostics, key=lambda d: (d.line, d.column)))

    return Grammar(
        rules=rules,
        start=start,
        tokens=tuple(tokens.values()) + tuple(literals.values()),
        skip=tuple(skips.values()),
        rule_locs=rule_locs,
    )


# =========================
#  DESUGARING
# =========================

class _Desugarer:
    """
    Rewrites one rule; every sugar occurrence becomes a fresh nonterminal
    named <owner>#<kind><ordinal>.
    """

    def __init__(self, owner: str, out: dict[str, Expr], locs: dict[str, SourceLocation]):
        self.owner = owner
        self.out = out
        self.locs = locs
        self.ordinal = 0

    def fresh(self, kind: str, loc) -> str:
        self.ordinal += 1
        name = f"{self.owner}{FRESH_SEPARATOR}{kind}{self.ordinal}"
        self.out[name] = None
        if loc is not None:
            self.locs[name] = loc
        return name

    def define(self, kind: str, body: Expr, loc) -> Nonterminal:
        name = self.fresh(kind, loc)
        self.out[name] = self.top(body)
        return Nonterminal(name, loc=loc)

    def top(self, expr: Expr) -> Expr:
        if isinstance(expr, Group):
            return self.top(expr.body)
        if isinstance(expr, CHOICES):
            return type(expr)(tuple(self.alternative(a) for a in expr.alts), loc=expr.loc)
        return self.alternative(expr)

    def alternative(self, expr: Expr) -> Expr:
        if isinstance(expr, (Empty, Fail)):
            return expr
        items = self.atoms(expr)
        if not items:
            return Empty(loc=expr.loc)
        if len(items) == 1:
            return items[0]
        return Seq(tuple(items), loc=expr.loc)

    def operand(self, expr: Expr) -> list[Expr]:
        """Atoms standing for a sugar operand α."""
        if isinstance(expr, Group):
            if isinstance(expr.body, CHOICES):
                return [self.define("grp", expr.body, expr.loc)]
            return self.atoms(expr.body)
        return self.atoms(expr)

    def atoms(self, expr: Expr) -> list[Expr]:
        if isinstance(expr, (Literal, Nonterminal)):
            return [expr]
        if isinstance(expr, Empty):
            return []
        if isinstance(expr, Fail):
            return [self.define("fail", expr, expr.loc)]
        if isinstance(expr, Seq):
            return [atom for item in expr.items for atom in self.atoms(item)]
        if isinstance(expr, (Group, Ordered, Unordered)):
            return [self.define("grp", expr, expr.loc)]
        if isinstance(expr, (And, Not)):
            body = expr.body
            if not isinstance(body, Nonterminal):
                body = self.define("look", body, body.loc)
            return [type(expr)(body, loc=expr.loc)]
        if isinstance(expr, (Opt, Star, Plus)):
            return [self.repetition(expr)]
        raise TypeError(f"unexpected expression {expr!r}")

    def repetition(self, expr: Expr) -> Nonterminal:
        choice = Ordered if expr.greedy else Unordered
        if isinstance(expr, Opt):
            name = self.fresh("opt", expr.loc)
            alpha = self.operand(expr.body)
            self.out[name] = choice((self.alternative(Seq(tuple(alpha))), Empty()), loc=expr.loc)
            return Nonterminal(name, loc=expr.loc)
        if isinstance(expr, Plus):
            plus = self.fresh("plus", expr.loc)
            star = self.fresh("star", expr.loc)
            alpha = self.operand(expr.body)
            self.out[plus] = self.alternative(Seq(tuple(alpha) + (Nonterminal(star),)))
            self.out[star] = choice((Seq(tuple(alpha) + (Nonterminal(star),)), Empty()), loc=expr.loc)
            return Nonterminal(plus, loc=expr.loc)
        star = self.fresh("star", expr.loc)
        alpha = self.operand(expr.body)
        self.out[star] = choice((Seq(tuple(alpha) + (Nonterminal(star),)), Empty()), loc=expr.loc)
        return Nonterminal(star, loc=expr.loc)


def desugar(grammar: Grammar) -> Grammar:
    """
    Replace ?, *, +, groups, nested choices and compound lookahead bodies by
    fresh nonterminals. Idempotent.
    """
    out: dict[str, Expr] = {}
    locs = dict(grammar.rule_locs)
    for name, body in grammar.rules.items():
        out[name] = None
        out[name] = _Desugarer(name, out, locs).top(body)
    return Grammar(rules=out, start=grammar.start, tokens=grammar.tokens, skip=grammar.skip, rule_locs=locs)


def validate_desugared(grammar: Grammar) -> list[Diagnostic]:
    """Report every violation of the post-desugar shape."""
    problems = []
    for name, body in grammar.rules.items():
        loc = grammar.rule_locs.get(name)
        _, alts = alternatives(body)
        for alt in alts:
            if isinstance(alt, (Empty, Fail)):
                continue
            for atom in alt.items if isinstance(alt, Seq) else (alt,):
                if isinstance(atom, (And, Not)):
                    if not isinstance(atom.body, Nonterminal):
                        problems.append(
                            Diagnostic.at(atom.loc or loc, f"lookahead over non-atom {atom.body} in {name}", "bad-lookahead", [name])
                        )
                elif not isinstance(atom, (Literal, Nonterminal)):
                    problems.append(
                        Diagnostic.at(atom.loc or loc, f"{name} is not desugared: {atom}", "not-desugared", [name])
                    )
    return problems


# =========================
#  ANALYSES
# =========================

def expr_nullable(expr: Expr, nullable: dict[str, bool]) -> bool:
    if isinstance(expr, Literal):
        return False
    if isinstance(expr, Nonterminal):
        return nullable.get(expr.name, False)
    if isinstance(expr, Empty):
        return True
    if isinstance(expr, Fail):
        return False
    if isinstance(expr, Seq):
        return all(expr_nullable(x, nullable) for x in expr.items)
    if isinstance(expr, CHOICES):
        return any(expr_nullable(a, nullable) for a in expr.alts)
    if isinstance(expr, (And, Not, Opt, Star)):
        return True
    return expr_nullable(expr.body, nullable)


def compute_nullable(grammar: Grammar) -> dict[str, bool]:
    """Least fixpoint; lookaheads count as nullable."""
    nullable = {name: False for name in grammar.rules}
    changed = True
    while changed:
        changed = False
        for name, body in grammar.rules.items():
            if not nullable[name] and expr_nullable(body, nullable):
                nullable[name] = True
                changed = True
    return nullable


def expr_first(expr: Expr, first: dict[str, frozenset], nullable: dict[str, bool]) -> frozenset[str]:
    if isinstance(expr, Literal):
        return frozenset((expr.name,))
    if isinstance(expr, Nonterminal):
        return first.get(expr.name, frozenset())
    if isinstance(expr, (Empty, Fail, And, Not)):
        return frozenset()
    if isinstance(expr, Seq):
        out = set()
        for item in expr.items:
            out |= expr_first(item, first, nullable)
            if not expr_nullable(item, nullable):
                break
        return frozenset(out)
    if isinstance(expr, CHOICES):
        return frozenset().union(*(expr_first(a, first, nullable) for a in expr.alts))
    return expr_first(expr.body, first, nullable)


def compute_first(grammar: Grammar, nullable: dict[str, bool] | None = None) -> dict[str, frozenset[str]]:
    """
    Least fixpoint of FIRST per nonterminal. Lookahead atoms contribute no
    tokens, which over-approximates the set of inputs a form can start.
    """
    if nullable is None:
        nullable = compute_nullable(grammar)
    first = {name: frozenset() for name in grammar.rules}
    changed = True
    while changed:
        changed = False
        for name, body in grammar.rules.items():
            value = first[name] | expr_first(body, first, nullable)
            if value != first[name]:
                first[name] = value
                changed = True
    return first


def left_calls(expr: Expr, nullable: dict[str, bool]) -> set[str]:
    """Nonterminals expr may invoke without consuming input first."""
    if isinstance(expr, Nonterminal):
        return {expr.name}
    if isinstance(expr, Seq):
        out = set()
        for item in expr.items:
            out |= left_calls(item, nullable)
            if not expr_nullable(item, nullable):
                break
        return out
    if isinstance(expr, CHOICES):
        return set().union(*(left_calls(a, nullable) for a in expr.alts))
    if isinstance(expr, (And, Not, Opt, Star, Plus, Group)):
        return left_calls(expr.body, nullable)
    return set()


def check_left_recursion(grammar: Grammar, nullable: dict[str, bool] | None = None) -> list[Diagnostic]:
    """
    One diagnostic per strongly connected group of nonterminals that can
    re-invoke themselves at the same input position. Empty list = accepted.
    """
    if nullable is None:
        nullable = compute_nullable(grammar)
    calls = {name: left_calls(body, nullable) & set(grammar.rules) for name, body in grammar.rules.items()}

    reach = {}
    for name in grammar.rules:
        seen = set()
        stack = list(calls[name])
        while stack:
            nxt = stack.pop()
            if nxt not in seen:
                seen.add(nxt)
                stack.extend(calls[nxt])
        reach[name] = seen

    diagnostics = []
    reported = set()
    for name in grammar.rules:
        if name in reported or name not in reach[name]:
            continue
        group = [other for other in grammar.rules if other in reach[name] and name in reach[other]]
        reported.update(group)
        cycle = _cycle_through(name, set(group), calls)
        diagnostics.append(
            Diagnostic.at(
                grammar.rule_locs.get(name),
                "left recursion: " + " -> ".join(cycle),
                "left-recursion",
                group,
            )
        )
    if diagnostics:
        logger.info("left recursion rejected", extra={"cycles": [list(d.subjects) for d in diagnostics]})
    return diagnostics


def _cycle_through(start: str, group: set[str], calls: dict[str, set[str]]) -> list[str]:
    """Shortest call path start -> ... -> start inside group."""
    paths = {start: [start]}
    frontier = [start]
    while frontier:
        nxt_frontier = []
        for node in frontier:
            for callee in sorted(calls[node] & group):
                if callee == start:
                    return paths[node] + [start]
                if callee not in paths:
                    paths[callee] = paths[node] + [callee]
                    nxt_frontier.append(callee)
        frontier = nxt_frontier
    return [start, start]


# =========================
#  SLOT TABLE
# =========================

class SlotVariant(models.TextChoices):
    PLAIN = "plain", "Plain"
    FAIL = "fail", "Fail"
    PASS = "pass", "Pass"


class SlotKind(models.TextChoices):
    SEQUENCE = "sequence", "Sequence step"
    EMPTY = "empty", "Empty alternate"
    FAIL_ALT = "fail_alt", "Failure alternate"
    NT_FAIL = "nt_fail", "Synthesized failure"


class AtomKind(models.TextChoices):
    TERMINAL = "terminal", "Terminal"
    CALL = "call", "Nonterminal call"
    AND = "and", "Positive lookahead"
    NOT = "not", "Negative lookahead"


@dataclass(frozen=True)
class Atom:
    kind: str
    name: str

    @property
    def is_lookahead(self) -> bool:
        return self.kind in (AtomKind.AND, AtomKind.NOT)

    def __str__(self):
        if self.kind == AtomKind.AND:
            return "&" + self.name
        if self.kind == AtomKind.NOT:
            return "!" + self.name
        return self.name


@dataclass(frozen=True)
class Slot:
    id: int
    nonterminal: str
    alternate: int
    variant: str
    kind: str
    dot: int
    atoms: tuple[Atom, ...]
    match_next: int | None
    fail_next: int | None
    fallthrough: int | None
    canonical: int
    nullable: bool
    first: frozenset[str]

    @property
    def before(self) -> Atom | None:
        return self.atoms[self.dot - 1] if self.dot > 0 else None

    @property
    def after(self) -> Atom | None:
        return self.atoms[self.dot] if self.dot < len(self.atoms) else None

    @property
    def lookahead_before(self) -> bool:
        before = self.before
        return before is not None and before.is_lookahead

    @property
    def is_complete(self) -> bool:
        """Dot at the end of a matching alternate."""
        return self.kind == SlotKind.EMPTY or (self.kind == SlotKind.SEQUENCE and self.dot == len(self.atoms))

    @property
    def label(self) -> str:
        if self.kind == SlotKind.EMPTY:
            rhs = "eps ."
        elif self.kind in (SlotKind.FAIL_ALT, SlotKind.NT_FAIL):
            rhs = ". fail"
        else:
            parts = [str(a) for a in self.atoms]
            parts.insert(self.dot, ".")
            rhs = " ".join(parts)
        return f"{self.nonterminal} : {rhs} (alt{self.alternate})"

    def __str__(self):
        return self.label


def _atom_of(expr: Expr) -> Atom:
    if isinstance(expr, Literal):
        return Atom(AtomKind.TERMINAL, expr.name)
    if isinstance(expr, Nonterminal):
        return Atom(AtomKind.CALL, expr.name)
    if isinstance(expr, And):
        return Atom(AtomKind.AND, expr.body.name)
    return Atom(AtomKind.NOT, expr.body.name)


def suffix_nullable(atoms, nullable: dict[str, bool]) -> bool:
    for atom in atoms:
        if atom.kind == AtomKind.TERMINAL:
            return False
        if atom.kind == AtomKind.CALL and not nullable[atom.name]:
            return False
    return True


def suffix_first(atoms, first: dict[str, frozenset], nullable: dict[str, bool]) -> frozenset[str]:
    out = set()
    for atom in atoms:
        if atom.kind == AtomKind.TERMINAL:
            out.add(atom.name)
            break
        if atom.kind == AtomKind.CALL:
            out |= first[atom.name]
            if not nullable[atom.name]:
                break
    return frozenset(out)


@dataclass(frozen=True)
class SlotTable:
    slots: tuple[Slot, ...]
    nt_entry: dict[str, int]
    nt_nullable: dict[str, bool]
    nt_first: dict[str, frozenset[str]]
    nt_unordered: dict[str, bool]
    start: str

    def __len__(self):
        return len(self.slots)

    def __getitem__(self, slot_id: int) -> Slot:
        return self.slots[slot_id]

    def describe(self) -> str:
        lines = []
        for slot in self.slots:
            wiring = [f"match->{'end' if slot.match_next is None else slot.match_next}"]
            if slot.kind != SlotKind.NT_FAIL:
                wiring.append(f"fail->{'abandon' if slot.fail_next is None else slot.fail_next}")
            if slot.fallthrough is not None:
                wiring.append(f"pass->{slot.fallthrough}")
            first = ",".join(sorted(slot.first))
            lines.append(
                f"{slot.id:4d}  {slot.label:<40} [{slot.variant}] {' '.join(wiring)}"
                f" nullable={'yes' if slot.nullable else 'no'} first={{{first}}}"
            )
        return "\n".join(lines)


def compile_slots(grammar: Grammar) -> SlotTable:
    """
    Encode every rule as slots: ordered alternates chain their failure paths,
    unordered alternates are duplicated into fail and pass variants, and each
    nonterminal ends with a synthesized failure alternate.
    """
    problems = validate_desugared(grammar)
    if problems:
        raise GrammarError(problems)
    nullable = compute_nullable(grammar)
    problems = check_left_recursion(grammar, nullable)
    if problems:
        raise GrammarError(problems)
    first = compute_first(grammar, nullable)

    slots: list[Slot] = []
    nt_entry: dict[str, int] = {}
    nt_unordered: dict[str, bool] = {}

    for name, body in grammar.rules.items():
        choice, alts = alternatives(body)
        unordered = choice is Unordered and len(alts) > 1
        nt_unordered[name] = unordered

        shapes = []
        for alt in alts:
            if isinstance(alt, Empty):
                shapes.append((SlotKind.EMPTY, ()))
            elif isinstance(alt, Fail):
                shapes.append((SlotKind.FAIL_ALT, ()))
            else:
                items = alt.items if isinstance(alt, Seq) else (alt,)
                shapes.append((SlotKind.SEQUENCE, tuple(_atom_of(x) for x in items)))

        if unordered:
            plan = []
            for index in range(len(alts)):
                plan.append((SlotVariant.FAIL, index))
                if index + 1 < len(alts):
                    plan.append((SlotVariant.PASS, index + 1))
        else:
            plan = [(SlotVariant.PLAIN, index) for index in range(len(alts))]

        ids: dict[tuple[str, int], list[int]] = {}
        next_id = len(slots)
        for variant, index in plan:
            kind, atoms = shapes[index]
            width = len(atoms) + 1 if kind == SlotKind.SEQUENCE else 1
            ids[(variant, index)] = list(range(next_id, next_id + width))
            next_id += width
        nt_fail = next_id
        owner = SlotVariant.FAIL if unordered else SlotVariant.PLAIN

        def initial(variant, index):
            return ids[(variant, index)][0] if (variant, index) in ids else None

        for variant, index in plan:
            kind, atoms = shapes[index]
            last = index + 1 == len(alts)
            if variant == SlotVariant.PASS:
                fail_next = initial(SlotVariant.PASS, index + 1)
                fallthrough = fail_next
            else:
                fail_next = nt_fail if last else initial(variant, index + 1)
                fallthrough = initial(SlotVariant.PASS, index + 1) if variant == SlotVariant.FAIL else None
            for dot, slot_id in enumerate(ids[(variant, index)]):
                suffix = atoms[dot:]
                complete = kind == SlotKind.EMPTY or (kind == SlotKind.SEQUENCE and dot == len(atoms))
                slots.append(
                    Slot(
                        id=slot_id,
                        nonterminal=name,
                        alternate=index,
                        variant=variant,
                        kind=kind,
                        dot=dot,
                        atoms=atoms,
                        match_next=None if complete or kind != SlotKind.SEQUENCE else slot_id + 1,
                        fail_next=fail_next,
                        fallthrough=fallthrough,
                        canonical=ids[(owner, index)][dot],
                        nullable=kind == SlotKind.EMPTY or (kind == SlotKind.SEQUENCE and suffix_nullable(suffix, nullable)),
                        first=suffix_first(suffix, first, nullable) if kind == SlotKind.SEQUENCE else frozenset(),
                    )
                )
        slots.append(
            Slot(
                id=nt_fail,
                nonterminal=name,
                alternate=len(alts),
                variant=owner,
                kind=SlotKind.NT_FAIL,
                dot=0,
                atoms=(),
                match_next=None,
                fail_next=None,
                fallthrough=None,
                canonical=nt_fail,
                nullable=False,
                first=frozenset(),
            )
        )
        nt_entry[name] = initial(*plan[0])

    table = SlotTable(
        slots=tuple(slots),
        nt_entry=nt_entry,
        nt_nullable=nullable,
        nt_first=first,
        nt_unordered=nt_unordered,
        start=grammar.start,
    )
    logger.debug("compiled slot table", extra={"rules": len(grammar.rules), "slots": len(slots)})
    return table


# =========================
#  PIPELINE
# =========================

@dataclass(frozen=True)
class CompiledGrammar:
    source: Grammar
    grammar: Grammar
    table: SlotTable
    lex: LexTable

    @property
    def nullable(self) -> dict[str, bool]:
        return self.table.nt_nullable

    @property
    def first(self) -> dict[str, frozenset[str]]:
        return self.table.nt_first


def compile_lex(grammar: Grammar) -> LexTable:
    try:
        return compile_tokens(grammar.token_defs)
    except PatternError as exc:
        tdef = next((d for d in grammar.token_defs if d.name == exc.token), None)
        line, column = (tdef.line, tdef.column) if tdef else (0, 0)
        raise GrammarError([Diagnostic(line, column, exc.message, exc.code, (exc.token,) if exc.token else ())])


def build_grammar(text: str) -> CompiledGrammar:
    """Parse, desugar, check and compile DSL source."""
    source = parse_grammar(text)
    lex = compile_lex(source)
    grammar = desugar(source)
    table = compile_slots(grammar)
    logger.info(
        "grammar compiled",
        extra={"rules": len(grammar.rules), "slots": len(table), "tokens": len(lex.token_names)},
    )
    return CompiledGrammar(source=source, grammar=grammar, table=table, lex=lex)
