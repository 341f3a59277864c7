"""
Reference interpreter used to cross-check the engine.

Every expression evaluates to a set of extents plus a failed flag. For
grammars without unordered choice this is ordinary PEG semantics (at most
one extent, failed iff no extent); unordered choice keeps every extent.
"""

from __future__ import annotations

from dataclasses import dataclass
import logging

from .forest import LOOKAHEAD_AND, LOOKAHEAD_NOT, ParseTree
from .grammar import (
    And,
    Empty,
    Expr,
    Fail,
    Grammar,
    Group,
    Literal,
    Nonterminal,
    Not,
    Ordered,
    Seq,
    Unordered,
    alternatives,
)
from .lexer import LexTable, TokenScanner

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvalResult:
    extents: frozenset[int]
    failed: bool

    @property
    def matched(self) -> bool:
        return bool(self.extents)


NO_RESULT = EvalResult(frozenset(), True)


class Oracle:
    def __init__(self, grammar: Grammar, lex: LexTable, text: str):
        self.grammar = grammar
        self.text = text
        self.scanner = TokenScanner(lex, text)
        self.memo: dict[tuple[Expr, int], EvalResult] = {}
        self.evaluations = 0

    def eval(self, expr: Expr, pos: int) -> EvalResult:
        key = (expr, pos)
        cached = self.memo.get(key)
        if cached is None:
            self.evaluations += 1
            cached = self.memo[key] = self._eval(expr, pos)
        return cached

    def eval_nonterminal(self, name: str, pos: int) -> EvalResult:
        return self.eval(self.grammar.rules[name], pos)

    def _eval(self, expr: Expr, pos: int) -> EvalResult:
        if isinstance(expr, Literal):
            r = self.scanner.tokens(pos).get(expr.name)
            return NO_RESULT if r is None else EvalResult(frozenset((r,)), False)
        if isinstance(expr, Empty):
            return EvalResult(frozenset((pos,)), False)
        if isinstance(expr, Fail):
            return NO_RESULT
        if isinstance(expr, Nonterminal):
            return self.eval_nonterminal(expr.name, pos)
        if isinstance(expr, Group):
            return self.eval(expr.body, pos)
        if isinstance(expr, Seq):
            return self._sequence(expr.items, pos)
        if isinstance(expr, Ordered):
            return self._ordered(expr.alts, pos)
        if isinstance(expr, Unordered):
            results = [self.eval(alt, pos) for alt in expr.alts]
            return EvalResult(
                frozenset().union(*(r.extents for r in results)),
                all(r.failed for r in results),
            )
        if isinstance(expr, And):
            body = self.eval(expr.body, pos)
            return EvalResult(frozenset((pos,)) if body.extents else frozenset(), body.failed)
        if isinstance(expr, Not):
            body = self.eval(expr.body, pos)
            return EvalResult(frozenset((pos,)) if body.failed else frozenset(), bool(body.extents))
        raise TypeError(f"cannot evaluate {type(expr).__name__}; desugar the grammar first")

    def _sequence(self, items, pos: int) -> EvalResult:
        positions = frozenset((pos,))
        failed = False
        for item in items:
            nxt = set()
            for x in sorted(positions):
                result = self.eval(item, x)
                nxt |= result.extents
                failed = failed or result.failed
            positions = frozenset(nxt)
            if not positions:
                break
        return EvalResult(positions, failed)

    def _ordered(self, alts, pos: int) -> EvalResult:
        extents: set[int] = set()
        for alt in alts:
            result = self.eval(alt, pos)
            extents |= result.extents
            if not result.failed:
                return EvalResult(frozenset(extents), False)
        return EvalResult(frozenset(extents), True)

    # -------------------------
    # Witness derivation
    # -------------------------

    def witness(self, name: str, pos: int = 0) -> ParseTree | None:
        """
        The derivation a committed PEG parser builds for `name` at pos.
        Only meaningful for grammars without unordered choice.
        """
        _, alts = alternatives(self.grammar.rules[name])
        for index, alt in enumerate(alts):
            result = self.eval(alt, pos)
            if not result.extents:
                continue
            children = []
            cur = pos
            for item in alt.items if isinstance(alt, Seq) else (alt,):
                if isinstance(item, Literal):
                    r = self.scanner.tokens(cur).get(item.name)
                    children.append(ParseTree(item.name, cur, r, kind=ParseTree.TOKEN))
                    cur = r
                elif isinstance(item, Nonterminal):
                    child = self.witness(item.name, cur)
                    children.append(child)
                    cur = child.k
                elif isinstance(item, And):
                    children.append(ParseTree(item.body.name, cur, cur, kind=LOOKAHEAD_AND))
                elif isinstance(item, Not):
                    children.append(ParseTree(item.body.name, cur, cur, kind=LOOKAHEAD_NOT))
            return ParseTree(name, pos, cur, alternate=index, children=tuple(children))
        return None


def evaluate(grammar: Grammar, lex: LexTable, text: str, expr: Expr | None = None, pos: int = 0) -> EvalResult:
    """Evaluate expr (default: the start symbol) at pos."""
    oracle = Oracle(grammar, lex, text)
    if expr is None:
        expr = Nonterminal(grammar.start)
    result = oracle.eval(expr, pos)
    logger.debug("oracle evaluated", extra={"evaluations": oracle.evaluations, "extents": sorted(result.extents)})
    return result
