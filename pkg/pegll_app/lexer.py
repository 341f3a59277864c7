"""
Token layer: compile token regular expressions into one combined Thompson
automaton and answer `tokens(i)`, the map of every token that matches at a
position to its greatest right extent.

Skip tokens (whitespace, comments) are consumed inside `tokens(i)` before
matching, so the engine never observes skip positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging

from django.core.exceptions import ValidationError

logger = logging.getLogger(__name__)

END_TOKEN = "$"

META_CHARS = set("\\|*+?()[].")
ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "f": "\f", "v": "\v", "0": "\0"}


class PatternError(ValidationError):
    """
    A token pattern failed to compile (regex syntax, empty match, duplicate name).
    """

    def __init__(self, message: str, code: str = "regex-syntax", token: str | None = None):
        super().__init__(message, code=code)
        self.token = token


@dataclass(frozen=True)
class TokenDef:
    name: str
    pattern: str
    is_skip: bool = False
    is_literal: bool = False
    line: int = field(default=0, compare=False)
    column: int = field(default=0, compare=False)


# =========================
#  CHARACTER CLASSES
# =========================

@dataclass(frozen=True)
class CharSet:
    ranges: tuple[tuple[int, int], ...]
    negated: bool = False

    @classmethod
    def single(cls, ch: str) -> "CharSet":
        return cls(((ord(ch), ord(ch)),))

    def matches(self, ch: str) -> bool:
        code = ord(ch)
        hit = any(lo <= code <= hi for lo, hi in self.ranges)
        return hit != self.negated


DIGIT = ((ord("0"), ord("9")),)
WORD = ((ord("0"), ord("9")), (ord("A"), ord("Z")), (ord("_"), ord("_")), (ord("a"), ord("z")))
SPACE = tuple((ord(c), ord(c)) for c in " \t\n\r\f\v")
SHORTHANDS = {
    "d": CharSet(DIGIT),
    "D": CharSet(DIGIT, negated=True),
    "w": CharSet(WORD),
    "W": CharSet(WORD, negated=True),
    "s": CharSet(SPACE),
    "S": CharSet(SPACE, negated=True),
}
ANY_BUT_NEWLINE = CharSet(((ord("\n"), ord("\n")),), negated=True)


# =========================
#  THOMPSON CONSTRUCTION
# =========================

class Automaton:
    """
    Nondeterministic automaton; states are dense ints, accept labels are token names.
    """

    def __init__(self):
        self.eps: list[list[int]] = []
        self.edges: list[list[tuple[CharSet, int]]] = []
        self.accepts: dict[int, str] = {}
        self.start = self.new_state()
        self._closures: list[frozenset[int]] | None = None

    def new_state(self) -> int:
        self.eps.append([])
        self.edges.append([])
        return len(self.eps) - 1

    def seal(self):
        """Precompute the epsilon closure of every state."""
        closures = []
        for state in range(len(self.eps)):
            seen = {state}
            stack = [state]
            while stack:
                for nxt in self.eps[stack.pop()]:
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            closures.append(frozenset(seen))
        self._closures = closures

    def closure(self, states) -> frozenset[int]:
        out = set()
        for state in states:
            out |= self._closures[state]
        return frozenset(out)

    def longest_matches(self, text: str, pos: int) -> dict[str, int]:
        """
        Greatest right extent per accept label, in one left-to-right scan from pos.
        """
        best: dict[str, int] = {}
        current = self.closure((self.start,))
        i = pos
        while current and i < len(text):
            ch = text[i]
            step = set()
            for state in current:
                for charset, target in self.edges[state]:
                    if charset.matches(ch):
                        step.add(target)
            current = self.closure(step)
            i += 1
            for state in current:
                name = self.accepts.get(state)
                if name is not None:
                    best[name] = i
        return best


class _PatternParser:
    """
    Recursive-descent parser for the supported regex subset, emitting
    Thompson fragments (start, end) into an Automaton.
    """

    def __init__(self, automaton: Automaton, token: str, pattern: str):
        self.nfa = automaton
        self.token = token
        self.src = pattern
        self.pos = 0

    def fail(self, message: str):
        raise PatternError(
            f"token {self.token}: {message} at offset {self.pos} in /{self.src}/",
            code="regex-syntax",
            token=self.token,
        )

    def peek(self) -> str | None:
        return self.src[self.pos] if self.pos < len(self.src) else None

    def take(self) -> str:
        ch = self.src[self.pos]
        self.pos += 1
        return ch

    def parse(self) -> tuple[int, int]:
        frag = self.alternation()
        if self.pos < len(self.src):
            self.fail("unbalanced ')'")
        return frag

    def alternation(self) -> tuple[int, int]:
        branches = [self.concatenation()]
        while self.peek() == "|":
            self.take()
            branches.append(self.concatenation())
        if len(branches) == 1:
            return branches[0]
        start, end = self.nfa.new_state(), self.nfa.new_state()
        for b_start, b_end in branches:
            self.nfa.eps[start].append(b_start)
            self.nfa.eps[b_end].append(end)
        return start, end

    def concatenation(self) -> tuple[int, int]:
        start = end = self.nfa.new_state()
        while self.peek() not in (None, "|", ")"):
            f_start, f_end = self.repetition()
            self.nfa.eps[end].append(f_start)
            end = f_end
        return start, end

    def repetition(self) -> tuple[int, int]:
        if self.peek() in ("*", "+", "?"):
            self.fail("nothing to repeat")
        a_start, a_end = self.atom()
        op = self.peek()
        if op not in ("*", "+", "?"):
            return a_start, a_end
        self.take()
        if self.peek() in ("*", "+", "?"):
            self.fail("multiple repeat")
        start, end = self.nfa.new_state(), self.nfa.new_state()
        self.nfa.eps[start].append(a_start)
        self.nfa.eps[a_end].append(end)
        if op in ("*", "?"):
            self.nfa.eps[start].append(end)
        if op in ("*", "+"):
            self.nfa.eps[a_end].append(a_start)
        return start, end

    def atom(self) -> tuple[int, int]:
        ch = self.take()
        if ch == "(":
            frag = self.alternation()
            if self.peek() != ")":
                self.fail("missing ')'")
            self.take()
            return frag
        if ch == "[":
            return self.edge(self.char_class())
        if ch == ".":
            return self.edge(ANY_BUT_NEWLINE)
        if ch == "\\":
            return self.edge(self.escape())
        return self.edge(CharSet.single(ch))

    def edge(self, charset: CharSet) -> tuple[int, int]:
        start, end = self.nfa.new_state(), self.nfa.new_state()
        self.nfa.edges[start].append((charset, end))
        return start, end

    def escape(self) -> CharSet:
        if self.peek() is None:
            self.fail("trailing backslash")
        ch = self.take()
        if ch in SHORTHANDS:
            return SHORTHANDS[ch]
        return CharSet.single(ESCAPES.get(ch, ch))

    def class_char(self) -> str:
        ch = self.take()
        if ch != "\\":
            return ch
        if self.peek() is None:
            self.fail("trailing backslash")
        esc = self.take()
        return ESCAPES.get(esc, esc)

    def char_class(self) -> CharSet:
        negated = False
        if self.peek() == "^":
            self.take()
            negated = True
        ranges: list[tuple[int, int]] = []
        first = True
        while True:
            ch = self.peek()
            if ch is None:
                self.fail("unterminated character class")
            if ch == "]" and not first:
                self.take()
                break
            first = False
            if ch == "\\" and self.pos + 1 < len(self.src) and self.src[self.pos + 1] in SHORTHANDS:
                self.take()
                short = SHORTHANDS[self.take()]
                if short.negated:
                    self.fail("negated shorthand inside a character class")
                ranges.extend(short.ranges)
                continue
            lo = self.class_char()
            if self.peek() == "-" and self.pos + 1 < len(self.src) and self.src[self.pos + 1] != "]":
                self.take()
                hi = self.class_char()
                if ord(hi) < ord(lo):
                    self.fail(f"bad range {lo}-{hi}")
                ranges.append((ord(lo), ord(hi)))
            else:
                ranges.append((ord(lo), ord(lo)))
        return CharSet(tuple(ranges), negated)


def _literal_fragment(nfa: Automaton, text: str) -> tuple[int, int]:
    start = end = nfa.new_state()
    for ch in text:
        nxt = nfa.new_state()
        nfa.edges[end].append((CharSet.single(ch), nxt))
        end = nxt
    return start, end


def _accepts_empty(nfa: Automaton, start: int, end: int) -> bool:
    seen = {start}
    stack = [start]
    while stack:
        state = stack.pop()
        if state == end:
            return True
        for nxt in nfa.eps[state]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return False


# =========================
#  LEX TABLE
# =========================

@dataclass(frozen=True)
class LexTable:
    defs: tuple[TokenDef, ...]
    tokens: Automaton = field(compare=False)
    skip: Automaton = field(compare=False)

    @property
    def token_names(self) -> list[str]:
        return [d.name for d in self.defs if not d.is_skip]

    @property
    def skip_names(self) -> list[str]:
        return [d.name for d in self.defs if d.is_skip]


def compile_tokens(defs) -> LexTable:
    """
    Build one combined automaton for the matchable tokens and one for skips.

    Raises PatternError on regex syntax errors, empty-matching patterns and
    duplicate token names.
    """
    defs = tuple(defs)
    tokens, skip = Automaton(), Automaton()
    seen = set()
    for tdef in defs:
        if tdef.name in seen:
            raise PatternError(f"duplicate token {tdef.name}", code="duplicate-token", token=tdef.name)
        if tdef.name == END_TOKEN:
            raise PatternError(f"token name {END_TOKEN} is reserved", code="duplicate-token", token=tdef.name)
        seen.add(tdef.name)

        nfa = skip if tdef.is_skip else tokens
        if tdef.is_literal:
            start, end = _literal_fragment(nfa, tdef.pattern)
        else:
            start, end = _PatternParser(nfa, tdef.name, tdef.pattern).parse()
        if _accepts_empty(nfa, start, end):
            raise PatternError(
                f"token {tdef.name}: pattern accepts empty string",
                code="empty-match",
                token=tdef.name,
            )
        nfa.eps[nfa.start].append(start)
        nfa.accepts[end] = tdef.name

    tokens.seal()
    skip.seal()
    logger.debug(
        "compiled token table",
        extra={"tokens": len(tokens.accepts), "skips": len(skip.accepts), "states": len(tokens.eps)},
    )
    return LexTable(defs=defs, tokens=tokens, skip=skip)


@dataclass(frozen=True)
class TokenMap:
    """
    All tokens matching at `base` mapped to their greatest right extent.
    """

    base: int
    entries: dict[str, int]

    def get(self, name: str, default=None):
        return self.entries.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def items(self):
        return sorted(self.entries.items())


class TokenScanner:
    """
    Per-parse view of an input through a LexTable; `tokens(i)` is memoized.
    """

    def __init__(self, table: LexTable, text: str, memoize: bool = True):
        self.table = table
        self.text = text
        self.memoize = memoize
        self._memo: dict[int, TokenMap] = {}

    def skip_from(self, i: int) -> int:
        """Consume maximal skip matches from i until none applies."""
        while i < len(self.text):
            ends = self.table.skip.longest_matches(self.text, i)
            if not ends:
                break
            i = max(ends.values())
        return i

    def tokens(self, i: int) -> TokenMap:
        if not 0 <= i <= len(self.text):
            raise IndexError(f"position {i} outside input of length {len(self.text)}")
        cached = self._memo.get(i)
        if cached is not None:
            return cached
        base = self.skip_from(i)
        entries = self.table.tokens.longest_matches(self.text, base)
        if base == len(self.text):
            entries[END_TOKEN] = len(self.text)
        result = TokenMap(base=base, entries=entries)
        if self.memoize:
            self._memo[i] = result
        return result


def tokens(table: LexTable, text: str, i: int) -> TokenMap:
    """Unmemoized convenience form of TokenScanner.tokens."""
    return TokenScanner(table, text, memoize=False).tokens(i)
