"""
Read a BSR set back as parse trees.

An element (X : α θ . β, i, j, k) says θ spans j..k and α spans i..j. An
element whose slot has a lookahead before the dot ends at its pivot j, since
lookaheads consume nothing.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
import logging

from .conf import pegll_setting
from .engine import BsrElement, ParseResult
from .grammar import AtomKind, SlotKind, SlotTable

logger = logging.getLogger(__name__)

LOOKAHEAD_AND = "and"
LOOKAHEAD_NOT = "not"


@dataclass(frozen=True)
class ParseTree:
    NONTERMINAL = "nt"
    TOKEN = "token"

    symbol: str
    i: int
    k: int
    alternate: int | None = None
    children: tuple["ParseTree", ...] = ()
    kind: str = "nt"

    @property
    def is_lookahead(self) -> bool:
        return self.kind in (LOOKAHEAD_AND, LOOKAHEAD_NOT)

    def leaves(self) -> list["ParseTree"]:
        if self.kind == self.TOKEN:
            return [self]
        return [leaf for child in self.children for leaf in child.leaves()]

    def __str__(self):
        if self.kind == self.TOKEN:
            return self.symbol
        if self.kind == LOOKAHEAD_AND:
            return "&" + self.symbol
        if self.kind == LOOKAHEAD_NOT:
            return "!" + self.symbol
        if not self.children:
            return f"{self.symbol}()"
        return f"{self.symbol}({', '.join(str(c) for c in self.children)})"


@dataclass(frozen=True)
class TreeSet:
    trees: tuple[ParseTree, ...]
    truncated: bool

    def __len__(self):
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)


class Forest:
    """
    Indexes over a BSR set, built once per ParseResult.
    """

    def __init__(self, bsr, table: SlotTable):
        self.bsr = frozenset(bsr)
        self.table = table
        self.by_end: dict[tuple[int, int, int], list[BsrElement]] = defaultdict(list)
        self.complete: dict[tuple[str, int, int], list[BsrElement]] = defaultdict(list)
        self.by_before: dict[tuple[str, int, int], list[BsrElement]] = defaultdict(list)
        self.by_start: dict[tuple[int, int, int], list[BsrElement]] = defaultdict(list)

        for e in sorted(self.bsr):
            slot = table[e.slot]
            self.by_end[(e.slot, e.i, self.end(e))].append(e)
            self.by_start[(e.slot, e.i, e.j)].append(e)
            if slot.is_complete:
                self.complete[(slot.nonterminal, e.i, self.end(e))].append(e)
            before = slot.before
            if before is not None and before.kind in (AtomKind.CALL, AtomKind.AND):
                self.by_before[(before.name, e.j, e.k)].append(e)

    @classmethod
    def of(cls, result: ParseResult) -> "Forest":
        return cls(result.bsr, result.table)

    def end(self, e: BsrElement) -> int:
        return e.j if self.table[e.slot].lookahead_before else e.k

    # -------------------------
    # Relations
    # -------------------------

    def complete_matches(self, nonterminal: str, i: int) -> set[int]:
        return {k for (nt, start, k) in self.complete if nt == nonterminal and start == i}

    def predecessors(self, e: BsrElement) -> set[BsrElement]:
        slot = self.table[e.slot]
        if slot.kind != SlotKind.SEQUENCE or slot.dot <= 1:
            return set()
        return set(self.by_end.get((e.slot - 1, e.i, e.j), ()))

    def successors(self, e: BsrElement) -> set[BsrElement]:
        slot = self.table[e.slot]
        if slot.kind != SlotKind.SEQUENCE or slot.dot >= len(slot.atoms):
            return set()
        return set(self.by_start.get((e.slot + 1, e.i, self.end(e)), ()))

    def children(self, e: BsrElement) -> set[BsrElement]:
        before = self.table[e.slot].before
        if before is None or before.kind not in (AtomKind.CALL, AtomKind.AND):
            return set()
        return set(self.complete.get((before.name, e.j, e.k), ()))

    def parents(self, e: BsrElement) -> set[BsrElement]:
        slot = self.table[e.slot]
        if not slot.is_complete:
            return set()
        return set(self.by_before.get((slot.nonterminal, e.i, self.end(e)), ()))

    # -------------------------
    # Tree extraction
    # -------------------------

    def extract_trees(self, nonterminal: str, i: int, k: int, cap: int | None = None) -> TreeSet:
        """
        Enumerate distinct derivations of nonterminal over i..k, ordered by
        alternate then pivot, at most cap of them.
        """
        if cap is None:
            cap = pegll_setting("TREE_CAP")
        if cap <= 0:
            raise ValueError(f"tree cap must be positive, got {cap}")
        limit = cap + 1
        nt_memo: dict[tuple[str, int, int], list[ParseTree]] = {}
        chain_memo: dict[BsrElement, list[tuple[ParseTree, ...]]] = {}

        def trees(nt: str, start: int, stop: int) -> list[ParseTree]:
            key = (nt, start, stop)
            if key in nt_memo:
                return nt_memo[key]
            out: dict[ParseTree, None] = {}
            elements = sorted(
                self.complete.get(key, ()),
                key=lambda e: (self.table[e.slot].alternate, e.j, e.slot),
            )
            for e in elements:
                alternate = self.table[e.slot].alternate
                for children in chains(e):
                    out[ParseTree(nt, start, stop, alternate=alternate, children=children)] = None
                    if len(out) >= limit:
                        break
                if len(out) >= limit:
                    break
            nt_memo[key] = list(out)
            return nt_memo[key]

        def chains(e: BsrElement) -> list[tuple[ParseTree, ...]]:
            if e in chain_memo:
                return chain_memo[e]
            slot = self.table[e.slot]
            if slot.kind == SlotKind.EMPTY:
                chain_memo[e] = [()]
                return chain_memo[e]
            atom = slot.before
            if atom.kind == AtomKind.TERMINAL:
                options = [ParseTree(atom.name, e.j, e.k, kind=ParseTree.TOKEN)]
            elif atom.kind == AtomKind.CALL:
                options = trees(atom.name, e.j, e.k)
            elif atom.kind == AtomKind.AND:
                options = [ParseTree(atom.name, e.j, e.j, kind=LOOKAHEAD_AND)]
            else:
                options = [ParseTree(atom.name, e.j, e.j, kind=LOOKAHEAD_NOT)]

            if slot.dot == 1:
                prefixes = [()] if e.j == e.i else []
            else:
                prefixes = []
                for pred in sorted(self.predecessors(e), key=lambda p: (p.j, p.k)):
                    prefixes.extend(chains(pred))

            out: dict[tuple[ParseTree, ...], None] = {}
            for prefix in prefixes:
                for child in options:
                    out[prefix + (child,)] = None
                    if len(out) >= limit:
                        break
                if len(out) >= limit:
                    break
            chain_memo[e] = list(out)
            return chain_memo[e]

        found = trees(nonterminal, i, k)
        truncated = len(found) > cap
        if truncated:
            logger.info("tree enumeration truncated", extra={"nonterminal": nonterminal, "cap": cap})
        return TreeSet(tuple(found[:cap]), truncated)


def complete_matches(result: ParseResult, nonterminal: str, i: int) -> set[int]:
    return Forest.of(result).complete_matches(nonterminal, i)


def extract_trees(result: ParseResult, nonterminal: str | None = None, i: int = 0, k: int | None = None, cap: int | None = None) -> TreeSet:
    """Trees for a completed parse; defaults to the start symbol over its maximal extent."""
    if nonterminal is None:
        nonterminal = result.table.start
    if k is None:
        k = result.max_extent
    if k is None:
        return TreeSet((), False)
    return Forest.of(result).extract_trees(nonterminal, i, k, cap)
