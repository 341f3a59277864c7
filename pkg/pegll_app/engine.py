"""
PEGLL main loop: GLL-style descriptor processing over a compiled SlotTable,
with a call-return forest whose edges carry match and fail labels.

    result = parse(compiled.table, compiled.lex, "aab")
    result.matched, result.extents, result.bsr
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
import logging

from django.db import models

from .conf import pegll_setting
from .grammar import AtomKind, SlotKind, SlotTable
from .lexer import LexTable, TokenMap, TokenScanner

logger = logging.getLogger(__name__)

FAIL = -1
NO_MATCH = -1


class EngineBudgetExceeded(RuntimeError):
    pass


class EdgeLabel(models.TextChoices):
    MATCH = "match", "Match"
    FAIL = "fail", "Fail"


class EdgePolarity(models.TextChoices):
    PROGRESS = "progress", "Progress"
    FAILOVER = "failover", "Failover"


# =========================
#  RESULT TYPES
# =========================

@dataclass(frozen=True, order=True)
class Descriptor:
    slot: int
    c_u: int
    c_i: int


@dataclass(frozen=True, order=True)
class BsrElement:
    slot: int
    i: int
    j: int
    k: int


@dataclass(frozen=True, order=True)
class PoppedEntry:
    nonterminal: str
    j: int
    h: int

    @property
    def failed(self) -> bool:
        return self.h == FAIL


@dataclass(frozen=True)
class CrfEdge:
    slot: int
    i: int
    label: str
    polarity: str


@dataclass(frozen=True)
class FurthestFailure:
    position: int
    expected: tuple[str, ...]

    def __str__(self):
        return f"at {self.position}: expected {', '.join(self.expected) or 'nothing'}"


@dataclass
class ParseStats:
    processed: int = 0
    duplicates: int = 0
    descriptors: int = 0
    crf_nodes: int = 0
    crf_edges: int = 0
    bsr: int = 0
    popped: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ParseResult:
    matched: bool
    extents: frozenset[int]
    max_extent: int | None
    bsr: frozenset[BsrElement]
    full_extents: frozenset[int]
    furthest_failure: FurthestFailure | None
    popped: frozenset[PoppedEntry]
    stats: ParseStats = field(compare=False)
    table: SlotTable = field(compare=False, repr=False)
    text: str = field(compare=False, repr=False, default="")

    @property
    def full_match(self) -> bool:
        return bool(self.full_extents)


# =========================
#  PARSER SESSION
# =========================

class PegllParser:
    """
    One parse session. All state is private to the instance; run() may be
    called once.
    """

    def __init__(self, table: SlotTable, lex: LexTable, text: str, trace=None, max_descriptors=None):
        self.table = table
        self.text = text
        self.scanner = TokenScanner(lex, text)
        self.trace = trace
        self.max_descriptors = max_descriptors

        self.R: deque[Descriptor] = deque()
        self.U: set[Descriptor] = set()
        self.T: set[BsrElement] = set()
        self.crf: dict[tuple[str, int], dict[CrfEdge, None]] = {}
        self.popped: dict[tuple[str, int], dict[int, None]] = {}
        self.done: set[Descriptor] = set()
        self.stats = ParseStats()

        self.furthest = -1
        self.expected: set[str] = set()

    # -------------------------
    # Helpers
    # -------------------------

    def emit(self, line: str):
        if self.trace is not None:
            self.trace(line)

    def add_bsr(self, slot: int, i: int, j: int, k: int):
        element = BsrElement(self.table[slot].canonical, i, j, k)
        if element not in self.T:
            self.T.add(element)
            self.emit(f"bsr + {self.table[element.slot].label} {i} {j} {k}")

    def add_desc(self, slot: int, i: int, h: int):
        desc = Descriptor(slot, i, h)
        if desc in self.U:
            return
        self.U.add(desc)
        self.R.append(desc)

    def claim(self, slot: int, c_u: int, c_i: int) -> bool:
        """Mark an inline continuation as seen; False if already in U."""
        desc = Descriptor(slot, c_u, c_i)
        if desc in self.U:
            return False
        self.U.add(desc)
        return True

    def add_nt(self, nonterminal: str, i: int):
        self.add_desc(self.table.nt_entry[nonterminal], i, i)

    def add_match(self, slot: int, i: int, j: int, h: int):
        self.add_bsr(slot, i, j, h)
        if self.table[slot].lookahead_before:
            self.add_desc(slot, i, j)
        else:
            self.add_desc(slot, i, h)

    def add_fail(self, slot: int, i: int, j: int):
        if self.table[slot].lookahead_before:
            self.add_desc(slot, i, j)
        else:
            self.add_desc(slot, i, i)

    def deliver(self, edge: CrfEdge, j: int, h: int):
        if edge.polarity == EdgePolarity.FAILOVER:
            self.add_fail(edge.slot, edge.i, j)
        elif edge.label == EdgeLabel.MATCH:
            self.add_match(edge.slot, edge.i, j, h)
        else:
            # !Y succeeded: zero-width element keeps the predecessor chain intact
            self.add_bsr(edge.slot, edge.i, j, j)
            self.add_desc(edge.slot, edge.i, j)

    def test_select(self, slot_id: int, t: TokenMap, c_i: int) -> int:
        slot = self.table[slot_id]
        b = NO_MATCH
        if slot.nullable:
            b = c_i
        for token, r in t.entries.items():
            if token in slot.first and r > b:
                b = r
        return b

    def note_failure(self, slot_id: int, t: TokenMap):
        if t.base > self.furthest:
            self.furthest = t.base
            self.expected = set()
        if t.base == self.furthest:
            self.expected |= self.table[slot_id].first

    # -------------------------
    # Call / return
    # -------------------------

    def call(self, l_m: int, l_f: int | None, nonterminal: str, i: int, j: int, negated: bool = False):
        edges = []
        if negated:
            if l_f is not None:
                edges.append(CrfEdge(l_f, i, EdgeLabel.MATCH, EdgePolarity.FAILOVER))
            edges.append(CrfEdge(l_m, i, EdgeLabel.FAIL, EdgePolarity.PROGRESS))
        else:
            edges.append(CrfEdge(l_m, i, EdgeLabel.MATCH, EdgePolarity.PROGRESS))
            if l_f is not None:
                edges.append(CrfEdge(l_f, i, EdgeLabel.FAIL, EdgePolarity.FAILOVER))

        key = (nonterminal, j)
        node = self.crf.get(key)
        if node is None:
            self.crf[key] = {edge: None for edge in edges}
            for edge in edges:
                self.emit(f"crf + ({nonterminal},{j}) -> ({edge.slot},{edge.i}) {edge.label} {edge.polarity}")
            self.add_nt(nonterminal, j)
            return
        for edge in edges:
            if edge in node:
                continue
            node[edge] = None
            self.emit(f"crf + ({nonterminal},{j}) -> ({edge.slot},{edge.i}) {edge.label} {edge.polarity}")
            for h in self.popped.get(key, ()):
                if (h == FAIL) == (edge.label == EdgeLabel.FAIL):
                    self.deliver(edge, j, h)

    def rtn(self, nonterminal: str, j: int, h: int):
        key = (nonterminal, j)
        results = self.popped.setdefault(key, {})
        if h in results:
            return
        results[h] = None
        self.emit(f"pop ({nonterminal},{j}) {'fail' if h == FAIL else h}")
        for edge in list(self.crf.get(key, ())):
            if (h == FAIL) == (edge.label == EdgeLabel.FAIL):
                self.deliver(edge, j, h)

    # -------------------------
    # Main loop
    # -------------------------

    def step_atom(self, slot_id: int, c_u: int, c_i: int, r: int) -> tuple[int, int] | None:
        """
        Execute the atom after the dot. Returns the inline continuation
        (slot, c_i) for terminals, None when the descriptor ends in a call.
        """
        slot = self.table[slot_id]
        atom = slot.after
        if atom.kind == AtomKind.TERMINAL:
            self.add_bsr(slot.match_next, c_u, c_i, r)
            return slot.match_next, r
        self.call(slot.match_next, slot.fail_next, atom.name, c_u, c_i, negated=atom.kind == AtomKind.NOT)
        return None

    def process(self, desc: Descriptor):
        slot_id, c_u, c_i = desc.slot, desc.c_u, desc.c_i
        while True:
            slot = self.table[slot_id]
            self.emit(f"desc {slot_id} {c_u} {c_i} {slot.label} [{slot.variant}]")
            nxt = None

            if slot.kind == SlotKind.NT_FAIL:
                self.rtn(slot.nonterminal, c_u, FAIL)
            elif slot.kind == SlotKind.FAIL_ALT:
                nxt = (slot.fail_next, c_u)
            elif slot.is_complete:
                if slot.kind == SlotKind.EMPTY:
                    self.add_bsr(slot_id, c_u, c_u, c_u)
                self.rtn(slot.nonterminal, c_u, c_i)
                nxt = (slot.fallthrough, c_u)
            else:
                t = self.scanner.tokens(c_i)
                b = self.test_select(slot_id, t, c_i)
                if b == NO_MATCH:
                    self.note_failure(slot_id, t)
                    nxt = (slot.fail_next, c_u)
                else:
                    nxt = self.step_atom(slot_id, c_u, c_i, t.get(slot.after.name, b))

            if nxt is None or nxt[0] is None or not self.claim(nxt[0], c_u, nxt[1]):
                return
            slot_id, c_i = nxt

    def run(self) -> ParseResult:
        start = self.table.start
        self.crf[(start, 0)] = {}
        self.add_nt(start, 0)
        while self.R:
            desc = self.R.popleft()
            if desc in self.done:
                self.stats.duplicates += 1
                continue
            self.done.add(desc)
            self.stats.processed += 1
            if self.max_descriptors is not None and self.stats.processed > self.max_descriptors:
                logger.warning(
                    "descriptor budget exceeded",
                    extra={"budget": self.max_descriptors, "input_length": len(self.text)},
                )
                raise EngineBudgetExceeded(f"more than {self.max_descriptors} descriptors processed")
            self.process(desc)
        return self.result()

    def result(self) -> ParseResult:
        start = self.table.start
        extents = frozenset(h for h in self.popped.get((start, 0), ()) if h != FAIL)
        full = frozenset(k for k in extents if self.scanner.skip_from(k) == len(self.text))

        self.stats.descriptors = len(self.U)
        self.stats.crf_nodes = len(self.crf)
        self.stats.crf_edges = sum(len(edges) for edges in self.crf.values())
        self.stats.bsr = len(self.T)
        popped = frozenset(PoppedEntry(nt, j, h) for (nt, j), hs in self.popped.items() for h in hs)
        self.stats.popped = len(popped)

        failure = None
        if self.furthest >= 0:
            failure = FurthestFailure(self.furthest, tuple(sorted(self.expected)))

        logger.info(
            "parse finished",
            extra={
                "matched": bool(extents),
                "processed": self.stats.processed,
                "descriptors": self.stats.descriptors,
                "bsr": self.stats.bsr,
            },
        )
        return ParseResult(
            matched=bool(extents),
            extents=extents,
            max_extent=max(extents) if extents else None,
            bsr=frozenset(self.T),
            full_extents=full,
            furthest_failure=failure,
            popped=popped,
            stats=self.stats,
            table=self.table,
            text=self.text,
        )


def parse(table: SlotTable, lex: LexTable, text: str, trace=None, max_descriptors=None) -> ParseResult:
    """
    Run the engine on text. `trace` is an optional callable receiving one
    line per descriptor, CRF edge, pop and BSR insertion.
    """
    if max_descriptors is None:
        max_descriptors = pegll_setting("MAX_DESCRIPTORS")
    return PegllParser(table, lex, text, trace=trace, max_descriptors=max_descriptors).run()
