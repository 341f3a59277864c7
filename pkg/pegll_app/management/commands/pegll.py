from __future__ import annotations

from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from pegll_app.conf import pegll_setting
from pegll_app.engine import EngineBudgetExceeded, parse
from pegll_app.forest import Forest
from pegll_app.grammar import CompiledGrammar, GrammarError, build_grammar
from pegll_app.oracle import Oracle
from pegll_app.serializers import (
    comparison_to_data,
    diagnostic_to_data,
    dumps,
    grammar_to_data,
    result_to_data,
)

USAGE_ERROR = 2
NO_MATCH = 1


# -------------------------
# Helpers
# -------------------------
def resolve_path(raw: str) -> Path:
    path = Path(raw)
    if path.exists():
        return path
    grammar_dir = pegll_setting("GRAMMAR_DIR")
    if grammar_dir and not path.is_absolute() and (Path(grammar_dir) / path).exists():
        return Path(grammar_dir) / path
    raise CommandError(f"No such file: {raw}", returncode=USAGE_ERROR)


def read_text(path: Path) -> str:
    try:
        return path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CommandError(f"Cannot read {path}: {exc}", returncode=USAGE_ERROR)


def format_extents(extents) -> str:
    return "{" + ", ".join(str(k) for k in sorted(extents)) + "}"


class Command(BaseCommand):
    help = "Check PEGLL grammars, parse inputs with them, or compare the engine against the reference interpreter."

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest="action", required=True)

        check = actions.add_parser("check", help="Validate a grammar and print its analyses and slot table.")
        check.add_argument("grammar", help="Grammar file (.peg).")
        check.add_argument("--json", action="store_true", help="Structured output.")

        for name, text in (
            ("parse", "Run the engine on an input."),
            ("compare", "Run engine and reference interpreter and report agreement."),
        ):
            sub = actions.add_parser(name, help=text)
            sub.add_argument("grammar", help="Grammar file (.peg).")
            sub.add_argument("input", nargs="?", help="Input file.")
            sub.add_argument("-e", "--expr", dest="inline", help="Inline input string instead of a file.")
            sub.add_argument("--full", action="store_true", help="Accept only matches that consume the whole input.")
            sub.add_argument("--json", action="store_true", help="Structured output.")
            if name == "parse":
                sub.add_argument(
                    "--trees",
                    type=int,
                    nargs="?",
                    const=None,
                    default=0,
                    help="Extract up to N parse trees (default cap from settings.PEGLL['TREE_CAP']).",
                )
                sub.add_argument("--bsr", action="store_true", help="Print the BSR set.")
                sub.add_argument("--extents", action="store_true", help="Print every extent, not just the maximum.")
                sub.add_argument("--trace", action="store_true", help="Print the engine trace.")

    def handle(self, *args, **options):
        action = options["action"]
        compiled = self.load_grammar(options["grammar"], as_json=options["json"])
        if action == "check":
            return self.handle_check(compiled, options)
        text = self.load_input(options)
        if action == "parse":
            return self.handle_parse(compiled, text, options)
        return self.handle_compare(compiled, text, options)

    # -------------------------
    # Loading
    # -------------------------
    def load_grammar(self, raw: str, as_json: bool = False) -> CompiledGrammar:
        path = resolve_path(raw)
        try:
            return build_grammar(read_text(path))
        except GrammarError as exc:
            if as_json:
                self.stdout.write(dumps({"diagnostics": [diagnostic_to_data(d) for d in exc.diagnostics]}))
            for diagnostic in exc.diagnostics:
                self.stderr.write(f"{path}:{diagnostic}")
            raise CommandError(f"{path}: grammar rejected", returncode=USAGE_ERROR)

    def load_input(self, options) -> str:
        if options["inline"] is not None and options["input"] is not None:
            raise CommandError("Give either an input file or -e, not both.", returncode=USAGE_ERROR)
        if options["inline"] is not None:
            return options["inline"]
        if options["input"] is None:
            raise CommandError("An input file or -e <string> is required.", returncode=USAGE_ERROR)
        return read_text(resolve_path(options["input"]))

    # -------------------------
    # Actions
    # -------------------------
    def handle_check(self, compiled: CompiledGrammar, options):
        if options["json"]:
            self.stdout.write(dumps(grammar_to_data(compiled)))
            return

        grammar = compiled.grammar
        self.stdout.write(self.style.SUCCESS(f"Grammar OK: {len(grammar.rules)} rules, {len(compiled.table)} slots."))
        self.stdout.write(str(grammar))
        self.stdout.write("")
        self.stdout.write("nullable / first:")
        for name in grammar.rules:
            first = " ".join(sorted(compiled.first[name]))
            self.stdout.write(f"  {name:<24} {'yes' if compiled.nullable[name] else 'no ':<4} {{{first}}}")
        self.stdout.write("")
        self.stdout.write("slots:")
        self.stdout.write(compiled.table.describe())

    def handle_parse(self, compiled: CompiledGrammar, text: str, options):
        cap = options["trees"]
        if cap is None:
            cap = pegll_setting("TREE_CAP")
        elif cap < 0:
            raise CommandError("--trees must be non-negative.", returncode=USAGE_ERROR)

        trace_lines: list[str] = []
        try:
            result = parse(
                compiled.table,
                compiled.lex,
                text,
                trace=trace_lines.append if options["trace"] else None,
            )
        except EngineBudgetExceeded as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)

        full = options["full"]
        accepted = result.full_extents if full else result.extents
        trees = None
        if cap and accepted:
            trees = Forest.of(result).extract_trees(compiled.table.start, 0, max(accepted), cap)

        if options["json"]:
            data = result_to_data(
                result,
                bsr=options["bsr"],
                trees=trees,
                full=full,
                trace=trace_lines if options["trace"] else None,
            )
            self.stdout.write(dumps(data))
        else:
            for line in trace_lines:
                self.stdout.write(line)
            if accepted:
                self.stdout.write(self.style.SUCCESS(f"match 0..{max(accepted)}"))
            else:
                self.stdout.write(self.style.WARNING("no match"))
            if options["extents"]:
                self.stdout.write(f"extents: {format_extents(result.extents)}")
                self.stdout.write(f"full extents: {format_extents(result.full_extents)}")
            if options["bsr"]:
                self.stdout.write("bsr:")
                for e in sorted(result.bsr, key=lambda e: (e.i, e.j, e.k, e.slot)):
                    self.stdout.write(f"  {result.table[e.slot].label} {e.i} {e.j} {e.k}")
            if trees is not None:
                self.stdout.write(f"trees: {len(trees)}{' (truncated)' if trees.truncated else ''}")
                for tree in trees:
                    self.stdout.write(f"  {tree}")

        if not accepted:
            if result.furthest_failure is not None:
                self.stderr.write(f"furthest failure {result.furthest_failure}")
            raise CommandError("no match", returncode=NO_MATCH)

    def handle_compare(self, compiled: CompiledGrammar, text: str, options):
        try:
            result = parse(compiled.table, compiled.lex, text)
        except EngineBudgetExceeded as exc:
            raise CommandError(str(exc), returncode=USAGE_ERROR)
        oracle = Oracle(compiled.grammar, compiled.lex, text)
        expected = oracle.eval_nonterminal(compiled.grammar.start, 0)

        engine_extents = set(result.extents)
        oracle_extents = set(expected.extents)
        if options["full"]:
            engine_extents = set(result.full_extents)
            oracle_extents = {k for k in oracle_extents if oracle.scanner.skip_from(k) == len(text)}
        agree = engine_extents == oracle_extents

        if options["json"]:
            self.stdout.write(dumps(comparison_to_data(engine_extents, oracle_extents, expected.failed, agree)))
        elif agree:
            self.stdout.write(self.style.SUCCESS(f"agree: {format_extents(engine_extents)}"))
        else:
            self.stdout.write(
                self.style.ERROR(
                    f"disagree: engine {format_extents(engine_extents)} oracle {format_extents(oracle_extents)}"
                )
            )
        if not agree:
            raise CommandError("engine and oracle disagree", returncode=NO_MATCH)
