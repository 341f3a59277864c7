import random

from django.conf import settings
from django.test import SimpleTestCase

from pegll_app.grammar import (
    And,
    Empty,
    Fail,
    GrammarError,
    Literal,
    Nonterminal,
    Not,
    Ordered,
    Seq,
    SlotKind,
    SlotVariant,
    Unordered,
    build_grammar,
    check_left_recursion,
    compile_slots,
    compute_first,
    compute_nullable,
    desugar,
    parse_grammar,
)
from pegll_app.oracle import Oracle

from .fuzz import random_grammar, random_input

A, B, C = Literal('"a"'), Literal('"b"'), Literal('"c"')


def desugared(text):
    return desugar(parse_grammar(text))


class ParseGrammarTests(SimpleTestCase):
    def test_ordered_rule(self):
        grammar = parse_grammar('S : "a" S / "b" ;')
        self.assertEqual(grammar.rules["S"], Ordered((Seq((A, Nonterminal("S"))), B)))
        self.assertEqual(grammar.start, "S")

    def test_unordered_rule(self):
        grammar = parse_grammar('S : A | B ; A : "a" ; B : "b" ;')
        self.assertEqual(grammar.rules["S"], Unordered((Nonterminal("A"), Nonterminal("B"))))

    def test_literal_tokens_are_defined(self):
        grammar = parse_grammar('S : "a" "b" / "a" ;')
        literals = [(t.name, t.pattern, t.is_literal) for t in grammar.tokens]
        self.assertEqual(literals, [('"a"', "a", True), ('"b"', "b", True)])

    def test_token_references_and_directives(self):
        grammar = parse_grammar(
            """
            // arithmetic fragment
            skip ws = / +/ ;
            num = /[0-9]+/ ;
            start E ;
            T : num ;
            E : T "+" E / T ;
            """
        )
        self.assertEqual(grammar.start, "E")
        self.assertEqual(grammar.rules["T"], Literal("num"))
        self.assertEqual([t.name for t in grammar.skip], ["ws"])
        self.assertEqual(grammar.skip[0].pattern, " +")

    def test_sugar_and_lookahead_syntax(self):
        grammar = parse_grammar('S : !"a" ("b" | "c")*~ &S? $ eps fail ;')
        body = grammar.rules["S"]
        self.assertIsInstance(body, Seq)
        self.assertEqual([type(x).__name__ for x in body.items], ["Not", "Star", "And", "Literal", "Empty", "Fail"])
        self.assertFalse(body.items[1].greedy)
        self.assertEqual(body.items[3], Literal("$"))

    def test_rendering_round_trips(self):
        grammar = parse_grammar('S : "a" S / &B "b"* ; B : "b"+ | eps ;')
        self.assertEqual(parse_grammar(str(grammar)).rules, grammar.rules)

    def test_sugar_under_choice_round_trips(self):
        grammar = parse_grammar('S : "a" "b" / !"c" / "d"* / &S "e"+ ; T : "x"? | "y" "z" ;')
        self.assertEqual(parse_grammar(str(grammar)).rules, grammar.rules)
        self.assertEqual(str(grammar.rules["T"]), '"x"? | "y" "z"')

    def test_colon_opens_and_semicolon_closes_a_rule(self):
        self.assertEqual(parse_grammar('S : "a" / "b" ;').rules["S"], Ordered((A, B)))
        self.assertRejected('S ; "a" / "b" :', "syntax")

    def test_bundled_grammars_build(self):
        for path in sorted((settings.BASE_DIR / "grammars").glob("*.peg")):
            with self.subTest(grammar=path.name):
                compiled = build_grammar(path.read_text(encoding="utf-8"))
                self.assertGreater(len(compiled.table), 0)

    def assertRejected(self, text, code):
        with self.assertRaises(GrammarError) as cm:
            parse_grammar(text)
        self.assertIn(code, [d.code for d in cm.exception.diagnostics])
        return cm.exception.diagnostics

    def test_mixed_choice(self):
        diagnostics = self.assertRejected('S : "a" / "b" | "c" ;', "mixed-choice")
        self.assertIn("mixed choice operators", diagnostics[0].message)

    def test_semantic_errors(self):
        cases = [
            ('S : A ;', "unknown-nonterminal"),
            ('S : "a" ; S : "b" ;', "duplicate-rule"),
            ('t = /a/ ; t = /b/ ; S : t ;', "duplicate-token"),
            ('S = /s/ ; S : "a" ;', "name-clash"),
            ('start T ; S : "a" ;', "unknown-start"),
            ('skip ws = / / ; S : ws ;', "skip-reference"),
        ]
        for text, code in cases:
            with self.subTest(code=code):
                self.assertRejected(text, code)

    def test_syntax_error_location(self):
        diagnostics = self.assertRejected('S : "a" ;\nT "b" ;', "syntax")
        self.assertEqual(diagnostics[0].line, 2)

    def test_missing_semicolon(self):
        self.assertRejected('S : "a" "b"\nT : "c" ;', "syntax")

    def test_fresh_separator_is_not_an_identifier(self):
        self.assertRejected('A#x : "a" ;', "syntax")

    def test_empty_grammar(self):
        self.assertRejected("// nothing\n", "syntax")


class DesugarTests(SimpleTestCase):
    def test_star(self):
        grammar = desugared('A : "x"* ;')
        X = Literal('"x"')
        self.assertEqual(grammar.rules["A"], Nonterminal("A#star1"))
        self.assertEqual(grammar.rules["A#star1"], Ordered((Seq((X, Nonterminal("A#star1"))), Empty())))

    def test_optional(self):
        grammar = desugared('A : "x"? ;')
        self.assertEqual(grammar.rules["A"], Nonterminal("A#opt1"))
        self.assertEqual(grammar.rules["A#opt1"], Ordered((Literal('"x"'), Empty())))

    def test_plus(self):
        grammar = desugared('A : "x"+ ;')
        X = Literal('"x"')
        self.assertEqual(grammar.rules["A"], Nonterminal("A#plus1"))
        self.assertEqual(grammar.rules["A#plus1"], Seq((X, Nonterminal("A#star2"))))
        self.assertEqual(grammar.rules["A#star2"], Ordered((Seq((X, Nonterminal("A#star2"))), Empty())))

    def test_non_greedy_repetition_is_unordered(self):
        grammar = desugared('A : "x"*~ ;')
        self.assertIsInstance(grammar.rules["A#star1"], Unordered)

    def test_lookahead_body_extraction(self):
        grammar = desugared('A : !("a" "b") "c" ;')
        self.assertEqual(grammar.rules["A"], Seq((Not(Nonterminal("A#look1")), C)))
        self.assertEqual(grammar.rules["A#look1"], Seq((A, B)))

    def test_lookahead_on_nonterminal_is_kept(self):
        grammar = desugared('A : &B "a" ; B : "b" ;')
        self.assertEqual(grammar.rules["A"], Seq((And(Nonterminal("B")), A)))

    def test_group_and_nested_choice(self):
        grammar = desugared('A : ("a" / "b") "c" ;')
        self.assertEqual(grammar.rules["A"], Seq((Nonterminal("A#grp1"), C)))
        self.assertEqual(grammar.rules["A#grp1"], Ordered((A, B)))

    def test_repeated_group_is_spliced(self):
        grammar = desugared('A : ("a" "b")* ;')
        self.assertEqual(grammar.rules["A#star1"], Ordered((Seq((A, B, Nonterminal("A#star1"))), Empty())))

    def test_whole_body_group_is_unwrapped(self):
        self.assertEqual(desugared('A : ("a" | "b") ;').rules["A"], Unordered((A, B)))

    def test_fail_and_eps_inside_sequences(self):
        grammar = desugared('A : "a" fail / "a" eps "b" / fail ;')
        self.assertEqual(
            grammar.rules["A"],
            Ordered((Seq((A, Nonterminal("A#fail1"))), Seq((A, B)), Fail())),
        )
        self.assertEqual(grammar.rules["A#fail1"], Fail())

    def test_fresh_rules_follow_their_owner(self):
        grammar = desugared('A : "a"* "b"? ; B : "c"+ ;')
        self.assertEqual(list(grammar.rules), ["A", "A#star1", "A#opt2", "B", "B#plus1", "B#star2"])

    def test_idempotent(self):
        for text in (
            'A : "x"* ;',
            'A : !("a" "b") "c" / ("a" | "b")+~ ;',
            'S : &(A "c") "a"+ B ; A : "a" A? "b" ; B : "b" B? "c" ;',
            'A : "a" fail / eps ;',
        ):
            with self.subTest(text=text):
                once = desugared(text)
                self.assertEqual(desugar(once), once)


class AnalysisTests(SimpleTestCase):
    def test_nullable(self):
        cases = [
            ("A : eps ;", True),
            ('A : "a" / eps ;', True),
            ('A : "a" ;', False),
            ('A : !B ; B : "b" ;', True),
            ('A : B C ; B : eps ; C : "c"? ;', True),
            ("A : fail ;", False),
        ]
        for text, expected in cases:
            with self.subTest(text=text):
                self.assertEqual(compute_nullable(desugared(text))["A"], expected)

    def test_first(self):
        grammar = desugared('A : "a" / "b" ;')
        self.assertEqual(compute_first(grammar)["A"], {'"a"', '"b"'})
        grammar = desugared('A : !B "c" ; B : "b" ;')
        self.assertEqual(compute_first(grammar)["A"], {'"c"'})
        grammar = desugared('A : B "c" ; B : "b" / eps ;')
        self.assertEqual(compute_first(grammar)["A"], {'"b"', '"c"'})

    def test_left_recursion(self):
        cases = [
            ('S : S "a" / "a" ;', {"S"}),
            ('A : B "a" / "a" ; B : A "b" ;', {"A", "B"}),
            ('A : C A "x" / "y" ; C : eps ;', {"A"}),
            ('A : &A "x" / "y" ;', {"A"}),
        ]
        for text, members in cases:
            with self.subTest(text=text):
                diagnostics = check_left_recursion(desugared(text))
                self.assertEqual(len(diagnostics), 1)
                self.assertEqual(set(diagnostics[0].subjects), members)
                self.assertEqual(diagnostics[0].code, "left-recursion")

    def test_cycle_is_named(self):
        diagnostics = check_left_recursion(desugared('A : B "a" / "a" ; B : A "b" ;'))
        self.assertIn("A -> B -> A", diagnostics[0].message)

    def test_right_recursion_is_accepted(self):
        self.assertEqual(check_left_recursion(desugared('S : "a" S / eps ;')), [])

    def test_nullable_and_first_against_oracle(self):
        rng = random.Random(11)
        for _ in range(100):
            compiled = random_grammar(rng, max_nonterminals=4)
            grammar = compiled.grammar
            empty = Oracle(grammar, compiled.lex, "")
            lookahead_free = not any(
                isinstance(atom, (And, Not))
                for body in grammar.rules.values()
                for alt in getattr(body, "alts", (body,))
                for atom in getattr(alt, "items", (alt,))
            )
            samples = [random_input(rng, max_tokens=5) for _ in range(10)]
            for name in grammar.rules:
                matches_empty = 0 in empty.eval_nonterminal(name, 0).extents
                if matches_empty:
                    self.assertTrue(compiled.nullable[name], (str(grammar), name))
                if lookahead_free:
                    self.assertEqual(compiled.nullable[name], matches_empty, (str(grammar), name))
                for text in samples:
                    extents = Oracle(grammar, compiled.lex, text).eval_nonterminal(name, 0).extents
                    if any(k > 0 for k in extents):
                        self.assertIn(f'"{text[0]}"', compiled.first[name], (str(grammar), name, text))


class CompileSlotsTests(SimpleTestCase):
    def test_ordered_chain(self):
        table = compile_slots(desugared('X : "a" / "b" ;'))
        self.assertEqual(len(table), 5)
        first, after_a, second, after_b, nt_fail = table.slots
        self.assertEqual((first.match_next, first.fail_next), (1, 2))
        self.assertTrue(after_a.is_complete)
        self.assertEqual(second.fail_next, 4)
        self.assertTrue(after_b.is_complete)
        self.assertEqual(nt_fail.kind, SlotKind.NT_FAIL)
        self.assertEqual(table.nt_entry["X"], 0)
        self.assertEqual(first.label, 'X : . "a" (alt0)')
        self.assertEqual(after_b.label, 'X : "b" . (alt1)')

    def test_empty_alternate(self):
        table = compile_slots(desugared("X : eps ;"))
        self.assertEqual([s.kind for s in table.slots], [SlotKind.EMPTY, SlotKind.NT_FAIL])
        self.assertTrue(table[0].nullable)
        self.assertTrue(table[0].is_complete)

    def test_unordered_variants(self):
        table = compile_slots(desugared('X : "a" | "b" ;'))
        fail_a, _, pass_b, _, fail_b, _, nt_fail = table.slots
        self.assertEqual(fail_a.variant, SlotVariant.FAIL)
        self.assertEqual(fail_a.fail_next, fail_b.id)
        self.assertEqual(fail_a.fallthrough, pass_b.id)
        self.assertEqual(pass_b.variant, SlotVariant.PASS)
        self.assertIsNone(pass_b.fail_next)
        self.assertIsNone(pass_b.fallthrough)
        self.assertEqual(pass_b.canonical, fail_b.id)
        self.assertEqual(fail_b.fail_next, nt_fail.id)
        self.assertIsNone(fail_b.fallthrough)

    def test_three_way_unordered_wiring(self):
        table = compile_slots(desugared('X : "a" | "b" | "c" ;'))
        initial = {(s.variant, s.alternate): s for s in table.slots if s.dot == 0 and s.kind == SlotKind.SEQUENCE}
        self.assertEqual(initial[(SlotVariant.PASS, 1)].fail_next, initial[(SlotVariant.PASS, 2)].id)
        self.assertEqual(initial[(SlotVariant.FAIL, 1)].fallthrough, initial[(SlotVariant.PASS, 2)].id)
        self.assertIsNone(initial[(SlotVariant.PASS, 2)].fail_next)

    def test_slot_first_sets(self):
        table = compile_slots(desugared('S : "a" S / "b" ;'))
        self.assertEqual(table[0].first, {'"a"'})
        self.assertEqual(table[1].first, {'"a"', '"b"'})

    def test_failure_chains_move_forward(self):
        table = build_grammar('S : A "x" | B ; A : "a" / "b" / eps ; B : !A "c" | "a"*~ ;').table
        for slot in table.slots:
            with self.subTest(slot=slot.label):
                for target in (slot.fail_next, slot.fallthrough, slot.match_next):
                    self.assertTrue(target is None or target > slot.id)
                    if target is not None:
                        self.assertEqual(table[target].nonterminal, slot.nonterminal)

    def test_rejects_undesugared_lookahead(self):
        with self.assertRaises(GrammarError) as cm:
            compile_slots(parse_grammar('A : !"a" "b" ;'))
        self.assertEqual(cm.exception.diagnostics[0].code, "bad-lookahead")

    def test_rejects_left_recursion(self):
        with self.assertRaises(GrammarError):
            build_grammar('S : S "a" / "a" ;')

    def test_describe(self):
        text = build_grammar('X : "a" | "b" ;').table.describe()
        self.assertIn("[pass]", text)
        self.assertIn("fail->abandon", text)
        self.assertIn("pass->2", text)

    def test_bad_token_pattern_is_a_grammar_error(self):
        with self.assertRaises(GrammarError) as cm:
            build_grammar("t = /a**/ ;\nS : t ;")
        self.assertEqual(cm.exception.diagnostics[0].code, "regex-syntax")
        self.assertEqual(cm.exception.diagnostics[0].line, 1)
