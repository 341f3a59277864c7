import random

from django.test import SimpleTestCase

from pegll_app.lexer import END_TOKEN, PatternError, TokenDef, TokenScanner, compile_tokens, tokens

from .fuzz import ReferencePattern, naive_tokens, random_input, random_nonempty_pattern


class CompileTokensTests(SimpleTestCase):
    def test_single_token_table(self):
        table = compile_tokens([TokenDef("a", "a")])
        self.assertEqual(table.token_names, ["a"])
        self.assertEqual(table.skip_names, [])

    def test_multiple_repeat_is_rejected(self):
        with self.assertRaises(PatternError) as cm:
            compile_tokens([TokenDef("bad", "a**")])
        self.assertEqual(cm.exception.code, "regex-syntax")
        self.assertEqual(cm.exception.token, "bad")

    def test_syntax_errors(self):
        for pattern in ("*a", "(ab", "ab)", "[ab", "a\\", "[b-a]"):
            with self.subTest(pattern=pattern):
                with self.assertRaises(PatternError):
                    compile_tokens([TokenDef("t", pattern)])

    def test_empty_match_is_rejected(self):
        for pattern in ("(x|)", "a*", "b?", "(a|b)*"):
            with self.subTest(pattern=pattern):
                with self.assertRaises(PatternError) as cm:
                    compile_tokens([TokenDef("t", pattern)])
                self.assertEqual(cm.exception.code, "empty-match")
                self.assertIn("pattern accepts empty string", cm.exception.message)

    def test_duplicate_and_reserved_names(self):
        with self.assertRaises(PatternError):
            compile_tokens([TokenDef("a", "a"), TokenDef("a", "b")])
        with self.assertRaises(PatternError):
            compile_tokens([TokenDef(END_TOKEN, "a")])


class TokensTests(SimpleTestCase):
    def test_all_tokens_with_longest_extent(self):
        table = compile_tokens([TokenDef("a", "a"), TokenDef("aa", "aa")])
        result = tokens(table, "aaa", 0)
        self.assertEqual(result.entries, {"a": 1, "aa": 2})
        self.assertEqual(result.base, 0)

    def test_end_of_input(self):
        table = compile_tokens([TokenDef("a", "a"), TokenDef("aa", "aa")])
        self.assertEqual(tokens(table, "aaa", 3).entries, {END_TOKEN: 3})

    def test_skip_prefix(self):
        table = compile_tokens([TokenDef("id", "[a-z]+"), TokenDef("ws", " +", is_skip=True)])
        result = tokens(table, "  ab", 0)
        self.assertEqual(result.base, 2)
        self.assertEqual(result.entries, {"id": 4})

    def test_trailing_skip_reaches_end_token(self):
        table = compile_tokens([TokenDef("id", "[a-z]+"), TokenDef("ws", " +", is_skip=True)])
        result = tokens(table, "ab  ", 2)
        self.assertEqual(result.base, 4)
        self.assertEqual(result.entries, {END_TOKEN: 4})

    def test_literal_tokens_match_verbatim(self):
        table = compile_tokens([TokenDef('"a*"', "a*", is_literal=True)])
        self.assertEqual(tokens(table, "a*a", 0).entries, {'"a*"': 2})
        self.assertEqual(tokens(table, "aa", 0).entries, {})

    def test_escapes_and_shorthands(self):
        table = compile_tokens(
            [TokenDef("num", r"\d+"), TokenDef("word", r"\w+"), TokenDef("tab", r"\t"), TokenDef("dot", r"\.")]
        )
        self.assertEqual(tokens(table, "12a", 0).entries, {"num": 2, "word": 3})
        self.assertEqual(tokens(table, "\t", 0).entries, {"tab": 1})
        self.assertEqual(tokens(table, ".", 0).entries, {"dot": 1})

    def test_out_of_range_position(self):
        table = compile_tokens([TokenDef("a", "a")])
        with self.assertRaises(IndexError):
            tokens(table, "a", 2)

    def test_memoized_equals_unmemoized(self):
        table = compile_tokens([TokenDef("x", "a+b?"), TokenDef("ws", " ", is_skip=True)])
        text = "aab a  ab"
        scanner = TokenScanner(table, text)
        for i in range(len(text) + 1):
            with self.subTest(i=i):
                self.assertEqual(scanner.tokens(i), tokens(table, text, i))
                self.assertIs(scanner.tokens(i), scanner.tokens(i))

    def test_skip_fixpoint(self):
        table = compile_tokens(
            [TokenDef("x", "x"), TokenDef("ws", " +", is_skip=True), TokenDef("comment", "#[^#]*#", is_skip=True)]
        )
        self.assertEqual(TokenScanner(table, "  #c#  # d #x").skip_from(0), 12)


class LexerConformanceTests(SimpleTestCase):
    """
    The automaton agrees with an all-patterns scan by ReferencePattern.
    """

    def test_random_pattern_sets(self):
        rng = random.Random(7)
        mismatches = []
        checked = 0
        for _ in range(500):
            defs = [TokenDef(f"t{n}", random_nonempty_pattern(rng)) for n in range(rng.randint(1, 4))]
            if rng.random() < 0.3:
                defs.append(TokenDef("skip", random_nonempty_pattern(rng, "c"), is_skip=True))
            table = compile_tokens(defs)
            for _ in range(4):
                text = random_input(rng, max_tokens=64)
                scanner = TokenScanner(table, text)
                for _ in range(5):
                    i = rng.randint(0, len(text))
                    got = scanner.tokens(i)
                    base, entries = naive_tokens(defs, text, i)
                    checked += 1
                    if (got.base, got.entries) != (base, entries):
                        mismatches.append((defs, text, i))
        self.assertEqual(checked, 10_000)
        self.assertEqual(mismatches, [])

    def test_reference_end_sets(self):
        self.assertEqual(ReferencePattern("(a|ab)*").ends("abab", 0), {0, 1, 2, 3, 4})
        self.assertEqual(ReferencePattern("[^ac]b?").ends("bb", 0), {1, 2})
        self.assertEqual(ReferencePattern(r"\d+\.").ends("12.", 0), {3})

    def test_nested_repetition_agrees(self):
        pattern = "((.c*|b*a[^ac]*)*)*(([ab]*a?c)+)?b"
        text = "bbccaacbbaaaabbbcbcbacccbbaa"
        defs = [TokenDef("t", pattern)]
        scanner = TokenScanner(compile_tokens(defs), text)
        for i in range(len(text) + 1):
            with self.subTest(i=i):
                got = scanner.tokens(i)
                self.assertEqual((got.base, got.entries), naive_tokens(defs, text, i))
