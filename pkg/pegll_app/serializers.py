"""
Structured output for the pegll command. Field names and ordering are
fixed; every list is sorted so output is byte-stable across runs.
"""

import json

from django.core.serializers.json import DjangoJSONEncoder

from .forest import ParseTree, TreeSet
from .grammar import CompiledGrammar, Diagnostic


# =========================
#  PAYLOADS
# =========================

def diagnostic_to_data(diagnostic: Diagnostic) -> dict:
    return {
        "line": diagnostic.line,
        "column": diagnostic.column,
        "code": diagnostic.code,
        "message": diagnostic.message,
    }


def bsr_to_data(result) -> list[dict]:
    table = result.table
    return [
        {"slot": table[e.slot].label, "i": e.i, "j": e.j, "k": e.k}
        for e in sorted(result.bsr, key=lambda e: (e.i, e.j, e.k, e.slot))
    ]


def tree_to_data(tree: ParseTree) -> dict:
    """
    Every node has the same keys. Tokens and lookaheads are zero-child
    leaves with alt null; a lookahead leaf is labelled "&B" or "!B".
    """
    if tree.kind == ParseTree.TOKEN or tree.is_lookahead:
        head = {"token": str(tree), "alt": None}
    else:
        head = {"nt": tree.symbol, "alt": tree.alternate}
    return {
        **head,
        "i": tree.i,
        "k": tree.k,
        "children": [tree_to_data(child) for child in tree.children],
    }


def result_to_data(
    result,
    bsr: bool = False,
    trees: TreeSet | None = None,
    full: bool = False,
    trace: list[str] | None = None,
) -> dict:
    failure = result.furthest_failure
    data = {
        "matched": result.full_match if full else result.matched,
        "extents": sorted(result.extents),
        "max_extent": result.max_extent,
        "full_extents": sorted(result.full_extents),
        "furthest_failure": None
        if failure is None
        else {"position": failure.position, "expected": list(failure.expected)},
        "stats": result.stats.as_dict(),
    }
    if bsr:
        data["bsr"] = bsr_to_data(result)
    if trees is not None:
        data["trees"] = [tree_to_data(t) for t in trees]
        data["truncated"] = trees.truncated
    if trace is not None:
        data["trace"] = list(trace)
    return data


def grammar_to_data(compiled: CompiledGrammar) -> dict:
    return {
        "start": compiled.grammar.start,
        "rules": {name: str(body) for name, body in compiled.grammar.rules.items()},
        "nullable": {name: compiled.nullable[name] for name in compiled.grammar.rules},
        "first": {name: sorted(compiled.first[name]) for name in compiled.grammar.rules},
        "slots": [
            {
                "id": slot.id,
                "slot": slot.label,
                "variant": slot.variant,
                "match_next": slot.match_next,
                "fail_next": slot.fail_next,
                "fallthrough": slot.fallthrough,
            }
            for slot in compiled.table.slots
        ],
    }


def comparison_to_data(engine: set[int], oracle: set[int], oracle_failed: bool, agree: bool) -> dict:
    return {
        "agree": agree,
        "engine": sorted(engine),
        "oracle": sorted(oracle),
        "oracle_failed": oracle_failed,
    }


def dumps(data) -> str:
    return json.dumps(data, cls=DjangoJSONEncoder, indent=2)


# =========================
#  SCHEMAS
# =========================

_TREE = {
    "type": "object",
    "oneOf": [{"required": ["nt"]}, {"required": ["token"]}],
    "required": ["alt", "i", "k", "children"],
    "properties": {
        "nt": {"type": "string"},
        "token": {"type": "string"},
        "alt": {"type": ["integer", "null"]},
        "i": {"type": "integer", "minimum": 0},
        "k": {"type": "integer", "minimum": 0},
        "children": {"type": "array", "items": {"$ref": "#/$defs/tree"}},
    },
    "additionalProperties": False,
}

PARSE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"tree": _TREE},
    "type": "object",
    "required": ["matched", "extents", "max_extent", "full_extents", "furthest_failure", "stats"],
    "properties": {
        "matched": {"type": "boolean"},
        "extents": {"type": "array", "items": {"type": "integer"}},
        "max_extent": {"type": ["integer", "null"]},
        "full_extents": {"type": "array", "items": {"type": "integer"}},
        "furthest_failure": {
            "type": ["object", "null"],
            "required": ["position", "expected"],
        },
        "stats": {"type": "object", "required": ["processed", "duplicates", "descriptors", "bsr"]},
        "bsr": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["slot", "i", "j", "k"],
                "properties": {
                    "slot": {"type": "string"},
                    "i": {"type": "integer"},
                    "j": {"type": "integer"},
                    "k": {"type": "integer"},
                },
                "additionalProperties": False,
            },
        },
        "trees": {"type": "array", "items": {"$ref": "#/$defs/tree"}},
        "truncated": {"type": "boolean"},
        "trace": {"type": "array", "items": {"type": "string"}},
    },
}

CHECK_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["start", "rules", "nullable", "first", "slots"],
    "properties": {
        "start": {"type": "string"},
        "rules": {"type": "object", "additionalProperties": {"type": "string"}},
        "nullable": {"type": "object", "additionalProperties": {"type": "boolean"}},
        "first": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "string"}}},
        "slots": {"type": "array", "items": {"type": "object", "required": ["id", "slot", "variant"]}},
    },
}

COMPARE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["agree", "engine", "oracle", "oracle_failed"],
    "properties": {
        "agree": {"type": "boolean"},
        "engine": {"type": "array", "items": {"type": "integer"}},
        "oracle": {"type": "array", "items": {"type": "integer"}},
        "oracle_failed": {"type": "boolean"},
    },
}

DIAGNOSTICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["diagnostics"],
    "properties": {
        "diagnostics": {
            "type": "array",
            "items": {"type": "object", "required": ["line", "column", "code", "message"]},
        }
    },
}
