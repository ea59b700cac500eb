"""Regex token library shared by the string DSLs.

Tokens are ordinary RegexV values whose sources denote maximal character
runs, plus the two anchors and a zero-width Empty token. Matching here is
run-based: a token "matches ending at p" when one of its maximal runs ends
at offset p, and similarly for starts. Runs never overlap, so position
sets are small and deterministic.
"""

from ..values import RegexV

__all__ = ["TOKENS", "POSITION_TOKENS", "EMPTY_TOKEN", "token_name",
           "token_runs", "ends_at", "starts_at", "regpos_positions",
           "token_occurs"]


_PUNCT = "-.,;:()[]/\\\"' "

_NAMED = [
    ("Digits", "[0-9]+"),
    ("Letters", "[A-Za-z]+"),
    ("Lowercase", "[a-z]+"),
    ("Uppercase", "[A-Z]+"),
    ("Alphanumeric", "[A-Za-z0-9]+"),
    ("Whitespace", "[ \\t]+"),
    ("StartOfString", "^"),
    ("EndOfString", "$"),
]

_PUNCT_NAMES = {
    "-": "Hyphen", ".": "Dot", ",": "Comma", ";": "Semicolon",
    ":": "Colon", "(": "LParen", ")": "RParen", "[": "LBracket",
    "]": "RBracket", "/": "Slash", "\\": "Backslash",
    "\"": "DoubleQuote", "'": "SingleQuote", " ": "Space",
}


def _punct_source(ch: str) -> str:
    import re
    return re.escape(ch) + "+"


TOKENS = tuple(
    [(name, RegexV(src)) for name, src in _NAMED]
    + [(_PUNCT_NAMES[ch], RegexV(_punct_source(ch))) for ch in _PUNCT]
)

EMPTY_TOKEN = RegexV("")

# Tokens usable in position expressions (anchors included, Empty excluded:
# a zero-width token matches everywhere and adds nothing to positioning).
POSITION_TOKENS = tuple(tok for _, tok in TOKENS)

_NAME_BY_SOURCE = {tok.source: name for name, tok in TOKENS}
_NAME_BY_SOURCE[""] = "Empty"


def token_name(tok: RegexV) -> str:
    return _NAME_BY_SOURCE.get(tok.source, f"/{tok.source}/")


def token_runs(tok: RegexV, s: str) -> list:
    """Maximal runs of the token in s as (start, end) pairs, left to right."""
    src = tok.source
    if src == "^":
        return [(0, 0)]
    if src == "$":
        return [(len(s), len(s))]
    if src == "":
        return [(i, i) for i in range(len(s) + 1)]
    return [(m.start(), m.end()) for m in tok.compiled().finditer(s)
            if m.end() > m.start()]


def ends_at(tok: RegexV, s: str) -> set:
    return {e for _, e in token_runs(tok, s)}


def starts_at(tok: RegexV, s: str) -> set:
    return {b for b, _ in token_runs(tok, s)}


def regpos_positions(s: str, r1: RegexV, r2: RegexV) -> list:
    """Offsets where a run of r1 ends and a run of r2 starts, ascending."""
    return sorted(ends_at(r1, s) & starts_at(r2, s))


def token_occurs(tok: RegexV, s: str) -> bool:
    return bool(token_runs(tok, s))
