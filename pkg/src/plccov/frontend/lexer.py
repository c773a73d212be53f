from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import SourceLoc
from .errors import ParseError

KEYWORDS = frozenset(
    """
    PROGRAM END_PROGRAM FUNCTION_BLOCK END_FUNCTION_BLOCK FUNCTION END_FUNCTION
    VAR VAR_INPUT VAR_OUTPUT VAR_GLOBAL END_VAR AT ARRAY OF
    ACTION END_ACTION STEP END_STEP INITIAL QUALIFIER TRANSITION END_TRANSITION FROM WHEN
    TASK
    IF THEN ELSIF ELSE END_IF CASE END_CASE FOR TO BY DO END_FOR WHILE END_WHILE
    REPEAT UNTIL END_REPEAT RETURN EXIT
    TRUE FALSE NOT AND OR XOR MOD
    BOOL INT DINT REAL TIME STRING
    """.split()
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\(\*.*?\*\)|//[^\n]*)
  | (?P<badcomment>\(\*)
  | (?P<time>(?:TIME|T)\#[0-9A-Za-z_.]+)
  | (?P<real>\d[\d_]*\.\d[\d_]*(?:[eE][+-]?\d+)?)
  | (?P<int>\d[\d_]*\#[0-9A-Fa-f_]+|\d[\d_]*)
  | (?P<string>'(?:\$.|[^'$\n])*')
  | (?P<direct>%[IQ]\*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>:=|=>|<=|>=|<>|\.\.|[-+*/=<>()\[\],;:.&])
    """,
    re.X | re.S | re.I,
)

_TIME_PART = re.compile(r"(\d+(?:\.\d+)?)(ms|d|h|m|s)", re.I)
_TIME_SCALE = {"d": 86_400_000, "h": 3_600_000, "m": 60_000, "s": 1000, "ms": 1}
_STRING_ESC = {"$'": "'", "$$": "$", "$N": "\n", "$L": "\n", "$T": "\t", "$R": "\r"}


@dataclass(frozen=True)
class Token:
    kind: str  # kw, ident, int, real, time, string, direct, op, eof
    value: object
    text: str
    loc: SourceLoc


def parse_time(text: str, loc: SourceLoc | None = None) -> int:
    """``T#1s500ms`` -> 1500 (milliseconds)."""
    body = text.split("#", 1)[1].replace("_", "")
    total = 0.0
    pos = 0
    for m in _TIME_PART.finditer(body):
        if m.start() != pos:
            break
        total += float(m.group(1)) * _TIME_SCALE[m.group(2).lower()]
        pos = m.end()
    if pos != len(body) or not body:
        raise ParseError(f"malformed duration literal {text!r}", loc)
    return int(round(total))


def _unescape(raw: str, loc: SourceLoc) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "$":
            pair = raw[i : i + 2].upper()
            if pair not in _STRING_ESC:
                raise ParseError(f"bad string escape {raw[i:i+2]!r}", loc)
            out.append(_STRING_ESC[pair])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def tokenize(text: str, path: str) -> list[Token]:
    tokens: list[Token] = []
    line, line_start = 1, 0
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        loc = SourceLoc(path, line, pos - line_start + 1)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", loc)
        kind = m.lastgroup
        tok = m.group()
        if kind == "badcomment":
            raise ParseError("unterminated comment", loc)
        if kind == "ident" and tok.upper() in KEYWORDS:
            tokens.append(Token("kw", tok.upper(), tok, loc))
        elif kind == "ident":
            tokens.append(Token("ident", tok, tok, loc))
        elif kind == "int":
            digits = tok.replace("_", "")
            if "#" in digits:
                base, num = digits.split("#")
                value = int(num, int(base))
            else:
                value = int(digits)
            tokens.append(Token("int", value, tok, loc))
        elif kind == "real":
            tokens.append(Token("real", float(tok.replace("_", "")), tok, loc))
        elif kind == "time":
            tokens.append(Token("time", parse_time(tok, loc), tok, loc))
        elif kind == "string":
            tokens.append(Token("string", _unescape(tok[1:-1], loc), tok, loc))
        elif kind == "direct":
            tokens.append(Token("direct", tok.upper(), tok, loc))
        elif kind == "op":
            tokens.append(Token("op", "AND" if tok == "&" else tok, tok, loc))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + tok.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", None, "", SourceLoc(path, line, pos - line_start + 1)))
    return tokens
