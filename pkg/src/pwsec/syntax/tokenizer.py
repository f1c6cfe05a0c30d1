"""Lossless tokenizer for the PowerShell subset the rule checkers need.

The lexer covers strings (single/double/here), comments, variables with
scope qualifiers, command and parameter tokens, dash operators, numbers
and block punctuation.  Unknown constructs degrade to Identifier or
Punctuation tokens; nothing is ever executed.  Token offsets slice the
source exactly, so concatenating gaps and token texts reconstructs the
input byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, auto

from .source import SourceScript


class TokenKind(Enum):
    LINE_COMMENT = auto()
    BLOCK_COMMENT = auto()
    SINGLE_QUOTE_STRING = auto()
    DOUBLE_QUOTE_STRING = auto()
    HERE_STRING = auto()
    VARIABLE = auto()
    COMMAND_NAME = auto()
    PARAMETER = auto()
    OPERATOR = auto()
    NUMBER = auto()
    PUNCTUATION = auto()
    KEYWORD = auto()
    IDENTIFIER = auto()
    NEWLINE = auto()


COMMENT_KINDS = frozenset({TokenKind.LINE_COMMENT, TokenKind.BLOCK_COMMENT})
STRING_KINDS = frozenset(
    {TokenKind.SINGLE_QUOTE_STRING, TokenKind.DOUBLE_QUOTE_STRING, TokenKind.HERE_STRING}
)

# Keywords are contextual in PowerShell: only recognized in command position.
KEYWORDS = frozenset(
    {
        "begin", "break", "catch", "class", "continue", "data", "do", "dynamicparam",
        "else", "elseif", "end", "enum", "exit", "filter", "finally", "for", "foreach",
        "function", "if", "in", "param", "process", "return", "switch", "throw", "trap",
        "try", "until", "while", "workflow",
    }
)

# Dash-prefixed words that are operators, not parameters.
DASH_OPERATORS = frozenset(
    {
        "eq", "ne", "gt", "ge", "lt", "le", "like", "notlike", "match", "notmatch",
        "contains", "notcontains", "in", "notin", "replace", "creplace", "ireplace",
        "ceq", "cne", "cgt", "cge", "clt", "cle", "ieq", "ine", "igt", "ige", "ilt",
        "ile", "clike", "cnotlike", "ilike", "inotlike", "cmatch", "cnotmatch",
        "imatch", "inotmatch", "ccontains", "cnotcontains", "icontains",
        "inotcontains", "cin", "cnotin", "iin", "inotin", "and", "or", "not", "xor",
        "band", "bor", "bxor", "bnot", "shl", "shr", "is", "isnot", "as", "join",
        "split", "csplit", "isplit", "f",
    }
)

COMPARISON_OPERATORS = frozenset({"-eq", "-ne", "-ceq", "-cne", "-ieq", "-ine"})

SCOPE_QUALIFIERS = frozenset(
    {"global", "local", "script", "private", "using", "env", "variable", "function", "workflow"}
)

_VAR_SPECIALS = "_?^$"
_HORIZONTAL_WS = " \t\r\f\v "
# Characters that terminate a bareword.
_BAREWORD_STOP = set(" \t\r\n\f\v |;,(){}[]$\"'#&`")


def _is_name_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


@dataclass
class Token:
    kind: TokenKind
    text: str
    start: int  # character offset, inclusive
    end: int  # character offset, exclusive
    span: tuple[int, int, int, int]  # start_line, start_col, end_line, end_col
    scope: str | None = None  # Variable scope qualifier ($global:x -> "global")
    name: str | None = None  # Variable/parameter bare name
    flags: set[str] = field(default_factory=set)

    @property
    def lower(self) -> str:
        return self.text.lower()


@dataclass
class LexError:
    message: str
    start: int
    span: tuple[int, int, int, int]


class _Lexer:
    def __init__(self, script: SourceScript):
        self.script = script
        self.src = script.raw
        self.n = len(self.src)
        self.pos = 0
        self.tokens: list[Token] = []
        self.errors: list[LexError] = []
        self.command_start = True
        self.expect_function_name = False

    # -- helpers ---------------------------------------------------------

    def _peek(self, ahead: int = 0) -> str:
        i = self.pos + ahead
        return self.src[i] if i < self.n else ""

    def _span(self, start: int, end: int) -> tuple[int, int, int, int]:
        sl, sc = self.script.locate(start)
        # End column points one past the last character, PSSA-style.
        el, ec = self.script.locate(end - 1) if end > start else (sl, sc)
        return (sl, sc, el, ec + 1) if end > start else (sl, sc, sl, sc)

    _NAME_KEYWORDS = ("function", "filter", "workflow", "configuration")

    def _emit(self, kind: TokenKind, start: int, end: int, **extra) -> Token:
        tok = Token(
            kind=kind,
            text=self.src[start:end],
            start=start,
            end=end,
            span=self._span(start, end),
            **extra,
        )
        self.tokens.append(tok)
        # Only comments may sit between a function keyword and its name.
        if kind not in (TokenKind.LINE_COMMENT, TokenKind.BLOCK_COMMENT) and not (
            kind == TokenKind.KEYWORD and tok.lower in self._NAME_KEYWORDS
        ):
            self.expect_function_name = False
        return tok

    def _error(self, message: str, start: int) -> None:
        self.errors.append(LexError(message, start, self._span(start, min(start + 1, self.n))))

    # -- scanners --------------------------------------------------------

    def run(self) -> None:
        while self.pos < self.n:
            ch = self.src[self.pos]
            if ch == "\n":
                self._emit(TokenKind.NEWLINE, self.pos, self.pos + 1)
                self.pos += 1
                self.command_start = True
                continue
            if ch in _HORIZONTAL_WS:
                self.pos += 1
                continue
            if ch == "`":
                # Backtick-newline joins logical lines; treated as trivia.
                if self._peek(1) == "\n":
                    self.pos += 2
                    continue
                if self._peek(1) == "\r" and self._peek(2) == "\n":
                    self.pos += 3
                    continue
                self._scan_bareword()
                continue
            if ch == "#":
                self._scan_line_comment()
                continue
            if ch == "<" and self._peek(1) == "#":
                self._scan_block_comment()
                continue
            if ch == "'":
                self._scan_single_quote(self.pos)
                continue
            if ch == '"':
                self._scan_double_quote(self.pos)
                continue
            if ch == "@" and self._peek(1) in "'\"" and self._here_string_opens():
                self._scan_here_string()
                continue
            if ch == "$":
                self._scan_dollar()
                continue
            if ch == "@":
                self._scan_at()
                continue
            if ch == "-" and self._peek(1).isalpha():
                self._scan_dash_word()
                continue
            if ch.isdigit() or (ch == "." and self._peek(1).isdigit()):
                self._scan_number_or_bareword()
                continue
            if ch in "%?" and self.command_start:
                # Single-character command aliases (ForEach-Object / Where-Object).
                start = self.pos
                self.pos += 1
                self._emit(TokenKind.COMMAND_NAME, start, self.pos)
                self.command_start = False
                continue
            if ch in "{}()[]|;,&":
                self._scan_structural(ch)
                continue
            if ch in "=+*/%!<>:." or (ch == "-" and not self._peek(1).isalpha()):
                self._scan_operator_punct(ch)
                continue
            self._scan_bareword()

    def _scan_line_comment(self) -> None:
        start = self.pos
        while self.pos < self.n and self.src[self.pos] != "\n":
            self.pos += 1
        self._emit(TokenKind.LINE_COMMENT, start, self.pos)

    def _scan_block_comment(self) -> None:
        start = self.pos
        idx = self.src.find("#>", self.pos + 2)
        if idx == -1:
            self.pos = self.n
            self._emit(TokenKind.BLOCK_COMMENT, start, self.n, flags={"unterminated"})
            self._error("unterminated block comment", start)
        else:
            self.pos = idx + 2
            self._emit(TokenKind.BLOCK_COMMENT, start, self.pos)

    def _scan_single_quote(self, start: int) -> None:
        i = start + 1
        while i < self.n:
            if self.src[i] == "'":
                if i + 1 < self.n and self.src[i + 1] == "'":  # '' escape
                    i += 2
                    continue
                i += 1
                self.pos = i
                self._emit(TokenKind.SINGLE_QUOTE_STRING, start, i)
                self.command_start = False
                return
            i += 1
        self.pos = self.n
        self._emit(TokenKind.SINGLE_QUOTE_STRING, start, self.n, flags={"unterminated"})
        self._error("unterminated single-quoted string", start)

    def _scan_double_quote(self, start: int) -> None:
        i = self._scan_double_quote_body(start + 1)
        if i is None:
            self.pos = self.n
            self._emit(TokenKind.DOUBLE_QUOTE_STRING, start, self.n, flags={"unterminated"})
            self._error("unterminated double-quoted string", start)
        else:
            self.pos = i
            self._emit(TokenKind.DOUBLE_QUOTE_STRING, start, i)
            self.command_start = False

    def _scan_double_quote_body(self, i: int) -> int | None:
        """Scan a double-quoted string body from ``i``; return end offset after the closing quote."""
        while i < self.n:
            ch = self.src[i]
            if ch == "`" and i + 1 < self.n:
                i += 2
                continue
            if ch == '"':
                if i + 1 < self.n and self.src[i + 1] == '"':  # "" escape
                    i += 2
                    continue
                return i + 1
            if ch == "$" and i + 1 < self.n and self.src[i + 1] == "(":
                end = self._skip_subexpression(i + 1)
                if end is None:
                    return None
                i = end
                continue
            i += 1
        return None

    def _skip_subexpression(self, i: int) -> int | None:
        """Skip a balanced $( ... ) region starting at the '('; strings inside are honored."""
        depth = 0
        while i < self.n:
            ch = self.src[i]
            if ch == "(":
                depth += 1
                i += 1
            elif ch == ")":
                depth -= 1
                i += 1
                if depth == 0:
                    return i
            elif ch == "'":
                j = i + 1
                while j < self.n:
                    if self.src[j] == "'":
                        if j + 1 < self.n and self.src[j + 1] == "'":
                            j += 2
                            continue
                        j += 1
                        break
                    j += 1
                else:
                    return None
                i = j
            elif ch == '"':
                end = self._scan_double_quote_body(i + 1)
                if end is None:
                    return None
                i = end
            elif ch == "`" and i + 1 < self.n:
                i += 2
            else:
                i += 1
        return None

    def _here_string_opens(self) -> bool:
        """``@'`` / ``@"`` opens a here-string only when the rest of the line is blank."""
        i = self.pos + 2
        while i < self.n and self.src[i] in " \t\r":
            i += 1
        return i >= self.n or self.src[i] == "\n"

    def _scan_here_string(self) -> None:
        start = self.pos
        quote = self._peek(1)
        terminator = f"\n{quote}@"
        idx = self.src.find(terminator, start + 2)
        if idx == -1:
            self.pos = self.n
            self._emit(TokenKind.HERE_STRING, start, self.n, flags={"unterminated"})
            self._error("unterminated here-string", start)
        else:
            self.pos = idx + len(terminator)
            self._emit(TokenKind.HERE_STRING, start, self.pos)
            self.command_start = False

    def _scan_dollar(self) -> None:
        start = self.pos
        nxt = self._peek(1)
        if nxt == "(":
            self.pos += 2
            self._emit(TokenKind.PUNCTUATION, start, self.pos)
            self.command_start = True
            return
        if nxt == "{":
            idx = self.src.find("}", self.pos + 2)
            if idx == -1:
                self.pos = self.n
                self._emit(TokenKind.VARIABLE, start, self.n, flags={"unterminated"})
                self._error("unterminated braced variable", start)
                return
            inner = self.src[self.pos + 2 : idx]
            scope, name = _split_scope(inner)
            self.pos = idx + 1
            self._emit(TokenKind.VARIABLE, start, self.pos, scope=scope, name=name)
            self.command_start = False
            return
        if nxt in _VAR_SPECIALS and not _is_name_char(self._peek(2)):
            self.pos += 2
            self._emit(TokenKind.VARIABLE, start, self.pos, name=nxt)
            self.command_start = False
            return
        i = self.pos + 1
        while i < self.n and _is_name_char(self.src[i]):
            i += 1
        if i == self.pos + 1:
            self.pos += 1
            self._emit(TokenKind.PUNCTUATION, start, self.pos)
            return
        # A colon directly after a name segment may be a scope qualifier.
        scope = None
        name = self.src[self.pos + 1 : i]
        if i < self.n and self.src[i] == ":" and i + 1 < self.n and _is_name_char(self.src[i + 1]):
            if name.lower() in SCOPE_QUALIFIERS:
                j = i + 1
                while j < self.n and _is_name_char(self.src[j]):
                    j += 1
                scope = name.lower()
                name = self.src[i + 1 : j]
                i = j
        self.pos = i
        self._emit(TokenKind.VARIABLE, start, i, scope=scope, name=name)
        self.command_start = False

    def _scan_at(self) -> None:
        start = self.pos
        nxt = self._peek(1)
        if nxt in "({":
            self.pos += 2
            self._emit(TokenKind.PUNCTUATION, start, self.pos)
            self.command_start = True
            return
        if _is_name_char(nxt):
            i = self.pos + 1
            while i < self.n and _is_name_char(self.src[i]):
                i += 1
            self.pos = i
            # Splatted variable reference (@params).
            self._emit(TokenKind.VARIABLE, start, i, name=self.src[start + 1 : i], flags={"splat"})
            self.command_start = False
            return
        self.pos += 1
        self._emit(TokenKind.PUNCTUATION, start, self.pos)

    def _scan_dash_word(self) -> None:
        start = self.pos
        i = self.pos + 1
        while i < self.n and (self.src[i].isalnum() or self.src[i] == "_"):
            i += 1
        word = self.src[start + 1 : i]
        if word.lower() in DASH_OPERATORS:
            self.pos = i
            self._emit(TokenKind.OPERATOR, start, i)
            self.command_start = False
            return
        # A colon right after the name is the argument-binding colon.
        has_colon = i < self.n and self.src[i] == ":"
        if has_colon:
            i += 1
        self.pos = i
        self._emit(TokenKind.PARAMETER, start, i, name=word, flags={"colon"} if has_colon else set())
        self.command_start = False

    _NUMBER_SUFFIXES = ("kb", "mb", "gb", "tb", "pb")

    def _scan_number_or_bareword(self) -> None:
        start = self.pos
        i = self.pos
        while i < self.n and self.src[i] not in _BAREWORD_STOP and self.src[i] not in "=<>":
            i += 1
        word = self.src[start:i]
        if _looks_numeric(word):
            self.pos = i
            self._emit(TokenKind.NUMBER, start, i)
            self.command_start = False
            return
        self._scan_bareword()

    def _scan_structural(self, ch: str) -> None:
        start = self.pos
        two = self.src[self.pos : self.pos + 2]
        if two in ("&&", "||"):
            self.pos += 2
            self._emit(TokenKind.PUNCTUATION, start, self.pos)
            self.command_start = True
            return
        self.pos += 1
        self._emit(TokenKind.PUNCTUATION, start, self.pos)
        if ch in "{(|;&":
            self.command_start = True
        elif ch == "}":
            self.command_start = True
        elif ch in ")]":
            self.command_start = False
        elif ch == ",":
            self.command_start = False

    def _scan_operator_punct(self, ch: str) -> None:
        start = self.pos
        three = self.src[self.pos : self.pos + 3]
        two = self.src[self.pos : self.pos + 2]
        if three == ">>&":
            self.pos += 3
            self._emit(TokenKind.PUNCTUATION, start, self.pos)
            return
        if two in ("+=", "-=", "*=", "/=", "%=", "=="):
            self.pos += 2
            self._emit(TokenKind.OPERATOR, start, self.pos)
            self.command_start = True
            return
        if two in ("++", "--", "::", "..", ">>", "2>", "!=", "<=", ">="):
            self.pos += 2
            self._emit(TokenKind.PUNCTUATION, start, self.pos)
            return
        if ch == "=":
            self.pos += 1
            self._emit(TokenKind.OPERATOR, start, self.pos)
            self.command_start = True
            return
        if ch == "." and (self.command_start or not self.tokens or self._prev_is_space()):
            nxt = self._peek(1)
            if nxt in _HORIZONTAL_WS or nxt == "":
                # Dot-source operator.
                self.pos += 1
                self._emit(TokenKind.PUNCTUATION, start, self.pos)
                self.command_start = True
                return
            self._scan_bareword()
            return
        if ch == ".":
            self._scan_bareword()
            return
        self.pos += 1
        self._emit(TokenKind.PUNCTUATION, start, self.pos)

    def _prev_is_space(self) -> bool:
        return self.pos > 0 and self.src[self.pos - 1] in _HORIZONTAL_WS

    def _scan_bareword(self) -> None:
        start = self.pos
        i = self.pos
        while i < self.n:
            ch = self.src[i]
            if ch in _BAREWORD_STOP or ch in "=<>":
                break
            i += 1
        if i == start:
            i += 1  # lone unexpected character degrades to punctuation
            self.pos = i
            self._emit(TokenKind.PUNCTUATION, start, i)
            return
        word = self.src[start:i]
        self.pos = i
        lower = word.lower()
        if self.expect_function_name:
            self._emit(TokenKind.IDENTIFIER, start, i)
            self.expect_function_name = False
            self.command_start = False
            return
        if self.command_start and lower in KEYWORDS:
            self._emit(TokenKind.KEYWORD, start, i)
            if lower in ("function", "filter", "workflow", "configuration"):
                self.expect_function_name = True
            # Keywords keep command position open (return Get-Item, try {).
            self.command_start = True
            return
        if self.command_start:
            self._emit(TokenKind.COMMAND_NAME, start, i)
            self.command_start = False
            return
        self._emit(TokenKind.IDENTIFIER, start, i)


def _split_scope(inner: str) -> tuple[str | None, str]:
    if ":" in inner:
        head, _, rest = inner.partition(":")
        if head.lower() in SCOPE_QUALIFIERS and rest:
            return head.lower(), rest
    return None, inner


def _looks_numeric(word: str) -> bool:
    w = word.lower()
    if w.startswith("0x"):
        body = w[2:]
        return bool(body) and all(c in "0123456789abcdef" for c in body)
    for suffix in ("kb", "mb", "gb", "tb", "pb", "l", "d"):
        if w.endswith(suffix):
            w = w[: -len(suffix)]
            break
    if not w:
        return False
    try:
        float(w)
        return True
    except ValueError:
        return False


def lex(script: SourceScript) -> tuple[list[Token], list[LexError]]:
    """Tokenize ``script``; lexical errors are recorded, never raised."""
    lexer = _Lexer(script)
    lexer.run()
    return lexer.tokens, lexer.errors


def tokenize(script: SourceScript) -> list[Token]:
    """Lossless token stream; error recovery emits tokens to end-of-file."""
    return lex(script)[0]


def strip_comments(script: SourceScript) -> str:
    """Return the source with every comment token replaced by one space."""
    tokens, _ = lex(script)
    out: list[str] = []
    cursor = 0
    for tok in tokens:
        out.append(script.raw[cursor : tok.start])
        out.append(" " if tok.kind in COMMENT_KINDS else tok.text)
        cursor = tok.end
    out.append(script.raw[cursor:])
    return "".join(out)


def reconstruct(script: SourceScript, tokens: list[Token]) -> str:
    """Rebuild the source from tokens plus the original inter-token gaps."""
    out: list[str] = []
    cursor = 0
    for tok in tokens:
        out.append(script.raw[cursor : tok.start])
        out.append(tok.text)
        cursor = tok.end
    out.append(script.raw[cursor:])
    return "".join(out)
