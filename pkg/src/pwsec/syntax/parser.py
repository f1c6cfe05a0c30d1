"""Best-effort structural fact extraction over the token stream.

The parser never aborts: anything it cannot make sense of is skipped, and
unrecoverable syntax (unterminated strings, unbalanced blocks, a function
keyword without a body) lands in ``ScriptAst.parse_errors`` instead of
raising.  Facts carry token offsets so diagnostics can slice the source.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .source import SourceScript
from .tokenizer import (
    COMMENT_KINDS,
    COMPARISON_OPERATORS,
    STRING_KINDS,
    LexError,
    Token,
    TokenKind,
    lex,
)

Span = tuple[int, int, int, int]


@dataclass
class ParseError:
    message: str
    span: Span


@dataclass
class ParamDecl:
    name: str
    span: Span
    start: int
    end: int
    type_name: str | None = None  # lowercased, brackets stripped
    mandatory: bool = False
    value_from_pipeline: bool = False
    has_default: bool = False


@dataclass
class FunctionDecl:
    name: str
    verb: str | None
    noun: str | None
    name_span: Span
    name_start: int
    name_end: int
    body_start: int  # offset of '{'
    body_end: int  # offset past matching '}'
    params: list[ParamDecl] = field(default_factory=list)
    has_cmdlet_binding: bool = False
    supports_should_process: bool = False
    has_should_process_call: bool = False
    has_begin: bool = False
    has_process: bool = False
    has_end: bool = False
    uses_bound_parameters: bool = False
    body_tokens: list[Token] = field(default_factory=list, repr=False)


@dataclass
class CommandCall:
    name: str
    name_token: Token
    span: Span
    start: int
    end: int
    parameters: list[tuple[str, Token | None]] = field(default_factory=list)
    positional: list[Token] = field(default_factory=list)
    pipeline_index: int = 0
    scriptblocks: list[tuple[int, int]] = field(default_factory=list)  # token index ranges

    def has_parameter(self, name: str) -> bool:
        name = name.lower()
        return any(p.lower() == name for p, _ in self.parameters)

    def parameter_value(self, name: str) -> Token | None:
        name = name.lower()
        for p, v in self.parameters:
            if p.lower() == name:
                return v
        return None


@dataclass
class CatchBlock:
    span: Span
    start: int
    end: int
    is_empty: bool


@dataclass
class Assignment:
    name: str
    scope: str | None
    span: Span
    start: int
    end: int
    op: str


@dataclass
class Comparison:
    operator: str
    lhs_text: str
    rhs_text: str
    span: Span
    start: int
    end: int


@dataclass
class ScriptBlockContext:
    command: CommandCall
    block_start: int  # offset of '{'
    block_end: int
    declared: set[str]  # params declared inside the block (lowercased)
    references: list[Token]  # unqualified variable reads inside the block


@dataclass
class ScriptAst:
    script: SourceScript
    tokens: list[Token]
    functions: list[FunctionDecl] = field(default_factory=list)
    commands: list[CommandCall] = field(default_factory=list)
    catch_blocks: list[CatchBlock] = field(default_factory=list)
    assignments: list[Assignment] = field(default_factory=list)
    comparisons: list[Comparison] = field(default_factory=list)
    scriptblock_contexts: list[ScriptBlockContext] = field(default_factory=list)
    parse_errors: list[ParseError] = field(default_factory=list)
    script_params: list[ParamDecl] = field(default_factory=list)
    script_uses_bound_parameters: bool = False


_AUTOMATIC_LOCALS = frozenset(
    {"_", "psitem", "null", "true", "false", "args", "input", "this", "foreach", "switch"}
)

_SHOULD_PROCESS_RE = re.compile(r"^\.should(process|continue)\b", re.IGNORECASE)

_SIGNIFICANT = lambda t: t.kind not in COMMENT_KINDS and t.kind != TokenKind.NEWLINE  # noqa: E731


class _Parser:
    def __init__(self, script: SourceScript):
        self.script = script
        self.tokens, self.lex_errors = lex(script)
        self.ast = ScriptAst(script=script, tokens=self.tokens)
        self.open_close: dict[int, int] = {}  # token index of opener -> closer
        self._match_brackets()

    # -- bracket matching --------------------------------------------------

    _OPENERS = {"{": "}", "(": ")", "[": "]", "@{": "}", "@(": ")", "$(": ")"}
    _CLOSERS = {"}", ")", "]"}

    def _match_brackets(self) -> None:
        stack: list[tuple[int, str]] = []
        for idx, tok in enumerate(self.tokens):
            if tok.kind != TokenKind.PUNCTUATION:
                continue
            if tok.text in self._OPENERS:
                stack.append((idx, self._OPENERS[tok.text]))
            elif tok.text in self._CLOSERS:
                if stack and stack[-1][1] == tok.text:
                    open_idx, _ = stack.pop()
                    self.open_close[open_idx] = idx
                else:
                    self.ast.parse_errors.append(
                        ParseError(f"unmatched '{tok.text}'", tok.span)
                    )
        for open_idx, _expected in stack:
            tok = self.tokens[open_idx]
            self.ast.parse_errors.append(ParseError(f"unclosed '{tok.text}'", tok.span))

    # -- main walk ---------------------------------------------------------

    def run(self) -> ScriptAst:
        for err in self.lex_errors:
            self.ast.parse_errors.append(ParseError(err.message, err.span))
        self._walk(0, len(self.tokens), pipeline_reset=True)
        self._collect_script_params()
        self._finalize_functions()
        return self.ast

    def _next_significant(self, idx: int, stop: int) -> int | None:
        i = idx
        while i < stop:
            if _SIGNIFICANT(self.tokens[i]):
                return i
            i += 1
        return None

    def _walk(self, start: int, stop: int, pipeline_reset: bool, record_commands: bool = True) -> None:
        """Scan tokens in [start, stop), extracting facts; recurses into blocks.

        ``record_commands`` is off inside [attribute] regions, where barewords
        are attribute names, not invocations.
        """
        i = start
        pipeline_index = 0
        while i < stop:
            tok = self.tokens[i]
            kind = tok.kind
            if kind == TokenKind.NEWLINE or (
                kind == TokenKind.PUNCTUATION and tok.text in (";", "&&", "||")
            ):
                pipeline_index = 0
                i += 1
                continue
            if kind == TokenKind.PUNCTUATION and tok.text == "|":
                pipeline_index += 1
                i += 1
                continue
            if kind == TokenKind.KEYWORD:
                lower = tok.lower
                if lower in ("function", "filter", "workflow"):
                    i = self._parse_function(i, stop)
                    continue
                if lower == "catch":
                    i = self._parse_catch(i, stop)
                    continue
                if lower == "foreach":
                    i = self._parse_foreach_header(i, stop)
                    continue
                if lower == "param":
                    i = self._skip_param_block(i, stop)
                    continue
                i += 1
                continue
            if kind == TokenKind.VARIABLE:
                i = self._maybe_assignment_or_comparison(i, stop, pipeline_index)
                continue
            if kind == TokenKind.COMMAND_NAME:
                if record_commands:
                    i = self._parse_command(i, stop, pipeline_index)
                else:
                    i += 1
                continue
            if kind == TokenKind.PUNCTUATION and tok.text in ("{", "(", "@{", "@(", "$(", "["):
                close = self.open_close.get(i)
                if close is None:
                    i += 1
                    continue
                if tok.text == "[":
                    inner_record = False
                elif tok.text == "(":
                    inner_record = record_commands
                else:
                    inner_record = True  # scriptblocks and subexpressions hold code
                self._walk(i + 1, close, pipeline_reset=True, record_commands=inner_record)
                i = close + 1
                continue
            if kind in (TokenKind.NUMBER, TokenKind.IDENTIFIER) or kind in STRING_KINDS:
                i = self._maybe_comparison_from(i, stop)
                continue
            i += 1

    # -- functions ----------------------------------------------------------

    def _parse_function(self, kw_idx: int, stop: int) -> int:
        name_idx = self._next_significant(kw_idx + 1, stop)
        if name_idx is None or self.tokens[name_idx].kind not in (
            TokenKind.IDENTIFIER,
            TokenKind.COMMAND_NAME,
        ):
            self.ast.parse_errors.append(
                ParseError("function keyword without a name", self.tokens[kw_idx].span)
            )
            return kw_idx + 1
        name_tok = self.tokens[name_idx]
        name = name_tok.text
        if ":" in name:  # scope-qualified definition (function global:Get-Thing)
            name = name.rsplit(":", 1)[1]
        verb, noun = _split_verb_noun(name)

        params: list[ParamDecl] = []
        i = self._next_significant(name_idx + 1, stop)
        if i is not None and self.tokens[i].kind == TokenKind.PUNCTUATION and self.tokens[i].text == "(":
            close = self.open_close.get(i)
            if close is not None:
                params.extend(self._parse_param_list(i + 1, close))
                i = self._next_significant(close + 1, stop)
        if i is None or self.tokens[i].text != "{" or self.tokens[i].kind != TokenKind.PUNCTUATION:
            self.ast.parse_errors.append(
                ParseError(f"function '{name}' has no body", name_tok.span)
            )
            return name_idx + 1
        body_open = i
        body_close = self.open_close.get(body_open)
        if body_close is None:
            # Unclosed body already recorded by bracket matching.
            return body_open + 1

        decl = FunctionDecl(
            name=name,
            verb=verb,
            noun=noun,
            name_span=name_tok.span,
            name_start=name_tok.start,
            name_end=name_tok.end,
            body_start=self.tokens[body_open].start,
            body_end=self.tokens[body_close].end,
            params=params,
            body_tokens=self.tokens[body_open + 1 : body_close],
        )
        self._scan_function_body(decl, body_open + 1, body_close)
        self.ast.functions.append(decl)
        self._walk(body_open + 1, body_close, pipeline_reset=True)
        return body_close + 1

    def _scan_function_body(self, decl: FunctionDecl, start: int, stop: int) -> None:
        i = start
        while i < stop:
            tok = self.tokens[i]
            if tok.kind == TokenKind.KEYWORD:
                lower = tok.lower
                if lower == "param":
                    open_idx = self._next_significant(i + 1, stop)
                    if (
                        open_idx is not None
                        and self.tokens[open_idx].kind == TokenKind.PUNCTUATION
                        and self.tokens[open_idx].text == "("
                    ):
                        close = self.open_close.get(open_idx)
                        if close is not None:
                            decl.params.extend(self._parse_param_list(open_idx + 1, close))
                            i = close + 1
                            continue
                elif lower in ("function", "filter", "workflow"):
                    # Skip the nested body: its blocks belong to the inner function.
                    close = self._nested_function_body_close(i, stop)
                    if close is not None:
                        i = close + 1
                        continue
            if (
                tok.kind in (TokenKind.KEYWORD, TokenKind.IDENTIFIER, TokenKind.COMMAND_NAME)
                and tok.lower in ("begin", "process", "end")
                and self._at_block_depth(i, start, stop)
            ):
                nxt = self._next_significant(i + 1, stop)
                if (
                    nxt is not None
                    and self.tokens[nxt].kind == TokenKind.PUNCTUATION
                    and self.tokens[nxt].text == "{"
                ):
                    setattr(decl, f"has_{tok.lower}", True)
            if tok.kind == TokenKind.IDENTIFIER and _SHOULD_PROCESS_RE.match(tok.text):
                decl.has_should_process_call = True
            elif tok.kind == TokenKind.VARIABLE and tok.name:
                if tok.name.lower() == "psboundparameters":
                    decl.uses_bound_parameters = True
            i += 1
        # CmdletBinding attribute and its arguments.
        self._scan_cmdlet_binding(decl, start, stop)

    def _nested_function_body_close(self, kw_idx: int, stop: int) -> int | None:
        """Closing-brace token index of a nested function's body, if present."""
        i = self._next_significant(kw_idx + 1, stop)
        if i is None:
            return None
        if self.tokens[i].kind in (TokenKind.IDENTIFIER, TokenKind.COMMAND_NAME):
            i = self._next_significant(i + 1, stop)
        if i is not None and self.tokens[i].kind == TokenKind.PUNCTUATION and self.tokens[i].text == "(":
            close = self.open_close.get(i)
            if close is None:
                return None
            i = self._next_significant(close + 1, stop)
        if i is not None and self.tokens[i].kind == TokenKind.PUNCTUATION and self.tokens[i].text == "{":
            return self.open_close.get(i)
        return None

    def _at_block_depth(self, idx: int, start: int, stop: int) -> bool:
        """True when token idx is at the top nesting level of the enclosing body."""
        depth = 0
        for j in range(start, idx):
            tok = self.tokens[j]
            if tok.kind != TokenKind.PUNCTUATION:
                continue
            if tok.text in ("{", "(", "[", "@{", "@(", "$("):
                depth += 1
            elif tok.text in ("}", ")", "]"):
                depth -= 1
        return depth == 0

    def _scan_cmdlet_binding(self, decl: FunctionDecl, start: int, stop: int) -> None:
        i = start
        while i < stop:
            tok = self.tokens[i]
            if tok.kind == TokenKind.PUNCTUATION and tok.text == "[":
                close = self.open_close.get(i)
                head = self._next_significant(i + 1, stop)
                if close is not None and head is not None and head < close:
                    head_tok = self.tokens[head]
                    if head_tok.text.lower() == "cmdletbinding":
                        decl.has_cmdlet_binding = True
                        if self._attr_flag_enabled(head + 1, close, "supportsshouldprocess"):
                            decl.supports_should_process = True
                    i = close + 1
                    continue
            i += 1

    def _attr_flag_enabled(self, start: int, stop: int, flag: str) -> bool:
        i = start
        while i < stop:
            tok = self.tokens[i]
            if tok.kind in (TokenKind.IDENTIFIER, TokenKind.COMMAND_NAME) and tok.text.lower() == flag:
                nxt = self._next_significant(i + 1, stop)
                if nxt is not None and self.tokens[nxt].kind == TokenKind.OPERATOR and self.tokens[nxt].text == "=":
                    val = self._next_significant(nxt + 1, stop)
                    if val is not None and self.tokens[val].kind == TokenKind.VARIABLE:
                        return (self.tokens[val].name or "").lower() != "false"
                return True
            i += 1
        return False

    # -- param blocks --------------------------------------------------------

    def _parse_param_list(self, start: int, stop: int) -> list[ParamDecl]:
        """Parse a param(...) or function(...) declaration region."""
        params: list[ParamDecl] = []
        i = start
        pending_type: str | None = None
        pending_mandatory = False
        pending_pipeline = False
        while i < stop:
            tok = self.tokens[i]
            if tok.kind == TokenKind.PUNCTUATION and tok.text == "[":
                close = self.open_close.get(i)
                head = self._next_significant(i + 1, stop)
                if close is None or head is None or head >= close:
                    i += 1
                    continue
                head_text = self.tokens[head].text.lower()
                if head_text == "parameter":
                    if self._attr_flag_enabled(head + 1, close, "mandatory"):
                        pending_mandatory = True
                    if self._attr_flag_enabled(head + 1, close, "valuefrompipeline"):
                        pending_pipeline = True
                elif head_text not in ("alias", "validateset", "validatenotnull",
                                       "validatenotnullorempty", "validaterange",
                                       "validatescript", "validatepattern", "validatelength",
                                       "validatecount", "allownull", "allowemptystring",
                                       "allowemptycollection", "outputtype"):
                    # A bare [type] constraint.
                    inner = self.script.raw[self.tokens[i].end : self.tokens[close].start]
                    pending_type = inner.strip().lower() or head_text
                i = close + 1
                continue
            if tok.kind == TokenKind.VARIABLE and tok.name:
                decl = ParamDecl(
                    name=tok.name,
                    span=tok.span,
                    start=tok.start,
                    end=tok.end,
                    type_name=pending_type,
                    mandatory=pending_mandatory,
                    value_from_pipeline=pending_pipeline,
                )
                nxt = self._next_significant(i + 1, stop)
                if nxt is not None and self.tokens[nxt].kind == TokenKind.OPERATOR and self.tokens[nxt].text == "=":
                    decl.has_default = True
                params.append(decl)
                pending_type = None
                pending_mandatory = False
                pending_pipeline = False
            elif tok.kind == TokenKind.PUNCTUATION and tok.text in ("(", "@(", "@{", "$(", "{"):
                close = self.open_close.get(i)
                i = (close + 1) if close is not None else i + 1
                continue
            i += 1
        return params

    def _skip_param_block(self, kw_idx: int, stop: int) -> int:
        open_idx = self._next_significant(kw_idx + 1, stop)
        if (
            open_idx is not None
            and self.tokens[open_idx].kind == TokenKind.PUNCTUATION
            and self.tokens[open_idx].text == "("
        ):
            close = self.open_close.get(open_idx)
            if close is not None:
                return close + 1
        return kw_idx + 1

    def _collect_script_params(self) -> None:
        """Top-level param block: the first statement of the file, if any."""
        i = self._next_significant(0, len(self.tokens))
        # Attributes like [CmdletBinding()] may precede the param keyword.
        while i is not None and self.tokens[i].kind == TokenKind.PUNCTUATION and self.tokens[i].text == "[":
            close = self.open_close.get(i)
            if close is None:
                return
            i = self._next_significant(close + 1, len(self.tokens))
        if i is None or self.tokens[i].kind != TokenKind.KEYWORD or self.tokens[i].lower != "param":
            return
        open_idx = self._next_significant(i + 1, len(self.tokens))
        if (
            open_idx is None
            or self.tokens[open_idx].kind != TokenKind.PUNCTUATION
            or self.tokens[open_idx].text != "("
        ):
            return
        close = self.open_close.get(open_idx)
        if close is None:
            return
        self.ast.script_params = self._parse_param_list(open_idx + 1, close)
        body = self.tokens[close + 1 :]
        self.ast.script_uses_bound_parameters = any(
            t.kind == TokenKind.VARIABLE and (t.name or "").lower() == "psboundparameters"
            for t in body
        )

    # -- commands -------------------------------------------------------------

    _COMMAND_TERMINATORS = {"|", ";", "&&", "||"}

    def _parse_command(self, name_idx: int, stop: int, pipeline_index: int) -> int:
        name_tok = self.tokens[name_idx]
        call = CommandCall(
            name=name_tok.text,
            name_token=name_tok,
            span=name_tok.span,
            start=name_tok.start,
            end=name_tok.end,
            pipeline_index=pipeline_index,
        )
        i = name_idx + 1
        last_end = name_tok.end
        pending_param: str | None = None
        pending_param_colon = False
        while i < stop:
            tok = self.tokens[i]
            if tok.kind == TokenKind.NEWLINE:
                break
            if tok.kind == TokenKind.PUNCTUATION:
                if tok.text in self._COMMAND_TERMINATORS or tok.text in (")", "}", "]"):
                    break
                if tok.text in ("{",):
                    close = self.open_close.get(i)
                    if close is None:
                        break
                    call.scriptblocks.append((i, close))
                    if pending_param is not None:
                        call.parameters.append((pending_param, tok))
                        pending_param = None
                    else:
                        call.positional.append(tok)
                    last_end = self.tokens[close].end
                    self._walk(i + 1, close, pipeline_reset=True)
                    i = close + 1
                    continue
                if tok.text in ("(", "@(", "@{", "$("):
                    close = self.open_close.get(i)
                    if close is None:
                        break
                    if pending_param is not None:
                        call.parameters.append((pending_param, tok))
                        pending_param = None
                    else:
                        call.positional.append(tok)
                    last_end = self.tokens[close].end
                    self._walk(i + 1, close, pipeline_reset=True)
                    i = close + 1
                    continue
                if tok.text == ",":
                    i += 1
                    continue
                last_end = tok.end
                i += 1
                continue
            if tok.kind == TokenKind.PARAMETER:
                if pending_param is not None:
                    call.parameters.append((pending_param, None))
                pending_param = tok.name or tok.text.lstrip("-").rstrip(":")
                pending_param_colon = "colon" in tok.flags
                last_end = tok.end
                i += 1
                continue
            if tok.kind in (
                TokenKind.IDENTIFIER,
                TokenKind.NUMBER,
                TokenKind.VARIABLE,
                TokenKind.COMMAND_NAME,
            ) or tok.kind in STRING_KINDS:
                if pending_param is not None:
                    call.parameters.append((pending_param, tok))
                    pending_param = None
                    pending_param_colon = False
                else:
                    call.positional.append(tok)
                last_end = tok.end
                i += 1
                continue
            if tok.kind == TokenKind.OPERATOR:
                # Comparisons/assignments never continue a command's argument list.
                last_end = tok.end
                i += 1
                continue
            last_end = tok.end
            i += 1
        if pending_param is not None:
            call.parameters.append((pending_param, None))
        call.end = last_end
        sl, sc, _, _ = name_tok.span
        el, ec = self.script.locate(max(last_end - 1, name_tok.start))
        call.span = (sl, sc, el, ec + 1)
        self.ast.commands.append(call)
        _ = pending_param_colon
        return i

    # -- catch / foreach -------------------------------------------------------

    def _parse_catch(self, kw_idx: int, stop: int) -> int:
        i = self._next_significant(kw_idx + 1, stop)
        while (
            i is not None
            and self.tokens[i].kind == TokenKind.PUNCTUATION
            and self.tokens[i].text == "["
        ):
            close = self.open_close.get(i)
            if close is None:
                return kw_idx + 1
            i = self._next_significant(close + 1, stop)
            if i is not None and self.tokens[i].kind == TokenKind.PUNCTUATION and self.tokens[i].text == ",":
                i = self._next_significant(i + 1, stop)
        if i is None or self.tokens[i].kind != TokenKind.PUNCTUATION or self.tokens[i].text != "{":
            return kw_idx + 1
        close = self.open_close.get(i)
        if close is None:
            return kw_idx + 1
        inner = self.tokens[i + 1 : close]
        is_empty = not any(_SIGNIFICANT(t) for t in inner)
        kw_tok = self.tokens[kw_idx]
        end_tok = self.tokens[close]
        span = (kw_tok.span[0], kw_tok.span[1], end_tok.span[2], end_tok.span[3])
        self.ast.catch_blocks.append(
            CatchBlock(span=span, start=kw_tok.start, end=end_tok.end, is_empty=is_empty)
        )
        self._walk(i + 1, close, pipeline_reset=True)
        return close + 1

    def _parse_foreach_header(self, kw_idx: int, stop: int) -> int:
        i = self._next_significant(kw_idx + 1, stop)
        if i is None or self.tokens[i].kind != TokenKind.PUNCTUATION or self.tokens[i].text != "(":
            return kw_idx + 1
        close = self.open_close.get(i)
        var_idx = self._next_significant(i + 1, close if close is not None else stop)
        if var_idx is not None and self.tokens[var_idx].kind == TokenKind.VARIABLE:
            tok = self.tokens[var_idx]
            self.ast.assignments.append(
                Assignment(
                    name=tok.name or tok.text.lstrip("$"),
                    scope=tok.scope,
                    span=tok.span,
                    start=tok.start,
                    end=tok.end,
                    op="foreach",
                )
            )
        return kw_idx + 1

    # -- assignments and comparisons --------------------------------------------

    def _maybe_assignment_or_comparison(self, idx: int, stop: int, pipeline_index: int) -> int:
        tok = self.tokens[idx]
        nxt = self._next_significant(idx + 1, stop)
        if nxt is not None and self.tokens[nxt].kind == TokenKind.OPERATOR:
            op_tok = self.tokens[nxt]
            if op_tok.text in ("=", "+=", "-=", "*=", "/=", "%="):
                self.ast.assignments.append(
                    Assignment(
                        name=tok.name or tok.text.lstrip("$"),
                        scope=tok.scope,
                        span=tok.span,
                        start=tok.start,
                        end=tok.end,
                        op=op_tok.text,
                    )
                )
                return nxt + 1
            if op_tok.lower in COMPARISON_OPERATORS:
                return self._record_comparison(idx, nxt, stop)
        return idx + 1

    def _maybe_comparison_from(self, idx: int, stop: int) -> int:
        nxt = self._next_significant(idx + 1, stop)
        if nxt is not None and self.tokens[nxt].kind == TokenKind.OPERATOR:
            if self.tokens[nxt].lower in COMPARISON_OPERATORS:
                return self._record_comparison(idx, nxt, stop)
        return idx + 1

    def _record_comparison(self, lhs_idx: int, op_idx: int, stop: int) -> int:
        lhs = self.tokens[lhs_idx]
        op = self.tokens[op_idx]
        rhs_idx = self._next_significant(op_idx + 1, stop)
        if rhs_idx is None:
            return op_idx + 1
        rhs = self.tokens[rhs_idx]
        span = (lhs.span[0], lhs.span[1], rhs.span[2], rhs.span[3])
        self.ast.comparisons.append(
            Comparison(
                operator=op.lower,
                lhs_text=lhs.text,
                rhs_text=rhs.text,
                span=span,
                start=lhs.start,
                end=rhs.end,
            )
        )
        return rhs_idx + 1

    # -- scriptblock contexts ------------------------------------------------------

    def collect_scriptblock_contexts(self) -> None:
        for call in self.ast.commands:
            for open_idx, close_idx in call.scriptblocks:
                declared: set[str] = set()
                references: list[Token] = []
                inner = range(open_idx + 1, close_idx)
                # Parameters declared by the block itself.
                j = open_idx + 1
                while j < close_idx:
                    t = self.tokens[j]
                    if t.kind == TokenKind.KEYWORD and t.lower == "param":
                        open_p = self._next_significant(j + 1, close_idx)
                        if (
                            open_p is not None
                            and self.tokens[open_p].kind == TokenKind.PUNCTUATION
                            and self.tokens[open_p].text == "("
                        ):
                            close_p = self.open_close.get(open_p)
                            if close_p is not None:
                                for p in self._parse_param_list(open_p + 1, close_p):
                                    declared.add(p.name.lower())
                    j += 1
                assigned_inside: set[str] = set()
                for j in inner:
                    t = self.tokens[j]
                    if t.kind != TokenKind.VARIABLE or not t.name:
                        continue
                    name = t.name.lower()
                    nxt = self._next_significant(j + 1, close_idx)
                    is_assign = (
                        nxt is not None
                        and self.tokens[nxt].kind == TokenKind.OPERATOR
                        and self.tokens[nxt].text in ("=", "+=", "-=", "*=", "/=", "%=")
                    )
                    if is_assign:
                        assigned_inside.add(name)
                        continue
                    if t.scope is not None or "splat" in t.flags:
                        continue
                    if name in _AUTOMATIC_LOCALS or name in declared or name in assigned_inside:
                        continue
                    references.append(t)
                self.ast.scriptblock_contexts.append(
                    ScriptBlockContext(
                        command=call,
                        block_start=self.tokens[open_idx].start,
                        block_end=self.tokens[close_idx].end,
                        declared=declared,
                        references=references,
                    )
                )

    def _finalize_functions(self) -> None:
        self.collect_scriptblock_contexts()


def _split_verb_noun(name: str) -> tuple[str | None, str | None]:
    if "-" in name:
        verb, _, noun = name.partition("-")
        return (verb or None), (noun or None)
    return None, None


def parse(script: SourceScript) -> ScriptAst:
    """Extract structural facts; never raises on malformed input."""
    return _Parser(script).run()
