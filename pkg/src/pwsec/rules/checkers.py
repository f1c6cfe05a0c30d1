"""One checker per shipped rule: pure functions over the extracted facts.

Checkers never look at comment or string tokens for command-name matches;
the parser only records commands from code positions, which keeps the
no-diagnostic-inside-comments invariant structural rather than filtered.
"""

from __future__ import annotations

import re

from ..syntax.parser import CommandCall, FunctionDecl, ParamDecl, ScriptAst
from ..syntax.tokenizer import STRING_KINDS, Token, TokenKind
from .model import Diagnostic, RuleSpec
from .tables import Tables


def _diag(
    ast: ScriptAst,
    spec: RuleSpec,
    start: int,
    end: int,
    description: str | None = None,
    suggested_fix: str | None = None,
) -> Diagnostic:
    script = ast.script
    sl, sc = script.locate(start)
    el, ec = script.locate(max(end - 1, start))
    return Diagnostic(
        file_name=script.path,
        rule_id=spec.rule_id,
        severity=spec.severity,
        line_span=(sl, sc, el, ec + 1 if end > start else ec),
        description=description or spec.description,
        suggested_fix=suggested_fix or spec.suggested_fix_template,
        code_snippet=script.raw[start:end],
    )


def _all_params(ast: ScriptAst) -> list[tuple[FunctionDecl | None, ParamDecl]]:
    out: list[tuple[FunctionDecl | None, ParamDecl]] = [(None, p) for p in ast.script_params]
    for fn in ast.functions:
        out.extend((fn, p) for p in fn.params)
    return out


# -- presence rules ----------------------------------------------------------


def check_write_host(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    targets = set(spec.config.get("commands", ["write-host"]))
    return [
        _diag(ast, spec, c.name_token.start, c.name_token.end)
        for c in ast.commands
        if c.name.lower() in targets
    ]


def check_cmdlet_aliases(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for c in ast.commands:
        alias = c.name.lower()
        if alias in tables.aliases:
            cmdlet = tables.aliases[alias]
            out.append(
                _diag(
                    ast,
                    spec,
                    c.name_token.start,
                    c.name_token.end,
                    description=spec.description.format(alias=c.name, cmdlet=cmdlet),
                    suggested_fix=spec.suggested_fix_template.format(alias=c.name, cmdlet=cmdlet),
                )
            )
    return out


def check_wmi_cmdlet(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    names = set(spec.config.get("commands", []))
    pattern = re.compile(spec.config.get("name_pattern", "^[a-z]+-wmi[a-z]*$"))
    out = []
    for c in ast.commands:
        lower = c.name.lower()
        if lower in names or pattern.match(lower):
            out.append(_diag(ast, spec, c.name_token.start, c.name_token.end))
    return out


def check_invoke_expression(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    targets = set(spec.config.get("commands", ["invoke-expression", "iex"]))
    return [
        _diag(ast, spec, c.name_token.start, c.name_token.end)
        for c in ast.commands
        if c.name.lower() in targets
    ]


def check_securestring_plaintext(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    command = spec.config.get("command", "convertto-securestring")
    parameter = spec.config.get("parameter", "asplaintext")
    return [
        _diag(ast, spec, c.start, c.end)
        for c in ast.commands
        if c.name.lower() == command and c.has_parameter(parameter)
    ]


def _matches_any(name: str, patterns: list[str]) -> bool:
    lower = name.lower()
    return any(p in lower for p in patterns)


def check_plaintext_password(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    patterns = spec.config["name_patterns"]
    safe_types = set(spec.config["safe_types"])
    out = []
    for _fn, p in _all_params(ast):
        if not _matches_any(p.name, patterns):
            continue
        type_name = (p.type_name or "").lower().lstrip("[").rstrip("]")
        if type_name in safe_types:
            continue
        if type_name not in ("", "string", "string[]", "object", "psobject"):
            continue
        out.append(
            _diag(
                ast,
                spec,
                p.start,
                p.end,
                description=spec.description.format(name=p.name),
            )
        )
    return out


def check_username_and_password(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    user_patterns = spec.config["username_patterns"]
    pass_patterns = spec.config["password_patterns"]
    out = []
    for fn in ast.functions:
        has_user = any(_matches_any(p.name, user_patterns) for p in fn.params)
        has_pass = any(_matches_any(p.name, pass_patterns) for p in fn.params)
        if has_user and has_pass:
            out.append(
                _diag(
                    ast,
                    spec,
                    fn.name_start,
                    fn.name_end,
                    description=spec.description.format(name=fn.name),
                )
            )
    return out


def check_computername_hardcoded(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    loopback = {v.lower() for v in spec.config.get("loopback", [])}
    out = []
    for c in ast.commands:
        value = c.parameter_value("computername")
        if value is None:
            continue
        if value.kind == TokenKind.VARIABLE or value.text.startswith(("$", "@", "(")):
            continue
        literal = value.text
        if value.kind in STRING_KINDS:
            literal = literal[1:-1] if len(literal) >= 2 else literal
        if literal.lower() in loopback:
            continue
        out.append(
            _diag(
                ast,
                spec,
                value.start,
                value.end,
                description=spec.description.format(value=literal),
            )
        )
    return out


def check_global_vars(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for tok in ast.tokens:
        if tok.kind == TokenKind.VARIABLE and tok.scope == "global":
            out.append(
                _diag(
                    ast,
                    spec,
                    tok.start,
                    tok.end,
                    description=spec.description.format(name=tok.name or tok.text),
                )
            )
    return out


def check_automatic_variable_assignment(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for a in ast.assignments:
        if a.scope == "env":
            continue
        if a.name.lower() in tables.automatic_variables:
            out.append(
                _diag(
                    ast,
                    spec,
                    a.start,
                    a.end,
                    description=spec.description.format(name=a.name),
                )
            )
    return out


def check_empty_catch(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    return [_diag(ast, spec, cb.start, cb.end) for cb in ast.catch_blocks if cb.is_empty]


def check_null_comparison(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for cmp_ in ast.comparisons:
        if cmp_.rhs_text.lower() == "$null":
            out.append(_diag(ast, spec, cmp_.start, cmp_.end))
    return out


# -- absence rules -----------------------------------------------------------


def check_should_process_state_changing(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for fn in ast.functions:
        verb = (fn.verb or "").lower()
        if verb in tables.state_changing_verbs and not fn.supports_should_process:
            out.append(
                _diag(
                    ast,
                    spec,
                    fn.name_start,
                    fn.name_end,
                    description=spec.description.format(name=fn.name),
                )
            )
    return out


def check_should_process_unused(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for fn in ast.functions:
        if fn.supports_should_process and not fn.has_should_process_call:
            out.append(
                _diag(
                    ast,
                    spec,
                    fn.name_start,
                    fn.name_end,
                    description=spec.description.format(name=fn.name),
                )
            )
    return out


def check_process_block_for_pipeline(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for fn in ast.functions:
        if fn.has_process:
            continue
        for p in fn.params:
            if p.value_from_pipeline:
                out.append(
                    _diag(
                        ast,
                        spec,
                        p.start,
                        p.end,
                        description=spec.description.format(name=p.name),
                    )
                )
    return out


def check_using_scope_modifier(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    always = set(spec.config.get("always_commands", []))
    invoke = spec.config.get("invoke_command", "invoke-command")
    invoke_params = spec.config.get("invoke_command_parameters", [])
    parallel_cmd = spec.config.get("parallel_command", "foreach-object")
    parallel_param = spec.config.get("parallel_parameter", "parallel")

    # Names assigned anywhere in the outer scope, with first-assignment offsets.
    first_assigned: dict[str, int] = {}
    for a in ast.assignments:
        if a.scope is None:
            first_assigned.setdefault(a.name.lower(), a.start)
    outer_params = {p.name.lower() for p in ast.script_params}
    for fn in ast.functions:
        outer_params.update(p.name.lower() for p in fn.params)

    out = []
    for ctx in ast.scriptblock_contexts:
        name = tables.resolve_alias(ctx.command.name).lower()
        if name in always:
            applies = True
        elif name == invoke:
            applies = any(ctx.command.has_parameter(p) for p in invoke_params)
        elif name == parallel_cmd:
            applies = ctx.command.has_parameter(parallel_param)
        else:
            applies = False
        if not applies:
            continue
        seen: set[str] = set()
        for ref in ctx.references:
            ref_name = (ref.name or "").lower()
            if not ref_name or ref_name in seen:
                continue
            assigned_at = first_assigned.get(ref_name)
            is_outer = (assigned_at is not None and assigned_at < ctx.block_start) or (
                ref_name in outer_params
            )
            if not is_outer:
                continue
            seen.add(ref_name)
            out.append(
                _diag(
                    ast,
                    spec,
                    ref.start,
                    ref.end,
                    description=spec.description.format(name=ref.name),
                )
            )
    return out


def check_approved_verbs(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for fn in ast.functions:
        if fn.verb is None:
            continue
        if fn.verb.lower() not in tables.approved_verbs:
            out.append(
                _diag(
                    ast,
                    spec,
                    fn.name_start,
                    fn.name_end,
                    description=spec.description.format(verb=fn.verb),
                )
            )
    return out


def check_singular_nouns(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    whitelist = {w.lower() for w in spec.config.get("noun_whitelist", [])}
    out = []
    for fn in ast.functions:
        noun = fn.noun
        if not noun:
            continue
        lower = noun.lower()
        # Suffix heuristic: plain trailing 's'; 'ss'/'us'/'is' endings are singular.
        if not lower.endswith("s") or lower.endswith(("ss", "us", "is")):
            continue
        if lower in whitelist:
            continue
        out.append(
            _diag(
                ast,
                spec,
                fn.name_start,
                fn.name_end,
                description=spec.description.format(name=fn.name),
            )
        )
    return out


def check_default_value_for_mandatory(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for _fn, p in _all_params(ast):
        if p.mandatory and p.has_default:
            out.append(
                _diag(
                    ast,
                    spec,
                    p.start,
                    p.end,
                    description=spec.description.format(name=p.name),
                )
            )
    return out


# -- semantic rules ----------------------------------------------------------


_INTERPOLATED_VAR = re.compile(r"\$(?:\{([^}]+)\}|([A-Za-z_][A-Za-z0-9_]*))")


def _interpolated_names(text: str) -> set[str]:
    names: set[str] = set()
    for braced, plain in _INTERPOLATED_VAR.findall(text):
        name = braced or plain
        if ":" in name:
            name = name.rsplit(":", 1)[1]
        names.add(name.lower())
    return names


def _body_references(tokens: list[Token]) -> set[str]:
    """Variable names read in a body, including expandable-string interpolations."""
    refs: set[str] = set()
    for tok in tokens:
        if tok.kind == TokenKind.VARIABLE and tok.name:
            refs.add(tok.name.lower())
        elif tok.kind in (TokenKind.DOUBLE_QUOTE_STRING, TokenKind.HERE_STRING):
            if tok.kind == TokenKind.HERE_STRING and tok.text.startswith("@'"):
                continue  # literal here-strings do not interpolate
            refs.update(_interpolated_names(tok.text))
    return refs


def check_unused_parameter(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for fn in ast.functions:
        if fn.uses_bound_parameters:
            continue
        decl_offsets = {p.start for p in fn.params}
        body = [
            t
            for t in fn.body_tokens
            if not (t.kind == TokenKind.VARIABLE and t.start in decl_offsets)
        ]
        refs = _body_references(body)
        for p in fn.params:
            if p.name.lower() not in refs:
                out.append(
                    _diag(
                        ast,
                        spec,
                        p.start,
                        p.end,
                        description=spec.description.format(name=p.name),
                    )
                )
    if ast.script_params and not ast.script_uses_bound_parameters:
        function_spans = [(f.body_start, f.body_end) for f in ast.functions]
        last_param_end = max(p.end for p in ast.script_params)
        body_tokens = [
            tok
            for tok in ast.tokens
            if tok.start >= last_param_end
            and not any(s <= tok.start < e for s, e in function_spans)
        ]
        refs = _body_references(body_tokens)
        for p in ast.script_params:
            if p.name.lower() not in refs:
                out.append(
                    _diag(
                        ast,
                        spec,
                        p.start,
                        p.end,
                        description=spec.description.format(name=p.name),
                    )
                )
    return out


def check_overwriting_builtins(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for fn in ast.functions:
        if fn.name.lower() in tables.builtin_cmdlets:
            out.append(
                _diag(
                    ast,
                    spec,
                    fn.name_start,
                    fn.name_end,
                    description=spec.description.format(name=fn.name),
                )
            )
    return out


def check_cmdlet_correctly(ast: ScriptAst, spec: RuleSpec, tables: Tables) -> list[Diagnostic]:
    out = []
    for c in ast.commands:
        mandatory = tables.mandatory_parameters.get(c.name.lower())
        if not mandatory:
            continue
        named = {p.lower() for p, _ in c.parameters}
        n_positional = len(c.positional)
        missing = None
        for mp in mandatory:
            if mp.name.lower() in named:
                continue
            if mp.position is not None and mp.position < n_positional:
                continue
            if mp.pipeline and c.pipeline_index > 0:
                continue
            missing = mp.name
            break
        if missing is not None:
            out.append(
                _diag(
                    ast,
                    spec,
                    c.name_token.start,
                    c.name_token.end,
                    description=spec.description.format(name=c.name, parameter=missing),
                )
            )
    return out


CHECKERS = {
    "PSAvoidUsingWriteHost": check_write_host,
    "PSAvoidUsingCmdletAliases": check_cmdlet_aliases,
    "PSAvoidUsingWMICmdlet": check_wmi_cmdlet,
    "PSAvoidUsingInvokeExpression": check_invoke_expression,
    "PSAvoidUsingConvertToSecureStringWithPlainText": check_securestring_plaintext,
    "PSAvoidUsingPlainTextForPassword": check_plaintext_password,
    "PSAvoidUsingUsernameAndPasswordParams": check_username_and_password,
    "PSAvoidUsingComputerNameHardcoded": check_computername_hardcoded,
    "PSAvoidGlobalVars": check_global_vars,
    "PSAvoidAssignmentToAutomaticVariable": check_automatic_variable_assignment,
    "PSAvoidUsingEmptyCatchBlock": check_empty_catch,
    "PSPossibleIncorrectComparisonWithNull": check_null_comparison,
    "PSUseShouldProcessForStateChangingFunctions": check_should_process_state_changing,
    "PSShouldProcess": check_should_process_unused,
    "PSUseProcessBlockForPipelineCommand": check_process_block_for_pipeline,
    "PSUseUsingScopeModifierInNewRunspaces": check_using_scope_modifier,
    "PSUseApprovedVerbs": check_approved_verbs,
    "PSUseSingularNouns": check_singular_nouns,
    "PSAvoidDefaultValueForMandatoryParameter": check_default_value_for_mandatory,
    "PSReviewUnusedParameter": check_unused_parameter,
    "PSAvoidOverwritingBuiltInCmdlets": check_overwriting_builtins,
    "PSUseCmdletCorrectly": check_cmdlet_correctly,
}
