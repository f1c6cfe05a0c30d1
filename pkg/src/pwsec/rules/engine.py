"""Rule engine: run the shipped checkers and classify scripts."""

from __future__ import annotations

from collections.abc import Iterable

from ..syntax.parser import ScriptAst, parse
from ..syntax.source import SourceScript
from .checkers import CHECKERS
from .model import Diagnostic, RuleSpec, SecurityVerdict, UnknownRule, verdict_for
from .tables import Tables, load_tables


def list_rules() -> list[RuleSpec]:
    """The shipped rules, in stable (data-file) order."""
    return list(load_tables().rules)


def analyze_ast(
    ast: ScriptAst,
    rules: Iterable[str] | None = None,
    tables: Tables | None = None,
) -> list[Diagnostic]:
    tables = tables or load_tables()
    if rules is None:
        selected = tables.rules
    else:
        selected = []
        for rule_id in rules:
            spec = tables.rules_by_id.get(rule_id)
            if spec is None:
                raise UnknownRule(rule_id)
            selected.append(spec)
    diagnostics: list[Diagnostic] = []
    for spec in selected:
        checker = CHECKERS[spec.rule_id]
        diagnostics.extend(checker(ast, spec, tables))
    diagnostics.sort(key=lambda d: (d.line_span[0], d.line_span[1], d.rule_id))
    return diagnostics


def analyze(script: SourceScript, rules: Iterable[str] | None = None) -> list[Diagnostic]:
    """Evaluate the requested rules (all shipped rules by default).

    Deterministic: diagnostics are sorted by (start_line, start_col, rule_id).
    """
    return analyze_ast(parse(script), rules=rules)


def classify(script: SourceScript, rules: Iterable[str] | None = None) -> SecurityVerdict:
    """Three-way verdict: Secure / Insecure / Invalid (parse failure)."""
    ast = parse(script)
    diagnostics = analyze_ast(ast, rules=rules)
    return SecurityVerdict(
        verdict=verdict_for(diagnostics, bool(ast.parse_errors)),
        diagnostics=diagnostics,
    )
