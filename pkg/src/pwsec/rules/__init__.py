"""Security rule engine: 22 checkers, diagnostics, and verdicts."""

from .engine import analyze, analyze_ast, classify, list_rules
from .model import (
    CATEGORIES,
    Diagnostic,
    RuleSpec,
    SecurityVerdict,
    UnknownRule,
    Verdict,
    verdict_for,
)
from .tables import Tables, load_tables

__all__ = [
    "CATEGORIES",
    "Diagnostic",
    "RuleSpec",
    "SecurityVerdict",
    "Tables",
    "UnknownRule",
    "Verdict",
    "analyze",
    "analyze_ast",
    "classify",
    "list_rules",
    "load_tables",
    "verdict_for",
]
