"""Rule metadata, diagnostics, and the three-way security verdict."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

CATEGORIES = (
    "Code Style & Readability",
    "Logic & Semantic Correctness",
    "Scope & Global State",
    "User Interaction & Change Confirmation",
    "Platform/API Usage & Compatibility",
    "Credentials & Secrets Management",
)

SEVERITY_INFORMATIONAL = 0
SEVERITY_WARNING = 1
SEVERITY_ERROR = 2
SEVERITY_PARSE_ERROR = 3


class UnknownRule(KeyError):
    """Requested rule_id is not part of the shipped rule set."""


@dataclass(frozen=True)
class RuleSpec:
    rule_id: str
    category: str
    severity: int  # 0-2 for checkable rules; 3 is reserved for parse failure
    kind: str  # presence | absence | semantic
    description: str
    suggested_fix_template: str
    config: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(frozen=True)
class Diagnostic:
    file_name: str
    rule_id: str
    severity: int
    line_span: tuple[int, int, int, int]  # start_line, start_col, end_line, end_col
    description: str
    suggested_fix: str
    code_snippet: str

    def to_json_dict(self) -> dict:
        """Serialized field set and order match the diagnostic export schema."""
        return {
            "file_name": self.file_name,
            "rule_id": self.rule_id,
            "severity": self.severity,
            "line_span": list(self.line_span),
            "description": self.description,
            "suggested_fix": self.suggested_fix,
            "code_snippet": self.code_snippet,
        }

    @property
    def start_line(self) -> int:
        return self.line_span[0]

    @property
    def start_col(self) -> int:
        return self.line_span[1]


class Verdict(str, Enum):
    SECURE = "Secure"
    INSECURE = "Insecure"
    INVALID = "Invalid"


@dataclass
class SecurityVerdict:
    verdict: Verdict
    diagnostics: list[Diagnostic]


def verdict_for(diagnostics: list[Diagnostic], has_parse_errors: bool) -> Verdict:
    """Secure: nothing above severity 0.  Insecure: any warning/error.
    Invalid: the script did not parse."""
    if has_parse_errors:
        return Verdict.INVALID
    if any(d.severity in (SEVERITY_WARNING, SEVERITY_ERROR) for d in diagnostics):
        return Verdict.INSECURE
    return Verdict.SECURE
