"""Serialized formats: simplified analysis JSON, two-section model output,
prompt templates, and training-triplet records.

Field names are load-bearing: the simplified schema uses the exact keys
"FileName", "Analysis", "RuleName", "Severity", "Script Repair Suggestion",
"Issues", "Message", "StartLineNumber", "StartColumnNumber", "Text".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .rules.model import Diagnostic

TEMPLATE_DIR = Path(__file__).parent / "templates"

ANALYSIS_MARKERS = ("***Analysis***", "***Corresponding analysis result***")
CANONICAL_ANALYSIS_MARKER = "***Corresponding analysis result***"
FIXED_MARKER = "***Fixed Script***"

TASKS = ("CodeGen", "CodeAnalysis", "CodeFix")
VALID_MODES = {"CodeGen": ("M1",), "CodeAnalysis": ("M1", "M2", "M3"), "CodeFix": ("M1", "M2", "M3", "M4")}


class SchemaError(ValueError):
    """Structurally invalid model output; ``kind`` is machine-readable."""

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind  # MissingSection | InvalidJson | EmptyIssuesList | DuplicateRule
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


class InvalidMode(ValueError):
    pass


class MissingInput(ValueError):
    pass


@dataclass(frozen=True)
class Issue:
    message: str
    start_line: int
    start_col: int
    text: str

    def to_json_dict(self) -> dict:
        return {
            "Message": self.message,
            "StartLineNumber": self.start_line,
            "StartColumnNumber": self.start_col,
            "Text": self.text,
        }


@dataclass(frozen=True)
class RuleEntry:
    rule_name: str
    severity: int
    suggestion: str
    issues: tuple[Issue, ...]

    def to_json_dict(self) -> dict:
        return {
            "RuleName": self.rule_name,
            "Severity": self.severity,
            "Script Repair Suggestion": self.suggestion,
            "Issues": [i.to_json_dict() for i in self.issues],
        }


@dataclass(frozen=True)
class SimplifiedAnalysis:
    file_name: str
    entries: tuple[RuleEntry, ...] = ()

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def rule_names(self) -> list[str]:
        return [e.rule_name for e in self.entries]

    def all_issues(self) -> list[tuple[str, Issue]]:
        return [(e.rule_name, i) for e in self.entries for i in e.issues]

    def to_json_dict(self) -> dict:
        return {"FileName": self.file_name, "Analysis": [e.to_json_dict() for e in self.entries]}

    def to_json(self, indent: int | None = 4) -> str:
        return json.dumps(self.to_json_dict(), indent=indent, ensure_ascii=False)


@dataclass(frozen=True)
class ModelOutput:
    analysis: SimplifiedAnalysis
    fixed_script: str
    markers_found: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass(frozen=True)
class TrainingTriplet:
    system_prompt: str
    user_prompt: str
    target: str

    def to_json_dict(self) -> dict:
        return {"system": self.system_prompt, "user": self.user_prompt, "target": self.target}


# -- simplified analysis ------------------------------------------------------


def to_simplified(diags: list[Diagnostic], file_name: str) -> SimplifiedAnalysis:
    """Group diagnostics by rule; issues keep (line, col) order within a rule."""
    by_rule: dict[str, list[Diagnostic]] = {}
    for d in sorted(diags, key=lambda d: (d.line_span[0], d.line_span[1], d.rule_id)):
        by_rule.setdefault(d.rule_id, []).append(d)
    entries = []
    for rule_id, group in by_rule.items():
        entries.append(
            RuleEntry(
                rule_name=rule_id,
                severity=group[0].severity,
                suggestion=group[0].suggested_fix,
                issues=tuple(
                    Issue(
                        message=d.description,
                        start_line=d.line_span[0],
                        start_col=d.line_span[1],
                        text=d.code_snippet,
                    )
                    for d in group
                ),
            )
        )
    return SimplifiedAnalysis(file_name=file_name, entries=tuple(entries))


def _require(condition: bool, kind: str, detail: str) -> None:
    if not condition:
        raise SchemaError(kind, detail)


def analysis_from_dict(obj: object) -> SimplifiedAnalysis:
    """Validate a parsed JSON object against the simplified schema."""
    _require(isinstance(obj, dict), "InvalidJson", "analysis is not a JSON object")
    assert isinstance(obj, dict)
    _require("FileName" in obj, "InvalidJson", "missing FileName")
    _require(isinstance(obj["FileName"], str), "InvalidJson", "FileName must be a string")
    _require("Analysis" in obj, "InvalidJson", "missing Analysis")
    _require(isinstance(obj["Analysis"], list), "InvalidJson", "Analysis must be a list")
    entries = []
    seen_rules: set[str] = set()
    for entry in obj["Analysis"]:
        _require(isinstance(entry, dict), "InvalidJson", "rule entry is not an object")
        for key in ("RuleName", "Severity", "Script Repair Suggestion", "Issues"):
            _require(key in entry, "InvalidJson", f"rule entry missing {key!r}")
        rule = entry["RuleName"]
        _require(isinstance(rule, str) and bool(rule), "InvalidJson", "RuleName must be a nonempty string")
        if rule in seen_rules:
            raise SchemaError("DuplicateRule", rule)
        seen_rules.add(rule)
        _require(
            isinstance(entry["Severity"], int) and not isinstance(entry["Severity"], bool),
            "InvalidJson",
            f"Severity of {rule} must be an integer",
        )
        _require(
            isinstance(entry["Script Repair Suggestion"], str),
            "InvalidJson",
            f"Script Repair Suggestion of {rule} must be a string",
        )
        issues_raw = entry["Issues"]
        _require(isinstance(issues_raw, list), "InvalidJson", f"Issues of {rule} must be a list")
        if not issues_raw:
            raise SchemaError("EmptyIssuesList", rule)
        issues = []
        for issue in issues_raw:
            _require(isinstance(issue, dict), "InvalidJson", f"issue of {rule} is not an object")
            for key in ("Message", "StartLineNumber", "StartColumnNumber", "Text"):
                _require(key in issue, "InvalidJson", f"issue of {rule} missing {key!r}")
            _require(isinstance(issue["Message"], str), "InvalidJson", "Message must be a string")
            _require(isinstance(issue["Text"], str), "InvalidJson", "Text must be a string")
            for key in ("StartLineNumber", "StartColumnNumber"):
                value = issue[key]
                _require(
                    isinstance(value, int) and not isinstance(value, bool) and value >= 1,
                    "InvalidJson",
                    f"{key} must be an integer >= 1",
                )
            issues.append(
                Issue(
                    message=issue["Message"],
                    start_line=issue["StartLineNumber"],
                    start_col=issue["StartColumnNumber"],
                    text=issue["Text"],
                )
            )
        entries.append(
            RuleEntry(
                rule_name=rule,
                severity=entry["Severity"],
                suggestion=entry["Script Repair Suggestion"],
                issues=tuple(issues),
            )
        )
    return SimplifiedAnalysis(file_name=obj["FileName"], entries=tuple(entries))


# -- model output -------------------------------------------------------------


def parse_model_output(text: str) -> ModelOutput:
    """Split a two-section response and validate the analysis JSON.

    Accepts either analysis marker on input; raises SchemaError with a
    machine-readable kind on any structural problem.
    """
    analysis_marker = None
    analysis_pos = -1
    for marker in ANALYSIS_MARKERS:
        pos = text.find(marker)
        if pos != -1 and (analysis_pos == -1 or pos < analysis_pos):
            analysis_marker = marker
            analysis_pos = pos
    if analysis_marker is None:
        raise SchemaError("MissingSection", "Analysis")
    after_analysis = analysis_pos + len(analysis_marker)
    fixed_pos = text.find(FIXED_MARKER, after_analysis)
    if fixed_pos == -1:
        raise SchemaError("MissingSection", "FixedScript")

    json_region = text[after_analysis:fixed_pos].strip()
    if not json_region.startswith("{"):
        raise SchemaError("InvalidJson", "analysis section does not start with a JSON object")
    try:
        obj, end = json.JSONDecoder().raw_decode(json_region)
    except json.JSONDecodeError as exc:
        raise SchemaError("InvalidJson", f"position {exc.pos}: {exc.msg}") from exc
    trailing = json_region[end:].strip()
    if trailing:
        # The analysis section is the maximal balanced object; prose after it is rejected.
        raise SchemaError("InvalidJson", f"trailing content after analysis JSON: {trailing[:40]!r}")
    analysis = analysis_from_dict(obj)

    fixed = text[fixed_pos + len(FIXED_MARKER):]
    # Exactly one leading newline belongs to the marker; the rest is script.
    if fixed.startswith("\r\n"):
        fixed = fixed[2:]
    elif fixed.startswith("\n"):
        fixed = fixed[1:]
    return ModelOutput(
        analysis=analysis,
        fixed_script=fixed,
        markers_found={"analysis": analysis_marker, "fixed": FIXED_MARKER},
    )


# -- prompt templates ----------------------------------------------------------


def _template(name: str) -> str:
    return (TEMPLATE_DIR / name).read_text(encoding="utf-8")


def _fill(template: str, values: dict[str, str]) -> str:
    out = template
    for key, value in values.items():
        out = out.replace("{{" + key + "}}", value)
    return out


def _analysis_json_for_prompt(analysis: SimplifiedAnalysis | dict, with_suggestions: bool,
                              custom_suggestion: str | None = None) -> str:
    if isinstance(analysis, SimplifiedAnalysis):
        obj = analysis.to_json_dict()
    else:
        obj = json.loads(json.dumps(analysis))  # deep copy
    for entry in obj.get("Analysis", []):
        if custom_suggestion is not None:
            entry["Script Repair Suggestion"] = custom_suggestion
        elif not with_suggestions:
            entry.pop("Script Repair Suggestion", None)
    return json.dumps(obj, indent=4, ensure_ascii=False)


def render_prompt(task: str, mode: str, inputs: dict) -> str:
    """Render the prompt for (task, mode); byte-stable for fixed inputs.

    inputs keys by task:
      CodeGen:      prompt
      CodeAnalysis: script; M2 also rule_names (list), M3 also rule_docs (dict)
      CodeFix:      script; M2-M4 also analysis; M4 also custom_suggestion
    """
    if task not in TASKS:
        raise InvalidMode(f"unknown task {task!r}")
    if mode not in VALID_MODES[task]:
        raise InvalidMode(f"mode {mode!r} invalid for task {task}")

    if task == "CodeGen":
        if "prompt" not in inputs:
            raise MissingInput("CodeGen requires 'prompt'")
        return _fill(_template("codegen.txt"), {"prompt": inputs["prompt"]})

    if task == "CodeAnalysis":
        if "script" not in inputs:
            raise MissingInput("CodeAnalysis requires 'script'")
        context, extras = "", ""
        if mode == "M2":
            if "rule_names" not in inputs:
                raise MissingInput("CodeAnalysis M2 requires 'rule_names'")
            context = _template("codeanalysis_m2_context.txt")
            extras = _fill(
                _template("codeanalysis_m2_inputs.txt"),
                {"rule_names": json.dumps(list(inputs["rule_names"]), indent=4)},
            )
        elif mode == "M3":
            if "rule_docs" not in inputs:
                raise MissingInput("CodeAnalysis M3 requires 'rule_docs'")
            context = _template("codeanalysis_m3_context.txt")
            extras = _fill(
                _template("codeanalysis_m3_inputs.txt"),
                {"rule_docs": json.dumps(dict(inputs["rule_docs"]), indent=4, ensure_ascii=False)},
            )
        return _fill(
            _template("codeanalysis.txt"),
            {"script": inputs["script"], "mode_context": context, "mode_inputs": extras},
        )

    # CodeFix
    if "script" not in inputs:
        raise MissingInput("CodeFix requires 'script'")
    if mode == "M1":
        return _fill(
            _template("codefix.txt"),
            {"script": inputs["script"], "analysis_schema": "", "analysis_section": ""},
        )
    if "analysis" not in inputs:
        raise MissingInput(f"CodeFix {mode} requires 'analysis'")
    if mode == "M2":
        schema = _template("codefix_schema_nosuggestion.txt")
        analysis_json = _analysis_json_for_prompt(inputs["analysis"], with_suggestions=False)
    elif mode == "M3":
        schema = _template("codefix_schema.txt")
        analysis_json = _analysis_json_for_prompt(inputs["analysis"], with_suggestions=True)
    else:  # M4: caller-provided replacement suggestion text
        if "custom_suggestion" not in inputs:
            raise MissingInput("CodeFix M4 requires 'custom_suggestion'")
        schema = _template("codefix_schema.txt")
        analysis_json = _analysis_json_for_prompt(
            inputs["analysis"], with_suggestions=True, custom_suggestion=inputs["custom_suggestion"]
        )
    section = _fill(_template("codefix_analysis_section.txt"), {"analysis": analysis_json})
    return _fill(
        _template("codefix.txt"),
        {"script": inputs["script"], "analysis_schema": schema, "analysis_section": section},
    )


# -- training triplets ----------------------------------------------------------


def training_system_prompt() -> str:
    return _template("training_system.txt").rstrip("\n")


def training_user_prompt(script_text: str) -> str:
    return _fill(_template("training_user.txt"), {"script": script_text}).rstrip("\n")


def emit_triplet(script_text: str, analysis: SimplifiedAnalysis, fixed_text: str) -> TrainingTriplet:
    """Build one training record; the target round-trips through parse_model_output."""
    target = (
        f"{CANONICAL_ANALYSIS_MARKER}\n\n{analysis.to_json(indent=4)}\n\n{FIXED_MARKER}\n{fixed_text}"
    )
    return TrainingTriplet(
        system_prompt=training_system_prompt(),
        user_prompt=training_user_prompt(script_text),
        target=target,
    )
