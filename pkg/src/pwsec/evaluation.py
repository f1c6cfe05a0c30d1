"""Benchmark metrics: binary security accuracy, Succ@1, dual-matched F1,
fix success rate, and generated-script security rate.

Issue matching is rule-scoped: a predicted issue can only match a
ground-truth issue under the same RuleName (assumption recorded in the
design notes), with an exact StartLineNumber and text similarity >= 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from difflib import SequenceMatcher

from .formats import Issue, SimplifiedAnalysis
from .rules import classify
from .syntax import SourceScript

SIMILARITY_THRESHOLD = 0.5


class LengthMismatch(ValueError):
    pass


class EmptyBatch(ValueError):
    pass


def similarity(a: str, b: str) -> float:
    """Gestalt (Ratcliff-Obershelp) ratio over characters, in [0, 1].

    No junk or popularity heuristics; two empty strings score 1.0.
    """
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


@dataclass
class MatchResult:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    precision: float = 0.0
    recall: float = 0.0
    f1: float = 0.0
    matched_pairs: list[tuple[tuple[str, Issue], tuple[str, Issue], float]] = field(
        default_factory=list
    )


def _f1(precision: float, recall: float) -> float:
    if precision == 0 and recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _counts_to_result(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall, _f1(precision, recall)


def match_issues(pred: SimplifiedAnalysis, gt: SimplifiedAnalysis) -> MatchResult:
    """Greedy one-to-one matching of predicted vs ground-truth issues.

    A pair is eligible iff RuleName and StartLineNumber agree exactly and
    similarity(Text, Text) >= 0.5.  Pairs are taken in descending
    similarity; ties break on lower gt line, then lexicographic rule,
    then pred/gt input order (deterministic).
    """
    pred_issues = pred.all_issues()
    gt_issues = gt.all_issues()
    candidates = []
    for pi, (p_rule, p_issue) in enumerate(pred_issues):
        for gi, (g_rule, g_issue) in enumerate(gt_issues):
            if p_rule != g_rule or p_issue.start_line != g_issue.start_line:
                continue
            sim = similarity(p_issue.text, g_issue.text)
            if sim >= SIMILARITY_THRESHOLD:
                candidates.append((-sim, g_issue.start_line, g_rule, pi, gi, sim))
    candidates.sort()
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    result = MatchResult()
    for _neg_sim, _line, _rule, pi, gi, sim in candidates:
        if pi in used_pred or gi in used_gt:
            continue
        used_pred.add(pi)
        used_gt.add(gi)
        result.matched_pairs.append((pred_issues[pi], gt_issues[gi], sim))
    result.tp = len(result.matched_pairs)
    result.fp = len(pred_issues) - result.tp
    result.fn = len(gt_issues) - result.tp
    result.precision, result.recall, result.f1 = _counts_to_result(
        result.tp, result.fp, result.fn
    )
    return result


@dataclass
class EvalReport:
    is_secure_accuracy: float | None = None
    succ1_rule: float | None = None
    succ1_issue: float | None = None
    rule_f1: float | None = None
    issue_f1: float | None = None
    fsuc_rate: float | None = None
    s_rate: float | None = None
    per_rule: dict[str, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "is_secure_accuracy": self.is_secure_accuracy,
            "succ1_rule": self.succ1_rule,
            "succ1_issue": self.succ1_issue,
            "rule_f1": self.rule_f1,
            "issue_f1": self.issue_f1,
            "fsuc_rate": self.fsuc_rate,
            "s_rate": self.s_rate,
            "per_rule": dict(sorted(self.per_rule.items())),
        }

    def to_text_table(self) -> str:
        rows = [
            ("Is_secure Accuracy (%)", self.is_secure_accuracy),
            ("Success@1_Rule (%)", self.succ1_rule),
            ("Success@1_Issue (%)", self.succ1_issue),
            ("Rule-level Identification F1 (%)", self.rule_f1),
            ("Issue-level Localization F1 (%)", self.issue_f1),
            ("Fix Success Rate (%)", self.fsuc_rate),
            ("Security Compliance Rate (%)", self.s_rate),
        ]
        width = max(len(r[0]) for r in rows)
        lines = [
            f"{label:<{width}}  {value:.2f}" for label, value in rows if value is not None
        ]
        if self.per_rule:
            lines.append("")
            lines.append("Per-rule match rate (%)")
            rule_width = max(len(r) for r in self.per_rule)
            for rule, rate in sorted(self.per_rule.items()):
                lines.append(f"  {rule:<{rule_width}}  {rate:.2f}")
        return "\n".join(lines)


def _rule_set_f1(pred: SimplifiedAnalysis, gt: SimplifiedAnalysis) -> tuple[int, int, int]:
    pred_rules = set(pred.rule_names())
    gt_rules = set(gt.rule_names())
    tp = len(pred_rules & gt_rules)
    return tp, len(pred_rules) - tp, len(gt_rules) - tp


def score_analysis(
    pairs: list[tuple[SimplifiedAnalysis, SimplifiedAnalysis]],
    rule_aggregation: str = "macro",
    issue_aggregation: str = "pooled",
) -> EvalReport:
    """Score (prediction, ground truth) pairs.

    Succ@1 and rule F1 are computed over insecure-gt scripts only (there
    is nothing to find on secure ones).  Empty denominators score 100 by
    vacuous truth.  rule_aggregation: "macro" averages per-script F1,
    "pooled" computes micro-F1 over summed counts; issue_aggregation the
    same for issue-level counts.
    """
    if rule_aggregation not in ("macro", "pooled"):
        raise ValueError(f"unknown rule_aggregation {rule_aggregation!r}")
    if issue_aggregation not in ("macro", "pooled"):
        raise ValueError(f"unknown issue_aggregation {issue_aggregation!r}")
    if not pairs:
        raise EmptyBatch("no (pred, gt) pairs to score")

    report = EvalReport()
    n = len(pairs)
    report.is_secure_accuracy = (
        100.0 * sum(1 for p, g in pairs if p.is_empty == g.is_empty) / n
    )

    insecure = [(p, g) for p, g in pairs if not g.is_empty]
    match_results = [match_issues(p, g) for p, g in insecure]

    if insecure:
        report.succ1_rule = (
            100.0
            * sum(1 for p, g in insecure if set(p.rule_names()) & set(g.rule_names()))
            / len(insecure)
        )
        report.succ1_issue = (
            100.0 * sum(1 for m in match_results if m.tp >= 1) / len(insecure)
        )
    else:
        report.succ1_rule = 100.0
        report.succ1_issue = 100.0

    rule_counts = [_rule_set_f1(p, g) for p, g in insecure]
    if rule_aggregation == "macro":
        if rule_counts:
            report.rule_f1 = 100.0 * sum(
                _counts_to_result(tp, fp, fn)[2] for tp, fp, fn in rule_counts
            ) / len(rule_counts)
        else:
            report.rule_f1 = 100.0
    else:
        tp = sum(c[0] for c in rule_counts)
        fp = sum(c[1] for c in rule_counts)
        fn = sum(c[2] for c in rule_counts)
        report.rule_f1 = 100.0 * (_counts_to_result(tp, fp, fn)[2] if tp + fp + fn else 1.0)

    issue_counts = [(m.tp, m.fp, m.fn) for m in match_results]
    # Fabricated issues on secure-gt scripts still pool as false positives.
    secure_fp = sum(len(p.all_issues()) for p, g in pairs if g.is_empty)
    if issue_aggregation == "pooled":
        tp = sum(c[0] for c in issue_counts)
        fp = sum(c[1] for c in issue_counts) + secure_fp
        fn = sum(c[2] for c in issue_counts)
        report.issue_f1 = 100.0 * (_counts_to_result(tp, fp, fn)[2] if tp + fp + fn else 1.0)
    else:
        per_script = [_counts_to_result(tp, fp, fn)[2] for tp, fp, fn in issue_counts]
        report.issue_f1 = 100.0 * (sum(per_script) / len(per_script) if per_script else 1.0)

    # Per-rule match rate: fraction of gt issues of each rule that were matched.
    totals: dict[str, int] = {}
    matched: dict[str, int] = {}
    for (p, g), m in zip(insecure, match_results):
        for rule, _issue in g.all_issues():
            totals[rule] = totals.get(rule, 0) + 1
        for (_p_rule, _pi), (g_rule, _gi), _sim in m.matched_pairs:
            matched[g_rule] = matched.get(g_rule, 0) + 1
    report.per_rule = {
        rule: 100.0 * matched.get(rule, 0) / total for rule, total in totals.items()
    }
    return report


def _passes_security_checks(text: str, path: str = "<candidate>") -> bool:
    verdict = classify(SourceScript.from_text(text, path=path))
    return verdict.verdict.value == "Secure"


def fsuc_rate(fixed_scripts: list[tuple[str, str]]) -> tuple[float, dict[str, bool]]:
    """Fix success rate: a repair succeeds iff re-analysis is fully clean
    (no warning/error findings, no parse errors).

    Returns (rate, per-script verdicts).  An empty batch rates 0.0.
    """
    verdicts = {
        script_id: _passes_security_checks(text, path=script_id)
        for script_id, text in fixed_scripts
    }
    if not verdicts:
        return 0.0, {}
    rate = 100.0 * sum(verdicts.values()) / len(verdicts)
    return rate, verdicts


def s_rate(generated: list[str]) -> float:
    """Security compliance rate for generated scripts; same pass condition
    as fsuc_rate."""
    if not generated:
        raise EmptyBatch("security rate over an empty batch is undefined")
    passed = sum(1 for text in generated if _passes_security_checks(text))
    return 100.0 * passed / len(generated)
