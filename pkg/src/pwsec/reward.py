"""Layered RL reward: schema gate, analysis reward, fix reward.

Shape: a gate failure short-circuits to a hard penalty (no partial
credit); otherwise total = analysis score (max 20) + fix score (max 10,
floor -10).  Duplicate-issue penalties, residual-violation decay, and a
similarity guard close the known gaming paths: line flooding, fabricated
locations, keyword echo, analysis skipping, and delete-all fixes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .evaluation import match_issues, similarity
from .formats import SchemaError, SimplifiedAnalysis, analysis_from_dict, parse_model_output
from .rules import classify
from .syntax import SourceScript


@dataclass(frozen=True)
class RewardConfig:
    gate_penalty: float = -20.0
    fix_parse_penalty: float = -10.0
    analysis_max: float = 20.0
    fix_max: float = 10.0
    dup_line_penalty_per_extra: float = 0.5
    dup_text_threshold: float = 0.9
    residual_decay: float | None = None  # None: fix_max / (gt issue count + 1)
    similarity_guard_weight: float = 0.3  # in [0, 1]
    similarity_floor: float = 0.2
    fabrication_floor: float = -5.0  # floor for fabricated findings on a secure gt

    def __post_init__(self):
        if self.analysis_max <= 0 or self.fix_max <= 0:
            raise ValueError("reward maxima must be positive")
        if self.gate_penalty >= 0 or self.fix_parse_penalty >= 0:
            raise ValueError("penalties must be negative")
        if not 0.0 <= self.similarity_guard_weight <= 1.0:
            raise ValueError("similarity_guard_weight must be in [0, 1]")

    @classmethod
    def from_dict(cls, overrides: dict | None) -> "RewardConfig":
        return cls(**overrides) if overrides else cls()


@dataclass
class RewardBreakdown:
    gate: str  # "pass" or "fail:<Kind>"
    analysis_score: float | None
    fix_score: float | None
    total: float
    evidence: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "gate": self.gate,
            "analysis_score": self.analysis_score,
            "fix_score": self.fix_score,
            "total": self.total,
            "evidence": self.evidence,
        }


def schema_gate(raw_output: str) -> tuple[object | None, SchemaError | None]:
    """Pass returns the parsed ModelOutput; failure returns the SchemaError."""
    try:
        return parse_model_output(raw_output), None
    except SchemaError as exc:
        return None, exc


def _duplicate_units(pred: SimplifiedAnalysis, cfg: RewardConfig) -> int:
    """Count intra-rule duplicate units: repeated line numbers beyond the
    first, plus near-identical text pairs (similarity >= threshold)."""
    units = 0
    for entry in pred.entries:
        line_counts: dict[int, int] = {}
        for issue in entry.issues:
            line_counts[issue.start_line] = line_counts.get(issue.start_line, 0) + 1
        units += sum(c - 1 for c in line_counts.values())
        # Group identical texts first so flooding costs O(distinct^2), not O(n^2).
        text_counts: dict[str, int] = {}
        for issue in entry.issues:
            text_counts[issue.text] = text_counts.get(issue.text, 0) + 1
        texts = list(text_counts)
        for i, text in enumerate(texts):
            count = text_counts[text]
            units += count * (count - 1) // 2  # identical pairs
            for other in texts[i + 1:]:
                if similarity(text, other) >= cfg.dup_text_threshold:
                    units += count * text_counts[other]
    return units


def analysis_reward(
    pred: SimplifiedAnalysis,
    gt: SimplifiedAnalysis,
    cfg: RewardConfig | None = None,
) -> tuple[float, dict]:
    """Dual-matched F1 scaled to analysis_max, minus duplicate penalties.

    Secure ground truth: an empty prediction earns the maximum; fabricated
    findings earn zero base minus duplicate penalties, floored.
    """
    cfg = cfg or RewardConfig()
    dup_units = _duplicate_units(pred, cfg)
    dup_penalty = dup_units * cfg.dup_line_penalty_per_extra
    if gt.is_empty:
        if pred.is_empty:
            return cfg.analysis_max, {"secure_gt": True, "tp": 0, "fp": 0, "fn": 0, "f1": 1.0,
                                      "duplicate_units": 0}
        score = max(cfg.fabrication_floor, 0.0 - dup_penalty)
        return score, {
            "secure_gt": True,
            "tp": 0,
            "fp": len(pred.all_issues()),
            "fn": 0,
            "f1": 0.0,
            "duplicate_units": dup_units,
        }
    result = match_issues(pred, gt)
    base = result.f1 * cfg.analysis_max
    score = max(0.0, base - dup_penalty)
    return score, {
        "secure_gt": False,
        "tp": result.tp,
        "fp": result.fp,
        "fn": result.fn,
        "f1": result.f1,
        "duplicate_units": dup_units,
    }


def _fix_components(residuals: int, sim: float, gt_issue_count: int, cfg: RewardConfig) -> float:
    """Pure fix-score arithmetic for a parseable candidate.

    Below the similarity floor the similarity bonus is forfeited and the
    result halved, capping sub-floor fixes (e.g. wholesale deletion) at
    fix_max * (1 - guard_weight) / 2 regardless of residual similarity.
    """
    decay = cfg.residual_decay
    if decay is None:
        decay = cfg.fix_max / (gt_issue_count + 1)
    residual_component = max(0.0, cfg.fix_max - residuals * decay)
    if sim < cfg.similarity_floor:
        return residual_component * (1.0 - cfg.similarity_guard_weight) / 2.0
    return residual_component * (
        (1.0 - cfg.similarity_guard_weight) + cfg.similarity_guard_weight * sim
    )


def fix_reward(
    fixed: str | None,
    gt_fixed: str,
    gt_analysis: SimplifiedAnalysis,
    cfg: RewardConfig | None = None,
) -> tuple[float, dict]:
    """Parse guard, residual-violation decay, and a similarity guard.

    The similarity guard multiplies rather than adds, so it can never
    rescue a fix that still carries violations.
    """
    cfg = cfg or RewardConfig()
    if fixed is None or not fixed.strip():
        return cfg.fix_parse_penalty, {"parse_ok": False, "reason": "empty"}
    verdict = classify(SourceScript.from_text(fixed, path="<fix>"))
    if verdict.verdict.value == "Invalid":
        return cfg.fix_parse_penalty, {"parse_ok": False, "reason": "parse_error"}
    residuals = sum(1 for d in verdict.diagnostics if d.severity in (1, 2))
    sim = similarity(fixed, gt_fixed)
    score = _fix_components(residuals, sim, len(gt_analysis.all_issues()), cfg)
    return score, {"parse_ok": True, "residual_count": residuals, "similarity": sim}


def total_reward(
    raw_output: str,
    gt_analysis: SimplifiedAnalysis,
    gt_fixed: str,
    cfg: RewardConfig | None = None,
) -> RewardBreakdown:
    """Gate, then analysis + fix; deterministic and bounded in [-20, 30]."""
    cfg = cfg or RewardConfig()
    output, error = schema_gate(raw_output)
    if error is not None:
        return RewardBreakdown(
            gate=f"fail:{error.kind}",
            analysis_score=None,
            fix_score=None,
            total=cfg.gate_penalty,
            evidence={"gate_error": error.kind, "detail": error.detail},
        )
    a_score, a_evidence = analysis_reward(output.analysis, gt_analysis, cfg)
    f_score, f_evidence = fix_reward(output.fixed_script, gt_fixed, gt_analysis, cfg)
    return RewardBreakdown(
        gate="pass",
        analysis_score=a_score,
        fix_score=f_score,
        total=a_score + f_score,
        evidence={"analysis": a_evidence, "fix": f_evidence},
    )


# -- batch and serve transports ------------------------------------------------


def _gt_analysis_from_record(record: dict) -> SimplifiedAnalysis:
    gt = record["gt_analysis"]
    if isinstance(gt, str):
        gt = json.loads(gt)
    return analysis_from_dict(gt)


def score_record(record: dict, cfg: RewardConfig | None = None) -> dict:
    """Score one {id?, output, gt_analysis, gt_fixed, config?} record."""
    record_cfg = cfg or RewardConfig()
    if record.get("config"):
        record_cfg = replace(record_cfg, **record["config"])
    breakdown = total_reward(
        record["output"],
        _gt_analysis_from_record(record),
        record["gt_fixed"],
        record_cfg,
    )
    out = {"id": record.get("id")}
    out.update(breakdown.to_json_dict())
    return out


def score_batch_lines(lines, cfg: RewardConfig | None = None):
    """Score an iterable of JSON lines; yields one result dict per input."""
    for line in lines:
        line = line.strip()
        if not line:
            continue
        yield score_record(json.loads(line), cfg)


def serve(stdin, stdout, cfg: RewardConfig | None = None) -> None:
    """Request/response loop over newline-delimited JSON on stdio.

    Response line: {"id", "total", "gate", "analysis_score", "fix_score"};
    flushed per line so a driving process never stalls.
    """
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            scored = score_record(record, cfg)
            response = {
                "id": scored["id"],
                "total": scored["total"],
                "gate": scored["gate"],
                "analysis_score": scored["analysis_score"],
                "fix_score": scored["fix_score"],
            }
        except Exception as exc:  # malformed request: report, keep serving
            response = {"id": None, "error": f"{type(exc).__name__}: {exc}"}
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
