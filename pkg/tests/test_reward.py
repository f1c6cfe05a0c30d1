import json

import pytest

from pwsec.formats import (
    CANONICAL_ANALYSIS_MARKER,
    FIXED_MARKER,
    Issue,
    RuleEntry,
    SimplifiedAnalysis,
    to_simplified,
)
from pwsec.reward import (
    RewardConfig,
    analysis_reward,
    fix_reward,
    score_batch_lines,
    score_record,
    schema_gate,
    total_reward,
)
from pwsec.reward import _fix_components
from pwsec.rules import analyze
from pwsec.syntax import SourceScript

INSECURE_SCRIPT = '$greeting = "hello operator"\nWrite-Host $greeting\nWrite-Output "done"\n'
FIXED_SCRIPT = '$greeting = "hello operator"\nWrite-Output $greeting\nWrite-Output "done"\n'


def gt_analysis_for(code: str, name: str = "s.ps1") -> SimplifiedAnalysis:
    diags = [d for d in analyze(SourceScript.from_text(code, name)) if d.severity in (1, 2)]
    return to_simplified(diags, name)


def wrap(analysis: SimplifiedAnalysis, fixed: str) -> str:
    return f"{CANONICAL_ANALYSIS_MARKER}\n\n{analysis.to_json()}\n\n{FIXED_MARKER}\n{fixed}"


def entry(rule: str, issues: list[Issue]) -> RuleEntry:
    return RuleEntry(rule_name=rule, severity=1, suggestion="s", issues=tuple(issues))


def issue(line: int, text: str) -> Issue:
    return Issue(message="m", start_line=line, start_col=1, text=text)


GT = gt_analysis_for(INSECURE_SCRIPT)
PERFECT = wrap(GT, FIXED_SCRIPT)


# -- schema gate ------------------------------------------------------------------


def test_gate_passes_well_formed():
    output, error = schema_gate(PERFECT)
    assert error is None
    assert output.fixed_script == FIXED_SCRIPT


def test_gate_missing_analysis_json_fails():
    text = f"{CANONICAL_ANALYSIS_MARKER}\nnot json\n{FIXED_MARKER}\nGet-Date"
    breakdown = total_reward(text, GT, FIXED_SCRIPT)
    assert breakdown.gate == "fail:InvalidJson"
    assert breakdown.total == -20.0
    assert breakdown.analysis_score is None
    assert breakdown.fix_score is None


def test_gate_empty_issues_fails_minus_20():
    payload = GT.to_json_dict()
    payload["Analysis"][0]["Issues"] = []
    text = f"{CANONICAL_ANALYSIS_MARKER}\n{json.dumps(payload)}\n{FIXED_MARKER}\nGet-Date"
    breakdown = total_reward(text, GT, FIXED_SCRIPT)
    assert breakdown.gate == "fail:EmptyIssuesList"
    assert breakdown.total == -20.0


# -- reward constants ------------------------------------------------------------------


def test_perfect_output_scores_exactly_30():
    breakdown = total_reward(PERFECT, GT, FIXED_SCRIPT)
    assert breakdown.gate == "pass"
    assert breakdown.analysis_score == 20.0
    assert breakdown.fix_score == 10.0
    assert breakdown.total == 30.0


def test_unparseable_fix_scores_exactly_minus_10():
    score, evidence = fix_reward("function {", FIXED_SCRIPT, GT)
    assert score == -10.0
    assert not evidence["parse_ok"]


def test_empty_fix_scores_exactly_minus_10():
    assert fix_reward("", FIXED_SCRIPT, GT)[0] == -10.0
    assert fix_reward("   \n", FIXED_SCRIPT, GT)[0] == -10.0
    assert fix_reward(None, FIXED_SCRIPT, GT)[0] == -10.0


def test_perfect_analysis_plus_broken_fix_is_10():
    output = wrap(GT, "function {")
    breakdown = total_reward(output, GT, FIXED_SCRIPT)
    assert breakdown.analysis_score == 20.0
    assert breakdown.fix_score == -10.0
    assert breakdown.total == 10.0


# -- analysis reward -------------------------------------------------------------------


def test_analysis_half_f1_scales_to_10():
    gt = SimplifiedAnalysis(
        "s.ps1", (entry("RuleA", [issue(1, "Write-Host $a"), issue(2, "Write-Host $b")]),)
    )
    pred = SimplifiedAnalysis(
        "s.ps1", (entry("RuleA", [issue(1, "Write-Host $a"), issue(9, "bogus text")]),)
    )
    score, evidence = analysis_reward(pred, gt)
    # tp=1, fp=1, fn=1 -> precision=recall=f1=0.5 -> 10.0; no duplicates.
    assert evidence["f1"] == pytest.approx(0.5)
    assert score == pytest.approx(10.0)


def test_secure_gt_empty_pred_earns_max():
    empty = SimplifiedAnalysis("s.ps1")
    assert analysis_reward(empty, empty)[0] == 20.0


def test_secure_gt_fabrication_scores_at_most_zero_with_floor():
    empty = SimplifiedAnalysis("s.ps1")
    fabricated = SimplifiedAnalysis(
        "s.ps1", (entry("RuleA", [issue(i, "same text") for i in range(1, 40)]),)
    )
    score, _ = analysis_reward(fabricated, empty)
    assert score == -5.0  # dup penalties floored at the documented negative floor
    single = SimplifiedAnalysis("s.ps1", (entry("RuleA", [issue(1, "x")]),))
    assert analysis_reward(single, empty)[0] == 0.0


def test_duplicate_line_penalty_applies():
    gt = SimplifiedAnalysis("s.ps1", (entry("RuleA", [issue(1, "Write-Host $a")]),))
    pred = SimplifiedAnalysis(
        "s.ps1",
        (entry("RuleA", [issue(1, "Write-Host $a"), issue(1, "completely different")]),),
    )
    score, evidence = analysis_reward(pred, gt)
    # f1 = 2*(0.5*1)/1.5 = 2/3 -> 13.33 base, one repeated line -> -0.5
    assert evidence["duplicate_units"] == 1
    assert score == pytest.approx(2 / 1.5 * 10 - 0.5)


def test_analysis_reward_floored_at_zero_for_insecure_gt():
    gt = SimplifiedAnalysis("s.ps1", (entry("RuleA", [issue(1, "Write-Host $a")]),))
    pred = SimplifiedAnalysis(
        "s.ps1", (entry("RuleB", [issue(5, "same") for _ in range(30)]),)
    )
    assert analysis_reward(pred, gt)[0] == 0.0


def test_monotonicity_adding_fp_never_increases():
    gt = SimplifiedAnalysis(
        "s.ps1", (entry("RuleA", [issue(1, "Write-Host $a"), issue(2, "Write-Host $b")]),)
    )
    base_issues = [issue(1, "Write-Host $a")]
    prev = None
    for extra in range(6):
        issues = base_issues + [issue(10 + i, f"junk finding {i}") for i in range(extra)]
        pred = SimplifiedAnalysis("s.ps1", (entry("RuleA", issues),))
        score, _ = analysis_reward(pred, gt)
        if prev is not None:
            assert score <= prev + 1e-12
        prev = score


# -- fix reward -------------------------------------------------------------------------


def test_fix_residual_decay_monotone():
    cfg = RewardConfig()
    prev = None
    for residuals in range(6):
        score = _fix_components(residuals, 1.0, gt_issue_count=2, cfg=cfg)
        if prev is not None:
            assert score <= prev
        prev = score
    assert _fix_components(0, 1.0, 2, cfg) == 10.0
    assert _fix_components(3, 1.0, 2, cfg) == 0.0  # K+1 residuals exhaust the budget


def test_fix_residuals_reduce_reward_end_to_end():
    clean, _ = fix_reward(FIXED_SCRIPT, FIXED_SCRIPT, GT)
    still_bad, evidence = fix_reward(INSECURE_SCRIPT, FIXED_SCRIPT, GT)
    assert evidence["residual_count"] == 1
    assert still_bad < clean


def test_delete_all_fix_scores_far_below_honest():
    honest, _ = fix_reward(FIXED_SCRIPT, FIXED_SCRIPT, GT)
    delete_all, evidence = fix_reward("# done\n$null\n", FIXED_SCRIPT, GT)
    assert honest == pytest.approx(10.0)
    assert evidence["similarity"] < 0.2
    assert delete_all <= 0.35 * honest
    assert delete_all < honest


def test_similarity_guard_multiplies_never_rescues():
    # A fix with residuals scores 0 from the residual component; no
    # similarity value can lift it above a clean fix.
    cfg = RewardConfig()
    assert _fix_components(3, 1.0, 2, cfg) == 0.0
    assert _fix_components(3, 0.0, 2, cfg) == 0.0


def test_fix_reward_bounds():
    assert -10.0 <= fix_reward("Get-Date", FIXED_SCRIPT, GT)[0] <= 10.0
    assert -10.0 <= fix_reward("function {", FIXED_SCRIPT, GT)[0] <= 10.0


# -- anti-hack suite (one per observed exploit) -------------------------------------------


def honest_single_issue_output() -> str:
    return wrap(GT, FIXED_SCRIPT)


def test_hack_1_hallucinated_locations_score_zero_tp():
    wrong_lines = SimplifiedAnalysis(
        "s.ps1",
        (entry("PSAvoidUsingWriteHost", [issue(40, "Write-Host $greeting")]),),
    )
    hack = total_reward(wrap(wrong_lines, FIXED_SCRIPT), GT, FIXED_SCRIPT)
    honest = total_reward(honest_single_issue_output(), GT, FIXED_SCRIPT)
    assert hack.evidence["analysis"]["tp"] == 0
    assert hack.total < honest.total


def test_hack_2_keyword_echo_earns_no_issue_credit():
    echo = SimplifiedAnalysis(
        "s.ps1",
        (
            entry(
                "PSAvoidUsingWriteHost",
                [issue(1, "Write-Host"), issue(3, "Write-Host")],  # echoes, wrong lines
            ),
        ),
    )
    hack = total_reward(wrap(echo, FIXED_SCRIPT), GT, FIXED_SCRIPT)
    honest = total_reward(honest_single_issue_output(), GT, FIXED_SCRIPT)
    assert hack.evidence["analysis"]["tp"] == 0
    assert hack.total < honest.total


def test_hack_3_delete_all_scores_below_honest_fix():
    hack = total_reward(wrap(GT, "# gone\n$null\n"), GT, FIXED_SCRIPT)
    honest = total_reward(honest_single_issue_output(), GT, FIXED_SCRIPT)
    assert hack.total < honest.total
    assert hack.fix_score <= 0.35 * honest.fix_score


def test_hack_4_skipping_analysis_gated_at_minus_20():
    only_fix = f"{FIXED_MARKER}\n{FIXED_SCRIPT}"
    hack = total_reward(only_fix, GT, FIXED_SCRIPT)
    honest = total_reward(honest_single_issue_output(), GT, FIXED_SCRIPT)
    assert hack.gate.startswith("fail:")
    assert hack.total == -20.0
    assert hack.total < honest.total


def test_hack_5_line_flooding_scores_below_single_honest_issue():
    flood = SimplifiedAnalysis(
        "s.ps1",
        (
            entry(
                "PSAvoidUsingWriteHost",
                [issue(line, "Write-Host $greeting") for line in range(1, 1301)],
            ),
        ),
    )
    hack = total_reward(wrap(flood, FIXED_SCRIPT), GT, FIXED_SCRIPT)
    honest = total_reward(honest_single_issue_output(), GT, FIXED_SCRIPT)
    assert hack.analysis_score == 0.0
    assert hack.analysis_score < honest.analysis_score
    assert hack.total < honest.total


# -- bounds, determinism, transports -----------------------------------------------------


def test_total_reward_bounded():
    outputs = [
        PERFECT,
        "garbage with no sections",
        wrap(GT, "function {"),
        wrap(SimplifiedAnalysis("s.ps1"), FIXED_SCRIPT),
    ]
    for raw in outputs:
        breakdown = total_reward(raw, GT, FIXED_SCRIPT)
        assert -20.0 <= breakdown.total <= 30.0


def test_total_reward_deterministic():
    first = total_reward(PERFECT, GT, FIXED_SCRIPT)
    second = total_reward(PERFECT, GT, FIXED_SCRIPT)
    assert first.to_json_dict() == second.to_json_dict()


def test_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(gate_penalty=5.0)
    with pytest.raises(ValueError):
        RewardConfig(analysis_max=0)
    with pytest.raises(ValueError):
        RewardConfig(similarity_guard_weight=1.5)


def test_score_record_with_config_override():
    record = {
        "id": 7,
        "output": "no markers here",
        "gt_analysis": GT.to_json_dict(),
        "gt_fixed": FIXED_SCRIPT,
        "config": {"gate_penalty": -40.0},
    }
    result = score_record(record)
    assert result["id"] == 7
    assert result["total"] == -40.0


def test_score_batch_lines_order_preserved():
    records = [
        {"id": i, "output": PERFECT, "gt_analysis": GT.to_json_dict(), "gt_fixed": FIXED_SCRIPT}
        for i in range(3)
    ]
    lines = [json.dumps(r) for r in records]
    results = list(score_batch_lines(lines))
    assert [r["id"] for r in results] == [0, 1, 2]
    assert all(r["total"] == 30.0 for r in results)
