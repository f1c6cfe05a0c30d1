import pytest

from pwsec.rules import (
    CATEGORIES,
    UnknownRule,
    Verdict,
    analyze,
    classify,
    list_rules,
    verdict_for,
)
from pwsec.rules.model import Diagnostic
from pwsec.syntax import SourceScript


def diags(code: str, rules=None):
    return analyze(SourceScript.from_text(code, "t.ps1"), rules=rules)


def rule_ids(code: str) -> list[str]:
    return [d.rule_id for d in diags(code)]


# -- rule set shape -----------------------------------------------------------


def test_rule_count_is_22():
    assert len(list_rules()) == 22


def test_rule_ids_unique_and_categories_valid():
    rules = list_rules()
    ids = [r.rule_id for r in rules]
    assert len(set(ids)) == len(ids)
    for r in rules:
        assert r.category in CATEGORIES
        assert r.severity in (0, 1, 2)
        assert r.kind in ("presence", "absence", "semantic")


def test_writehost_category():
    by_id = {r.rule_id: r for r in list_rules()}
    assert by_id["PSAvoidUsingWriteHost"].category == "Code Style & Readability"


def test_list_rules_stable_order():
    assert [r.rule_id for r in list_rules()] == [r.rule_id for r in list_rules()]


def test_unknown_rule_rejected():
    with pytest.raises(UnknownRule):
        diags("Write-Host 1", rules=["PSNotARule"])


def test_rule_subset_selection():
    found = diags("gci\nWrite-Host 1", rules=["PSAvoidUsingWriteHost"])
    assert [d.rule_id for d in found] == ["PSAvoidUsingWriteHost"]


# -- spec'd examples ----------------------------------------------------------


def test_alias_example_two_diagnostics():
    found = diags("gci | % { $_ }")
    assert [d.rule_id for d in found] == ["PSAvoidUsingCmdletAliases"] * 2
    assert [d.line_span[0] for d in found] == [1, 1]
    assert found[0].code_snippet == "gci"
    assert found[1].code_snippet == "%"


def test_securestring_example_severity_2():
    found = diags('ConvertTo-SecureString "pw" -AsPlainText -Force')
    assert len(found) == 1
    assert found[0].rule_id == "PSAvoidUsingConvertToSecureStringWithPlainText"
    assert found[0].severity == 2


def test_empty_script_no_diagnostics():
    assert diags("") == []


def test_iex_alias_triggers_both_rules():
    ids = rule_ids('iex "Get-Date"')
    assert "PSAvoidUsingInvokeExpression" in ids
    assert "PSAvoidUsingCmdletAliases" in ids


# -- verdicts -----------------------------------------------------------------


def test_verdict_writehost_insecure():
    assert classify(SourceScript.from_text('Write-Host "x"')).verdict is Verdict.INSECURE


def test_verdict_unterminated_invalid():
    assert classify(SourceScript.from_text("function {")).verdict is Verdict.INVALID


def test_verdict_clean_secure():
    assert classify(SourceScript.from_text("Get-Date")).verdict is Verdict.SECURE


def test_verdict_severity_zero_only_is_secure():
    info_only = [
        Diagnostic(
            file_name="t.ps1",
            rule_id="PSInformational",
            severity=0,
            line_span=(1, 1, 1, 2),
            description="note",
            suggested_fix="",
            code_snippet="x",
        )
    ]
    assert verdict_for(info_only, has_parse_errors=False) is Verdict.SECURE
    assert verdict_for([], has_parse_errors=False) is Verdict.SECURE
    assert verdict_for(info_only, has_parse_errors=True) is Verdict.INVALID


# -- diagnostic invariants ------------------------------------------------------


def test_snippet_matches_span_text():
    code = "$items = gci\nWrite-Host $items\n"
    script = SourceScript.from_text(code, "t.ps1")
    for d in analyze(script):
        sl, sc, el, ec = d.line_span
        start = script.line_starts[sl - 1] + sc - 1
        end = script.line_starts[el - 1] + ec - 1
        assert script.raw[start:end] == d.code_snippet


def test_severity_matches_rule_spec():
    by_id = {r.rule_id: r for r in list_rules()}
    code = 'gci\nConvertTo-SecureString "x" -AsPlainText\nWrite-Host 1\n'
    for d in diags(code):
        assert d.severity == by_id[d.rule_id].severity


def test_diagnostics_sorted_and_deterministic():
    code = "Write-Host 2\ngci\n$error = 1\n"
    first = diags(code)
    second = diags(code)
    assert first == second
    keys = [(d.line_span[0], d.line_span[1], d.rule_id) for d in first]
    assert keys == sorted(keys)


def test_no_diagnostic_inside_comment_or_string():
    code = "# Write-Host gci iex\n'Write-Host'\n\"gci\"\n<# Invoke-Expression #>\n"
    assert diags(code) == []


PRESENCE_TRIGGERS = {
    "PSAvoidUsingWriteHost": 'Write-Host "x"\n',
    "PSAvoidUsingCmdletAliases": "gci\n",
    "PSAvoidUsingWMICmdlet": "Get-WmiObject Win32_BIOS\n",
    "PSAvoidUsingInvokeExpression": 'Invoke-Expression "Get-Date"\n',
    "PSAvoidUsingConvertToSecureStringWithPlainText": (
        'ConvertTo-SecureString "p" -AsPlainText -Force\n'
    ),
    "PSAvoidGlobalVars": "$global:state = 1\n",
    "PSAvoidAssignmentToAutomaticVariable": "$matches = 1\n",
    "PSAvoidUsingEmptyCatchBlock": "try { Get-Date } catch { }\n",
    "PSPossibleIncorrectComparisonWithNull": "if ($v -eq $null) { }\n",
    "PSAvoidUsingComputerNameHardcoded": "Test-Connection -ComputerName box7\n",
}


def test_presence_monotonic_under_concatenation():
    clean_prefixes = ["", "Get-Date\n$y = 1\n", "function Find-Item { param($p) $p }\n"]
    for rule_id, trigger in PRESENCE_TRIGGERS.items():
        for prefix in clean_prefixes:
            assert rule_id in rule_ids(prefix + trigger), (rule_id, prefix)


# -- targeted rule behavior ------------------------------------------------------


def test_password_param_securestring_exempt():
    code = "function Connect-X { param([securestring]$Password) $Password }"
    assert "PSAvoidUsingPlainTextForPassword" not in rule_ids(code)


def test_password_param_untyped_flagged():
    code = "function Connect-X { param($Password) $Password }"
    assert "PSAvoidUsingPlainTextForPassword" in rule_ids(code)


def test_computername_loopback_exempt():
    for name in ("localhost", '"127.0.0.1"', '"."', '"::1"'):
        code = f"Invoke-Command -ComputerName {name} -ScriptBlock {{ Get-Date }}"
        assert "PSAvoidUsingComputerNameHardcoded" not in rule_ids(code), name


def test_computername_variable_exempt():
    code = "Invoke-Command -ComputerName $target -ScriptBlock { Get-Date }"
    assert "PSAvoidUsingComputerNameHardcoded" not in rule_ids(code)


def test_unused_param_with_psboundparameters_suppressed():
    code = "function Get-Thing { param($a, $b) Invoke-Command @PSBoundParameters }"
    assert "PSReviewUnusedParameter" not in rule_ids(code)


def test_unused_param_interpolated_use_counts():
    code = 'function Get-Thing { param($name) "value: $name" }'
    assert "PSReviewUnusedParameter" not in rule_ids(code)


def test_singular_noun_whitelist_and_suffixes():
    assert "PSUseSingularNouns" not in rule_ids("function Get-Process { }")
    assert "PSUseSingularNouns" not in rule_ids("function Get-Status { }")
    assert "PSUseSingularNouns" not in rule_ids("function Get-Alias { }")
    assert "PSUseSingularNouns" in rule_ids("function Get-Logs { }")


def test_should_process_satisfied_not_flagged():
    code = (
        "function Remove-Thing {\n"
        "    [CmdletBinding(SupportsShouldProcess)]\n"
        "    param()\n"
        "    if ($PSCmdlet.ShouldProcess('t')) { Remove-Item t }\n"
        "}\n"
    )
    ids = rule_ids(code)
    assert "PSUseShouldProcessForStateChangingFunctions" not in ids
    assert "PSShouldProcess" not in ids


def test_foreach_parallel_requires_using():
    code = "$x = 1\n1..3 | ForEach-Object -Parallel { $x }\n"
    assert "PSUseUsingScopeModifierInNewRunspaces" in rule_ids(code)


def test_plain_foreach_object_no_using_required():
    code = "$x = 1\n1..3 | ForEach-Object { $x }\n"
    assert "PSUseUsingScopeModifierInNewRunspaces" not in rule_ids(code)


def test_pipeline_satisfies_mandatory_parameter():
    code = '"secret" | ConvertTo-SecureString -AsPlainText -Force'
    assert "PSUseCmdletCorrectly" not in rule_ids(code)
