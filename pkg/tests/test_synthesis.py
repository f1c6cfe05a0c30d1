import json

import pytest

from pwsec.formats import parse_model_output, to_simplified
from pwsec.rules import analyze
from pwsec.synthesis import (
    ClientError,
    Decoding,
    HttpChatClient,
    ReplayClient,
    ScriptedClient,
    prompt_digest,
    render_repair_prompt,
    repair_once,
    strip_code_fences,
    synthesize_dataset,
    unified_diff,
    verify_fix,
)
from pwsec.syntax import SourceScript

INSECURE = 'Write-Host "deploy"\n'
FIXED = 'Write-Output "deploy"\n'
SECURE = "Get-Date\n"


def gt_analysis(code: str, name: str = "s.ps1"):
    script = SourceScript.from_text(code, name)
    return to_simplified([d for d in analyze(script) if d.severity in (1, 2)], name)


def scripted_fix_client(script_text: str, response: str, name: str = "s.ps1") -> ScriptedClient:
    script = SourceScript.from_text(script_text, name)
    system, user = render_repair_prompt(script, gt_analysis(script_text, name))
    return ScriptedClient({prompt_digest(system, user): response})


# -- clients ------------------------------------------------------------------


def test_scripted_client_returns_mapped_response():
    script = SourceScript.from_text(INSECURE, "s.ps1")
    client = scripted_fix_client(INSECURE, FIXED)
    assert repair_once(script, gt_analysis(INSECURE), client) == FIXED


def test_scripted_client_fallback():
    client = ScriptedClient(fallback=lambda system, user: "fallback")
    assert client.complete("s", "u", Decoding()) == "fallback"


def test_scripted_client_unknown_prompt_raises():
    client = ScriptedClient({})
    with pytest.raises(ClientError):
        client.complete("s", "u", Decoding())


def test_replay_client_round_trip(tmp_path):
    digest = prompt_digest("sys", "user")
    path = tmp_path / "replay.jsonl"
    path.write_text(json.dumps({"digest": digest, "response": "ok"}) + "\n", encoding="utf-8")
    client = ReplayClient(path)
    assert client.complete("sys", "user", Decoding()) == "ok"
    with pytest.raises(ClientError):
        client.complete("sys", "other", Decoding())


def test_http_client_posts_chat_payload(monkeypatch):
    captured = {}

    class FakeResponse:
        def raise_for_status(self):
            pass

        def json(self):
            return {"choices": [{"message": {"content": "replied"}}]}

    def fake_post(url, headers=None, json=None, timeout=None):
        captured.update({"url": url, "payload": json, "headers": headers})
        return FakeResponse()

    import requests

    monkeypatch.setattr(requests, "post", fake_post)
    monkeypatch.setenv("LLM_API_KEY", "k123")
    client = HttpChatClient("http://llm.local/v1", "fixer-1")
    out = client.complete("sys", "user", Decoding(temperature=0.0))
    assert out == "replied"
    assert captured["url"] == "http://llm.local/v1/chat/completions"
    assert captured["payload"]["model"] == "fixer-1"
    assert captured["payload"]["temperature"] == 0.0
    assert captured["headers"]["Authorization"] == "Bearer k123"


def test_http_client_error_wrapped(monkeypatch):
    import requests

    def boom(*args, **kwargs):
        raise requests.ConnectionError("down")

    monkeypatch.setattr(requests, "post", boom)
    client = HttpChatClient("http://llm.local/v1", "fixer-1")
    with pytest.raises(ClientError):
        client.complete("s", "u", Decoding())


# -- repair_once -----------------------------------------------------------------


def test_fenced_response_unwrapped():
    fenced = f"```powershell\n{FIXED.rstrip()}\n```"
    client = scripted_fix_client(INSECURE, fenced)
    script = SourceScript.from_text(INSECURE, "s.ps1")
    out = repair_once(script, gt_analysis(INSECURE), client)
    assert out == FIXED.rstrip()


def test_strip_code_fences_variants():
    assert strip_code_fences("```\nx\n```") == "x"
    assert strip_code_fences("```ps1\nx\n```\n") == "x"
    assert strip_code_fences("no fences") == "no fences"
    assert strip_code_fences("prefix\n```\nx\n```") == "prefix\n```\nx\n```"


def test_retry_exhaustion_raises_client_error():
    calls = {"n": 0}

    def failing(system, user):
        calls["n"] += 1
        raise ClientError("timeout")

    class FailingClient:
        identity = "failing"

        def complete(self, system, user, decoding):
            return failing(system, user)

    script = SourceScript.from_text(INSECURE, "s.ps1")
    with pytest.raises(ClientError):
        repair_once(script, gt_analysis(INSECURE), FailingClient(), retries=2)
    assert calls["n"] == 3


# -- verify_fix ---------------------------------------------------------------------


def test_verify_rejects_residual_write_host():
    ok, residuals = verify_fix('Write-Host "still"')
    assert not ok
    assert residuals[0].rule_id == "PSAvoidUsingWriteHost"


def test_verify_accepts_clean():
    ok, residuals = verify_fix("Write-Output 'clean'")
    assert ok and residuals == []


def test_verify_rejects_empty():
    ok, _ = verify_fix("")
    assert not ok


def test_verify_rejects_unparseable():
    ok, _ = verify_fix("function {")
    assert not ok


# -- synthesize_dataset ----------------------------------------------------------------


def write_corpus(tmp_path, files: dict[str, str]):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    for name, text in files.items():
        (corpus / name).write_text(text, encoding="utf-8", newline="\n")
    return corpus


def corpus_client(corpus_dir, fixes: dict[str, str]) -> ScriptedClient:
    responses = {}
    for name, fixed in fixes.items():
        path = corpus_dir / name
        script = SourceScript.from_path(path)
        analysis = gt_analysis(script.raw, name)
        system, user = render_repair_prompt(script, analysis)
        responses[prompt_digest(system, user)] = fixed
    return ScriptedClient(responses)


def test_mixed_corpus_two_triplets(tmp_path):
    corpus = write_corpus(tmp_path, {"secure.ps1": SECURE, "bad.ps1": INSECURE})
    client = corpus_client(corpus, {"bad.ps1": FIXED})
    out = tmp_path / "triplets.jsonl"
    summary = synthesize_dataset(corpus, client, out)
    assert (summary.accepted, summary.passthrough, summary.rejected) == (1, 1, 0)
    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 2
    for line in lines:
        record = json.loads(line)
        parsed = parse_model_output(record["target"])
        ok, _ = verify_fix(parsed.fixed_script) if parsed.fixed_script.strip() else (True, [])
        assert ok


def test_passthrough_byte_identical(tmp_path):
    original = "Get-Date\n# comment kept\n"
    corpus = write_corpus(tmp_path, {"s.ps1": original})
    out = tmp_path / "t.jsonl"
    synthesize_dataset(corpus, ScriptedClient({}), out)
    record = json.loads(out.read_text().splitlines()[0])
    parsed = parse_model_output(record["target"])
    assert parsed.fixed_script == original
    assert parsed.analysis.is_empty


def test_delete_everything_client_yields_no_accepts(tmp_path):
    corpus = write_corpus(tmp_path, {"bad.ps1": INSECURE})
    client = ScriptedClient(fallback=lambda s, u: "")
    out = tmp_path / "t.jsonl"
    summary = synthesize_dataset(corpus, client, out)
    assert summary.accepted == 0
    assert summary.rejected == 1
    assert out.read_text() == ""


def test_invalid_source_rejected_without_client_call(tmp_path):
    corpus = write_corpus(tmp_path, {"broken.ps1": "function {"})
    client = ScriptedClient({})  # would raise if called
    out = tmp_path / "t.jsonl"
    summary = synthesize_dataset(corpus, client, out)
    assert summary.rejected == 1
    assert summary.records[0].reason == "invalid_source"


def test_client_error_rejected(tmp_path):
    corpus = write_corpus(tmp_path, {"bad.ps1": INSECURE})

    class Failing:
        identity = "f"

        def complete(self, s, u, d):
            raise ClientError("quota")

    out = tmp_path / "t.jsonl"
    summary = synthesize_dataset(corpus, Failing(), out)
    assert summary.rejected == 1
    assert "ClientError" in summary.records[0].reason


def test_residual_rejection_records_rules(tmp_path):
    corpus = write_corpus(tmp_path, {"bad.ps1": INSECURE})
    client = ScriptedClient(fallback=lambda s, u: 'Write-Host "still bad"')
    out = tmp_path / "t.jsonl"
    summary = synthesize_dataset(corpus, client, out)
    assert summary.rejected == 1
    assert "PSAvoidUsingWriteHost" in summary.records[0].reason


def test_rerun_is_deterministic(tmp_path):
    corpus = write_corpus(
        tmp_path, {"a.ps1": SECURE, "b.ps1": INSECURE, "c.ps1": "gci\n"}
    )
    client = corpus_client(corpus, {"b.ps1": FIXED, "c.ps1": "Get-ChildItem\n"})
    out1, out2 = tmp_path / "t1.jsonl", tmp_path / "t2.jsonl"
    synthesize_dataset(corpus, client, out1)
    synthesize_dataset(corpus, client, out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_parallel_width_does_not_change_output(tmp_path):
    files = {f"s{i}.ps1": (SECURE if i % 2 else f"Write-Host 'n{i}'\n") for i in range(6)}
    corpus = write_corpus(tmp_path, files)
    fixes = {
        name: files[name].replace("Write-Host", "Write-Output")
        for name in files
        if "Write-Host" in files[name]
    }
    client = corpus_client(corpus, fixes)
    serial, parallel = tmp_path / "serial.jsonl", tmp_path / "parallel.jsonl"
    synthesize_dataset(corpus, client, serial, parallelism=1)
    synthesize_dataset(corpus, client, parallel, parallelism=4)
    assert serial.read_bytes() == parallel.read_bytes()


def test_accepted_record_carries_unified_diff(tmp_path):
    corpus = write_corpus(tmp_path, {"bad.ps1": INSECURE})
    client = corpus_client(corpus, {"bad.ps1": FIXED})
    out = tmp_path / "t.jsonl"
    summary = synthesize_dataset(corpus, client, out)
    diff = summary.records[0].diff
    assert diff.startswith("---")
    assert "-Write-Host" in diff and "+Write-Output" in diff
    records_file = out.with_suffix(".records.jsonl")
    assert records_file.exists()


def test_unified_diff_three_line_context():
    original = "\n".join(f"line{i}" for i in range(10)) + "\nWrite-Host 'x'\n"
    fixed = "\n".join(f"line{i}" for i in range(10)) + "\nWrite-Output 'x'\n"
    diff = unified_diff(original, fixed, "t.ps1")
    assert "@@ -9,3 +9,3 @@" in diff or "@@" in diff
    context_lines = [l for l in diff.splitlines() if l.startswith(" ")]
    assert len(context_lines) == 3  # three lines of leading context survive
