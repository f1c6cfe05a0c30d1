"""Self-debugging data synthesis: pair insecure scripts with analyses,
ask a pluggable LLM for a repair, verify with the rule engine, and emit
accepted training triplets.  Secure scripts pass through as their own
fix targets.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .corpus import load_corpus
from .formats import SimplifiedAnalysis, emit_triplet, to_simplified
from .rules import Verdict, analyze_ast, classify, verdict_for
from .syntax import SourceScript, parse


class ClientError(RuntimeError):
    """Transport-level failure talking to an LLM backend."""


@dataclass(frozen=True)
class Decoding:
    temperature: float = 0.0  # deterministic by default
    max_tokens: int = 4096


class LlmClient(Protocol):
    identity: str

    def complete(self, system: str, user: str, decoding: Decoding) -> str: ...


def prompt_digest(system: str, user: str) -> str:
    return hashlib.sha256((system + "\x00" + user).encode("utf-8")).hexdigest()


class ScriptedClient:
    """Test double: responses keyed by prompt digest, with an optional
    fallback callable for programmatic fixtures."""

    def __init__(
        self,
        responses: dict[str, str] | None = None,
        fallback: Callable[[str, str], str] | None = None,
        identity: str = "scripted-mock",
    ):
        self.responses = dict(responses or {})
        self.fallback = fallback
        self.identity = identity

    def complete(self, system: str, user: str, decoding: Decoding) -> str:
        digest = prompt_digest(system, user)
        if digest in self.responses:
            return self.responses[digest]
        if self.fallback is not None:
            return self.fallback(system, user)
        raise ClientError(f"no scripted response for prompt digest {digest[:12]}")


class ReplayClient:
    """Replays recorded responses from a JSON Lines file of
    {"digest": ..., "response": ...} records."""

    def __init__(self, path: str | Path, identity: str = "replay"):
        self.identity = identity
        self.responses: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                self.responses[record["digest"]] = record["response"]

    def complete(self, system: str, user: str, decoding: Decoding) -> str:
        digest = prompt_digest(system, user)
        if digest not in self.responses:
            raise ClientError(f"no recorded response for prompt digest {digest[:12]}")
        return self.responses[digest]


class HttpChatClient:
    """Generic chat-completions client: POST {base_url}/chat/completions."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "LLM_API_KEY",
        timeout: float = 120.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.identity = model

    def complete(self, system: str, user: str, decoding: Decoding) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": decoding.temperature,
            "max_tokens": decoding.max_tokens,
        }
        try:
            response = requests.post(
                f"{self.base_url}/chat/completions",
                headers=headers,
                json=payload,
                timeout=self.timeout,
            )
            response.raise_for_status()
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except Exception as exc:
            raise ClientError(str(exc)) from exc


@dataclass
class SynthesisRecord:
    script_id: str
    status: str  # accepted | rejected | passthrough_secure
    reason: str | None = None
    attempts: int = 0
    fixed_text: str | None = None
    diff: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "script_id": self.script_id,
            "status": self.status,
            "reason": self.reason,
            "attempts": self.attempts,
            "diff": self.diff,
        }


@dataclass
class SynthesisSummary:
    accepted: int = 0
    rejected: int = 0
    passthrough: int = 0
    records: list[SynthesisRecord] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "passthrough": self.passthrough,
        }


_FENCE_RE = re.compile(
    r"\A\s*```[a-zA-Z0-9_-]*\s*\n(.*?)\n?```\s*\Z", re.DOTALL
)


def strip_code_fences(text: str) -> str:
    """Unwrap a single markdown code fence if the whole body is fenced."""
    match = _FENCE_RE.match(text)
    return match.group(1) if match else text


def render_repair_prompt(script: SourceScript, analysis: SimplifiedAnalysis) -> tuple[str, str]:
    """System and user halves of the repair request (script + analysis)."""
    from .formats import render_prompt, training_system_prompt

    user = render_prompt("CodeFix", "M2", {"script": script.raw, "analysis": analysis})
    return training_system_prompt(), user


def repair_once(
    script: SourceScript,
    analysis: SimplifiedAnalysis,
    client: LlmClient,
    decoding: Decoding | None = None,
    retries: int = 2,
) -> str:
    """One repair call; transport failures are retried then surfaced."""
    decoding = decoding or Decoding()
    system, user = render_repair_prompt(script, analysis)
    last: ClientError | None = None
    for _attempt in range(max(1, retries + 1)):
        try:
            raw = client.complete(system, user, decoding)
            return strip_code_fences(raw)
        except ClientError as exc:
            last = exc
    raise last if last is not None else ClientError("no attempts made")


def verify_fix(candidate: str) -> tuple[bool, list]:
    """Accept iff the candidate classifies Secure; residual findings returned."""
    if not candidate.strip():
        return False, []
    verdict = classify(SourceScript.from_text(candidate, path="<candidate>"))
    if verdict.verdict is Verdict.SECURE:
        return True, []
    return False, [d for d in verdict.diagnostics if d.severity in (1, 2)]


def unified_diff(original: str, fixed: str, path: str) -> str:
    lines = difflib.unified_diff(
        original.splitlines(keepends=True),
        fixed.splitlines(keepends=True),
        fromfile=f"{path} (original)",
        tofile=f"{path} (fixed)",
        n=3,
    )
    return "".join(lines)


def synthesize_dataset(
    corpus_dir: str | Path,
    client: LlmClient,
    out_path: str | Path,
    rounds: int = 1,
    decoding: Decoding | None = None,
    records_path: str | Path | None = None,
    parallelism: int = 1,
) -> SynthesisSummary:
    """Run the synthesis pipeline over a directory of scripts.

    Output is one JSON Lines triplet per accepted or passthrough script,
    ordered by script path for restartability.  ``rounds`` > 1 re-asks the
    client after a failed verification (single round by default).
    ``parallelism`` bounds concurrent client calls; verification and
    emission stay serialized in path order, so output bytes do not depend
    on the width.
    """
    scripts = load_corpus(corpus_dir)
    summary = SynthesisSummary()
    out_path = Path(out_path)
    records_path = Path(records_path) if records_path else out_path.with_suffix(".records.jsonl")

    if parallelism > 1 and len(scripts) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(
                pool.map(lambda s: _synthesize_one(s, client, rounds, decoding), scripts)
            )
    else:
        results = [_synthesize_one(s, client, rounds, decoding) for s in scripts]

    with open(out_path, "w", encoding="utf-8", newline="\n") as out, open(
        records_path, "w", encoding="utf-8", newline="\n"
    ) as rec_out:
        for script, (record, analysis) in zip(scripts, results):
            summary.records.append(record)
            if record.status == "accepted":
                summary.accepted += 1
            elif record.status == "passthrough_secure":
                summary.passthrough += 1
            else:
                summary.rejected += 1
            if record.fixed_text is not None:
                # Emission re-checks the invariant: the stored fix must be Secure.
                final = classify(SourceScript.from_text(record.fixed_text, path="<emit>"))
                if final.verdict is not Verdict.SECURE:
                    raise AssertionError(
                        f"emitted fix for {record.script_id} failed re-analysis"
                    )
                triplet = emit_triplet(script.raw, analysis, record.fixed_text)
                out.write(json.dumps(triplet.to_json_dict(), ensure_ascii=False) + "\n")
            rec_out.write(json.dumps(record.to_json_dict(), ensure_ascii=False) + "\n")
    return summary


def _synthesize_one(
    script: SourceScript,
    client: LlmClient,
    rounds: int,
    decoding: Decoding | None,
) -> tuple[SynthesisRecord, SimplifiedAnalysis]:
    script_id = script.path
    ast = parse(script)
    diags = analyze_ast(ast)
    verdict = verdict_for(diags, bool(ast.parse_errors))
    flagged = [d for d in diags if d.severity in (1, 2)]
    analysis = to_simplified(flagged, Path(script.path).name)
    if verdict is Verdict.INVALID:
        return (
            SynthesisRecord(script_id=script_id, status="rejected", reason="invalid_source"),
            analysis,
        )
    if verdict is Verdict.SECURE:
        # Secure scripts are their own fix targets (empty analysis, unchanged body).
        return (
            SynthesisRecord(
                script_id=script_id,
                status="passthrough_secure",
                fixed_text=script.raw,
            ),
            analysis,
        )
    attempts = 0
    last_residuals: list = []
    for _round in range(max(1, rounds)):
        attempts += 1
        try:
            candidate = repair_once(script, analysis, client, decoding)
        except ClientError as exc:
            return (
                SynthesisRecord(
                    script_id=script_id, status="rejected",
                    reason=f"ClientError: {exc}", attempts=attempts,
                ),
                analysis,
            )
        ok, residuals = verify_fix(candidate)
        if ok:
            return (
                SynthesisRecord(
                    script_id=script_id,
                    status="accepted",
                    attempts=attempts,
                    fixed_text=candidate,
                    diff=unified_diff(script.raw, candidate, script.path),
                ),
                analysis,
            )
        last_residuals = residuals
    return (
        SynthesisRecord(
            script_id=script_id,
            status="rejected",
            reason=f"residual_issues: {[d.rule_id for d in last_residuals]}",
            attempts=attempts,
        ),
        analysis,
    )
