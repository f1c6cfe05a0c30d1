"""Corpus construction: normalization, hashing, cross-split dedup, stats.

Normalization pins the canonical form used for content-hash dedup:
comments stripped, every whitespace run collapsed to one space, ends
trimmed, lowercased, then SHA-256 over the UTF-8 bytes.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

from .rules import Verdict, analyze_ast, classify, verdict_for
from .syntax import SourceScript, parse, strip_comments, tokenize
from .syntax.tokenizer import TokenKind

_WHITESPACE_RUN = re.compile(r"\s+")  # \s covers Unicode whitespace incl. NBSP


@dataclass(frozen=True)
class CanonicalForm:
    canonical: str
    digest: str  # 64-char lowercase hex, SHA-256 of canonical (UTF-8)


@dataclass
class CorpusStats:
    n_total: int = 0
    n_secure: int = 0
    n_insecure: int = 0
    n_invalid: int = 0
    mean_tokens: float = 0.0
    max_tokens: int = 0
    mean_rule_types: float = 0.0
    mean_violations: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "n_total": self.n_total,
            "n_secure": self.n_secure,
            "n_insecure": self.n_insecure,
            "n_invalid": self.n_invalid,
            "mean_tokens": self.mean_tokens,
            "max_tokens": self.max_tokens,
            "mean_rule_types": self.mean_rule_types,
            "mean_violations": self.mean_violations,
        }


@dataclass
class DedupReport:
    removed: list[tuple[str, str]] = field(default_factory=list)  # (path, digest)
    intra_train_duplicates: list[list[str]] = field(default_factory=list)
    intra_eval_duplicates: list[list[str]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "removed": [{"path": p, "digest": d} for p, d in self.removed],
            "intra_train_duplicates": self.intra_train_duplicates,
            "intra_eval_duplicates": self.intra_eval_duplicates,
        }


def normalize(script: SourceScript) -> CanonicalForm:
    """Canonical form: strip comments, collapse whitespace, trim, lowercase."""
    text = strip_comments(script)
    text = _WHITESPACE_RUN.sub(" ", text).strip()
    text = text.lower()
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return CanonicalForm(canonical=text, digest=digest)


def _digest_groups(scripts: list[SourceScript]) -> dict[str, list[str]]:
    groups: dict[str, list[str]] = {}
    for s in scripts:
        groups.setdefault(normalize(s).digest, []).append(s.path)
    return groups


def dedup_splits(
    train: list[SourceScript],
    eval_scripts: list[SourceScript],
    drop_intra: bool = False,
) -> tuple[list[SourceScript], DedupReport]:
    """Remove train scripts whose digest also appears in the eval split.

    The eval split is never modified.  Intra-split duplicates are reported
    but retained unless ``drop_intra`` is set (cross-split removal is the
    only mandated behavior).
    """
    eval_digests = {normalize(s).digest for s in eval_scripts}
    report = DedupReport(
        intra_train_duplicates=[g for g in _digest_groups(train).values() if len(g) > 1],
        intra_eval_duplicates=[g for g in _digest_groups(eval_scripts).values() if len(g) > 1],
    )
    kept: list[SourceScript] = []
    seen: set[str] = set()
    for s in train:
        digest = normalize(s).digest
        if digest in eval_digests:
            report.removed.append((s.path, digest))
            continue
        if drop_intra and digest in seen:
            report.removed.append((s.path, digest))
            continue
        seen.add(digest)
        kept.append(s)
    return kept, report


def partition(corpus: list[SourceScript]) -> dict[str, list[SourceScript]]:
    """Split a corpus into secure / insecure / invalid buckets by verdict."""
    buckets: dict[str, list[SourceScript]] = {"secure": [], "insecure": [], "invalid": []}
    for s in corpus:
        verdict = classify(s).verdict
        buckets[verdict.value.lower()].append(s)
    return buckets


def _token_count(script: SourceScript) -> int:
    # Line breaks are layout, not content; they are excluded from the count.
    return sum(1 for t in tokenize(script) if t.kind != TokenKind.NEWLINE)


def corpus_stats(corpus: list[SourceScript]) -> CorpusStats:
    stats = CorpusStats(n_total=len(corpus))
    if not corpus:
        return stats
    token_counts = []
    rule_type_counts = []
    violation_counts = []
    for s in corpus:
        ast = parse(s)
        diags = analyze_ast(ast)
        token_counts.append(_token_count(s))
        verdict = verdict_for(diags, bool(ast.parse_errors))
        if verdict is Verdict.SECURE:
            stats.n_secure += 1
        elif verdict is Verdict.INSECURE:
            stats.n_insecure += 1
            flagged = [d for d in diags if d.severity in (1, 2)]
            rule_type_counts.append(len({d.rule_id for d in flagged}))
            violation_counts.append(len(flagged))
        else:
            stats.n_invalid += 1
    stats.mean_tokens = sum(token_counts) / len(token_counts)
    stats.max_tokens = max(token_counts)
    if rule_type_counts:
        stats.mean_rule_types = sum(rule_type_counts) / len(rule_type_counts)
        stats.mean_violations = sum(violation_counts) / len(violation_counts)
    return stats


def load_corpus(root: str | Path) -> list[SourceScript]:
    """All .ps1 files under ``root`` (or the single file), sorted by path."""
    p = Path(root)
    if p.is_file():
        return [SourceScript.from_path(p)]
    return [SourceScript.from_path(f) for f in sorted(p.rglob("*.ps1"))]


def manifest_records(corpus: list[SourceScript]) -> list[dict]:
    """One manifest record per script: {path, digest, verdict, n_diagnostics}."""
    records = []
    for s in corpus:
        verdict = classify(s)
        records.append(
            {
                "path": s.path,
                "digest": normalize(s).digest,
                "verdict": verdict.verdict.value,
                "n_diagnostics": len(verdict.diagnostics),
            }
        )
    return records
