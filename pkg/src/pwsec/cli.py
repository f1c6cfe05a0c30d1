"""Command-line entry point exposing every pipeline stage for batch use.

All file outputs are UTF-8 with LF newlines and a trailing newline; JSON
keys keep a fixed order so outputs are diffable.  Exit codes: 0 success,
1 input error, 2 internal error.  Usage errors print a machine-readable
JSON reason to stderr.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import functools
import json
import os
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import evaluation, reward, synthesis
from .formats import (
    SchemaError,
    SimplifiedAnalysis,
    analysis_from_dict,
    render_prompt,
)
from .rules import UnknownRule, analyze, classify, list_rules
from .syntax import SourceScript

_HELP_WIDTH = 96


class UsageError(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


def _fail(reason: str, detail: str = "") -> None:
    raise UsageError(reason, detail)


def _emit(payload, out_path: str | None) -> None:
    text = json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _load_scripts(path: str) -> list[SourceScript]:
    p = Path(path)
    if not p.exists():
        _fail("InputNotFound", path)
    return corpus_mod.load_corpus(p)


def _lint_one(path: str, rules: tuple[str, ...] | None) -> list[dict]:
    script = SourceScript.from_path(path)
    return [d.to_json_dict() for d in analyze(script, rules=rules)]


def _map_files(fn, paths: list[str], jobs: int):
    if jobs <= 1 or len(paths) <= 1:
        return [fn(p) for p in paths]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, paths))


# -- subcommand handlers --------------------------------------------------------


def _cmd_lint(args) -> int:
    scripts = _load_scripts(args.path)
    rules = tuple(args.rules.split(",")) if args.rules else None
    if rules:
        known = {r.rule_id for r in list_rules()}
        for rule_id in rules:
            if rule_id not in known:
                raise UnknownRule(rule_id)
    paths = [s.path for s in scripts]
    per_file = _map_files(functools.partial(_lint_one, rules=rules), paths, args.jobs)
    diagnostics = [d for group in per_file for d in group]
    _emit(diagnostics, args.output)
    return 0


def _cmd_classify(args) -> int:
    scripts = _load_scripts(args.path)
    records = corpus_mod.manifest_records(scripts)
    if args.jsonl:
        lines = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records)
        if args.output:
            Path(args.output).write_text(lines, encoding="utf-8", newline="\n")
        else:
            sys.stdout.write(lines)
    else:
        _emit(records, args.output)
    return 0


def _cmd_normalize(args) -> int:
    scripts = _load_scripts(args.path)
    records = []
    for s in scripts:
        form = corpus_mod.normalize(s)
        record = {"path": s.path, "digest": form.digest}
        if args.show_canonical:
            record["canonical"] = form.canonical
        records.append(record)
    _emit(records, args.output)
    return 0


def _cmd_dedup(args) -> int:
    train = _load_scripts(args.train)
    eval_scripts = _load_scripts(args.eval)
    kept, report = corpus_mod.dedup_splits(train, eval_scripts, drop_intra=args.drop_intra)
    payload = {
        "kept": [s.path for s in kept],
        "removed": report.to_json_dict()["removed"],
        "intra_train_duplicates": report.intra_train_duplicates,
        "intra_eval_duplicates": report.intra_eval_duplicates,
    }
    _emit(payload, args.output)
    return 0


def _cmd_partition(args) -> int:
    scripts = _load_scripts(args.path)
    buckets = corpus_mod.partition(scripts)
    _emit({k: [s.path for s in v] for k, v in buckets.items()}, args.output)
    return 0


def _cmd_stats(args) -> int:
    scripts = _load_scripts(args.path)
    _emit(corpus_mod.corpus_stats(scripts).to_json_dict(), args.output)
    return 0


def _cmd_prompt(args) -> int:
    inputs: dict = {}
    if args.script:
        inputs["script"] = Path(args.script).read_text(encoding="utf-8")
    if args.prompt_text:
        inputs["prompt"] = args.prompt_text
    if args.analysis:
        with open(args.analysis, encoding="utf-8") as fh:
            inputs["analysis"] = analysis_from_dict(json.load(fh))
    if args.custom_fix:
        inputs["custom_suggestion"] = args.custom_fix
    if args.task == "CodeAnalysis":
        rules = list_rules()
        if args.mode == "M2":
            inputs["rule_names"] = [r.rule_id for r in rules]
        elif args.mode == "M3":
            inputs["rule_docs"] = {r.rule_id: r.description for r in rules}
    text = render_prompt(args.task, args.mode, inputs)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return 0


def _read_analyses(path: str) -> list[SimplifiedAnalysis]:
    p = Path(path)
    if not p.exists():
        _fail("InputNotFound", path)
    items: list[SimplifiedAnalysis] = []
    if p.is_dir():
        for f in sorted(p.glob("*.json")):
            items.append(analysis_from_dict(json.loads(f.read_text(encoding="utf-8"))))
    else:
        with open(p, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    items.append(analysis_from_dict(json.loads(line)))
    return items


def _cmd_eval_analysis(args) -> int:
    pred = _read_analyses(args.pred)
    gt = _read_analyses(args.gt)
    if len(pred) != len(gt):
        raise evaluation.LengthMismatch(f"{len(pred)} predictions vs {len(gt)} ground truths")
    report = evaluation.score_analysis(
        list(zip(pred, gt)),
        rule_aggregation=args.rule_agg,
        issue_aggregation=args.issue_agg,
    )
    if args.table:
        sys.stdout.write(report.to_text_table() + "\n")
    else:
        _emit(report.to_json_dict(), args.output)
    return 0


def _read_scripts_or_jsonl(path: str) -> list[tuple[str, str]]:
    p = Path(path)
    if not p.exists():
        _fail("InputNotFound", path)
    if p.is_dir():
        return [(s.path, s.raw) for s in corpus_mod.load_corpus(p)]
    if p.suffix == ".jsonl":
        items = []
        with open(p, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    record = json.loads(line)
                    items.append((str(record["id"]), record["text"]))
        return items
    return [(str(p), p.read_text(encoding="utf-8"))]


def _cmd_eval_fix(args) -> int:
    fixed = _read_scripts_or_jsonl(args.fixed)
    rate, verdicts = evaluation.fsuc_rate(fixed)
    _emit({"fsuc_rate": rate, "verdicts": verdicts}, args.output)
    return 0


def _cmd_eval_gen(args) -> int:
    generated = [text for _id, text in _read_scripts_or_jsonl(args.generated)]
    rate = evaluation.s_rate(generated)
    _emit({"s_rate": rate}, args.output)
    return 0


def _reward_config(args) -> reward.RewardConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            return reward.RewardConfig.from_dict(json.load(fh))
    return reward.RewardConfig()


def _cmd_reward(args) -> int:
    cfg = _reward_config(args)
    if args.serve:
        reward.serve(sys.stdin, sys.stdout, cfg)
        return 0
    if not args.batch:
        _fail("MissingInput", "reward requires --batch FILE or --serve")
    with open(args.batch, encoding="utf-8") as fh:
        results = list(reward.score_batch_lines(fh, cfg))
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as out:
            for r in results:
                out.write(json.dumps(r, ensure_ascii=False) + "\n")
    else:
        for r in results:
            sys.stdout.write(json.dumps(r, ensure_ascii=False) + "\n")
    return 0


def _make_client(spec: str) -> synthesis.LlmClient:
    kind, _, arg = spec.partition(":")
    if kind == "replay":
        return synthesis.ReplayClient(arg)
    if kind == "scripted":
        with open(arg, encoding="utf-8") as fh:
            return synthesis.ScriptedClient(json.load(fh))
    if kind == "http":
        base_url, _, model = arg.rpartition("#")
        if not base_url or not model:
            _fail("BadClientSpec", "http client spec is http:<base_url>#<model>")
        return synthesis.HttpChatClient(base_url, model)
    _fail("BadClientSpec", f"unknown client kind {kind!r}")
    raise AssertionError  # unreachable


def _cmd_synth(args) -> int:
    client = _make_client(args.client)
    summary = synthesis.synthesize_dataset(
        args.corpus,
        client,
        args.out,
        rounds=args.rounds,
        records_path=args.records,
        parallelism=args.parallelism,
    )
    _emit(summary.to_json_dict(), None)
    return 0


def _cmd_rules(args) -> int:
    payload = [
        {
            "rule_id": r.rule_id,
            "category": r.category,
            "severity": r.severity,
            "kind": r.kind,
            "description": r.description,
        }
        for r in list_rules()
    ]
    _emit(payload, args.output)
    return 0


# -- argument parsing -------------------------------------------------------------


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=_HELP_WIDTH)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pwsec",
        description="PowerShell security analysis, corpus tooling, metrics, and reward scoring.",
        formatter_class=_formatter,
    )
    parser.add_argument("--seed", type=int, default=0, help="seed for any sampling (reserved)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text, formatter_class=_formatter)
        p.set_defaults(handler=handler)
        p.add_argument("-o", "--output", default=None, help="write output to this file")
        return p

    p = add("lint", _cmd_lint, "emit diagnostics for a file or directory as JSON")
    p.add_argument("path")
    p.add_argument("--rules", default=None, help="comma-separated rule ids (default: all)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes")

    p = add("classify", _cmd_classify, "Secure / Insecure / Invalid verdict per script")
    p.add_argument("path")
    p.add_argument("--jsonl", action="store_true", help="emit a JSON Lines manifest")

    p = add("normalize", _cmd_normalize, "canonical form digest per script")
    p.add_argument("path")
    p.add_argument("--show-canonical", action="store_true")

    p = add("dedup", _cmd_dedup, "drop train scripts whose digest appears in eval")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", required=True)
    p.add_argument("--drop-intra", action="store_true", help="also drop intra-train duplicates")

    p = add("partition", _cmd_partition, "bucket scripts by security verdict")
    p.add_argument("path")

    p = add("stats", _cmd_stats, "corpus statistics (token and violation counts)")
    p.add_argument("path")

    p = add("prompt", _cmd_prompt, "render a task prompt template")
    p.add_argument("--task", required=True, choices=["CodeGen", "CodeAnalysis", "CodeFix"])
    p.add_argument("--mode", default="M1")
    p.add_argument("--script", default=None, help="script file for CodeAnalysis/CodeFix")
    p.add_argument("--prompt-text", default=None, help="natural-language prompt for CodeGen")
    p.add_argument("--analysis", default=None, help="simplified analysis JSON file")
    p.add_argument("--custom-fix", default=None, help="customized fix suggestion (CodeFix M4)")

    p = add("eval-analysis", _cmd_eval_analysis, "score predicted analyses against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--rule-agg", default="macro", choices=["macro", "pooled"])
    p.add_argument("--issue-agg", default="pooled", choices=["macro", "pooled"])
    p.add_argument("--table", action="store_true", help="print an aligned text table")

    p = add("eval-fix", _cmd_eval_fix, "fix success rate over repaired scripts")
    p.add_argument("--fixed", required=True)

    p = add("eval-gen", _cmd_eval_gen, "security compliance rate over generated scripts")
    p.add_argument("--generated", required=True)

    p = add("reward", _cmd_reward, "score model outputs (batch JSONL or stdio serve mode)")
    p.add_argument("--batch", default=None, help="input JSON Lines file")
    p.add_argument("--serve", action="store_true", help="serve scoring over stdin/stdout")
    p.add_argument("--config", default=None, help="reward config JSON file")

    p = add("synth", _cmd_synth, "synthesize training triplets from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--client", required=True, help="replay:FILE | scripted:FILE | http:URL#MODEL")
    p.add_argument("--out", required=True)
    p.add_argument("--records", default=None, help="synthesis records output (JSONL)")
    p.add_argument("--rounds", type=int, default=1, help="repair rounds per script")
    p.add_argument("--parallelism", type=int, default=1, help="concurrent client calls")

    p = add("rules", _cmd_rules, "list the shipped rule set")

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        # Unknown flags and bad usage are input errors (exit 1).
        sys.stderr.write(json.dumps({"error": "UsageError", "detail": "invalid arguments"}) + "\n")
        return 1
    try:
        return args.handler(args)
    except (UsageError,) as exc:
        sys.stderr.write(json.dumps({"error": exc.reason, "detail": exc.detail}) + "\n")
        return 1
    except UnknownRule as exc:
        sys.stderr.write(json.dumps({"error": "UnknownRule", "detail": str(exc)}) + "\n")
        return 1
    except evaluation.LengthMismatch as exc:
        sys.stderr.write(json.dumps({"error": "LengthMismatch", "detail": str(exc)}) + "\n")
        return 1
    except evaluation.EmptyBatch as exc:
        sys.stderr.write(json.dumps({"error": "EmptyBatch", "detail": str(exc)}) + "\n")
        return 1
    except SchemaError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "detail": exc.detail}) + "\n")
        return 1
    except (FileNotFoundError, json.JSONDecodeError, KeyError, ValueError) as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "detail": str(exc)}) + "\n"
        )
        return 1
    except Exception as exc:  # internal error
        sys.stderr.write(
            json.dumps({"error": "InternalError", "detail": f"{type(exc).__name__}: {exc}"}) + "\n"
        )
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
