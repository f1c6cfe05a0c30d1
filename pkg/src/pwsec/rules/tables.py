"""Versioned rule data tables, loaded once from the packaged JSON files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .model import RuleSpec

DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True)
class MandatoryParam:
    name: str
    position: int | None
    pipeline: bool


@dataclass
class Tables:
    aliases: dict[str, str]  # lowercase alias -> canonical cmdlet name
    approved_verbs: frozenset[str]  # lowercase
    state_changing_verbs: frozenset[str]  # lowercase
    automatic_variables: frozenset[str]  # lowercase
    builtin_cmdlets: frozenset[str]  # lowercase
    builtin_cmdlet_names: dict[str, str]  # lowercase -> canonical
    mandatory_parameters: dict[str, list[MandatoryParam]]  # lowercase cmdlet -> params
    rules: list[RuleSpec]
    rules_by_id: dict[str, RuleSpec]

    def resolve_alias(self, name: str) -> str:
        """Canonical cmdlet name for an alias, or the input unchanged."""
        return self.aliases.get(name.lower(), name)


def _read(name: str) -> dict:
    return json.loads((DATA_DIR / name).read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def load_tables() -> Tables:
    aliases = {k.lower(): v for k, v in _read("aliases.json")["aliases"].items()}
    verbs = _read("verbs.json")
    autovars = frozenset(v.lower() for v in _read("autovars.json")["automatic_variables"])
    builtins = _read("builtins.json")
    cmdlets = {c.lower(): c for c in builtins["cmdlets"]}
    mandatory = {
        cmdlet.lower(): [
            MandatoryParam(p["name"], p.get("position"), bool(p.get("pipeline", False)))
            for p in params
        ]
        for cmdlet, params in builtins["mandatory_parameters"].items()
    }
    rules = [
        RuleSpec(
            rule_id=r["rule_id"],
            category=r["category"],
            severity=int(r["severity"]),
            kind=r["kind"],
            description=r["description"],
            suggested_fix_template=r["suggested_fix"],
            config=r.get("config", {}),
        )
        for r in _read("rules.json")["rules"]
    ]
    return Tables(
        aliases=aliases,
        approved_verbs=frozenset(v.lower() for v in verbs["approved_verbs"]),
        state_changing_verbs=frozenset(v.lower() for v in verbs["state_changing_verbs"]),
        automatic_variables=autovars,
        builtin_cmdlets=frozenset(cmdlets),
        builtin_cmdlet_names=cmdlets,
        mandatory_parameters=mandatory,
        rules=rules,
        rules_by_id={r.rule_id: r for r in rules},
    )
