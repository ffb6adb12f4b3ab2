"""Medical eligibility rule engine: rate, filter, and rank contraceptive methods.

Rules encode (condition, method) -> category 1..4 rows from published
eligibility guidance. A method's rating for a profile is the maximum
category over every rule whose condition the user reported (or could not
rule out). Categories 3 and 4 are contraindications: those methods are
structurally barred from the ranked recommendation and always surface in
the excluded list with the conditions that triggered them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterable

import yaml

from .errors import ConfigurationError, FixtureError, UnknownMethodError
from .profiles import UserProfile

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .memory import KnowledgeStore
    from .reasoning import ReasoningChain


class MecCategory(IntEnum):
    """Guideline category: 1 = no restriction, 4 = unacceptable health risk."""

    NO_RESTRICTION = 1
    BENEFITS_OUTWEIGH_RISKS = 2
    RISKS_OUTWEIGH_BENEFITS = 3
    UNACCEPTABLE_RISK = 4


# Categories 3 and 4 are never recommended without clinician judgment.
CONTRAINDICATION_CUTOFF = MecCategory.RISKS_OUTWEIGH_BENEFITS


@dataclass(frozen=True)
class EligibilityRule:
    condition_id: str
    method_id: str
    category: MecCategory
    citation: str
    note: str = ""


@dataclass(frozen=True)
class MethodInfo:
    """Catalog record for one contraceptive method, with the attributes
    the preference scorers read (administration cadence, hormone content,
    typical-use effectiveness tier)."""

    method_id: str
    label: str
    guideline_column: str
    frequency_class: str
    hormonal: bool
    effectiveness_tier: int


@dataclass(frozen=True)
class ConditionInfo:
    condition_id: str
    label: str
    question: str
    patterns: tuple[str, ...] = ()
    clarify: str = ""


@dataclass(frozen=True)
class RuleFixture:
    """Immutable bundle of methods, screening conditions, and rules."""

    methods: dict[str, MethodInfo]
    conditions: dict[str, ConditionInfo]
    rules: dict[tuple[str, str], EligibilityRule]
    path: str | None = None

    @property
    def method_ids(self) -> list[str]:
        return list(self.methods)

    @property
    def condition_ids(self) -> list[str]:
        return list(self.conditions)

    def rules_for_method(self, method_id: str) -> list[EligibilityRule]:
        return [r for r in self.rules.values() if r.method_id == method_id]


def load_rule_fixture(path: str | Path) -> RuleFixture:
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"rule fixture not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise FixtureError(f"cannot parse rule fixture {path}: {exc}")
    if not data:
        raise ConfigurationError(f"rule fixture {path} is empty")

    methods: dict[str, MethodInfo] = {}
    for i, raw in enumerate(data.get("methods", []) or []):
        try:
            info = MethodInfo(
                method_id=raw["method_id"],
                label=raw["label"],
                guideline_column=raw.get("guideline_column", ""),
                frequency_class=raw["frequency_class"],
                hormonal=bool(raw["hormonal"]),
                effectiveness_tier=int(raw["effectiveness_tier"]),
            )
        except KeyError as exc:
            raise FixtureError(f"method record {i} in {path} missing field {exc}")
        if info.method_id in methods:
            raise FixtureError(f"duplicate method_id {info.method_id!r} in {path}")
        methods[info.method_id] = info

    conditions: dict[str, ConditionInfo] = {}
    for i, raw in enumerate(data.get("conditions", []) or []):
        try:
            info = ConditionInfo(
                condition_id=raw["condition_id"],
                label=raw["label"],
                question=raw["question"],
                patterns=tuple(raw.get("patterns", [])),
                clarify=raw.get("clarify", ""),
            )
        except KeyError as exc:
            raise FixtureError(f"condition record {i} in {path} missing field {exc}")
        if info.condition_id in conditions:
            raise FixtureError(f"duplicate condition_id {info.condition_id!r} in {path}")
        conditions[info.condition_id] = info

    rules: dict[tuple[str, str], EligibilityRule] = {}
    problems: list[str] = []
    for i, raw in enumerate(data.get("rules", []) or []):
        try:
            rule = EligibilityRule(
                condition_id=raw["condition_id"],
                method_id=raw["method_id"],
                category=MecCategory(int(raw["category"])),
                citation=raw["citation"],
                note=raw.get("note", ""),
            )
        except (KeyError, ValueError) as exc:
            problems.append(f"rule record {i}: {exc}")
            continue
        if not rule.citation:
            problems.append(f"rule record {i}: empty citation")
            continue
        if rule.condition_id not in conditions:
            problems.append(f"rule record {i}: unknown condition {rule.condition_id!r}")
            continue
        if rule.method_id not in methods:
            problems.append(f"rule record {i}: unknown method {rule.method_id!r}")
            continue
        pair = (rule.condition_id, rule.method_id)
        if pair in rules:
            problems.append(f"rule record {i}: duplicate pair {pair}")
            continue
        rules[pair] = rule
    if problems:
        raise FixtureError(f"rule fixture {path} has invalid records", details=problems)
    if not methods or not rules:
        raise ConfigurationError(f"rule fixture {path} must define methods and rules")
    return RuleFixture(methods=methods, conditions=conditions, rules=rules, path=str(path))


def rate_method(profile: UserProfile, method_id: str,
                fixture: RuleFixture) -> tuple[MecCategory, list[str]]:
    """Rate one method: max category over every rule whose condition is present.

    "Unknown" answers count as present (fail-safe). Returns the category and
    the conditions contributing the maximum; the trigger list is empty for
    category 1, which means no restriction applied.
    """
    if method_id not in fixture.methods:
        raise UnknownMethodError(f"method {method_id!r} not in rule fixture")
    best = MecCategory.NO_RESTRICTION
    triggers: list[str] = []
    for rule in fixture.rules_for_method(method_id):
        if not profile.condition_present(rule.condition_id):
            continue
        if rule.category > best:
            best = rule.category
            triggers = [rule.condition_id]
        elif rule.category == best:
            triggers.append(rule.condition_id)
    if best == MecCategory.NO_RESTRICTION:
        return best, []
    return best, sorted(triggers)


@dataclass(frozen=True)
class ExcludedMethod:
    method_id: str
    category: MecCategory
    triggering_condition_ids: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "method_id": self.method_id,
            "category": int(self.category),
            "triggering_condition_ids": list(self.triggering_condition_ids),
        }


def filter_contraindicated(profile: UserProfile, methods: Iterable[str],
                           fixture: RuleFixture) -> tuple[list[str], list[ExcludedMethod]]:
    """Split methods into eligible (category <= 2) and excluded (>= 3)."""
    eligible: list[str] = []
    excluded: list[ExcludedMethod] = []
    for method_id in methods:
        category, triggers = rate_method(profile, method_id, fixture)
        if category >= CONTRAINDICATION_CUTOFF:
            excluded.append(ExcludedMethod(method_id, category, tuple(triggers)))
        else:
            eligible.append(method_id)
    return eligible, excluded


@dataclass(frozen=True)
class PreferenceCriterion:
    """One weighted ranking criterion; the scorer maps (profile, method) -> [0,1]."""

    criterion_id: str
    weight: float
    scorer: Callable[[UserProfile, str], float]


def load_criteria(path: str | Path, fixture: RuleFixture) -> list[PreferenceCriterion]:
    """Build scorers from the criteria file's score tables.

    Every scorer is table-driven so the ranking behavior is fully visible
    in the fixture file; unknown or missing preference answers fall back
    to each criterion's default score.
    """
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"criteria file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise FixtureError(f"cannot parse criteria file {path}: {exc}")
    criteria: list[PreferenceCriterion] = []
    for i, raw in enumerate(data.get("criteria", []) or []):
        try:
            criterion_id = raw["criterion_id"]
            weight = float(raw["weight"])
            kind = raw["kind"]
        except KeyError as exc:
            raise FixtureError(f"criterion record {i} in {path} missing field {exc}")
        if weight <= 0:
            raise FixtureError(f"criterion {criterion_id!r} must have positive weight")
        scorer = _build_scorer(kind, raw, fixture, path)
        criteria.append(PreferenceCriterion(criterion_id, weight, scorer))
    if not criteria:
        raise ConfigurationError(f"criteria file {path} defines no criteria")
    return criteria


def _build_scorer(kind: str, raw: dict, fixture: RuleFixture,
                  path: Path) -> Callable[[UserProfile, str], float]:
    methods = fixture.methods
    default = float(raw.get("default_score", 0.5))

    if kind == "preference_table":
        slot = raw["preference_slot"]
        attribute = raw["method_attribute"]
        table = {str(k): {str(a): float(s) for a, s in v.items()}
                 for k, v in raw["table"].items()}

        def scorer(profile: UserProfile, method_id: str) -> float:
            answer = profile.preferences.get(slot)
            row = table.get(str(answer))
            if row is None:
                return default
            info = methods[method_id]
            value = getattr(info, attribute)
            if attribute == "hormonal":
                value = "hormonal" if value else "hormone_free"
            return row.get(str(value), default)

        return scorer

    if kind == "effectiveness_table":
        table = {int(k): float(v) for k, v in raw["table"].items()}

        def scorer(profile: UserProfile, method_id: str) -> float:
            return table.get(methods[method_id].effectiveness_tier, default)

        return scorer

    if kind == "prior_experience":
        used = float(raw.get("used_before", 1.0))
        otherwise = float(raw.get("otherwise", 0.6))

        def scorer(profile: UserProfile, method_id: str) -> float:
            return used if method_id in profile.prior_experience else otherwise

        return scorer

    raise FixtureError(f"unknown criterion kind {kind!r} in {path}")


@dataclass(frozen=True)
class RankedMethod:
    method_id: str
    total_score: float
    category: MecCategory

    def to_dict(self) -> dict[str, Any]:
        return {
            "method_id": self.method_id,
            "total_score": self.total_score,
            "category": int(self.category),
        }


def score_and_rank(profile: UserProfile, eligible_methods: Iterable[str],
                   criteria: list[PreferenceCriterion]) -> list[tuple[str, float]]:
    """Weighted-average score per method, sorted best first.

    total(m) = sum(w_c * scorer_c(profile, m)) / sum(w_c), so scores stay in
    [0, 1] and the ordering is invariant under uniform weight rescaling.
    Ties break lexicographically by method_id.
    """
    if not criteria:
        raise ConfigurationError("at least one preference criterion is required")
    total_weight = sum(c.weight for c in criteria)
    scored = []
    for method_id in eligible_methods:
        total = sum(c.weight * c.scorer(profile, method_id) for c in criteria)
        scored.append((method_id, total / total_weight))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored


@dataclass
class Recommendation:
    """Outcome of the eligibility + ranking pipeline for one profile.

    Ranked methods all have category <= 2 by construction. If nothing
    survives filtering, ``referral`` is set and the ranked list is empty:
    the user is pointed to a clinician instead of a method.
    """

    ranked: list[RankedMethod]
    excluded: list[ExcludedMethod]
    referral: bool
    chain: "ReasoningChain | None" = None
    method_entry_ids: dict[str, list[str]] = field(default_factory=dict)
    citations: list[str] = field(default_factory=list)

    @property
    def ranked_method_ids(self) -> list[str]:
        return [r.method_id for r in self.ranked]

    @property
    def cited_entry_ids(self) -> list[str]:
        seen: list[str] = []
        for method_id in self.ranked_method_ids:
            for entry_id in self.method_entry_ids.get(method_id, []):
                if entry_id not in seen:
                    seen.append(entry_id)
        return seen

    def to_dict(self) -> dict[str, Any]:
        return {
            "ranked": [r.to_dict() for r in self.ranked],
            "excluded": [e.to_dict() for e in self.excluded],
            "referral": self.referral,
            "method_entry_ids": {k: list(v) for k, v in self.method_entry_ids.items()},
            "citations": list(self.citations),
            "chain": self.chain.to_dict() if self.chain is not None else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Recommendation:
        from .reasoning import ReasoningChain

        chain_data = data.get("chain")
        return cls(
            ranked=[RankedMethod(r["method_id"], float(r["total_score"]),
                                 MecCategory(int(r["category"])))
                    for r in data.get("ranked", [])],
            excluded=[ExcludedMethod(e["method_id"], MecCategory(int(e["category"])),
                                     tuple(e.get("triggering_condition_ids", [])))
                      for e in data.get("excluded", [])],
            referral=bool(data.get("referral", False)),
            chain=ReasoningChain.from_dict(chain_data) if chain_data else None,
            method_entry_ids={k: list(v) for k, v in data.get("method_entry_ids", {}).items()},
            citations=list(data.get("citations", [])),
        )


def linked_entry_ids(store: "KnowledgeStore", fixture: RuleFixture,
                     profile: UserProfile, method_id: str) -> list[str]:
    """Knowledge entries backing statements about one method for this profile.

    Method-tagged entries always qualify; condition-tagged entries qualify
    only when the user actually has (or could not rule out) that condition,
    so replies never cite guidance about conditions the user denied.
    """
    kept = []
    for entry in store.entries_for_key(method_id):
        entry_conditions = [k for k in entry.keys if k in fixture.conditions]
        if not entry_conditions or any(
                profile.condition_present(c) for c in entry_conditions):
            kept.append(entry.entry_id)
    return kept


def recommend(profile: UserProfile, fixture: RuleFixture,
              criteria: list[PreferenceCriterion],
              store: "KnowledgeStore | None" = None) -> Recommendation:
    """Full pipeline: filter contraindicated methods, rank the rest, build
    the reasoning chain, and link every method to its knowledge entries.

    An empty eligible set is not an error; it produces a referral
    recommendation with no ranked methods.
    """
    eligible, excluded = filter_contraindicated(profile, fixture.method_ids, fixture)
    ranked: list[RankedMethod] = []
    if eligible:
        for method_id, score in score_and_rank(profile, eligible, criteria):
            category, _ = rate_method(profile, method_id, fixture)
            ranked.append(RankedMethod(method_id, score, category))

    method_entry_ids: dict[str, list[str]] = {}
    if store is not None:
        for method_id in [r.method_id for r in ranked] + [e.method_id for e in excluded]:
            entry_ids = linked_entry_ids(store, fixture, profile, method_id)
            if entry_ids:
                method_entry_ids[method_id] = entry_ids

    citations: list[str] = []
    for item in excluded:
        for condition_id in item.triggering_condition_ids:
            rule = fixture.rules.get((condition_id, item.method_id))
            if rule and rule.citation not in citations:
                citations.append(rule.citation)
    if store is not None:
        for entry_ids in method_entry_ids.values():
            for entry_id in entry_ids:
                entry = store.get(entry_id)
                if entry and entry.citation not in citations:
                    citations.append(entry.citation)

    recommendation = Recommendation(
        ranked=ranked,
        excluded=excluded,
        referral=not ranked,
        method_entry_ids=method_entry_ids,
        citations=citations,
    )

    from .reasoning import build_chain  # local import: reasoning depends on this module

    recommendation.chain = build_chain(profile, recommendation)
    return recommendation
