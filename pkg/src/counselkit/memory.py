"""Bi-level memory: short-term factor extraction and the long-term knowledge store.

Short-term memory is the recent dialogue window; ``extract_factors`` pulls
typed user factors out of it. Long-term memory is an expert-maintainable
key-value store of verified counseling text, retrieved by tag-set overlap.
Retrieval never synthesizes content: every result is an entry that exists
verbatim in the loaded store.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterable

import yaml

from .errors import (
    DuplicateEntryError,
    FixtureError,
    GatewayError,
    ValidationError,
)
from .stages import Stage

if TYPE_CHECKING:  # pragma: no cover - type-only imports
    from .dialogue import DialogueTurn
    from .gateway import Backend

logger = logging.getLogger(__name__)

CONFIDENCE_EXPLICIT = "explicit"
CONFIDENCE_INFERRED = "inferred"

DOMAIN_BOOLEAN = "boolean"
DOMAIN_ENUM = "enumerated"
DOMAIN_FREE_TEXT = "free-text"
DOMAIN_LIST = "structured-condition-list"

# Tokens that flip a boolean mention when they appear just before it.
NEGATION_RE = re.compile(
    r"\b(?:no|not|don't|dont|do not|never|none|haven't|havent|hasn't|doesn't|"
    r"doesnt|without|deny|denies|didn't|didnt)\b[\s\w']{0,24}$",
    re.IGNORECASE,
)

AFFIRM_RE = re.compile(
    r"^\W*(?:yes|yeah|yep|yup|sure|correct|i do|i have|i am|that's right|right|ok(?:ay)?)\b",
    re.IGNORECASE,
)
DENY_RE = re.compile(
    r"^\W*(?:no|nope|nah|i don't|i do not|i haven't|i havent|never)\b",
    re.IGNORECASE,
)
UNSURE_RE = re.compile(
    r"\b(?:not sure|don't know|dont know|no idea|unsure|can't remember|cant remember|maybe)\b",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class PatternRule:
    """One extraction pattern: regex plus the value it asserts."""

    regex: re.Pattern
    value: Any


@dataclass(frozen=True)
class FactorSpec:
    """Vocabulary record for one extractable factor (slot or condition)."""

    factor_id: str
    domain: str
    patterns: tuple[PatternRule, ...] = ()


@dataclass(frozen=True)
class FactorVocabulary:
    specs: dict[str, FactorSpec]

    def __contains__(self, factor_id: str) -> bool:
        return factor_id in self.specs

    def get(self, factor_id: str) -> FactorSpec | None:
        return self.specs.get(factor_id)


@dataclass(frozen=True)
class ExtractedFactor:
    factor_id: str
    value: Any
    source_turn: int
    confidence: str


@dataclass(frozen=True)
class ExtractionResult:
    factors: tuple[ExtractedFactor, ...]
    degraded: bool = False


def build_vocabulary(specs: Iterable[FactorSpec]) -> FactorVocabulary:
    return FactorVocabulary(specs={s.factor_id: s for s in specs})


def extract_factors(history_window: list["DialogueTurn"],
                    vocabulary: FactorVocabulary,
                    gateway: "Backend | None" = None, *,
                    mode: str = "rules") -> ExtractionResult:
    """Extract typed factors from the newest user turn in the window.

    The rule-based path is fully deterministic: pattern table matches with
    a negation pre-pass, plus yes/no/unsure interpretation against the slot
    the assistant just asked about. When ``mode="llm"`` the gateway is asked
    to tag factors; any transport failure falls back to the rule path and
    marks the result degraded.
    """
    if not history_window:
        raise ValidationError("history window must not be empty")
    if mode == "llm" and gateway is not None:
        try:
            return ExtractionResult(
                factors=_extract_llm(history_window, vocabulary, gateway))
        except GatewayError as exc:
            logger.warning("LLM extraction failed (%s); using rule fallback", exc)
            return ExtractionResult(
                factors=_extract_rules(history_window, vocabulary), degraded=True)
    return ExtractionResult(factors=_extract_rules(history_window, vocabulary))


def _last_user_turn(history_window: list["DialogueTurn"]):
    for turn in reversed(history_window):
        if turn.speaker == "user":
            return turn
    return None


def _pending_slot(history_window: list["DialogueTurn"], user_index: int) -> str | None:
    for turn in reversed(history_window):
        if turn.turn_index < user_index and turn.speaker == "assistant":
            return turn.asked_slot_id
    return None


def _extract_rules(history_window: list["DialogueTurn"],
                   vocabulary: FactorVocabulary) -> tuple[ExtractedFactor, ...]:
    turn = _last_user_turn(history_window)
    if turn is None:
        return ()
    text = turn.text
    pending = _pending_slot(history_window, turn.turn_index)

    raw: dict[str, list[tuple[Any, str]]] = {}
    for spec in vocabulary.specs.values():
        for rule in spec.patterns:
            for match in rule.regex.finditer(text):
                value = rule.value
                if _is_negated(text, match.start()):
                    if spec.domain == DOMAIN_BOOLEAN and isinstance(value, bool):
                        value = not value
                    else:
                        continue
                raw.setdefault(spec.factor_id, []).append((value, CONFIDENCE_EXPLICIT))

    # Interpretation of short answers against the slot that was just asked.
    pending_spec = vocabulary.get(pending) if pending else None
    if pending_spec is not None and pending_spec.factor_id not in raw:
        inferred = _interpret_pending(text, pending_spec)
        if inferred is not None:
            raw[pending_spec.factor_id] = [(inferred, CONFIDENCE_INFERRED)]

    factors = []
    for factor_id in raw:
        hits = raw[factor_id]
        spec = vocabulary.get(factor_id)
        if spec is not None and spec.domain == DOMAIN_LIST:
            # Mentioning several methods in one message is normal; merge them.
            merged: list[str] = []
            for v, _ in hits:
                items = v if isinstance(v, (list, tuple)) else [v]
                for item in items:
                    if item and item not in merged:
                        merged.append(item)
            value = merged
        else:
            values = []
            for v, _ in hits:
                if v not in values:
                    values.append(v)
            if len(values) > 1:
                # Contradictory matches in one message: treat as unanswered
                # so the engine re-asks instead of guessing.
                continue
            value = values[0]
        factors.append(ExtractedFactor(
            factor_id=factor_id,
            value=value,
            source_turn=turn.turn_index,
            confidence=hits[0][1],
        ))
    factors.sort(key=lambda f: f.factor_id)
    return tuple(factors)


def _is_negated(text: str, start: int) -> bool:
    return bool(NEGATION_RE.search(text[:start]))


def _interpret_pending(text: str, spec: FactorSpec) -> Any:
    if spec.domain == DOMAIN_BOOLEAN:
        if UNSURE_RE.search(text):
            return "unknown"
        if AFFIRM_RE.search(text):
            return True
        if DENY_RE.search(text):
            return False
    elif spec.domain == DOMAIN_LIST:
        if DENY_RE.search(text) or re.search(r"\b(?:nothing|none)\b", text, re.IGNORECASE):
            return []
    elif spec.domain in (DOMAIN_ENUM, DOMAIN_FREE_TEXT):
        if UNSURE_RE.search(text):
            return "unknown"
    return None


def _extract_llm(history_window: list["DialogueTurn"],
                 vocabulary: FactorVocabulary,
                 gateway: "Backend") -> tuple[ExtractedFactor, ...]:
    """Ask the gateway to tag factors; replies must be a JSON object.

    The reply maps factor ids to values, e.g. {"migraine_with_aura": true}.
    Unknown ids and unparseable replies yield no factors (the caller can
    still fall back to rules by catching gateway errors upstream).
    """
    from .gateway import extraction_request

    turn = _last_user_turn(history_window)
    if turn is None:
        return ()
    request = extraction_request(turn.text, sorted(vocabulary.specs), turn.turn_index)
    response = gateway.send(request)
    try:
        payload = json.loads(response.text)
    except json.JSONDecodeError:
        logger.warning("LLM extraction reply was not JSON; ignoring")
        return ()
    factors = []
    if isinstance(payload, dict):
        for factor_id in sorted(payload):
            if factor_id in vocabulary:
                factors.append(ExtractedFactor(
                    factor_id=factor_id,
                    value=payload[factor_id],
                    source_turn=turn.turn_index,
                    confidence=CONFIDENCE_EXPLICIT,
                ))
    return tuple(factors)


# ---------------------------------------------------------------------------
# Long-term knowledge store
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KnowledgeEntry:
    """One expert-maintained record of verified counseling content."""

    entry_id: str
    keys: frozenset[str]
    title: str
    body: str
    citation: str
    visual_aid: str | None = None
    last_reviewed: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "entry_id": self.entry_id,
            "keys": sorted(self.keys),
            "title": self.title,
            "body": self.body,
            "citation": self.citation,
            "visual_aid": self.visual_aid,
            "last_reviewed": self.last_reviewed,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> KnowledgeEntry:
        return cls(
            entry_id=str(data.get("entry_id", "")),
            keys=frozenset(data.get("keys", []) or []),
            title=str(data.get("title", "")),
            body=str(data.get("body", "")),
            citation=str(data.get("citation", "")),
            visual_aid=data.get("visual_aid"),
            last_reviewed=str(data.get("last_reviewed", "")),
        )


def validate_entry(entry: KnowledgeEntry) -> None:
    """Raise ValidationError naming every failing field."""
    bad = []
    if not entry.entry_id:
        bad.append("entry_id")
    if not entry.keys:
        bad.append("keys")
    if not entry.title:
        bad.append("title")
    if not entry.body:
        bad.append("body")
    if not entry.citation:
        bad.append("citation")
    if bad:
        raise ValidationError(
            f"knowledge entry {entry.entry_id or '<missing id>'} invalid: "
            f"{', '.join(bad)}", fields=bad)


@dataclass(frozen=True)
class KnowledgeStore:
    """Immutable snapshot of the long-term store; upserts produce new snapshots."""

    entries: dict[str, KnowledgeEntry]
    version: int = 0
    path: str | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, entry_id: str) -> KnowledgeEntry | None:
        return self.entries.get(entry_id)

    def entries_for_key(self, key: str) -> list[KnowledgeEntry]:
        found = [e for e in self.entries.values() if key in e.keys]
        found.sort(key=lambda e: e.entry_id)
        return found


@dataclass(frozen=True)
class RetrievalResult:
    entries: tuple[tuple[KnowledgeEntry, float], ...]
    query_factors: tuple[str, ...]

    @property
    def entry_ids(self) -> list[str]:
        return [entry.entry_id for entry, _ in self.entries]


def query_tags(factors: Iterable[ExtractedFactor], stage: Stage) -> frozenset[str]:
    """Derive retrieval tags from extracted factors.

    A factor contributes its id unless its value is an explicit False
    (a denied condition should not pull condition content). String and
    list values contribute the values themselves as extra tags, so a
    reported method id also retrieves that method's entry. With no
    factors, the stage topic tag alone drives stage-default retrieval.
    """
    tags: set[str] = set()
    for factor in factors:
        if factor.value is False:
            continue
        tags.add(factor.factor_id)
        if isinstance(factor.value, str) and factor.value:
            tags.add(factor.value)
        elif isinstance(factor.value, (list, tuple)):
            tags.update(str(v) for v in factor.value)
    if not tags:
        tags.add(stage.topic_tag)
    return frozenset(tags)


def jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 0.0
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


# A match scorer maps (entry keys, query tags) -> [0, 1]. Jaccard overlap is
# the default; an embedding-based scorer can be swapped in through the same
# signature without touching retrieval.
MatchScorer = Callable[[frozenset, frozenset], float]


def retrieve_by_tags(store: KnowledgeStore, tags: frozenset[str], k: int,
                     scorer: MatchScorer = jaccard) -> list[tuple[KnowledgeEntry, float]]:
    """Top-k entries by match score between entry keys and query tags.

    Zero-score entries never appear; ties break by entry_id so results are
    stable across runs.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    scored = []
    for entry in store.entries.values():
        score = scorer(entry.keys, tags)
        if not 0.0 <= score <= 1.0:
            raise ValidationError(
                f"scorer returned {score!r} for {entry.entry_id}; must be in [0, 1]")
        if score > 0.0:
            scored.append((entry, score))
    scored.sort(key=lambda pair: (-pair[1], pair[0].entry_id))
    return scored[:k]


def retrieve(store: KnowledgeStore, factors: Iterable[ExtractedFactor],
             stage: Stage, k: int,
             scorer: MatchScorer = jaccard) -> RetrievalResult:
    factors = list(factors)
    tags = query_tags(factors, stage)
    entries = retrieve_by_tags(store, tags, k, scorer)
    return RetrievalResult(
        entries=tuple(entries),
        query_factors=tuple(sorted({f.factor_id for f in factors})),
    )


def load_store(path: str | Path) -> KnowledgeStore:
    """Load and validate the store file; an empty file is an empty store."""
    path = Path(path)
    if not path.exists():
        raise FixtureError(f"knowledge store file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark else ""
        raise FixtureError(f"cannot parse knowledge store {path}{where}: {exc}")
    if data is None:
        logger.warning("knowledge store %s is empty", path)
        return KnowledgeStore(entries={}, version=0, path=str(path))
    if not isinstance(data, dict):
        raise FixtureError(f"knowledge store {path} must be a mapping at top level")
    entries: dict[str, KnowledgeEntry] = {}
    problems: list[str] = []
    for i, raw in enumerate(data.get("entries", []) or []):
        entry = KnowledgeEntry.from_dict(raw)
        try:
            validate_entry(entry)
        except ValidationError as exc:
            problems.append(f"record {i}: {exc}")
            continue
        if entry.entry_id in entries:
            raise DuplicateEntryError(entry.entry_id, str(path))
        entries[entry.entry_id] = entry
    if problems:
        raise FixtureError(
            f"knowledge store {path} has {len(problems)} invalid record(s)",
            details=problems)
    return KnowledgeStore(
        entries=entries,
        version=int(data.get("version", 0)),
        path=str(path),
    )


def save_store(store: KnowledgeStore, path: str | Path | None = None) -> Path:
    """Write the store back in canonical order (sorted by entry_id)."""
    target = Path(path) if path is not None else Path(store.path or "")
    if not str(target):
        raise ValidationError("no path to save the knowledge store to")
    payload = {
        "version": store.version,
        "entries": [store.entries[eid].to_dict() for eid in sorted(store.entries)],
    }
    target.write_text(yaml.safe_dump(payload, sort_keys=False, allow_unicode=True))
    return target


def upsert_entry(store: KnowledgeStore, entry: KnowledgeEntry, *,
                 persist: bool = True) -> KnowledgeStore:
    """Insert or replace an entry by id; bumps the version counter.

    Returns a fresh snapshot; the original store is untouched, so readers
    holding it keep a consistent view.
    """
    validate_entry(entry)
    entries = dict(store.entries)
    entries[entry.entry_id] = entry
    new_store = KnowledgeStore(entries=entries, version=store.version + 1, path=store.path)
    if persist and store.path:
        save_store(new_store)
    return new_store
