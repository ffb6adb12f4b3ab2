"""The five counseling stages and their ordering.

The guided flow is a fixed, forward-only sequence: information gathering,
preference screening, health screening, recommendation, and profile
verification. Everything else in the engine keys off these five values.
"""

from __future__ import annotations

from enum import Enum


class Stage(Enum):
    INFO_GATHERING = 1
    PREFERENCE_SCREENING = 2
    HEALTH_SCREENING = 3
    RECOMMENDATION = 4
    PROFILE_VERIFICATION = 5

    @property
    def ordinal(self) -> int:
        return self.value

    @property
    def canonical(self) -> str:
        """Stable CamelCase name used in transcripts and the API."""
        return _CANONICAL[self]

    @property
    def label(self) -> str:
        """Human-facing stage title."""
        return _LABELS[self]

    @property
    def key(self) -> str:
        """snake_case key used in fixture files."""
        return self.name.lower()

    @property
    def topic_tag(self) -> str:
        """Knowledge-store tag for stage-default retrieval."""
        return f"topic:{self.key}"

    @classmethod
    def from_ordinal(cls, ordinal: int) -> Stage:
        return cls(ordinal)

    @classmethod
    def from_canonical(cls, name: str) -> Stage:
        for stage, canonical in _CANONICAL.items():
            if canonical == name:
                return stage
        raise ValueError(f"unknown stage name {name!r}")


_CANONICAL = {
    Stage.INFO_GATHERING: "InfoGathering",
    Stage.PREFERENCE_SCREENING: "PreferenceScreening",
    Stage.HEALTH_SCREENING: "HealthScreening",
    Stage.RECOMMENDATION: "Recommendation",
    Stage.PROFILE_VERIFICATION: "ProfileVerification",
}

_LABELS = {
    Stage.INFO_GATHERING: "Information Gathering",
    Stage.PREFERENCE_SCREENING: "Preference Screening",
    Stage.HEALTH_SCREENING: "Health Screening",
    Stage.RECOMMENDATION: "Recommendation",
    Stage.PROFILE_VERIFICATION: "Profile Verification",
}

ALL_STAGES: tuple[Stage, ...] = tuple(Stage)
TERMINAL_STAGE = Stage.PROFILE_VERIFICATION
