"""Exception hierarchy shared across the counseling engine."""


class CounselError(Exception):
    """Base class for all engine errors."""


class ConfigurationError(CounselError):
    """A fixture or configuration value is missing or unusable."""


class FixtureError(ConfigurationError):
    """A fixture file failed to parse or validate.

    ``details`` carries per-record diagnostics (file, record index, field).
    """

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.details = details or []


class DuplicateEntryError(FixtureError):
    """Two records in a fixture share an id that must be unique."""

    def __init__(self, entry_id: str, path: str = ""):
        super().__init__(f"duplicate entry id {entry_id!r}" + (f" in {path}" if path else ""))
        self.entry_id = entry_id


class ValidationError(CounselError):
    """A domain object violates its invariants.

    ``fields`` names every failing field so callers can report all problems
    at once instead of fixing them one by one.
    """

    def __init__(self, message: str, fields: list[str] | None = None):
        super().__init__(message)
        self.fields = fields or []


class UnknownMethodError(CounselError):
    """A method id was not found in the loaded rule fixture."""


class SessionCompleteError(CounselError):
    """A turn was posted to a session that already finished stage 5."""


class UnverifiedProfileError(CounselError):
    """Summary generation requires an explicitly verified profile."""


class PromptBudgetError(CounselError):
    """The mandatory prompt sections alone exceed the context budget."""


class GatewayError(CounselError):
    """Base class for LLM gateway failures."""


class GatewayTransportError(GatewayError):
    """Transient transport failure (timeout, connection reset); retryable."""


class GatewayRejectionError(GatewayError):
    """Terminal provider rejection (4xx-class); never retried."""

    def __init__(self, message: str, status_code: int = 0):
        super().__init__(message)
        self.status_code = status_code


class ScriptExhaustedError(GatewayError):
    """The scripted backend ran out of replies for a stage."""


class MigrationError(CounselError):
    """A persisted session snapshot has an unsupported schema version."""
