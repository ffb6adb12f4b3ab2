"""Service configuration: file paths, backend selection, and tuning knobs.

All fixture paths in a config file resolve relative to the file itself, so
a config can sit next to its fixtures. Credentials are never stored here;
``backend_auth_env`` and ``admin_token_env`` name environment variables.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError

FIXTURES_DIR = Path(__file__).parent / "fixtures"

MODE_GUIDED = "guided"
MODE_NAIVE = "naive"


@dataclass(frozen=True)
class EngineConfig:
    knowledge_store_path: str
    rules_path: str
    criteria_path: str
    prompt_template_path: str
    dialogue_templates_path: str
    redaction_policy_path: str
    llm_script_path: str
    backend_kind: str = "scripted"
    backend_url: str = ""
    backend_model: str = ""
    backend_auth_env: str = "LLM_API_KEY"
    request_timeout_s: float = 30.0
    max_retries: int = 3
    backoff_s: tuple[float, ...] = (0.5, 1.0, 2.0)
    retrieval_k: int = 5
    context_budget_chars: int = 12000
    window_turns: int = 20
    max_reasks: int = 3
    bind_host: str = "127.0.0.1"
    bind_port: int = 8080
    persistence_dir: str = "./counselkit-sessions"
    admin_token_env: str = "COUNSEL_ADMIN_TOKEN"
    extraction_mode: str = "rules"
    engine_mode: str = MODE_GUIDED
    disclaimer: str = ("This summary supports counseling and is not a medical "
                       "diagnosis or prescription. Review it with a clinician.")

    def with_overrides(self, **kwargs: Any) -> EngineConfig:
        return replace(self, **kwargs)


_PATH_FIELDS = (
    "knowledge_store_path",
    "rules_path",
    "criteria_path",
    "prompt_template_path",
    "dialogue_templates_path",
    "redaction_policy_path",
    "llm_script_path",
)


def default_config(persistence_dir: str | None = None) -> EngineConfig:
    """Config pointing at the packaged seed fixtures."""
    cfg = EngineConfig(
        knowledge_store_path=str(FIXTURES_DIR / "knowledge_store.yaml"),
        rules_path=str(FIXTURES_DIR / "eligibility_rules.yaml"),
        criteria_path=str(FIXTURES_DIR / "criteria.yaml"),
        prompt_template_path=str(FIXTURES_DIR / "prompt_template.yaml"),
        dialogue_templates_path=str(FIXTURES_DIR / "dialogue_templates.yaml"),
        redaction_policy_path=str(FIXTURES_DIR / "redaction_policy.yaml"),
        llm_script_path=str(FIXTURES_DIR / "llm_script.yaml"),
    )
    if persistence_dir is not None:
        cfg = cfg.with_overrides(persistence_dir=persistence_dir)
    return cfg


def load_config(path: str | Path) -> EngineConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse config {path}: {exc}")
    base = path.parent

    def resolve(value: str) -> str:
        p = Path(value).expanduser()
        return str(p if p.is_absolute() else (base / p))

    kwargs: dict[str, Any] = {}
    for name in _PATH_FIELDS:
        if name in data:
            kwargs[name] = resolve(str(data[name]))
    for name in ("backend_kind", "backend_url", "backend_model", "backend_auth_env",
                 "bind_host", "persistence_dir", "admin_token_env",
                 "extraction_mode", "engine_mode", "disclaimer"):
        if name in data:
            kwargs[name] = str(data[name])
    for name in ("request_timeout_s",):
        if name in data:
            kwargs[name] = float(data[name])
    for name in ("max_retries", "retrieval_k", "context_budget_chars",
                 "window_turns", "max_reasks", "bind_port"):
        if name in data:
            kwargs[name] = int(data[name])
    if "backoff_s" in data:
        kwargs["backoff_s"] = tuple(float(x) for x in data["backoff_s"])

    defaults = default_config()
    for name in _PATH_FIELDS:
        kwargs.setdefault(name, getattr(defaults, name))
    config = EngineConfig(**kwargs)
    validate_config(config)
    return config


def validate_config(config: EngineConfig) -> None:
    missing = [name for name in _PATH_FIELDS
               if not Path(getattr(config, name)).exists()]
    if missing:
        raise ConfigurationError(
            "config references missing fixture files: "
            + ", ".join(f"{n}={getattr(config, n)}" for n in missing))
    positive = {
        "request_timeout_s": config.request_timeout_s,
        "max_retries": config.max_retries,
        "retrieval_k": config.retrieval_k,
        "context_budget_chars": config.context_budget_chars,
        "window_turns": config.window_turns,
        "bind_port": config.bind_port,
    }
    bad = [name for name, value in positive.items() if value <= 0]
    if config.max_reasks < 0:
        bad.append("max_reasks")
    if any(b < 0 for b in config.backoff_s):
        bad.append("backoff_s")
    if bad:
        raise ConfigurationError(f"config values must be positive: {', '.join(bad)}")
    if config.backend_kind not in ("scripted", "http"):
        raise ConfigurationError(f"unknown backend kind {config.backend_kind!r}")
    if config.backend_kind == "http" and not config.backend_url:
        raise ConfigurationError("http backend requires backend_url")
    if config.engine_mode not in (MODE_GUIDED, MODE_NAIVE):
        raise ConfigurationError(f"unknown engine mode {config.engine_mode!r}")
    if config.extraction_mode not in ("rules", "llm"):
        raise ConfigurationError(f"unknown extraction mode {config.extraction_mode!r}")
