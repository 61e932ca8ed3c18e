"""Run configuration: declarative file + flag overrides, hashed into artifacts."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .graph import DEFAULT_DEPTH, DEFAULT_RELATIONS


def hash_config(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class RunConfig:
    graph: str | None = None
    provider: str | None = None  # "file:<path>" or sidecar base URL
    prior_source: str = "conceptnet"  # conceptnet | llm-fixture | llm-live
    llm_fixtures: str | None = None
    llm_url: str | None = None
    lam: float = 1.0
    depth: int = DEFAULT_DEPTH
    relations: tuple[str, ...] = tuple(sorted(DEFAULT_RELATIONS))
    top_k: int | None = None
    template_id: str = "photo_of"
    wordvec: str | None = None
    max_iters: int = 10
    eps: float = 1e-6
    seed: int = 0
    out_dir: str | None = None

    def hash(self) -> str:
        payload = asdict(self)
        payload.pop("out_dir")  # artifact destination, not behavior
        return hash_config(payload)


def load_config_file(path: str | Path) -> dict[str, dict[str, str]]:
    """Read the key-value-with-sections config format; section names match
    subcommands, with [common] applying everywhere. Flags win over the file."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path} not found or unreadable")
    return {section: dict(parser[section]) for section in parser.sections()}


def resolve(args_value, config: dict[str, str], key: str, default=None, cast=None):
    """Flag value if given, else config-file value, else default."""
    if args_value is not None:
        return args_value
    if key in config:
        raw = config[key]
        return cast(raw) if cast else raw
    return default
