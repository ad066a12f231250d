"""CLI configuration: ``aflow.toml`` < environment < command-line flags."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_FILE = "aflow.toml"

ENV_VARS = {
    "lm_url": "AFLOW_LM_URL",
    "lm_model": "AFLOW_LM_MODEL",
    "lm_key": "AFLOW_LM_KEY",
    "embed_model": "AFLOW_EMBED_MODEL",
    "comfy_url": "AFLOW_COMFY_URL",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CliConfig:
    catalog: str | None = None
    references: str | None = None
    syntax: str = "declarative"
    lm_url: str | None = None
    lm_model: str | None = None
    lm_key: str | None = None
    embed_model: str | None = None
    comfy_url: str = "http://127.0.0.1:8188"
    limit: int = 3
    format: str = "text"

    def merged(self, values: Mapping[str, Any]) -> CliConfig:
        known = {f.name for f in fields(self)}
        return replace(self, **{k: v for k, v in values.items() if k in known and v is not None})


def _check(cfg: CliConfig) -> CliConfig:
    if cfg.syntax.replace("-", "_") not in {"declarative", "dataflow", "pseudo_natural"}:
        raise ConfigError(f"unknown syntax {cfg.syntax!r}")
    if cfg.format not in {"text", "json"}:
        raise ConfigError(f"unknown output format {cfg.format!r}")
    if not isinstance(cfg.limit, int) or isinstance(cfg.limit, bool) or cfg.limit < 0:
        raise ConfigError(f"limit must be a nonnegative integer, got {cfg.limit!r}")
    return cfg


def load_config(path: str | Path | None = None, env: Mapping[str, str] | None = None,
                flags: Mapping[str, Any] | None = None) -> CliConfig:
    """Build the effective configuration.

    An explicit ``path`` must exist; otherwise ``./aflow.toml`` is used when present.
    Relative catalog and reference paths in the file resolve against the file's directory.
    """
    env = os.environ if env is None else env
    cfg = CliConfig()
    file = Path(path) if path is not None else Path(CONFIG_FILE)
    if path is not None or file.exists():
        try:
            doc = tomllib.loads(file.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read {file}: {exc.strerror or exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{file}: {exc}") from exc
        doc = doc.get("aflow", doc)
        unknown = sorted(set(doc) - {f.name for f in fields(cfg)})
        if unknown:
            raise ConfigError(f"{file}: unknown keys {', '.join(unknown)}")
        for key in ("catalog", "references"):
            if isinstance(doc.get(key), str):
                doc[key] = str((file.parent / doc[key]).resolve())
        cfg = cfg.merged(doc)
    cfg = cfg.merged({field: env.get(var) or None for field, var in ENV_VARS.items()})
    return _check(cfg.merged(flags or {}))
