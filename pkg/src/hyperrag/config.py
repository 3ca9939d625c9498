"""Run configuration: command-line flags over environment over ``hyperrag.toml``."""

from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigurationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_FILE = "hyperrag.toml"
ENV_PREFIX = "HYPERRAG_"
FIXTURES_ROOT = Path(__file__).parent / "fixtures"


@dataclass
class RunConfig:
    workdir: Path = Path("hyperrag-work")
    mock: bool = False
    fixtures: str | None = None
    base_url: str | None = None
    model: str = "gpt-4o-mini"
    embedding_model: str = "text-embedding-3-small"
    dim: int = 256
    chunk_size: int = 1200
    overlap: int = 100
    k_vertices: int = 20
    k_edges: int = 20
    k_chunks: int = 5
    budget: int = 6000
    mask: str = "111"
    lite: bool = False
    parallelism: int = 4
    seed: int = 0
    swap: bool = True

    def validate(self) -> "RunConfig":
        if self.mock and self.base_url:
            raise ConfigurationError("--mock and --base-url are mutually exclusive")
        if self.overlap < 0 or self.chunk_size <= self.overlap:
            raise ConfigurationError(f"need 0 <= overlap < chunk_size, got {self.overlap} / {self.chunk_size}")
        for name in ("dim", "k_vertices", "k_edges", "k_chunks", "parallelism"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.budget < 0:
            raise ConfigurationError("budget must be >= 0")
        if len(self.mask) != 3 or set(self.mask) - {"0", "1"}:
            raise ConfigurationError(f"mask must be three 0/1 digits, got {self.mask!r}")
        return self

    def require_backend(self) -> None:
        if not (self.mock or self.base_url):
            raise ConfigurationError("no model backend: pass --mock or --base-url (or set HYPERRAG_BASE_URL)")

    def fixture_dir(self) -> Path | None:
        """Resolve ``fixtures`` as a path, or as the name of a bundled fixture set."""
        if not self.fixtures:
            return None
        path = Path(self.fixtures)
        if path.is_dir():
            return path
        if (FIXTURES_ROOT / self.fixtures).is_dir():
            return FIXTURES_ROOT / self.fixtures
        raise ConfigurationError(f"fixtures not found: {self.fixtures}")


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value: Any, source: str) -> Any:
    default = _FIELDS[name].default
    try:
        if name == "workdir":
            return Path(value)
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off", ""):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if isinstance(default, int):
            return int(value)
        return None if value is None else str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{source}: bad value for {name}: {exc}") from None


def load_config(flags: Mapping[str, Any], environ: Mapping[str, str] | None = None) -> RunConfig:
    """Merge defaults, ``<workdir>/hyperrag.toml``, ``HYPERRAG_*`` variables and flags.

    ``flags`` holds only the options given on the command line (``None``
    values are ignored). The workdir itself is resolved first, since it
    locates the config file.
    """
    environ = os.environ if environ is None else environ
    flags = {k: v for k, v in flags.items() if v is not None}
    unknown = set(flags) - set(_FIELDS)
    if unknown:
        raise ConfigurationError(f"unknown option(s): {', '.join(sorted(unknown))}")
    env = {name: environ[ENV_PREFIX + name.upper()] for name in _FIELDS if ENV_PREFIX + name.upper() in environ}

    workdir = Path(flags.get("workdir") or env.get("workdir") or RunConfig.workdir)
    file_values: dict[str, Any] = {}
    path = workdir / CONFIG_FILE
    if path.exists():
        try:
            file_values = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
        bad = set(file_values) - set(_FIELDS)
        if bad:
            raise ConfigurationError(f"{path}: unknown key(s): {', '.join(sorted(bad))}")

    values: dict[str, Any] = {}
    for source, layer in ((str(path), file_values), ("environment", env), ("command line", flags)):
        for name, value in layer.items():
            values[name] = _coerce(name, value, source)
    values["workdir"] = workdir
    return RunConfig(**values).validate()
