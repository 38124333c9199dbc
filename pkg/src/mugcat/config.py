"""Config file handling.

Format: flat ``key = value`` lines, ``#`` comments, blank lines ignored.
Endpoint overrides use dotted keys (``endpoint.recognize = http://...``).
The MUGCAT_CONFIG environment variable supplies a default path.
"""

import os
from pathlib import Path
from typing import Optional

from .errors import MugcatError
from .model import PipelineConfig, validate_config

ENV_VAR = "MUGCAT_CONFIG"


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise MugcatError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise MugcatError(f"config line {lineno}: empty key")
        values[key] = value
    return values


def load_config_file(path: str | Path) -> PipelineConfig:
    return validate_config(parse_config_text(Path(path).read_text()))


def resolve_config(path: Optional[str | Path] = None) -> PipelineConfig:
    """Explicit path, else $MUGCAT_CONFIG, else defaults."""
    if path is None:
        path = os.environ.get(ENV_VAR) or None
    if path is None:
        return PipelineConfig()
    return load_config_file(path)
