"""Flat ``key = value`` config files.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Values stay strings here; typed validation belongs to the consumer.
"""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def parse_kv(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}", "empty key")
        if key in out:
            raise ConfigError(key, f"duplicate key on line {lineno}")
        out[key] = value
    return out


def load_kv(path: str | Path) -> Dict[str, str]:
    return parse_kv(Path(path).read_text(encoding="utf-8"))


def dump_kv(values: Mapping[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())
