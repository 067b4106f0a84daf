"""Plain-text configuration files.

Grammar (one statement per line):

    # comment (also allowed after a value)
    [section]
    key = value

Keys may repeat within a section; repeated keys accumulate in order, which
is how lists of scene primitives are written. Values are untyped strings;
callers fetch them through the typed accessors on :class:`Config`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import UsageError

_SECTION_RE = re.compile(r"^\[([A-Za-z0-9_.-]+)\]$")
_KEY_RE = re.compile(r"^[A-Za-z0-9_.-]+$")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class Config:
    """Parsed configuration: per-section ordered (key, value, line) triples."""

    path: str = "<none>"
    sections: dict[str, list[tuple[str, str, int]]] = field(default_factory=dict)

    def get(self, section: str, key: str, default=None) -> str | None:
        for k, v, _ in self.sections.get(section, []):
            if k == key:
                return v
        return default

    def get_all(self, section: str, key: str) -> list[str]:
        return [v for k, v, _ in self.sections.get(section, []) if k == key]

    def get_int(self, section: str, key: str, default: int | None = None) -> int | None:
        return self._typed(section, key, default, int, "integer")

    def get_float(self, section: str, key: str, default: float | None = None) -> float | None:
        return self._typed(section, key, default, float, "number")

    def get_bool(self, section: str, key: str, default: bool | None = None) -> bool | None:
        def parse(v: str) -> bool:
            lv = v.lower()
            if lv in _TRUE:
                return True
            if lv in _FALSE:
                return False
            raise ValueError(v)

        return self._typed(section, key, default, parse, "boolean")

    def get_floats(self, section: str, key: str, default=None):
        """Whitespace-separated float list, e.g. ``light = 0.3 0.8 0.5``."""
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return [float(tok) for tok in raw.split()]
        except ValueError:
            line = self._line(section, key)
            raise UsageError(f"{self.path}:{line}: '{key}' expects numbers, got {raw!r}")

    def _typed(self, section, key, default, convert, kind):
        raw = self.get(section, key)
        if raw is None:
            return default
        try:
            return convert(raw)
        except ValueError:
            line = self._line(section, key)
            raise UsageError(f"{self.path}:{line}: '{key}' expects a {kind}, got {raw!r}")

    def _line(self, section, key) -> int:
        for k, _, line in self.sections.get(section, []):
            if k == key:
                return line
        return 0


def parse_config(text: str, path: str = "<string>") -> Config:
    cfg = Config(path=path)
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            cfg.sections.setdefault(section, [])
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value' or '[section]', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise UsageError(f"{path}:{lineno}: invalid key {key!r}")
        cfg.sections.setdefault(section, []).append((key, value, lineno))
    return cfg


def load_config(path: str) -> Config:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    return parse_config(text, path=path)
