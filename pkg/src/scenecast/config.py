"""Line-based ``key = value`` configuration with ``[section]`` headers.

Blank lines and ``#`` comments are ignored. Section headers may carry a
name after the type, e.g. ``[box car_1]``. Every value remembers the line it
came from so validation errors can point at it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError


@dataclass
class Section:
    kind: str
    name: str
    line: int
    entries: dict = field(default_factory=dict)  # key -> (raw value, line)

    def take(self, key, convert=str, default=None, required=False):
        if key not in self.entries:
            if required:
                raise ConfigError(f"[{self.kind}] missing required key {key!r}", self.line, key)
            return default
        raw, line = self.entries[key]
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", line, key) from None

    def check_keys(self, allowed):
        for key, (_, line) in self.entries.items():
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{self.kind}]", line, key)


def parse_config(text):
    sections = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", lineno)
            head = line[1:-1].split(None, 1)
            if not head:
                raise ConfigError("empty section header", lineno)
            current = Section(head[0], head[1].strip() if len(head) > 1 else "", lineno)
            sections.append(current)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if current is None:
            raise ConfigError("key outside of any section", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", lineno)
        if key in current.entries:
            raise ConfigError(f"duplicate key {key!r}", lineno, key)
        current.entries[key] = (value, lineno)
    return sections


def floats(n):
    def convert(raw):
        vals = [float(x) for x in raw.split()]
        if len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        return vals
    return convert


def fmt(values):
    if isinstance(values, (int, float)):
        return repr(values)
    return " ".join(repr(float(v)) for v in values)
