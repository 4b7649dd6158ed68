"""Plain-text run configuration.

One ``key = value`` per line; ``#`` starts a comment. Values are JSON
scalars (``300000``, ``0.99``, ``true``, ``null``, ``"catch3"``); bare words
are read as strings. Keys are the field names of :class:`ExperimentSpec`
and :class:`WorkerConfig`.
"""
from __future__ import annotations

import json
import typing
from dataclasses import fields

from .exceptions import ConfigError
from .orchestrator import ExperimentSpec, WorkerConfig


def _field_types():
    out = {}
    for cls in (ExperimentSpec, WorkerConfig):
        hints = typing.get_type_hints(cls)
        for f in fields(cls):
            if f.name == "worker":
                continue
            out[f.name] = hints[f.name]
    return out


FIELD_TYPES = _field_types()


def _coerce(key, value, line):
    hint = FIELD_TYPES[key]
    optional = type(None) in typing.get_args(hint)
    base = next((t for t in typing.get_args(hint) if t is not type(None)), hint)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{key} may not be null", line)
    if base is bool:
        if isinstance(value, bool):
            return value
    elif base is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    elif base is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif base is str:
        if isinstance(value, str):
            return value
    raise ConfigError(f"{key} expects {base.__name__}, got {value!r}", line)


def parse_config(text: str, overrides=None) -> ExperimentSpec:
    """Parse config text into an (unresolved) :class:`ExperimentSpec`."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, val = (s.strip() for s in line.partition("="))
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            parsed = json.loads(val)
        except json.JSONDecodeError:
            parsed = None if val.lower() == "none" else val
        values[key] = _coerce(key, parsed, lineno)
    for key, val in (overrides or {}).items():
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _coerce(key, val, None)
    return ExperimentSpec.from_dict(values)


def load_config(path, overrides=None) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides)


def dump_config(spec: ExperimentSpec) -> str:
    """Emit every field, one per line, in a form :func:`parse_config` reads back."""
    lines = [f"{k} = {json.dumps(v)}" for k, v in spec.to_dict().items()]
    return "\n".join(lines) + "\n"
