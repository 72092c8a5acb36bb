"""Flat ``key = value`` config files for :class:`~cappronet.train.TrainConfig`.

Blank lines and ``#`` comments are ignored.  Values are parsed according to
the field's default type; ``lr_schedule`` is written ``epoch:mult, ...``.
Unknown keys are rejected.
"""

import dataclasses

from .errors import InputError, ParseError
from .train import TrainConfig

_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}


def _parse_value(key, text):
    default = _FIELDS[key].default
    text = text.strip()
    if key == "lr_schedule":
        if not text:
            return ()
        pairs = []
        for item in text.split(","):
            epoch, _, mult = item.partition(":")
            pairs.append((int(epoch), float(mult)))
        return tuple(pairs)
    if isinstance(default, bool):
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {text!r}")
        return low in ("true", "1", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def parse_pairs(lines, source="<config>"):
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ParseError(f"{source}:{lineno}: expected 'key = value'")
        if key not in _FIELDS:
            raise ParseError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, val)
        except ValueError as exc:
            raise ParseError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def load_config(path=None, overrides=()):
    """Config from an optional file plus ``key=value`` override strings."""
    values = {}
    if path:
        with open(path) as f:
            values.update(parse_pairs(f, str(path)))
    values.update(parse_pairs(overrides, "<override>"))
    try:
        return TrainConfig(**values)
    except InputError as exc:
        raise ParseError(f"invalid config: {exc}") from None


def dump_config(config):
    lines = []
    for name in _FIELDS:
        value = getattr(config, name)
        if name == "lr_schedule":
            value = ", ".join(f"{e}:{m!r}" for e, m in config.schedule())
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
