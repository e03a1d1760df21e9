"""``key = value`` configuration files mapped onto dataclasses."""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import get_type_hints


def read_key_values(path) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _convert(value: str, typ):
    name = getattr(typ, "__name__", str(typ))
    if typ is bool or name == "bool":
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if typ is int or name == "int":
        return int(value)
    if typ is float or name == "float":
        return float(value)
    if typ is tuple or str(typ).startswith(("tuple", "typing.Tuple")):
        return tuple(_scalar(v) for v in value.replace(",", " ").split())
    if "Optional" in str(typ) or "None" in str(typ):
        return None if value.lower() in ("none", "") else _scalar(value)
    return value


def _scalar(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def from_key_values(cls, values: dict, strict: bool = True):
    """Build dataclass ``cls`` from string values, converting by annotation."""
    hints = get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in values.items():
        if k not in names:
            if strict:
                raise ValueError(f"unknown key {k!r} for {cls.__name__}")
            continue
        kwargs[k] = _convert(v, hints[k]) if isinstance(v, str) else v
    return cls(**kwargs)


def load_config(cls, path=None, overrides=(), strict: bool = True):
    """Dataclass from an optional key=value file plus ``key=value`` overrides.

    Dotted keys (``train.epochs = 500``) address nested dataclass fields.
    """
    values = dict(read_key_values(path)) if path else {}
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return _build(cls, values, strict)


def _build(cls, values: dict, strict: bool):
    nested, flat = {}, {}
    for k, v in values.items():
        head, _, rest = k.partition(".")
        if rest:
            nested.setdefault(head, {})[rest] = v
        else:
            flat[k] = v
    fields = {f.name: f for f in dataclasses.fields(cls)}
    obj = from_key_values(cls, flat, strict)
    updates = {}
    for name, sub in nested.items():
        if name not in fields:
            if strict:
                raise ValueError(f"unknown section {name!r} for {cls.__name__}")
            continue
        current = getattr(obj, name)
        if not dataclasses.is_dataclass(current):
            raise ValueError(f"{cls.__name__}.{name} is not a section")
        base = {f.name: getattr(current, f.name) for f in dataclasses.fields(current)}
        merged = _build(type(current), sub, strict)
        changed = {k: getattr(merged, k) for k in base
                   if k in sub or any(s.startswith(k + ".") for s in sub)}
        updates[name] = dataclasses.replace(current, **changed)
    return dataclasses.replace(obj, **updates) if updates else obj
