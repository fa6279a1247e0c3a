"""Flat ``key = value`` experiment configuration files.

One assignment per line; ``#`` starts a comment. Values are parsed as JSON
when possible (numbers, lists, strings in double quotes, true/false), then as
a fraction ``a/b``; anything else is kept as a bare string, which is how
function-spec expressions are written::

    experiment = trajectory
    objective = quadratic(H=[[3, 0], [0, 1]])
    alpha = 1/15
"""
from __future__ import annotations

import json
from fractions import Fraction
from importlib import resources

from ..errors import SpecError

KINDS = ("table", "trajectory", "scaling", "spectrum")


def parse_value(text):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "/" in text and "(" not in text:
        try:
            return float(Fraction(text.replace(" ", "")))
        except (ValueError, ZeroDivisionError):
            pass
    return text


def parse_config(text, source="<config>"):
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key.isidentifier():
            raise SpecError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if key in cfg:
            raise SpecError(f"{source}:{lineno}: duplicate key {key!r}")
        cfg[key] = parse_value(value)
    return cfg


def default_config(kind):
    if kind not in KINDS:
        raise SpecError(f"unknown experiment kind {kind!r}")
    text = resources.files("lrgd.bench").joinpath("configs", f"{kind}.cfg").read_text()
    return parse_config(text, f"{kind}.cfg")


def load_config(kind, path=None):
    """Shipped defaults for ``kind`` overlaid with the keys from ``path``."""
    cfg = default_config(kind)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            user = parse_config(fh.read(), str(path))
        unknown = set(user) - set(cfg)
        if unknown:
            raise SpecError(f"unknown keys for {kind}: {sorted(unknown)}")
        cfg.update(user)
    if cfg.get("experiment") != kind:
        raise SpecError(f"config declares experiment={cfg.get('experiment')!r}, expected {kind!r}")
    return cfg
