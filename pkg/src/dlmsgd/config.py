"""``key = value`` configuration files layered over the packaged defaults."""

from __future__ import annotations

import os
from importlib import resources


def parse_config(text: str, source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        out[key.strip()] = value.strip()
    return out


def default_config() -> dict[str, str]:
    text = resources.files("dlmsgd").joinpath("data/defaults.cfg").read_text()
    return parse_config(text, "defaults.cfg")


def load_config(path: str | os.PathLike | None = None) -> dict[str, str]:
    cfg = default_config()
    if path is not None:
        with open(path) as fh:
            override = parse_config(fh.read(), str(path))
        unknown = set(override) - set(cfg)
        if unknown:
            raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
        cfg.update(override)
    return cfg
