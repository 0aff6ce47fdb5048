"""Bundled experiment presets shipped as JSON files."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .config import ExperimentFile, load_config

__all__ = ["list_presets", "preset_path", "load_preset"]


def _dir() -> Path:
    return Path(str(resources.files("mvsubexp") / "presets"))


def list_presets() -> list[tuple[str, str]]:
    out = []
    for p in sorted(_dir().glob("*.json")):
        out.append((p.stem, json.loads(p.read_text()).get("description", "")))
    return out


def preset_path(name: str) -> Path:
    p = _dir() / f"{name}.json"
    if not p.exists():
        raise KeyError(f"no preset named {name!r}")
    return p


def load_preset(name: str) -> ExperimentFile:
    return load_config(preset_path(name))
