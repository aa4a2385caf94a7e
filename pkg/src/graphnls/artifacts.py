"""Deterministic JSON/CSV/.dat artifact writing."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__

SCHEMA = "graphnls-result/1"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def dumps(payload) -> str:
    return json.dumps(_plain(payload), sort_keys=True, indent=2, allow_nan=True) + "\n"


def config_hash(config: dict) -> str:
    return hashlib.sha256(dumps(config).encode()).hexdigest()


def envelope(kind: str, config: dict, body: dict) -> dict:
    return {
        "schema": SCHEMA,
        "kind": kind,
        "version": __version__,
        "config": config,
        "config_hash": config_hash(config),
        "result": body,
    }


def write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def write_json(path: Path, payload) -> Path:
    return write_text(path, dumps(payload))


def read_json(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dat_file(header: list[str], rows) -> str:
    lines = [f"# {h}" for h in header]
    lines += [" ".join(repr(float(x)) for x in row) for row in rows]
    return "\n".join(lines) + "\n"
