"""Shared utility functions for the mixture regression learner."""

from __future__ import annotations

import hashlib
import json
import subprocess
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np

from src.errors import ParameterError

PACKAGE_NAME = "mixture-regression-learner"
FALLBACK_VERSION = "0.1.0"


def qident(name: str) -> str:
    """Quote an identifier for DuckDB (schema/table/column)."""
    return '"' + name.replace('"', '""') + '"'


def qliteral(value: str) -> str:
    """Quote a string literal for DuckDB statements that take no parameters (COPY)."""
    return "'" + value.replace("'", "''") + "'"


def md5_hash(path: Path) -> str:
    """Calculate MD5 hash of a file."""
    hash_obj = hashlib.md5()
    with path.open("rb") as file:
        for chunk in iter(lambda: file.read(1 << 20), b""):
            hash_obj.update(chunk)
    return hash_obj.hexdigest()


def canonical_json(payload: Any) -> str:
    """Serialize with sorted keys and no whitespace so equal configs hash equally."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_json_default)


def config_hash(payload: Any) -> str:
    """MD5 of the canonical JSON form of a config mapping."""
    return hashlib.md5(canonical_json(payload).encode("utf-8")).hexdigest()


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    msg = f"Object of type {type(obj).__name__} is not JSON serializable"
    raise TypeError(msg)


def write_json(path: Path, payload: Any) -> None:
    """Write an indented JSON document, creating parent folders."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=_json_default)
        f.write("\n")


def describe_version() -> str:
    """git-describe style version string, falling back to the package version."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            capture_output=True,
            text=True,
            check=False,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
    except (OSError, subprocess.SubprocessError):
        result = None
    if result is not None and result.returncode == 0 and result.stdout.strip():
        return result.stdout.strip()
    try:
        return "v" + metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "v" + FALLBACK_VERSION


def make_rng(seed: int | np.random.SeedSequence) -> np.random.Generator:
    """Seeded PCG64 generator."""
    return np.random.default_rng(seed)


def spawn_rngs(rng: np.random.Generator, count: int) -> list[np.random.Generator]:
    """Independent child streams derived from ``rng``; same parent state gives same children."""
    seeds = rng.integers(0, 2**63 - 1, size=count, dtype=np.int64)
    return [np.random.default_rng(np.random.SeedSequence(int(s))) for s in seeds]


def parse_seed_list(raw: str) -> list[int]:
    """Parse ``"0..9"`` (inclusive range) or ``"1,4,7"`` into a list of seeds."""
    text = raw.strip()
    if not text:
        return []
    if ".." in text:
        lo, hi = text.split("..", 1)
        start, stop = int(lo), int(hi)
        if stop < start:
            msg = f"Empty seed range {raw!r}"
            raise ParameterError(msg)
        return list(range(start, stop + 1))
    return [int(part) for part in text.split(",") if part.strip()]
