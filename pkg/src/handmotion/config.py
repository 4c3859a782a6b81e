"""Layered run configuration and artifact provenance.

Precedence: built-in defaults < JSON config file < command-line flags.
Environment variables are read only for secrets (the annotation endpoint
and API key). Every artifact directory receives a ``run_config.json``
with the resolved configuration and content hashes of its inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

from . import __version__
from .errors import FormatError

ENV_ENDPOINT = "HANDMOTION_ANNOTATION_ENDPOINT"
ENV_API_KEY = "HANDMOTION_ANNOTATION_KEY"


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise FormatError("config file not found", path)
    except json.JSONDecodeError as exc:
        raise FormatError(f"config file is not valid JSON: {exc}", path)
    if not isinstance(data, dict):
        raise FormatError("config file must hold a JSON object", path)
    # JSON keys use dashes or underscores; argparse dests use underscores
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def env_secrets() -> dict:
    out = {}
    if os.environ.get(ENV_ENDPOINT):
        out["endpoint"] = os.environ[ENV_ENDPOINT]
    if os.environ.get(ENV_API_KEY):
        out["api_key"] = os.environ[ENV_API_KEY]
    return out


def hash_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(path: str | Path) -> str:
    """Order-stable content hash of a file or directory tree."""
    path = Path(path)
    if path.is_file():
        return hash_file(path)
    h = hashlib.sha256()
    for child in sorted(path.rglob("*")):
        if child.is_file():
            h.update(str(child.relative_to(path)).encode())
            h.update(hash_file(child).encode())
    return h.hexdigest()


def write_provenance(
    target: str | Path, resolved: dict, inputs: dict[str, str | Path] | None = None
) -> Path:
    """Serialize the resolved configuration next to the artifact it produced."""
    target = Path(target)
    directory = target if target.is_dir() else target.parent
    directory.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": __version__,
        "config": {k: v for k, v in sorted(resolved.items()) if not callable(v)},
        "inputs": {
            name: {"path": str(p), "sha256": hash_tree(p)}
            for name, p in (inputs or {}).items()
            if Path(p).exists()
        },
    }
    out = directory / "run_config.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str))
    return out
