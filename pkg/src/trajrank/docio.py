"""Canonical JSON documents, content hashing, and seed derivation.

Every persisted artifact goes through :func:`canonical_json` so that
re-running a stage with identical inputs reproduces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def _plain(obj):
    """Recursively convert numpy scalars/arrays to plain Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def canonical_json(doc) -> str:
    """Deterministic JSON: sorted keys, no whitespace variance, repr floats."""
    return json.dumps(_plain(doc), sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_hash(doc) -> str:
    """sha256 hex digest of the canonical JSON form of a document."""
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def save_doc(path, doc) -> str:
    """Write a canonical JSON document, return its content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = canonical_json(doc)
    path.write_text(text + "\n", encoding="utf-8")
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_doc(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def derive_seed(root_seed: int, *labels) -> int:
    """Stable child seed from a root seed and a list of stage labels.

    Independent of PYTHONHASHSEED; identical inputs give identical seeds on
    every platform.
    """
    key = json.dumps([int(root_seed), *[str(l) for l in labels]], separators=(",", ":"))
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)
