"""Small shared helpers: deterministic seed derivation and number formatting."""
from __future__ import annotations

import hashlib
import json
from importlib import resources
from typing import Any


def derive_seed(*parts: Any) -> int:
    """Derive a stable 64-bit RNG seed from arbitrary labeled parts.

    Never rely on Python's salted hash() here; results must be identical
    across interpreter runs.
    """
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def format_quantity(value: float) -> str:
    """Render a numeric quantity for narrative text (max 4 decimal places).

    Integers print without a decimal point; the caller must store the same
    rounded value it prints so text and value stay in sync.
    """
    r = round(float(value), 4)
    if r == int(r):
        return str(int(r))
    return f"{r:.4f}".rstrip("0").rstrip(".")


def round_quantity(value: float) -> float:
    """The numeric counterpart of format_quantity (round to 4 decimals)."""
    return round(float(value), 4)


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and fixed separators for hashing."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_digest(obj: Any) -> str:
    """SHA-256 hex digest of an object's canonical JSON form."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def load_packaged_json(name: str) -> dict:
    """Load one of the JSON config tables shipped inside the package."""
    with resources.files("maritime_intel.data").joinpath(name).open("rb") as fh:
        return json.load(fh)
