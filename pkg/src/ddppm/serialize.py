"""Deterministic artifact serialization.

Reruns with an identical config and seed must produce byte-identical
files, so everything routes through canonical JSON (sorted keys, repr
floats) and explicit CSV formatting, with a config digest and the tool
version embedded in every artifact instead of timestamps.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"),
                      allow_nan=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def format_value(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_json(path, payload: dict) -> None:
    Path(path).write_text(canonical_json(payload) + "\n", encoding="utf-8")


def write_csv(path, header: list, rows: list, preamble: dict) -> None:
    """CSV with '# key=value' preamble lines carrying digest and version."""
    lines = [f"# {k}={v}" for k, v in sorted(preamble.items())]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_value(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
