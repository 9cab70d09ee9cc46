"""Seed derivation and the line-oriented key=value record format."""

from __future__ import annotations

import hashlib


def derive_seed(seed: int, *tags: str) -> int:
    """Stable 63-bit child seed from a base seed and string tags.

    Uses sha256 so derived streams are independent of numpy version and of
    the order in which sibling streams get created.
    """
    msg = str(int(seed)) + "".join("|" + t for t in tags)
    digest = hashlib.sha256(msg.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def fmt_value(value) -> str:
    """Canonical text for a record value; floats keep full round-trip precision."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return ",".join(fmt_value(v) for v in value)
    text = str(value)
    if any(c in text for c in " \t\n="):
        raise ValueError(f"record value may not contain whitespace or '=': {text!r}")
    return text


def make_record(kind: str, fields: dict) -> str:
    """One record line: `record=<kind>` followed by sorted key=value pairs."""
    parts = [f"record={kind}"]
    parts.extend(f"{k}={fmt_value(fields[k])}" for k in sorted(fields))
    return " ".join(parts)


def parse_record(line: str) -> dict[str, str]:
    fields: dict[str, str] = {}
    for token in line.strip().split(" "):
        if not token:
            continue
        key, sep, value = token.partition("=")
        if not sep:
            raise ValueError(f"malformed record token: {token!r}")
        fields[key] = value
    return fields


def config_hash(canonical: str) -> str:
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
