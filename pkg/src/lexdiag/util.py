"""Deterministic plumbing: stable hashes, derived seeds, canonical JSON.

Python's builtin ``hash`` is salted per process, so anything that must be
reproducible across runs goes through SHA-256 instead.
"""

import hashlib
import json
from pathlib import Path
from typing import Any


def stable_digest(text: str) -> str:
    """Hex SHA-256 of ``text``, stable across processes and platforms."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def stable_int(text: str) -> int:
    """First 8 bytes of the stable digest as an unsigned integer."""
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def derive_seed(base: int, *parts: str) -> int:
    """Mix a base seed with string parts into a new 63-bit seed.

    Used wherever a per-case or per-label stream must not collide with the
    corpus-level stream.
    """
    h = hashlib.sha256()
    h.update(str(int(base)).encode("ascii"))
    for part in parts:
        h.update(b"\x00")
        h.update(part.encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "big") % (2**63)


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and fixed separators.

    Byte-identical output for equal inputs is a contract here: corpus files
    and simulation reports are compared as raw bytes in tests.
    """
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: str | Path, rows: list[dict]) -> None:
    text = "".join(canonical_json(row) + "\n" for row in rows)
    Path(path).write_text(text, encoding="utf-8")


def read_jsonl(path: str | Path) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(canonical_json(obj) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
