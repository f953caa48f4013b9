"""Config documents, canonical serialization, and content digests.

Geometry, plant, calibration, and training configs are stored as
human-readable YAML key/value documents carrying a ``schema: 1`` field.
Digests are sha256 over a canonical JSON encoding (sorted keys, shortest
round-trip float repr), so artifacts can record exactly which configs
produced them.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .errors import DatasetFormatError

SCHEMA_VERSION = 1


def jsonable(value: Any) -> Any:
    """Coerce numpy scalars/arrays into plain python containers."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value


def canonical_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, no whitespace variation."""
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def check_schema(doc: dict, expected_kind: str | None = None) -> None:
    version = doc.get("schema")
    if version != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"unknown schema version {version!r}, this build reads schema {SCHEMA_VERSION}"
        )
    if expected_kind is not None and doc.get("kind") != expected_kind:
        raise DatasetFormatError(
            f"expected a {expected_kind!r} document, got kind={doc.get('kind')!r}"
        )


def write_config_doc(path: str | Path, doc: dict) -> None:
    doc = jsonable(doc)
    if "schema" not in doc:
        raise ValueError("config documents must carry a schema field")
    text = yaml.safe_dump(doc, sort_keys=True, default_flow_style=False)
    Path(path).write_text(text, encoding="utf-8")


def read_config_doc(path: str | Path, expected_kind: str | None = None) -> dict:
    doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise DatasetFormatError(f"{path}: expected a mapping at top level")
    check_schema(doc, expected_kind)
    return doc


def write_json_doc(path: str | Path, doc: dict) -> None:
    doc = jsonable(doc)
    if "schema" not in doc:
        raise ValueError("json documents must carry a schema field")
    Path(path).write_text(
        json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n", encoding="utf-8"
    )


def read_json_doc(path: str | Path, expected_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    doc = json.loads(path.read_text(encoding="utf-8"))
    check_schema(doc, expected_kind)
    return doc


def sha256_lines(lines: list[str]) -> str:
    h = hashlib.sha256()
    for line in lines:
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
