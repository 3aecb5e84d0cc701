"""JSON document validation against the shipped schemas.

Failures surface as InputError with a JSON pointer to the offending node so
CLI users can locate bad fields in large manifests.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

from .errors import InputError

SCHEMA_NAMES = (
    "align_manifest",
    "align_report",
    "benchmark_manifest",
    "benchmark_stats",
    "corpus",
    "eval_report",
    "pair_manifest",
    "pose_report",
    "predictions",
    "run_config",
    "subgroups",
    "template_manifest",
)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMA_NAMES:
        raise InputError(f"unknown schema {name!r}")
    ref = resources.files("geomatch") / "schemas" / f"{name}.schema.json"
    return json.loads(ref.read_text(encoding="utf-8"))


def json_pointer(path) -> str:
    parts = [str(p).replace("~", "~0").replace("/", "~1") for p in path]
    return "/" + "/".join(parts) if parts else ""


def validate(doc, name: str) -> None:
    """Raise InputError naming the schema and the JSON pointer on mismatch."""
    schema = load_schema(name)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise InputError(f"{name}: {json_pointer(e.absolute_path) or '<root>'}: {e.message}")
