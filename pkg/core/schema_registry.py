from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict


def _load_json(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        result: Dict[str, Any] = json.load(f)
        return result


def _resolve_base_dir(base_dir: str | None) -> str:
    """Return the first existing schema directory.

    Falls back to ``SCHEMA_BASE_DIR`` and then to the ``schemas`` folder
    shipped next to the package.
    """

    candidates = [base_dir] if base_dir else []

    env_base = os.getenv("SCHEMA_BASE_DIR")
    if env_base:
        candidates.append(env_base)

    repo_schemas = Path(__file__).resolve().parent.parent / "schemas"
    candidates.append(str(repo_schemas))

    for candidate in candidates:
        if candidate and os.path.exists(candidate):
            return candidate

    raise FileNotFoundError(f"Unable to locate schema directory from {base_dir}")


@dataclass
class SchemaRegistry:
    objects: Dict[str, Dict[str, Any]]  # "experiment_result.v1" -> schema
    objects_by_id: Dict[str, Dict[str, Any]]


def load_registry(base_dir: str | None = None) -> SchemaRegistry:
    base_dir = _resolve_base_dir(base_dir)
    objects: Dict[str, Dict[str, Any]] = {}
    objects_by_id: Dict[str, Dict[str, Any]] = {}
    obj_dir = os.path.join(base_dir, "objects")
    for name in sorted(os.listdir(obj_dir)):
        if not name.endswith(".schema.json"):
            continue
        schema = _load_json(os.path.join(obj_dir, name))
        key = name[: -len(".schema.json")]
        if key in objects:
            raise ValueError(f"duplicate schema {key}")
        objects[key] = schema
        if "$id" in schema:
            objects_by_id[schema["$id"]] = schema

    return SchemaRegistry(objects=objects, objects_by_id=objects_by_id)
