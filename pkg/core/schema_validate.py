from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Optional

from jsonschema import Draft202012Validator, FormatChecker
from referencing import Registry, Resource
from referencing.jsonschema import DRAFT202012

from core.schema_registry import SchemaRegistry, load_registry


@dataclass
class ValidationResult:
    ok: bool
    error: Optional[str] = None
    schema_id: Optional[str] = None


def _build_registry(store: dict | None) -> Registry | None:
    if not store:
        return None
    registry: Registry = Registry()
    for uri, contents in store.items():
        registry = registry.with_resource(uri, Resource.from_contents(contents, default_specification=DRAFT202012))
    return registry


def _validate(schema: dict, instance: Any, *, store: dict | None = None) -> ValidationResult:
    registry = _build_registry(store)
    v = Draft202012Validator(schema, format_checker=FormatChecker(), registry=registry)
    errors = sorted(v.iter_errors(instance), key=lambda e: [str(p) for p in e.path])
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path)
        return ValidationResult(False, f"{where}: {e.message}" if where else e.message, schema.get("$id"))
    return ValidationResult(True, None, schema.get("$id"))


@lru_cache(maxsize=1)
def default_registry() -> SchemaRegistry:
    return load_registry()


def validate_object(name: str, instance: Any, reg: SchemaRegistry | None = None) -> ValidationResult:
    reg = reg or default_registry()
    schema = reg.objects.get(name)
    if not schema:
        return ValidationResult(False, f"no schema named {name}", None)
    return _validate(schema, instance, store=reg.objects_by_id)
