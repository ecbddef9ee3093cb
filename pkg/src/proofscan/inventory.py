"""Target model: parse an API description into a typed endpoint inventory.

The scanner consumes a small OpenAPI 3.x subset (paths, methods, parameters,
JSON request bodies, security requirements, servers). Anything outside that
subset is skipped and recorded as a warning rather than failing the parse,
except structural problems that would poison every later stage.

The inventory is immutable once built and serializes canonically: dumping,
re-parsing, and dumping again is byte-identical.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .errors import SpecParseError

_HTTP_METHODS = ("get", "put", "post", "delete", "patch", "head", "options")
_TEMPLATE_PARAM = re.compile(r"\{([^{}/]+)\}")


class ParamLocation(str, Enum):
    PATH = "path"
    QUERY = "query"
    BODY = "body"
    HEADER = "header"


class ParamKind(str, Enum):
    """Semantic role of a parameter, used to pick attack families."""

    RESOURCE_ID = "resource_id"
    QUANTITY = "quantity"
    AMOUNT = "amount"
    FREE_TEXT = "free_text"
    FILENAME = "filename"
    URL = "url"
    OTHER = "other"


class AuthScheme(str, Enum):
    BEARER_JWT = "bearer_jwt"
    API_KEY = "api_key"
    COOKIE = "cookie"
    NONE = "none"


@dataclass(frozen=True)
class ParamSpec:
    name: str
    location: ParamLocation
    kind: ParamKind = ParamKind.OTHER
    type: str = "string"
    format: str | None = None
    required: bool = False
    example: Any = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "location": self.location.value,
            "kind": self.kind.value,
            "type": self.type,
            "format": self.format,
            "required": self.required,
            "example": self.example,
        }


@dataclass(frozen=True)
class Endpoint:
    method: str  # upper-case verb
    path: str  # template form, e.g. /orders/{id}
    params: tuple[ParamSpec, ...] = ()
    requires_auth: bool = False
    mutates_state: bool = False
    operation_id: str | None = None

    @property
    def key(self) -> str:
        return f"{self.method} {self.path}"

    def params_in(self, *locations: ParamLocation) -> tuple[ParamSpec, ...]:
        return tuple(p for p in self.params if p.location in locations)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "path": self.path,
            "params": [p.to_dict() for p in self.params],
            "requires_auth": self.requires_auth,
            "mutates_state": self.mutates_state,
            "operation_id": self.operation_id,
        }


@dataclass(frozen=True)
class EndpointInventory:
    base_url: str
    auth_scheme: AuthScheme
    endpoints: tuple[Endpoint, ...]
    warnings: tuple[str, ...] = ()

    def find(self, method: str, path: str) -> Endpoint | None:
        for ep in self.endpoints:
            if ep.method == method.upper() and ep.path == path:
                return ep
        return None

    def to_json(self) -> str:
        doc = {
            "base_url": self.base_url,
            "auth_scheme": self.auth_scheme.value,
            "endpoints": [ep.to_dict() for ep in self.endpoints],
            "warnings": list(self.warnings),
        }
        return json.dumps(doc, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "EndpointInventory":
        doc = json.loads(text)
        eps = []
        for e in doc["endpoints"]:
            params = tuple(
                ParamSpec(
                    name=p["name"],
                    location=ParamLocation(p["location"]),
                    kind=ParamKind(p["kind"]),
                    type=p["type"],
                    format=p["format"],
                    required=p["required"],
                    example=p["example"],
                )
                for p in e["params"]
            )
            eps.append(
                Endpoint(
                    method=e["method"],
                    path=e["path"],
                    params=params,
                    requires_auth=e["requires_auth"],
                    mutates_state=e["mutates_state"],
                    operation_id=e["operation_id"],
                )
            )
        return EndpointInventory(
            base_url=doc["base_url"],
            auth_scheme=AuthScheme(doc["auth_scheme"]),
            endpoints=tuple(eps),
            warnings=tuple(doc["warnings"]),
        )


# Name fragments that drive classification, checked in priority order.
_ID_SUFFIXES = ("_id", "id")
_QUANTITY_NAMES = {"qty", "quantity", "count", "num_items", "items"}
_AMOUNT_NAMES = {"amount", "price", "balance", "total", "payout", "refund", "credit"}
_URL_HINTS = ("url", "uri", "link", "webhook", "callback", "redirect")
_FILE_NAMES = {"filename", "file", "filepath", "file_path", "path", "document", "attachment"}
_TEXT_NAMES = {
    "q", "query", "search", "term", "message", "title", "body", "description",
    "comment", "text", "content", "note", "notes", "name", "subject", "bio",
}


def classify_parameter(param: ParamSpec) -> ParamKind:
    """Assign a semantic kind from name, location, type, and format."""
    name = param.name.lower()
    if param.location == ParamLocation.PATH:
        if name == "id" or name.endswith(_ID_SUFFIXES) or param.type == "integer":
            return ParamKind.RESOURCE_ID
    if param.location == ParamLocation.HEADER:
        if any(h in name for h in _URL_HINTS):
            return ParamKind.URL
        return ParamKind.OTHER
    if name == "id" or name.endswith(_ID_SUFFIXES):
        return ParamKind.RESOURCE_ID
    if name in _QUANTITY_NAMES and param.type in ("integer", "number", "string"):
        return ParamKind.QUANTITY
    if name in _AMOUNT_NAMES:
        return ParamKind.AMOUNT
    if (param.format or "").lower() in ("uri", "url") or any(h in name for h in _URL_HINTS):
        return ParamKind.URL
    if name in _FILE_NAMES:
        return ParamKind.FILENAME
    if param.type == "string" and name in _TEXT_NAMES:
        return ParamKind.FREE_TEXT
    return ParamKind.OTHER


def classify_parameters(params: list[ParamSpec] | tuple[ParamSpec, ...]) -> tuple[ParamSpec, ...]:
    """Return the params with kinds filled in; classification is total."""
    out = []
    for p in params:
        kind = classify_parameter(p)
        if kind == ParamKind.RESOURCE_ID and p.location == ParamLocation.HEADER:
            kind = ParamKind.OTHER  # ids only make sense in path/query/body
        out.append(
            ParamSpec(
                name=p.name,
                location=p.location,
                kind=kind,
                type=p.type,
                format=p.format,
                required=p.required,
                example=p.example,
            )
        )
    return tuple(out)


def _shape_key(method: str, path: str) -> str:
    """Collapse parameter names so /a/{x} and /a/{y} collide as duplicates."""
    return f"{method} {_TEMPLATE_PARAM.sub('{}', path)}"


def _schema_param(name: str, schema: dict, required: bool, location: ParamLocation,
                  warnings: list[str], where: str) -> ParamSpec:
    if "$ref" in schema:
        warnings.append(f"{where}: $ref schemas are not resolved, treating {name} as string")
        schema = {}
    ptype = schema.get("type", "string")
    if ptype not in ("string", "integer", "number", "boolean", "array", "object"):
        warnings.append(f"{where}: unsupported type {ptype!r} for {name}, treating as string")
        ptype = "string"
    return ParamSpec(
        name=name,
        location=location,
        type=ptype,
        format=schema.get("format"),
        required=required,
        example=schema.get("example", schema.get("default")),
    )


def parse_api_spec(doc: dict, base_url: str | None = None) -> EndpointInventory:
    """Build an EndpointInventory from a parsed OpenAPI 3.x document."""
    if not isinstance(doc, dict) or "paths" not in doc:
        raise SpecParseError("document has no 'paths' object")
    warnings: list[str] = []

    servers = doc.get("servers") or []
    resolved_base = base_url or (servers[0].get("url", "") if servers else "")

    # Which security scheme names are defined, and what they are.
    schemes = (doc.get("components") or {}).get("securitySchemes") or {}
    auth_scheme = AuthScheme.NONE
    for name, sch in schemes.items():
        stype = (sch or {}).get("type")
        if stype == "http" and (sch.get("scheme") or "").lower() == "bearer":
            auth_scheme = AuthScheme.BEARER_JWT
            break
        if stype == "apiKey" and sch.get("in") == "cookie":
            auth_scheme = AuthScheme.COOKIE
        elif stype == "apiKey" and auth_scheme == AuthScheme.NONE:
            auth_scheme = AuthScheme.API_KEY
    global_security = doc.get("security")

    endpoints: list[Endpoint] = []
    seen: dict[str, str] = {}
    duplicates: list[str] = []

    for path, item in sorted((doc.get("paths") or {}).items()):
        if not isinstance(item, dict):
            warnings.append(f"path {path}: item is not an object, skipped")
            continue
        shared_params = item.get("parameters") or []
        for method in _HTTP_METHODS:
            if method not in item:
                continue
            op = item[method]
            if not isinstance(op, dict):
                warnings.append(f"{method.upper()} {path}: operation is not an object, skipped")
                continue
            where = f"{method.upper()} {path}"
            shape = _shape_key(method.upper(), path)
            if shape in seen:
                duplicates.append(f"{where} duplicates {seen[shape]}")
                continue
            seen[shape] = where

            params: list[ParamSpec] = []
            declared_paths: set[str] = set()
            for p in list(shared_params) + list(op.get("parameters") or []):
                if "$ref" in p:
                    warnings.append(f"{where}: $ref parameter skipped")
                    continue
                loc_raw = p.get("in", "query")
                if loc_raw not in ("path", "query", "header"):
                    warnings.append(f"{where}: parameter {p.get('name')} in {loc_raw!r} unsupported")
                    continue
                loc = ParamLocation(loc_raw)
                name = p.get("name")
                if not name:
                    warnings.append(f"{where}: unnamed parameter skipped")
                    continue
                if loc == ParamLocation.PATH:
                    declared_paths.add(name)
                params.append(
                    _schema_param(name, p.get("schema") or {}, bool(p.get("required")), loc, warnings, where)
                )

            body = op.get("requestBody")
            if body:
                content = (body.get("content") or {})
                json_media = content.get("application/json")
                if json_media is None:
                    if content:
                        warnings.append(f"{where}: non-JSON request body not modeled")
                else:
                    schema = json_media.get("schema") or {}
                    if "$ref" in schema:
                        warnings.append(f"{where}: $ref request body schema not resolved")
                        schema = {}
                    required_fields = set(schema.get("required") or [])
                    for fname, fschema in (schema.get("properties") or {}).items():
                        params.append(
                            _schema_param(fname, fschema or {}, fname in required_fields,
                                          ParamLocation.BODY, warnings, where)
                        )

            # Every {placeholder} in the template must have a ParamSpec.
            for tmpl_name in _TEMPLATE_PARAM.findall(path):
                if tmpl_name not in declared_paths:
                    warnings.append(f"{where}: path parameter {tmpl_name} undeclared, synthesized")
                    params.append(ParamSpec(name=tmpl_name, location=ParamLocation.PATH, required=True))

            security = op.get("security", global_security)
            requires_auth = bool(security)

            verb_mutates = method.upper() in ("POST", "PUT", "PATCH", "DELETE")
            endpoints.append(
                Endpoint(
                    method=method.upper(),
                    path=path,
                    params=classify_parameters(params),
                    requires_auth=requires_auth,
                    mutates_state=verb_mutates,
                    operation_id=op.get("operationId"),
                )
            )

    if duplicates:
        raise SpecParseError("duplicate path+method entries: " + "; ".join(sorted(duplicates)))

    endpoints.sort(key=lambda e: (e.path, e.method))
    return EndpointInventory(
        base_url=resolved_base,
        auth_scheme=auth_scheme,
        endpoints=tuple(endpoints),
        warnings=tuple(warnings),
    )


def apply_mutation_overrides(inv: EndpointInventory, overrides: dict[str, bool]) -> EndpointInventory:
    """Apply per-endpoint mutates_state overrides keyed by 'METHOD /path'."""
    unknown = [k for k in overrides if inv.find(*k.split(" ", 1)) is None]
    eps = []
    for ep in inv.endpoints:
        if ep.key in overrides:
            eps.append(
                Endpoint(
                    method=ep.method,
                    path=ep.path,
                    params=ep.params,
                    requires_auth=ep.requires_auth,
                    mutates_state=overrides[ep.key],
                    operation_id=ep.operation_id,
                )
            )
        else:
            eps.append(ep)
    warns = inv.warnings + tuple(f"mutates_state override for unknown endpoint {k}" for k in unknown)
    return EndpointInventory(inv.base_url, inv.auth_scheme, tuple(eps), warns)
