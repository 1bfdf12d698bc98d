"""Scenario files: JSON descriptions of a geometry, an immersion and a list of checks.

Example::

    {
      "schema_version": 1,
      "name": "unit-ball",
      "geometry": {"catalog": "euclidean_ball", "params": {"r": 1.0}},
      "resolution": 48,
      "seed": 0,
      "checks": [
        {"type": "main_inequality", "t": 0, "k": 0, "eta": "x1"},
        {"type": "euclidean_tmc"}
      ]
    }

Unknown fields anywhere are errors. Validation errors name the offending field and,
where it can be located, the line of the file.
"""

import json
import re
from dataclasses import dataclass, field

from .catalog import FAMILIES, MIN_RESOLUTION, _normalize
from .errors import RBLError, ScenarioError
from .fem import PHI_VARIANTS, VOLUME_FAMILIES

SCHEMA_VERSION = 1

CHECK_FIELDS = {
    "main_inequality": dict(required=("t", "k"), optional=("eta", "h_min")),
    "dichotomy": dict(required=("k",), optional=("eta", "h_min")),
    "eigen_band": dict(required=("kappa", "k"), optional=("count", "tol")),
    "euclidean_tmc": dict(required=(), optional=("eps_h",)),
    "spherical_tmc": dict(required=(), optional=("k",)),
    "hyperbolic_tmc": dict(required=(), optional=("k", "time_axis", "drop_t_term")),
    "support_identities": dict(required=(), optional=("alpha", "count", "tol")),
    "reilly": dict(required=(), optional=("cells", "degree", "field", "tol")),
    "lambda1": dict(required=(), optional=("cells", "degree", "tol")),
    "phi_probe": dict(required=("variant",), optional=("cells", "degree", "lambda", "alpha")),
}
CHECK_TYPES = tuple(CHECK_FIELDS)
SURFACE_CHECKS = ("main_inequality", "dichotomy", "eigen_band", "euclidean_tmc", "spherical_tmc",
                  "hyperbolic_tmc", "support_identities")
VOLUME_CHECKS = ("reilly", "lambda1", "phi_probe")
TOP_FIELDS = dict(required=("schema_version", "geometry", "checks"),
                  optional=("name", "immersion", "resolution", "refinement_levels", "seed",
                            "output_dir", "ricci_attestation"))
SPACE_KINDS = ("euclidean", "spherical", "hyperbolic")
ETA_PATTERN = re.compile(r"^(x[1-9][0-9]*|random|constant)$")
REILLY_FIELDS = ("quadratic", "linear")


@dataclass
class Scenario:
    geometry: dict
    checks: list
    name: str = "scenario"
    immersion: dict = None
    resolution: int = 32
    refinement_levels: int = 3
    seed: int = 0
    output_dir: str = None
    ricci_attestation: float = None
    source_text: str = field(default="", repr=False)
    base_dir: str = "."


def _line_of(text, key, start=0):
    """1-based line of the first occurrence of ``"key"`` at or after ``start``."""
    pos = text.find(f'"{key}"', start)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


class _Validator:
    def __init__(self, text):
        self.text = text

    def _check_start(self, i):
        """Offset of the opening brace of check ``i`` (located through its "type" key)."""
        pos = self.text.find('"checks"')
        for _ in range(i + 1):
            if pos < 0:
                return 0
            pos = self.text.find('"type"', pos + 1)
        return max(0, self.text.rfind("{", 0, pos)) if pos >= 0 else 0

    def fail(self, message, path, key=None):
        start = 0
        m = re.match(r"checks\[(\d+)\]", path or "")
        if m:
            start = self._check_start(int(m.group(1)))
        line = _line_of(self.text, key, start) if key else None
        raise ScenarioError(message, field=path, line=line)

    def fields(self, obj, schema, path):
        if not isinstance(obj, dict):
            self.fail("must be a JSON object", path, path.split(".")[-1].split("[")[0] or None)
        allowed = set(schema["required"]) | set(schema["optional"])
        for key in obj:
            if key not in allowed:
                self.fail(f"unknown field (allowed: {', '.join(sorted(allowed))})",
                          f"{path}.{key}" if path else key, key)
        for key in schema["required"]:
            if key not in obj:
                self.fail("missing required field", f"{path}.{key}" if path else key,
                          path.split(".")[-1].split("[")[0] if path else None)

    def number(self, value, path, key):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail("must be a number", path, key)
        return float(value)

    def integer(self, value, path, key, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail("must be an integer", path, key)
        if minimum is not None and value < minimum:
            self.fail(f"must be at least {minimum}", path, key)
        return value


def _space(v, obj, path):
    v.fields(obj, dict(required=("kind", "dim"), optional=("k",)), path)
    if obj["kind"] not in SPACE_KINDS:
        v.fail(f"kind must be one of {SPACE_KINDS}", f"{path}.kind", "kind")
    v.integer(obj["dim"], f"{path}.dim", "dim", minimum=2)
    if obj["kind"] != "euclidean":
        if "k" not in obj:
            v.fail("missing required field", f"{path}.k", "kind")
        if v.number(obj["k"], f"{path}.k", "k") <= 0:
            v.fail("must be positive", f"{path}.k", "k")
    return obj


def _geometry(v, obj):
    if not isinstance(obj, dict):
        v.fail("must be a JSON object", "geometry", "geometry")
    if "catalog" in obj:
        v.fields(obj, dict(required=("catalog",), optional=("params",)), "geometry")
        if obj["catalog"] not in FAMILIES:
            v.fail(f"unknown catalog family {obj['catalog']!r}", "geometry.catalog", "catalog")
        try:
            _normalize(obj["catalog"], obj.get("params"))
        except RBLError as exc:
            v.fail(str(exc), "geometry.params", "params")
    elif "mesh" in obj:
        v.fields(obj, dict(required=("mesh",), optional=("space",)), "geometry")
        if not isinstance(obj["mesh"], str):
            v.fail("must be a path string", "geometry.mesh", "mesh")
        if "space" in obj:
            _space(v, obj["space"], "geometry.space")
    else:
        v.fail("needs either 'catalog' or 'mesh'", "geometry", "geometry")
    return obj


def _immersion(v, obj):
    v.fields(obj, dict(required=("source",), optional=("target", "table")), "immersion")
    if obj["source"] not in ("inclusion", "table"):
        v.fail("source must be 'inclusion' or 'table'", "immersion.source", "source")
    if obj["source"] == "table":
        for key in ("target", "table"):
            if key not in obj:
                v.fail("missing required field for a coordinate table", f"immersion.{key}", "source")
        _space(v, obj["target"], "immersion.target")
        if not isinstance(obj["table"], str):
            v.fail("must be a path string", "immersion.table", "table")
    elif "target" in obj or "table" in obj:
        v.fail("inclusion takes no target or table", "immersion", "immersion")
    return obj


def _check(v, obj, i, geometry):
    path = f"checks[{i}]"
    if not isinstance(obj, dict) or "type" not in obj:
        v.fail("each check needs a 'type'", path, "checks")
    kind = obj["type"]
    if kind not in CHECK_FIELDS:
        v.fail(f"unknown check type {kind!r} (known: {', '.join(CHECK_TYPES)})", f"{path}.type", "type")
    schema = CHECK_FIELDS[kind]
    body = {key: val for key, val in obj.items() if key != "type"}
    v.fields(body, schema, path)
    for key in ("t", "k", "kappa", "h_min", "eps_h", "tol", "lambda"):
        if key in body:
            v.number(body[key], f"{path}.{key}", key)
    for key, low in (("count", 1), ("cells", 2), ("degree", 1), ("time_axis", 0)):
        if key in body:
            v.integer(body[key], f"{path}.{key}", key, minimum=low)
    if "degree" in body and body["degree"] > 3:
        v.fail("element degree must be 1, 2 or 3", f"{path}.degree", "degree")
    if "cells" in body and body["cells"] % 2:
        v.fail("cells must be even", f"{path}.cells", "cells")
    if "eta" in body and not (isinstance(body["eta"], str) and ETA_PATTERN.match(body["eta"])):
        v.fail("eta must be 'x<i>', 'random' or 'constant'", f"{path}.eta", "eta")
    if "drop_t_term" in body and not isinstance(body["drop_t_term"], bool):
        v.fail("must be true or false", f"{path}.drop_t_term", "drop_t_term")
    if "field" in body and body["field"] not in REILLY_FIELDS:
        v.fail(f"field must be one of {REILLY_FIELDS}", f"{path}.field", "field")
    if "variant" in body and body["variant"] not in PHI_VARIANTS:
        v.fail(f"variant must be one of {PHI_VARIANTS}", f"{path}.variant", "variant")
    if "alpha" in body:
        a = body["alpha"]
        if not (a == "random" or (isinstance(a, list) and a and all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in a))):
            v.fail("alpha must be 'random' or a list of numbers", f"{path}.alpha", "alpha")
    if kind in VOLUME_CHECKS:
        if "catalog" not in geometry or geometry["catalog"] not in VOLUME_FAMILIES:
            v.fail(f"{kind} needs a catalog geometry with a volume mesh ({', '.join(VOLUME_FAMILIES)})",
                   f"{path}.type", "type")
    return dict(obj)


def parse_scenario(text, base_dir="."):
    """Validate scenario JSON text and return a :class:`Scenario`."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno)
    v = _Validator(text)
    v.fields(data, TOP_FIELDS, "")
    if data["schema_version"] != SCHEMA_VERSION:
        v.fail(f"unsupported schema version (expected {SCHEMA_VERSION})", "schema_version",
               "schema_version")
    geometry = _geometry(v, data["geometry"])
    immersion = _immersion(v, data["immersion"]) if "immersion" in data else None
    if not isinstance(data["checks"], list) or not data["checks"]:
        v.fail("must be a non-empty list", "checks", "checks")
    checks = [_check(v, c, i, geometry) for i, c in enumerate(data["checks"])]
    resolution = v.integer(data.get("resolution", 32), "resolution", "resolution",
                           minimum=MIN_RESOLUTION)
    levels = v.integer(data.get("refinement_levels", 3), "refinement_levels", "refinement_levels",
                       minimum=1)
    seed = v.integer(data.get("seed", 0), "seed", "seed", minimum=0)
    name = data.get("name", "scenario")
    if not isinstance(name, str) or not re.match(r"^[A-Za-z0-9_.-]+$", name):
        v.fail("must be a file-name safe string", "name", "name")
    out = data.get("output_dir")
    if out is not None and not isinstance(out, str):
        v.fail("must be a path string", "output_dir", "output_dir")
    ricci = data.get("ricci_attestation")
    if ricci is not None:
        ricci = v.number(ricci, "ricci_attestation", "ricci_attestation")
    return Scenario(geometry=geometry, checks=checks, name=name, immersion=immersion,
                    resolution=resolution, refinement_levels=levels, seed=seed, output_dir=out,
                    ricci_attestation=ricci, source_text=text, base_dir=base_dir)


def load_scenario(path):
    import os

    with open(path) as fh:
        text = fh.read()
    return parse_scenario(text, base_dir=os.path.dirname(os.path.abspath(path)))
