"""Run manifests and deterministic exporters.

Every CLI result file is accompanied by a manifest recording the tool
version, the canonical merged config, seeds, timestamps, and SHA-256
digests of the outputs.  Primary CSV outputs are byte-stable for identical
configs; wall-clock information lives only in the manifest.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import jsonschema

TOOL_VERSION = "0.1.0"

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["tool_version", "command", "config", "config_digest",
                 "seeds", "started", "finished", "outputs"],
    "properties": {
        "tool_version": {"type": "string"},
        "command": {"type": "array", "items": {"type": "string"}},
        "config": {"type": "object"},
        "config_digest": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "started": {"type": "string"},
        "finished": {"type": "string"},
        "outputs": {
            "type": "object",
            "additionalProperties": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        },
        "runtime_ms": {"type": "number"},
    },
    "additionalProperties": True,
}


def canonical_json(obj):
    """Byte-stable JSON: sorted keys, compact separators, repr floats (round-trip exact)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_digest(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt_value(v):
    """CSV cell formatting: floats at 17 significant digits, round-trip exact."""
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, bool):
        return str(int(v))
    return "" if v is None else str(v)


def export_csv(path, header, rows):
    """Write rows of cells; an empty report yields a header-only file."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt_value(v) for v in row) + "\n")


def export_json(path, obj):
    with open(path, "w") as fh:
        fh.write(canonical_json(obj))
        fh.write("\n")


def export_report(report, fmt, path):
    """Export a report carrying ``rows()`` in long format, or a JSON summary."""
    if fmt == "csv":
        export_csv(path, ("metric", "seed", "param", "value"), report.rows())
    elif fmt == "json":
        export_json(path, {"rows": [list(map(fmt_value, r)) for r in report.rows()]})
    else:
        raise ValueError(f"unsupported export format {fmt!r}")


def write_manifest(out_path, command, config, seeds, started, finished,
                   outputs, runtime_ms=None):
    """Write ``<out>.manifest.json`` next to a result file; returns its path."""
    manifest = {
        "tool_version": TOOL_VERSION,
        "command": list(command),
        "config": config,
        "config_digest": config_digest(config),
        "seeds": [int(s) for s in seeds],
        "started": started,
        "finished": finished,
        "outputs": {name: file_digest(name) for name in outputs},
    }
    if runtime_ms is not None:
        manifest["runtime_ms"] = float(runtime_ms)
    validate_manifest(manifest)
    path = str(Path(out_path).with_suffix("")) + ".manifest.json"
    with open(path, "w") as fh:
        fh.write(canonical_json(manifest))
        fh.write("\n")
    return path


def validate_manifest(manifest):
    jsonschema.validate(manifest, MANIFEST_SCHEMA)
    digest = config_digest(manifest["config"])
    if digest != manifest["config_digest"]:
        raise ValueError("config digest mismatch")
