"""File formats: CSV with a commented ``key=value`` header, JSON manifests, YAML configs."""

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return repr(v) if not math.isfinite(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    return obj


def config_hash(config):
    """Short SHA-256 of the canonical JSON form of ``config``."""
    text = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_yaml(path):
    """Parse a YAML file, turning syntax errors into :class:`ConfigError` with a line number."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"invalid YAML in {path}: {getattr(exc, 'problem', exc)}", line=line) from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data, text


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, meta=None):
    """Write equal-length columns with a ``# key=value`` header block.

    ``columns`` maps names to sequences. Floats are written with ``repr`` so
    a value read back is bit-identical.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = [list(columns[n]) for n in names]
    lengths = {len(c) for c in data}
    if len(lengths) > 1:
        raise ValueError("columns have different lengths")
    with path.open("w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={_fmt(value) if not isinstance(value, (dict, list)) else json.dumps(_canonical(value), sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in zip(*data):
            writer.writerow([_fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(meta, columns)``; numeric columns become float arrays."""
    meta, lines = {}, []
    with Path(path).open() as fh:
        for raw in fh:
            if raw.startswith("#"):
                key, _, value = raw[1:].strip().partition("=")
                meta[key.strip()] = value
            else:
                lines.append(raw)
    reader = csv.reader(lines)
    header = next(reader)
    rows = list(reader)
    cols = {}
    for k, name in enumerate(header):
        vals = [r[k] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals, dtype=object)
    return meta, cols


def write_manifest(path, command, config, files, extra=None):
    """Sidecar JSON with the full config, its hash, code version and output files."""
    path = Path(path)
    manifest = {
        "command": command,
        "version": __version__,
        "config_hash": config_hash(config),
        "config": _canonical(config),
        "files": sorted(str(Path(f).name) for f in files),
    }
    if extra:
        manifest.update(_canonical(extra))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_canonical(obj), indent=2, sort_keys=True) + "\n")
    return path
