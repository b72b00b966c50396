"""Line-oriented run configuration and CSV output with embedded metadata.

Config files are ``key = value`` lines with dotted section prefixes::

    seed = 7
    sim.n_mics = 8
    geometry.ula.n = 8
    geometry.ula.spacing_m = 0.06

``#`` starts a comment.  Command-line flags override file values.
Unknown keys are rejected so typos fail loudly.

Every CSV written by the toolkit carries the resolved configuration,
seed and package version as leading ``#`` comment lines, and floats are
printed with 9 significant digits so equal runs produce identical bytes.
"""

from __future__ import annotations

import numpy as np

from . import __version__
from .errors import ConfigError


def parse_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    return values


def check_known_keys(values: dict[str, str], allowed) -> None:
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")


def coerce(value: str, kind):
    try:
        if kind is bool:
            lowered = value.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"cannot parse {value!r} as {kind.__name__}") from exc


def fmt9(value) -> str:
    """9-significant-digit float formatting used in all CSV output."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.9g}"


def write_csv(path, metadata: dict, columns, rows) -> None:
    """Write rows with '#'-prefixed metadata header and one CSV header line."""
    lines = [f"# mlpsd {__version__}"]
    for key in sorted(metadata):
        lines.append(f"# {key} = {metadata[key]}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt9(cell) for cell in row))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[dict, list[str], list[list[str]]]:
    """Read back a toolkit CSV: (metadata, columns, string rows)."""
    metadata: dict[str, str] = {}
    columns: list[str] = []
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as handle:
        for raw in handle:
            line = raw.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    metadata[key.strip()] = value.strip()
                continue
            if not columns:
                columns = line.split(",")
                continue
            if line:
                rows.append(line.split(","))
    return metadata, columns, rows
