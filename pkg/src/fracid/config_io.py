"""Flat key/value config files (TOML-style) and deterministic CSV output.

The config dialect is a single table of `key = value` lines with `#`
comments; values are numbers, booleans, quoted strings, or flat lists.
Floats echo through `repr`, so parse -> echo -> parse is idempotent and
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import os

from .errors import ConfigurationError

__all__ = ["parse_kv_text", "format_kv", "read_kv_file", "write_kv_file", "write_csv"]


def _parse_scalar(text, path, key):
    text = text.strip()
    if not text:
        raise ConfigurationError(f"{path}: empty value for key '{key}'")
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if (text.startswith('"') and text.endswith('"')) or (
        text.startswith("'") and text.endswith("'")
    ):
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigurationError(f"{path}: cannot parse value {text!r} for key '{key}'")


def parse_kv_text(text, path="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigurationError(f"{path}:{lineno}: missing key")
        if key in out:
            raise ConfigurationError(f"{path}:{lineno}: duplicate key '{key}'")
        if value.startswith("[") and value.endswith("]"):
            body = value[1:-1].strip()
            items = [v.strip() for v in body.split(",")] if body else []
            out[key] = [_parse_scalar(v, path, key) for v in items]
        else:
            out[key] = _parse_scalar(value, path, key)
    return out


def _format_scalar(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_kv(mapping):
    lines = []
    for key, value in mapping.items():
        if isinstance(value, (list, tuple)):
            body = ", ".join(_format_scalar(v) for v in value)
            lines.append(f"{key} = [{body}]")
        else:
            lines.append(f"{key} = {_format_scalar(value)}")
    return "\n".join(lines) + "\n"


def read_kv_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_kv_text(fh.read(), path)


def write_kv_file(path, mapping):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_kv(mapping))


def _format_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    """Comma-separated, UTF-8, LF line endings, floats via repr."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(v) for v in row) + "\n")
