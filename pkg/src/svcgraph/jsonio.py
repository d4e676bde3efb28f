"""Byte-stable JSON rendering for artifacts.

Keys are emitted in sorted order and every float is formatted at 12
significant digits, so re-running a pipeline with the same inputs produces
byte-identical files regardless of platform or worker count.
"""

from __future__ import annotations

import json
import math
import re

_MARK = "\x01f:"
_END = "\x01"
_TOKEN_RE = re.compile(r'"\\u0001f:([^"\\]*)\\u0001"')


def format_float(value: float) -> str:
    """12-significant-digit decimal form, valid as a JSON number."""
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"cannot serialize non-finite float {value!r}")
    text = format(value, ".12g")
    # format(…, "g") may produce bare exponents like "1e+20"; JSON allows them.
    return text


def _convert(obj):
    if isinstance(obj, bool) or obj is None or isinstance(obj, int):
        return obj
    if isinstance(obj, float):
        return f"{_MARK}{format_float(obj)}{_END}"
    if isinstance(obj, str):
        if _END in obj:
            raise ValueError("strings may not contain the \\x01 control character")
        return obj
    if isinstance(obj, dict):
        converted = {}
        for key, value in obj.items():
            if isinstance(key, bool) or not isinstance(key, (str, int)):
                raise TypeError(f"artifact keys must be str or int, got {key!r}")
            converted[str(key)] = _convert(value)
        return converted
    if isinstance(obj, (list, tuple)):
        return [_convert(item) for item in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__} into an artifact")


def dumps_stable(obj) -> str:
    """Deterministic JSON text: sorted keys, 12-digit floats, trailing newline."""
    text = json.dumps(_convert(obj), sort_keys=True, indent=2, ensure_ascii=True)
    return _TOKEN_RE.sub(lambda match: match.group(1), text) + "\n"


def write_artifact(path: str, obj, config_hash: str | None = None) -> None:
    """Write one JSON artifact, stamping the resolved config hash."""
    if config_hash is not None and isinstance(obj, dict):
        obj = {**obj, "config_hash": config_hash}
    with open(path, "w") as handle:
        handle.write(dumps_stable(obj))
