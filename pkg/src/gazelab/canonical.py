"""Canonical serialization helpers.

Everything that ends up in a prompt, a payload file, or a re-emitted table
goes through these functions so that identical inputs produce byte-identical
output. Keys are sorted lexicographically, floats are printed with up to six
significant digits, and integers never carry a decimal point.
"""

import hashlib
import json
import math


def format_number(value) -> str:
    """Render a number in canonical form.

    Integers (and bools are rejected upstream) print as plain integers;
    floats print with up to 6 significant digits via ``%g``. Values that are
    not finite have no canonical JSON form and are rejected.
    """
    if isinstance(value, int):
        return str(value)
    if not math.isfinite(value):
        raise ValueError(f"non-finite value {value!r} has no canonical form")
    return f"{value:.6g}"


def canonical_json(obj) -> str:
    """Serialize ``obj`` to canonical JSON text.

    Deterministic for any nesting of dict/list/str/int/float/bool/None.
    """
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, float)):
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        for key in obj:
            if not isinstance(key, str):
                raise TypeError(f"canonical JSON requires string keys, got {key!r}")
        items = ",".join(
            f"{json.dumps(k, ensure_ascii=False)}:{canonical_json(obj[k])}"
            for k in sorted(obj)
        )
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(canonical_json(v) for v in obj) + "]"
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def quantize(value: float) -> float:
    """Round a float to the 6 significant digits the canonical form keeps."""
    return float(f"{value:.6g}")


def digest(text: str) -> str:
    """Stable 16-hex-char content digest used for pattern and prompt ids."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
