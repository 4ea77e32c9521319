"""Deterministic JSON writer that prints every float with 17 significant digits.

``json.dumps`` uses the shortest round-trip repr; artifacts here are specified
as 17-significant-digit documents, so floats are formatted explicitly.  Key
order is insertion order, which makes the output byte-stable.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def format_float(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return format(x, ".17g")


def _is_scalar_list(seq) -> bool:
    return all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq)


def _encode(obj, indent: int, level: int) -> str:
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if _is_scalar_list(obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


def loads(text: str):
    return json.loads(text)


def write(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read(path):
    return loads(Path(path).read_text(encoding="utf-8"))
