"""JSON helpers that keep floats bit-exact (17 significant digits)."""
import json
import math

import numpy as np


def fmt_float(x):
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialised")
    return format(x, ".17g")


class _Raw(str):
    pass


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return [_encode(v) for v in obj.tolist()] if obj.ndim else _encode(obj.item())
    if isinstance(obj, (float, np.floating)):
        return _Raw(fmt_float(obj))
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    return obj


def _dump(obj, indent, level):
    pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
    end = "" if indent is None else "\n" + " " * (indent * level)
    if isinstance(obj, _Raw):
        return str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + json.dumps(k) + ": " + _dump(v, indent, level + 1)
                 for k, v in obj.items()]
        return "{" + ",".join(items) + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        # numeric leaves stay on one line
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _dump(v, indent, level + 1) for v in obj]
        return "[" + ",".join(items) + end + "]"
    return json.dumps(obj)


def dumps(obj, indent=None):
    """Serialise ``obj`` to JSON writing every float with ``%.17g``."""
    return _dump(_encode(obj), indent, 0)
