"""JSON report plumbing: canonical serialization, content hashing, and atomic
writes.

Reports carry a stable envelope (tool_version, spec_version, seed) plus a
canonical content hash that ignores wall-clock fields, so two runs with the
same inputs produce byte-comparable documents whose hashes match even though
their timestamps differ.
"""

import datetime
import hashlib
import json
import os
import tempfile

SPEC_VERSION = 1


def _tool_version() -> str:
    from . import __version__
    return __version__


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return float(obj)
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


def _float_17g(f: float) -> str:
    if f != f or f in (float("inf"), float("-inf")):
        raise ValueError("non-finite float in canonical document")
    return format(f, ".17g")


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, no whitespace, floats at 17 digits."""
    def render(x) -> str:
        if x is None:
            return "null"
        if x is True:
            return "true"
        if x is False:
            return "false"
        if isinstance(x, int):
            return str(x)
        if isinstance(x, float):
            return _float_17g(x)
        if isinstance(x, str):
            return json.dumps(x, ensure_ascii=True)
        if isinstance(x, dict):
            items = sorted((str(k), v) for k, v in x.items())
            return "{" + ",".join(json.dumps(k) + ":" + render(v) for k, v in items) + "}"
        if isinstance(x, (list, tuple)):
            return "[" + ",".join(render(v) for v in x) + "]"
        raise TypeError(f"cannot canonicalize {type(x).__name__}")
    return render(_canon(obj))


def canonical_hash(doc: dict) -> str:
    """sha256 of the canonical JSON with volatile fields stripped.

    Top-level "timestamps" and "canonical_sha256" are excluded so the hash
    covers only content that should be reproducible across reruns.
    """
    body = {k: v for k, v in doc.items() if k not in ("timestamps", "canonical_sha256")}
    return hashlib.sha256(canonical_json(body).encode("ascii")).hexdigest()


def envelope(seed: int | None = None) -> dict:
    env = {"tool_version": _tool_version(), "spec_version": SPEC_VERSION}
    if seed is not None:
        env["seed"] = seed
    return env


def timestamps() -> dict:
    now = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return {"created_utc": now}


def pretty_json(obj, indent: int = 0) -> str:
    """Human-readable JSON with the same float rendering as canonical_json,
    so a value reads identically in the report body and in the hashed form."""
    pad = " " * indent
    inner = " " * (indent + 2)
    x = _canon(obj)
    if isinstance(x, dict):
        if not x:
            return "{}"
        rows = [inner + json.dumps(k) + ": " + pretty_json(v, indent + 2)
                for k, v in sorted(x.items())]
        return "{\n" + ",\n".join(rows) + "\n" + pad + "}"
    if isinstance(x, list):
        if not x:
            return "[]"
        rows = [inner + pretty_json(v, indent + 2) for v in x]
        return "[\n" + ",\n".join(rows) + "\n" + pad + "]"
    if isinstance(x, float):
        return _float_17g(x)
    return json.dumps(x, ensure_ascii=True)


def write_artifact(path: str, doc: dict) -> str:
    """Stamp the canonical hash into the document and write it atomically.

    Returns the hash. The write goes through a sibling temp file and an
    os.replace, so a crash never leaves a truncated report behind.
    """
    doc = dict(doc)
    doc["canonical_sha256"] = canonical_hash(doc)
    text = pretty_json(doc) + "\n"
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return doc["canonical_sha256"]


def read_artifact(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)
