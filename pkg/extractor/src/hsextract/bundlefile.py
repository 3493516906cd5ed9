"""Writer/reader for the hidden-state bundle wire format.

This is an independent implementation of the container the downstream
clustering toolkit consumes: magic ``HSB1``, u32 version/N/d/n (little
endian), N*n permutation bytes, N x d float32 states, plus a ``.json``
manifest with sorted keys and floats at 17 significant digits. Keeping the
writer self-contained means the only coupling to the consumer is the format
itself.
"""

import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"HSB1"
VERSION = 1
HEADER = struct.Struct("<4sIIII")
MAX_STATES = 5040  # 7!


def _format_float(x):
    text = format(float(x), ".17g")
    if "." not in text and "e" not in text and "E" not in text:
        text += ".0"
    return text


def _encode(obj):
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(
            f"{json.dumps(k)}: {_encode(v)}" for k, v in sorted(obj.items())
        ) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def atomic_write(data, path):
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle_file(path, states, permutations, manifest):
    """Write container + manifest. ``manifest`` must carry the text fields:
    query_id, query, documents, gold_answers, answers, model_id,
    layer_index, temperature."""
    states = np.ascontiguousarray(states, dtype="<f4")
    perms = np.ascontiguousarray(permutations, dtype=np.uint8)
    n, d = states.shape
    if n < 1 or n > MAX_STATES:
        raise ValueError(f"N={n} outside [1, {MAX_STATES}]")
    if perms.shape[0] != n:
        raise ValueError("permutation table does not match state count")
    n_docs = perms.shape[1]
    blob = HEADER.pack(MAGIC, VERSION, n, d, n_docs) + perms.tobytes() + states.tobytes()
    atomic_write(blob, path)
    atomic_write((_encode(manifest) + "\n").encode("utf-8"), manifest_path(path))


def manifest_path(path):
    return os.fspath(path) + ".json"


def read_bundle_file(path):
    """Parse a container written by this module (or the downstream toolkit)."""
    with open(path, "rb") as handle:
        blob = handle.read()
    magic, version, n, d, n_docs = HEADER.unpack_from(blob)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path} is not a version-{VERSION} bundle")
    expected = HEADER.size + n * n_docs + 4 * n * d
    if len(blob) != expected:
        raise ValueError(f"{path}: size {len(blob)} != expected {expected}")
    perms = np.frombuffer(blob, np.uint8, n * n_docs, HEADER.size).reshape(n, n_docs).copy()
    states = np.frombuffer(blob, "<f4", n * d, HEADER.size + n * n_docs).reshape(n, d)
    with open(manifest_path(path), "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    return states.astype(np.float32), perms, manifest


def update_manifest(path, manifest):
    atomic_write((_encode(manifest) + "\n").encode("utf-8"), manifest_path(path))
