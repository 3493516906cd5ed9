"""File formats: the binary hidden-state bundle container, its JSON manifest
sidecar, and the JSON documents for partitions, representative sets and
preference tuples.

Binary layout (little-endian): magic ``HSB1``, u32 version, u32 N, u32 d,
u32 n, then N*n permutation indices as unsigned bytes, then the N x d state
matrix as IEEE-754 float32, row-major. Text fields live in ``<path>.json``.

All JSON is emitted with sorted keys and floats at 17 significant digits, so
identical values always serialize to identical bytes. Writes go through a
temp file in the target directory followed by an atomic rename.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import (
    BadMagic,
    BundleInvalid,
    CorruptPayload,
    InvalidPermutation,
    IoFailure,
    NonFiniteState,
    UnsupportedVersion,
)
from .modes import ClusterRepresentative, HiddenStateBundle, ModePartition, RepresentativeSet
from .prefs import PreferenceTuple
from .spectral import Assignment

MAGIC = b"HSB1"
VERSION = 1
HEADER = struct.Struct("<4sIIII")

MANIFEST_FIELDS = (
    "answers",
    "documents",
    "gold_answers",
    "layer_index",
    "model_id",
    "query",
    "query_id",
    "temperature",
)


# --- canonical JSON ----------------------------------------------------------

def format_float(x):
    """17 significant digits: enough to round-trip any double exactly."""
    value = float(x)
    if not np.isfinite(value):
        raise ValueError(f"cannot serialize non-finite float {value}")
    text = format(value, ".17g")
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
        return format_float(obj)
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {_encode(v)}" for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj):
    """Deterministic JSON text: sorted keys, fixed float formatting."""
    return _encode(obj)


def write_canonical_json(obj, path):
    atomic_write_bytes((dumps_canonical(obj) + "\n").encode("utf-8"), path)


def atomic_write_bytes(data, path):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
        try:
            with os.fdopen(fd, "wb") as handle:
                handle.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_bytes(path):
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


# --- bundle container ----------------------------------------------------------

def manifest_path(path):
    return os.fspath(path) + ".json"


def write_bundle(bundle, path):
    """Write the binary container to ``path`` and the manifest to ``path.json``."""
    bundle.validate()
    n_states = bundle.n_states
    n_docs = bundle.n_documents
    d = int(bundle.states.shape[1])
    if n_docs > 255:
        raise BundleInvalid(f"n={n_docs} does not fit the u8 permutation encoding")
    perms = np.ascontiguousarray(bundle.permutations, dtype=np.uint8)
    states = np.ascontiguousarray(bundle.states, dtype="<f4")
    blob = HEADER.pack(MAGIC, VERSION, n_states, d, n_docs) + perms.tobytes() + states.tobytes()
    atomic_write_bytes(blob, path)
    manifest = {
        "answers": list(bundle.answers) if bundle.answers is not None else None,
        "documents": list(bundle.documents),
        "gold_answers": list(bundle.gold_answers),
        "layer_index": bundle.layer_index,
        "model_id": bundle.model_id,
        "query": bundle.query,
        "query_id": bundle.query_id,
        "temperature": float(bundle.temperature),
    }
    write_canonical_json(manifest, manifest_path(path))


def _parse_manifest(path):
    raw = read_bytes(path)
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptPayload(f"manifest {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not set(MANIFEST_FIELDS) <= set(doc):
        raise CorruptPayload(f"manifest {path} is missing required fields")
    return doc


def read_bundle(path):
    """Parse and validate a bundle container plus its manifest."""
    blob = read_bytes(path)
    if blob[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: magic {blob[: len(MAGIC)]!r} != {MAGIC!r}")
    if len(blob) < HEADER.size:
        raise CorruptPayload(f"{path}: {len(blob)} bytes is shorter than the header")
    magic, version, n_states, d, n_docs = HEADER.unpack_from(blob)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version} not supported")
    if n_states < 1 or d < 1 or n_docs < 1:
        raise CorruptPayload(f"{path}: degenerate header N={n_states} d={d} n={n_docs}")
    expected = HEADER.size + n_states * n_docs + 4 * n_states * d
    if len(blob) != expected:
        raise CorruptPayload(f"{path}: payload is {len(blob)} bytes, header implies {expected}")
    offset = HEADER.size
    perms = np.frombuffer(blob, dtype=np.uint8, count=n_states * n_docs, offset=offset)
    perms = perms.reshape(n_states, n_docs).copy()
    offset += n_states * n_docs
    states = np.frombuffer(blob, dtype="<f4", count=n_states * d, offset=offset)
    states = states.reshape(n_states, d).astype(np.float32)

    ident = np.arange(n_docs)
    for i, row in enumerate(perms):
        if not np.array_equal(np.sort(row), ident):
            raise InvalidPermutation(f"{path}: row {i} is not a permutation of 0..{n_docs - 1}")
    if len({tuple(int(v) for v in row) for row in perms}) != n_states:
        raise InvalidPermutation(f"{path}: permutation rows are not pairwise distinct")
    if not np.all(np.isfinite(states)):
        raise NonFiniteState(f"{path}: states contain NaN or Inf")

    doc = _parse_manifest(manifest_path(path))
    answers = doc["answers"]
    if answers is not None and (not isinstance(answers, list) or len(answers) != n_states):
        raise CorruptPayload(f"{path}: manifest answers do not cover N={n_states}")
    bundle = HiddenStateBundle(
        query_id=doc["query_id"],
        query=doc["query"],
        documents=list(doc["documents"]),
        gold_answers=list(doc["gold_answers"]),
        permutations=perms,
        states=states,
        answers=list(answers) if answers is not None else None,
        model_id=doc["model_id"],
        layer_index=str(doc["layer_index"]),
        temperature=float(doc["temperature"]),
    )
    try:
        bundle.validate()
    except BundleInvalid as exc:
        raise CorruptPayload(f"{path}: {exc}") from exc
    return bundle


# --- partition / representatives / preferences documents -------------------------

def partition_to_doc(partition, query_id):
    return {
        "cluster_sizes": [int(v) for v in partition.cluster_sizes],
        "eigenvalues": [float(v) for v in partition.eigenvalues],
        "embedding": [[float(v) for v in row] for row in partition.embedding],
        "k": int(partition.k),
        "labels": [int(v) for v in partition.assignment.labels],
        "query_id": query_id,
        "sigma_used": float(partition.sigma_used),
    }


def partition_from_doc(doc):
    k = int(doc["k"])
    labels = np.array(doc["labels"], dtype=np.int64)
    partition = ModePartition(
        eigenvalues=np.array(doc["eigenvalues"], dtype=np.float64),
        k=k,
        embedding=np.array(doc["embedding"], dtype=np.float64),
        assignment=Assignment(labels=labels, k=k),
        cluster_sizes=np.array(doc["cluster_sizes"], dtype=np.int64),
        sigma_used=float(doc["sigma_used"]),
    )
    return doc["query_id"], partition


def write_partition(partition, query_id, path):
    write_canonical_json(partition_to_doc(partition, query_id), path)


def read_partition(path):
    raw = read_bytes(path)
    try:
        return partition_from_doc(json.loads(raw.decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptPayload(f"partition {path} is malformed: {exc}") from exc


def representatives_to_doc(reps, query_id):
    return {
        "clusters": [
            {
                "centroid": [float(v) for v in rep.centroid],
                "representative_answer": rep.representative_answer,
                "representative_index": int(rep.representative_index),
                "size": int(rep.size),
            }
            for rep in reps.clusters
        ],
        "query_id": query_id,
    }


def representatives_from_doc(doc):
    reps = RepresentativeSet(
        clusters=[
            ClusterRepresentative(
                centroid=np.array(cluster["centroid"], dtype=np.float64),
                representative_index=int(cluster["representative_index"]),
                representative_answer=cluster["representative_answer"],
                size=int(cluster["size"]),
            )
            for cluster in doc["clusters"]
        ]
    )
    return doc["query_id"], reps


def write_representatives(reps, query_id, path):
    write_canonical_json(representatives_to_doc(reps, query_id), path)


def read_representatives(path):
    raw = read_bytes(path)
    try:
        return representatives_from_doc(json.loads(raw.decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CorruptPayload(f"representatives {path} is malformed: {exc}") from exc


def preference_to_line(pref):
    return dumps_canonical(
        {
            "category": pref.category,
            "documents": list(pref.documents),
            "query": pref.query,
            "query_id": pref.query_id,
            "y_l": pref.y_l,
            "y_w": pref.y_w,
        }
    )


def preference_from_line(line):
    try:
        doc = json.loads(line)
        return PreferenceTuple(
            query_id=doc["query_id"],
            query=doc["query"],
            documents=list(doc["documents"]),
            y_w=doc["y_w"],
            y_l=doc["y_l"],
            category=doc["category"],
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptPayload(f"preference line is malformed: {exc}") from exc


def write_preferences(prefs, path):
    body = "".join(preference_to_line(p) + "\n" for p in prefs)
    atomic_write_bytes(body.encode("utf-8"), path)


def read_preferences(path):
    raw = read_bytes(path).decode("utf-8")
    return [preference_from_line(line) for line in raw.splitlines() if line.strip()]


def read_jsonl(path):
    raw = read_bytes(path).decode("utf-8")
    records = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise CorruptPayload(f"{path}:{lineno}: invalid JSON: {exc}") from exc
    return records
