"""Run a causal LM over document permutations and emit hidden-state bundles.

For every query we enumerate document orderings lexicographically, render
the chat prompt for each ordering, and capture the last prompt position's
hidden state at the selected layer: that position is the state from which
the first response token would be predicted, including any assistant-turn
header the chat template appends. Answers, when requested, come from greedy
argmax decoding; the configured temperature is provenance recorded in the
manifest (values near zero make sampling indistinguishable from greedy, and
greedy keeps reruns byte-identical).
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
import torch

from . import bundlefile
from .errors import (
    ContextOverflow,
    IndexOutOfRange,
    InvalidQueryRecord,
    ModelLoadFailure,
    TooManyPermutations,
)
from .prompts import flatten_messages, render_prompt

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.01
DEFAULT_MAX_NEW_TOKENS = 16
CAPTURE_POSITION = "last-prompt-token"


@dataclass
class QueryRecord:
    query_id: str
    query: str
    documents: list[str]
    gold_answers: list[str]

    @classmethod
    def from_json(cls, doc):
        try:
            record = cls(
                query_id=str(doc["query_id"]),
                query=str(doc["query"]),
                documents=list(doc["documents"]),
                gold_answers=list(doc["gold_answers"]),
            )
        except (KeyError, TypeError) as exc:
            raise InvalidQueryRecord(f"bad query record {doc!r}: {exc}") from exc
        if not record.documents:
            raise InvalidQueryRecord(f"{record.query_id}: documents must be non-empty")
        return record


@dataclass
class ExtractionJob:
    model_id: str
    queries: list[QueryRecord]
    layer: str = "final"
    max_permutations: int | None = None
    temperature: float = DEFAULT_TEMPERATURE
    decode: str = "none"  # none | all | reps
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    reps_dir: str | None = None
    outdir: str = "."
    skipped: list[str] = field(default_factory=list)

    def validate(self):
        if self.decode not in ("none", "all", "reps"):
            raise ValueError(f"decode must be none|all|reps, got {self.decode!r}")
        if not self.temperature > 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.decode == "reps" and not self.reps_dir:
            raise ValueError("decode=reps needs a representatives directory")
        return self


def load_queries(path):
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(QueryRecord.from_json(json.loads(line)))
    return records


def permutation_count(n_docs, max_permutations):
    total = math.factorial(n_docs)
    count = total if max_permutations is None else min(max_permutations, total)
    if count > bundlefile.MAX_STATES:
        raise TooManyPermutations(
            f"{count} permutations exceed the {bundlefile.MAX_STATES} bundle cap; "
            "set --max-perms or retrieve fewer documents"
        )
    return count


def lexicographic_orderings(n_docs, count):
    return np.array(
        list(itertools.islice(itertools.permutations(range(n_docs)), count)),
        dtype=np.uint8,
    )


def safe_filename(query_id):
    return re.sub(r"[^A-Za-z0-9._-]", "_", query_id) or "query"


class ModelRunner:
    """A loaded checkpoint plus the tokenize/forward/decode plumbing."""

    def __init__(self, model_id):
        try:
            from transformers import AutoModelForCausalLM, AutoTokenizer

            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModelForCausalLM.from_pretrained(model_id)
        except Exception as exc:
            raise ModelLoadFailure(f"cannot load {model_id!r}: {exc}") from exc
        self.model.eval()
        self.model_id = model_id
        config = self.model.config
        self.hidden_size = int(getattr(config, "hidden_size", None) or config.n_embd)
        self.context_window = int(
            getattr(config, "max_position_embeddings", None)
            or self.tokenizer.model_max_length
        )

    def encode_prompt(self, query, documents):
        messages = render_prompt(query, documents)
        if getattr(self.tokenizer, "chat_template", None):
            text = self.tokenizer.apply_chat_template(
                messages, tokenize=False, add_generation_prompt=True
            )
        else:
            text = flatten_messages(messages)
        ids = self.tokenizer(text, return_tensors="pt").input_ids
        if ids.shape[1] > self.context_window:
            raise ContextOverflow(
                f"prompt is {ids.shape[1]} tokens, window is {self.context_window}"
            )
        return ids

    def resolve_layer(self, layer):
        # hidden_states holds the embedding output plus one entry per block
        n_layers = getattr(self.model.config, "num_hidden_layers", None) or \
            self.model.config.n_layer
        if layer == "final":
            return n_layers
        index = int(layer)
        if not 0 <= index <= n_layers:
            raise IndexOutOfRange(f"layer {index} outside [0, {n_layers}]")
        return index

    @torch.no_grad()
    def hidden_state(self, ids, layer_index):
        out = self.model(ids, output_hidden_states=True)
        state = out.hidden_states[layer_index][0, -1, :]
        return state.to(torch.float32).cpu().numpy()

    @torch.no_grad()
    def greedy_answer(self, ids, max_new_tokens):
        generated = self.model.generate(
            ids,
            do_sample=False,
            max_new_tokens=max_new_tokens,
            pad_token_id=self.tokenizer.eos_token_id,
        )
        text = self.tokenizer.decode(generated[0, ids.shape[1]:], skip_special_tokens=True)
        return text.strip().split("\n")[0].strip()


def bundle_path(outdir, query_id):
    import os

    return os.path.join(outdir, safe_filename(query_id) + ".hsb")


def _manifest(record, runner, layer, temperature, answers):
    return {
        "answers": answers,
        "capture": CAPTURE_POSITION,
        "documents": record.documents,
        "gold_answers": record.gold_answers,
        "layer_index": str(layer),
        "model_id": runner.model_id,
        "query": record.query,
        "query_id": record.query_id,
        "temperature": float(temperature),
    }


def extract(job, runner=None):
    """Write one bundle per query; overflowing queries are skipped and logged.

    Returns the list of written bundle paths. ``job.skipped`` collects the
    query ids whose prompts exceeded the context window.
    """
    job.validate()
    runner = runner or ModelRunner(job.model_id)
    layer_index = runner.resolve_layer(job.layer)
    written = []
    for record in job.queries:
        n_docs = len(record.documents)
        count = permutation_count(n_docs, job.max_permutations)
        orderings = lexicographic_orderings(n_docs, count)
        states = np.empty((count, runner.hidden_size), dtype=np.float32)
        answers = [None] * count if job.decode != "none" else None
        try:
            for i, order in enumerate(orderings):
                docs = [record.documents[j] for j in order]
                ids = runner.encode_prompt(record.query, docs)
                states[i] = runner.hidden_state(ids, layer_index)
                if job.decode == "all":
                    answers[i] = runner.greedy_answer(ids, job.max_new_tokens)
        except ContextOverflow as exc:
            log.warning("skipping %s: %s", record.query_id, exc)
            job.skipped.append(record.query_id)
            continue
        path = bundle_path(job.outdir, record.query_id)
        manifest = _manifest(record, runner, job.layer, job.temperature, answers)
        bundlefile.write_bundle_file(path, states, orderings, manifest)
        if job.decode == "reps":
            import os

            reps_file = os.path.join(
                job.reps_dir, safe_filename(record.query_id) + ".reps.json"
            )
            decode_representatives(path, reps_file, runner=runner,
                                   max_new_tokens=job.max_new_tokens)
        written.append(path)
    return written


def _representative_indices(reps_doc):
    try:
        return [int(c["representative_index"]) for c in reps_doc["clusters"]]
    except (KeyError, TypeError) as exc:
        raise InvalidQueryRecord(f"malformed representatives document: {exc}") from exc


def decode_representatives(path, reps_path, runner=None, model_id=None,
                           max_new_tokens=DEFAULT_MAX_NEW_TOKENS):
    """Decode only the representative permutations of an existing bundle and
    write their answers into the manifest; every other slot stays null.
    Rerunning is idempotent."""
    states, perms, manifest = bundlefile.read_bundle_file(path)
    with open(reps_path, "r", encoding="utf-8") as handle:
        reps_doc = json.load(handle)
    indices = _representative_indices(reps_doc)
    n = states.shape[0]
    for idx in indices:
        if not 0 <= idx < n:
            raise IndexOutOfRange(f"representative index {idx} outside [0, {n})")
    runner = runner or ModelRunner(model_id or manifest["model_id"])
    answers = [None] * n
    for idx in indices:
        docs = [manifest["documents"][j] for j in perms[idx]]
        ids = runner.encode_prompt(manifest["query"], docs)
        answers[idx] = runner.greedy_answer(ids, max_new_tokens)
    manifest["answers"] = answers
    bundlefile.update_manifest(path, manifest)
    return answers
