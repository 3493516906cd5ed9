import json

import pytest


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory):
    """A small local causal-LM checkpoint loadable through the standard
    ``from_pretrained`` path: byte-level tokenizer (full coverage, no UNK),
    2-layer GPT-2 with hidden size 32, plus a simple chat template."""
    import torch
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    out = tmp_path_factory.mktemp("tiny-checkpoint")
    alphabet = pre_tokenizers.ByteLevel.alphabet()
    vocab = {ch: i for i, ch in enumerate(sorted(alphabet))}
    vocab["<|endoftext|>"] = len(vocab)
    tok = Tokenizer(models.BPE(vocab=vocab, merges=[]))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, eos_token="<|endoftext|>", pad_token="<|endoftext|>"
    )
    fast.chat_template = (
        "{% for message in messages %}{{ message['role'] }}: "
        "{{ message['content'] }}\n{% endfor %}"
        "{% if add_generation_prompt %}assistant:{% endif %}"
    )
    fast.save_pretrained(out)

    torch.manual_seed(0)
    config = GPT2Config(
        vocab_size=len(vocab),
        n_positions=1024,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=vocab["<|endoftext|>"],
        eos_token_id=vocab["<|endoftext|>"],
    )
    GPT2LMHeadModel(config).save_pretrained(out)
    return str(out)


@pytest.fixture(scope="session")
def runner(tiny_checkpoint):
    from hsextract import ModelRunner

    return ModelRunner(tiny_checkpoint)


QUERIES = [
    {
        "query_id": "q-capital",
        "query": "what is the capital of france?",
        "documents": ["Paris is the capital.", "London is in England.", "Berlin is German."],
        "gold_answers": ["Paris"],
    },
    {
        "query_id": "q-year",
        "query": "when was the act introduced?",
        "documents": ["It began in April 1913.", "Unrelated text.", "More filler."],
        "gold_answers": ["1913"],
    },
    {
        "query_id": "q-color",
        "query": "what color is the sky?",
        "documents": ["The sky is blue.", "Grass is green.", "Snow is white."],
        "gold_answers": ["blue"],
    },
]


@pytest.fixture
def queries_file(tmp_path):
    path = tmp_path / "queries.jsonl"
    path.write_text("".join(json.dumps(q) + "\n" for q in QUERIES))
    return str(path)
