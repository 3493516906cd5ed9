"""Prompt rendering for document-grounded QA.

The system/user layout asks for a short answer grounded in the numbered
documents; DocK slots always follow the ordering the caller passes in, which
is what makes permutation sweeps meaningful.
"""

SYSTEM_PROMPT = (
    "You are a helpful, respectful, and honest assistant. Answer the question "
    "with couple of words using the provided documents. For example: Question: "
    "What is the capital of France? Output: Paris."
)

PROMPT_TEMPLATE_ID = "docqa-system-user-v1"


def render_prompt(query, documents):
    """Chat messages for one query with documents in the given order.

    The user turn lists ``Question: {query}``, then ``Documents:`` and one
    ``DocK: ...`` line per document; Doc1 always holds the first document of
    the ordering handed in.
    """
    if not documents:
        raise ValueError("documents must be non-empty")
    doc_lines = "\n".join(f"Doc{i + 1}: {text}" for i, text in enumerate(documents))
    user = f"Question: {query}\nDocuments:\n{doc_lines}"
    return [
        {"role": "system", "content": SYSTEM_PROMPT},
        {"role": "user", "content": user},
    ]


def flatten_messages(messages):
    """Plain-text fallback for tokenizers without a chat template; ends with
    an assistant header so the next position is the first response token."""
    body = "\n\n".join(f"{m['role']}: {m['content']}" for m in messages)
    return body + "\n\nassistant:"
