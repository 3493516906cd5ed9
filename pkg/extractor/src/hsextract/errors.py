class ExtractorError(Exception):
    """Base class for extraction failures."""


class ModelLoadFailure(ExtractorError):
    """Checkpoint or tokenizer could not be loaded."""


class ContextOverflow(ExtractorError):
    """Rendered prompt exceeds the model's context window."""


class IndexOutOfRange(ExtractorError):
    """A referenced permutation or layer index does not exist."""


class InvalidQueryRecord(ExtractorError):
    """A queries-file record is missing fields or malformed."""


class TooManyPermutations(ExtractorError):
    """Exhaustive enumeration would exceed the bundle cap of 5040 states."""
