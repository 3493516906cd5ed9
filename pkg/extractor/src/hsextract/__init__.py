"""hsextract: run a transformer checkpoint over document permutations and
emit hidden-state bundle files for order-sensitivity analysis."""

from .bundlefile import read_bundle_file, write_bundle_file
from .errors import (
    ContextOverflow,
    ExtractorError,
    IndexOutOfRange,
    InvalidQueryRecord,
    ModelLoadFailure,
    TooManyPermutations,
)
from .extract import (
    ExtractionJob,
    ModelRunner,
    QueryRecord,
    decode_representatives,
    extract,
    lexicographic_orderings,
    load_queries,
)
from .prompts import SYSTEM_PROMPT, flatten_messages, render_prompt

__version__ = "0.1.0"
