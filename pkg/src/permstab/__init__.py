"""permstab: quantify and mitigate document-order permutation sensitivity in
retrieval-augmented generation pipelines.

The pipeline clusters per-permutation hidden states into latent reasoning
modes, picks one representative permutation per mode for decoding, builds
DPO preference tuples from the answer profile, and evaluates order-
robustness metrics.
"""

from .bundle_io import read_bundle, write_bundle
from .dpo import DEFAULT_BETA, DpoExample, DpoReport, dpo_loss, sequence_logprob
from .errors import IoFailure, PermStabError, ValidationError
from .metrics import (
    ABSTENTION,
    NormalizedAnswer,
    PermutationOutcome,
    abstention_rate,
    cluster_answer_fidelity,
    normalize_answer,
    psr,
    shuffle_drop,
    sub_em,
    token_f1,
)
from .modes import (
    ClusterRepresentative,
    HiddenStateBundle,
    ModePartition,
    RepresentativeSet,
    cluster_permutations,
    pca_project,
    representatives,
)
from .prefs import (
    AnswerProfile,
    PreferenceTuple,
    ProfileEntry,
    build_preference,
    build_preferences_for_bundle,
    categorize,
    gold_in_documents,
    profile_from_partition,
)
from .spectral import (
    Assignment,
    EigenSystem,
    cosine_affinity,
    kmeans,
    normalized_laplacian,
    select_k_eigengap,
    spectral_embed,
    symmetric_eigen,
)
from .synth import (
    LabeledBundle,
    SynthSpec,
    adjusted_rand_index,
    brute_force_best_partition,
    generate,
)

__version__ = "0.1.0"

__all__ = [
    "ABSTENTION",
    "DEFAULT_BETA",
    "AnswerProfile",
    "Assignment",
    "ClusterRepresentative",
    "DpoExample",
    "DpoReport",
    "EigenSystem",
    "HiddenStateBundle",
    "IoFailure",
    "LabeledBundle",
    "ModePartition",
    "NormalizedAnswer",
    "PermStabError",
    "PermutationOutcome",
    "PreferenceTuple",
    "ProfileEntry",
    "RepresentativeSet",
    "SynthSpec",
    "ValidationError",
    "abstention_rate",
    "adjusted_rand_index",
    "brute_force_best_partition",
    "build_preference",
    "build_preferences_for_bundle",
    "categorize",
    "cluster_answer_fidelity",
    "cluster_permutations",
    "cosine_affinity",
    "dpo_loss",
    "generate",
    "gold_in_documents",
    "kmeans",
    "normalize_answer",
    "normalized_laplacian",
    "pca_project",
    "profile_from_partition",
    "psr",
    "read_bundle",
    "representatives",
    "select_k_eigengap",
    "sequence_logprob",
    "shuffle_drop",
    "spectral_embed",
    "sub_em",
    "symmetric_eigen",
    "token_f1",
    "write_bundle",
]
