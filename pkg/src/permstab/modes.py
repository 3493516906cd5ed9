"""Per-query pipeline: hidden-state bundle in, reasoning-mode partition and
representative permutations out, plus the 2-D projection used for
order-sensitivity visualizations.

A bundle holds one hidden state per document permutation. Clustering those
states groups permutations that led the model into the same reasoning mode,
and decoding only one representative permutation per mode cuts the decode
budget from N = n! to the number of modes.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    BundleInvalid,
    BundleTooSmall,
    DegenerateInput,
    MismatchedPartition,
    NonPositiveSigma,
)
from .spectral import (
    Assignment,
    affinity_from_gram,
    cosine_gram,
    embedding_from_eigen,
    kmeans,
    normalized_laplacian,
    select_k_eigengap,
    symmetric_eigen,
    unit_rows,
)

MAX_BUNDLE_STATES = 5040  # 7!; larger document sets must subsample upstream

# The plain median of off-diagonal cosine distances is dominated by
# cross-mode pairs once there are 3+ modes, and the resulting bandwidth is
# too wide for the eigengap to resolve the mode count. A quarter of the
# median keeps the bandwidth adaptive to the bundle's spread while giving
# within-mode pairs a decisive affinity advantage.
SIGMA_MEDIAN_SCALE = 0.25
SIGMA_FLOOR = 1e-6

DEFAULT_TEMPERATURE = 0.01


@dataclass
class HiddenStateBundle:
    """Hidden states for every recorded permutation of one query's documents.

    ``permutations[i]`` is the document ordering whose final-layer last-token
    hidden state is ``states[i]``. ``answers``, when present, has one slot
    per permutation; slots may be None when only representatives were
    decoded. States are stored as float32, the container's wire precision.
    """

    query_id: str
    query: str
    documents: list[str]
    gold_answers: list[str]
    permutations: np.ndarray
    states: np.ndarray
    answers: list[str | None] | None = None
    model_id: str = ""
    layer_index: str = "final"
    temperature: float = DEFAULT_TEMPERATURE

    @property
    def n_states(self) -> int:
        return int(self.states.shape[0])

    @property
    def n_documents(self) -> int:
        return len(self.documents)

    def validate(self):
        perms = np.asarray(self.permutations)
        states = np.asarray(self.states)
        n_states = states.shape[0] if states.ndim == 2 else -1
        if states.ndim != 2 or n_states < 1 or states.shape[1] < 1:
            raise BundleInvalid(f"states must be a non-empty 2-D matrix, got shape {states.shape}")
        if n_states > MAX_BUNDLE_STATES:
            raise BundleInvalid(f"N={n_states} exceeds the {MAX_BUNDLE_STATES} cap")
        if not np.all(np.isfinite(states)):
            raise BundleInvalid("states contain non-finite values")
        n_docs = len(self.documents)
        if n_docs < 1:
            raise BundleInvalid("bundle needs at least one document")
        if perms.ndim != 2 or perms.shape != (n_states, n_docs):
            raise BundleInvalid(
                f"permutation table shape {perms.shape} does not match N={n_states}, n={n_docs}"
            )
        ident = np.arange(n_docs)
        for i, row in enumerate(perms):
            if not np.array_equal(np.sort(row), ident):
                raise BundleInvalid(f"row {i} is not a permutation of 0..{n_docs - 1}")
        if len({tuple(int(v) for v in row) for row in perms}) != n_states:
            raise BundleInvalid("permutation rows are not pairwise distinct")
        if self.answers is not None and len(self.answers) != n_states:
            raise BundleInvalid(
                f"answers length {len(self.answers)} does not match N={n_states}"
            )
        return self

    def has_full_answers(self) -> bool:
        return self.answers is not None and all(a is not None for a in self.answers)

    def with_answers(self, answers):
        return replace(self, answers=answers)


@dataclass
class ModePartition:
    """Spectral-clustering output for one bundle: the Laplacian spectrum, the
    eigengap cluster count, the unit-row embedding, and the assignment."""

    eigenvalues: np.ndarray
    k: int
    embedding: np.ndarray
    assignment: Assignment
    cluster_sizes: np.ndarray
    sigma_used: float


@dataclass
class ClusterRepresentative:
    """One reasoning mode: its centroid in raw state space, the member
    permutation closest to it, and that member's decoded answer if known."""

    centroid: np.ndarray
    representative_index: int
    representative_answer: str | None
    size: int


@dataclass
class RepresentativeSet:
    clusters: list[ClusterRepresentative] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.clusters)


def derive_bundle_seed(seed, query_id):
    """Seed XOR a stable 64-bit hash of the query id, so concurrent bundle
    processing gives results independent of scheduling order."""
    digest = hashlib.blake2b(query_id.encode("utf-8"), digest_size=8).digest()
    return (int(seed) ^ int.from_bytes(digest, "little")) % 2**64


def median_heuristic_sigma(gram):
    """Default affinity bandwidth: scaled median off-diagonal cosine distance."""
    n = gram.shape[0]
    iu = np.triu_indices(n, k=1)
    distances = 1.0 - gram[iu]
    return max(float(np.median(distances)) * SIGMA_MEDIAN_SCALE, SIGMA_FLOOR)


def cluster_permutations(bundle, sigma=None, seed=0):
    """Cluster a bundle's hidden states into latent reasoning modes.

    Composes cosine affinity, normalized Laplacian, full eigendecomposition,
    eigengap model selection, spectral embedding and seeded k-means. When
    ``sigma`` is None the bandwidth comes from ``median_heuristic_sigma``.
    Deterministic for a fixed (bundle, sigma, seed).
    """
    bundle.validate()
    if bundle.n_states < 3:
        raise BundleTooSmall(f"need >= 3 permutations, got {bundle.n_states}")
    if sigma is not None and not (sigma > 0.0):
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")

    gram = cosine_gram(unit_rows(bundle.states.astype(np.float64)))
    sigma_used = median_heuristic_sigma(gram) if sigma is None else float(sigma)
    affinity = affinity_from_gram(gram, sigma_used)
    lap = normalized_laplacian(affinity)
    eig = symmetric_eigen(lap)
    k = select_k_eigengap(eig.eigenvalues)
    embedding = embedding_from_eigen(eig, k)
    assignment = kmeans(embedding, k, seed=derive_bundle_seed(seed, bundle.query_id))
    sizes = np.bincount(assignment.labels, minlength=k)
    return ModePartition(
        eigenvalues=eig.eigenvalues,
        k=k,
        embedding=embedding,
        assignment=assignment,
        cluster_sizes=sizes,
        sigma_used=sigma_used,
    )


def check_partition_matches(partition, bundle):
    n = bundle.n_states
    if partition.assignment.labels.shape[0] != n or partition.embedding.shape[0] != n:
        raise MismatchedPartition(
            f"partition covers {partition.assignment.labels.shape[0]} states, bundle has {n}"
        )
    if int(partition.cluster_sizes.sum()) != n or partition.k != partition.assignment.k:
        raise MismatchedPartition("partition is internally inconsistent with the bundle")


def representatives(partition, bundle):
    """Centroid and nearest-member permutation for every cluster.

    Centroids live in raw hidden-state space; the representative is the
    member with minimum Euclidean distance to the centroid, ties broken
    toward the smallest permutation index. Decoding cost per bundle drops
    from N permutations to one per cluster.
    """
    check_partition_matches(partition, bundle)
    states = bundle.states.astype(np.float64)
    out = RepresentativeSet()
    for j in range(partition.k):
        members = np.flatnonzero(partition.assignment.labels == j)
        if members.size == 0:
            raise MismatchedPartition(f"cluster {j} has no members")
        centroid = states[members].mean(axis=0)
        diff = states[members] - centroid
        d2 = np.einsum("md,md->m", diff, diff)
        rep = int(members[int(np.argmin(d2))])  # members ascending: ties pick lowest index
        answer = bundle.answers[rep] if bundle.answers is not None else None
        out.clusters.append(
            ClusterRepresentative(
                centroid=centroid,
                representative_index=rep,
                representative_answer=answer,
                size=int(members.size),
            )
        )
    return out


def pca_project(states, dims):
    """Project rows onto their top principal components.

    Rows are mean-centered, the covariance is eigendecomposed, and the
    component sign is fixed so each component's largest-magnitude loading is
    positive, which keeps emitted projections reproducible. Raises
    DegenerateInput when centering leaves rank 0.
    """
    x = np.asarray(states, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"states must be 2-D with N >= 2, got shape {x.shape}")
    n, d = x.shape
    if not 1 <= dims <= min(n, d):
        raise ValueError(f"dims must be in [1, {min(n, d)}], got {dims}")
    centered = x - x.mean(axis=0)
    total = float(np.sqrt(np.einsum("ij,ij->", centered, centered)))
    scale = float(np.sqrt(np.einsum("ij,ij->", x, x)))
    if total <= 1e-12 * max(1.0, scale):
        raise DegenerateInput("states are identical up to roundoff; no principal directions")
    cov = np.einsum("ni,nj->ij", centered, centered) / (n - 1)
    cov = (cov + cov.T) / 2.0
    eig = symmetric_eigen(cov)
    components = eig.eigenvectors[:, ::-1][:, :dims].copy()  # largest eigenvalues first
    for col in range(dims):
        lead = int(np.argmax(np.abs(components[:, col])))
        if components[lead, col] < 0.0:
            components[:, col] = -components[:, col]
    return np.einsum("nd,dk->nk", centered, components)


def identity_permutation(bundle):
    return list(range(bundle.n_documents))


def lexicographic_permutations(n_docs, count):
    """First ``count`` permutations of 0..n_docs-1 in lexicographic order."""
    rows = list(itertools.islice(itertools.permutations(range(n_docs)), count))
    if len(rows) < count:
        raise ValueError(f"{n_docs}! < {count}")
    return np.array(rows, dtype=np.uint8)
