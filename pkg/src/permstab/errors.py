"""Exception taxonomy.

Two families matter to callers: ``ValidationError`` (bad inputs or bad data,
CLI exit code 1) and ``IoFailure`` (filesystem trouble, CLI exit code 2).
Every concrete error below names the condition it signals.
"""


class PermStabError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PermStabError):
    """Input or data violates a documented contract."""


class IoFailure(PermStabError):
    """Reading or writing a file failed at the OS level."""


# --- linear algebra / clustering -------------------------------------------

class ZeroNormRow(ValidationError):
    """A hidden state has near-zero norm; cosine similarity is undefined."""


class NonPositiveSigma(ValidationError):
    """Affinity bandwidth sigma must be > 0."""


class IsolatedNode(ValidationError):
    """An affinity row sums to zero; the graph is degenerate."""


class NotSymmetric(ValidationError):
    """Matrix is not symmetric within tolerance."""


class NoConvergence(ValidationError):
    """Eigensolver sweep budget exhausted."""


class TooFewEigenvalues(ValidationError):
    """Eigengap selection needs at least 3 eigenvalues."""


class KTooLarge(ValidationError):
    """Requested more clusters than points."""


# --- pipeline ----------------------------------------------------------------

class BundleTooSmall(ValidationError):
    """Clustering needs at least 3 permutations."""


class MismatchedPartition(ValidationError):
    """Partition does not correspond to the given bundle."""


class DegenerateInput(ValidationError):
    """Input has rank 0 after centering; projection is undefined."""


# --- preference construction -------------------------------------------------

class NoIncorrectCandidate(ValidationError):
    """PC/FU profile has no usable incorrect answer; flags are inconsistent."""


class MissingRepresentativeAnswer(ValidationError):
    """A cluster representative carries no decoded answer."""


class MissingFullAnswers(ValidationError):
    """Operation requires a decoded answer for every permutation."""


# --- metrics -------------------------------------------------------------------

class PositionMismatch(ValidationError):
    """Outcome recorded at a different gold-document position."""


# --- DPO math ------------------------------------------------------------------

class EmptyBatch(ValidationError):
    """DPO loss needs at least one example."""


class NonPositiveBeta(ValidationError):
    """Preference scaling beta must be > 0."""


# --- synthetic benchmark ---------------------------------------------------------

class LengthMismatch(ValidationError):
    """Label vectors have different lengths."""


class InfeasibleSpec(ValidationError):
    """Synthetic generator settings cannot be realized (e.g. a mode got zero states)."""


class TooLargeForBruteForce(ValidationError):
    """Exhaustive partition enumeration is capped at 12 points."""


# --- file formats ----------------------------------------------------------------

class BundleInvalid(ValidationError):
    """Bundle violates a structural invariant."""


class BadMagic(ValidationError):
    """File does not start with the bundle magic bytes."""


class UnsupportedVersion(ValidationError):
    """Bundle container version is not recognized."""


class CorruptPayload(ValidationError):
    """Container payload does not match its header."""


class InvalidPermutation(ValidationError):
    """A permutation row is not a permutation of 0..n-1 or is duplicated."""


class NonFiniteState(ValidationError):
    """Hidden states contain NaN or Inf."""


class IndexOutOfRange(ValidationError):
    """A referenced permutation index does not exist in the bundle."""
