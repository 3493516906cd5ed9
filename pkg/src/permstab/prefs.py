"""Preference-tuple construction from per-permutation answer profiles.

Each query's answer profile falls into one of four categories:

* FC - correct under every permutation; stable, excluded from training.
* PC - correct under some orderings, wrong under others; prefer the most
  frequent right answer over the most frequent wrong one.
* FU - always wrong and the documents cannot answer it; prefer abstention.
* FA - always wrong although a gold answer is present in the documents;
  prefer the gold answer over abstention.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import (
    MissingFullAnswers,
    MissingRepresentativeAnswer,
    NoIncorrectCandidate,
)
from .metrics import ABSTENTION, normalize_answer, sub_em
from .modes import check_partition_matches, identity_permutation

FULLY_CORRECT = "FC"
PARTIALLY_CORRECT = "PC"
FULLY_INCORRECT_UNANSWERABLE = "FU"
FULLY_INCORRECT_ANSWERABLE = "FA"

CATEGORIES = (
    FULLY_CORRECT,
    PARTIALLY_CORRECT,
    FULLY_INCORRECT_UNANSWERABLE,
    FULLY_INCORRECT_ANSWERABLE,
)

PROMPT_TEMPLATE_ID = "docqa-system-user-v1"


@dataclass(frozen=True)
class ProfileEntry:
    answer: str
    weight: int
    correct: bool


@dataclass
class AnswerProfile:
    """Weighted answer multiset observed across a query's permutations."""

    query_id: str
    query: str
    documents: list[str]
    gold_answers: list[str]
    entries: list[ProfileEntry]
    gold_in_docs: bool
    chosen_permutation: list[int]

    def validate(self):
        if not self.entries:
            raise ValueError("profile needs at least one entry")
        if any(e.weight <= 0 for e in self.entries):
            raise ValueError("entry weights must be positive")
        for e in self.entries:
            if e.correct != bool(sub_em(e.answer, self.gold_answers)):
                raise ValueError(f"correct flag for {e.answer!r} contradicts SubEM")
        return self


@dataclass
class PreferenceTuple:
    """(x, y_w, y_l) with x = (query, documents in the chosen order, template)."""

    query_id: str
    query: str
    documents: list[str]
    y_w: str
    y_l: str
    category: str
    template_id: str = PROMPT_TEMPLATE_ID

    def __post_init__(self):
        if self.category not in (PARTIALLY_CORRECT, FULLY_INCORRECT_UNANSWERABLE,
                                 FULLY_INCORRECT_ANSWERABLE):
            raise ValueError(f"category {self.category!r} is not trainable")
        if self.y_w == self.y_l:
            raise ValueError("y_w and y_l must differ")


def gold_in_documents(gold_answers, documents):
    """True iff any normalized gold answer occurs inside any normalized document."""
    if not documents:
        raise ValueError("documents must be non-empty")
    docs = [normalize_answer(d).text for d in documents]
    return any(normalize_answer(g).text in doc for g in gold_answers for doc in docs)


def categorize(profile):
    flags = [e.correct for e in profile.entries]
    if all(flags):
        return FULLY_CORRECT
    if any(flags):
        return PARTIALLY_CORRECT
    return FULLY_INCORRECT_ANSWERABLE if profile.gold_in_docs else FULLY_INCORRECT_UNANSWERABLE


def _top_answer(entries):
    """Highest-weight entry; ties go to the earlier first occurrence, then
    lexicographically smaller answer."""
    ranked = sorted(
        enumerate(entries), key=lambda item: (-item[1].weight, item[0], item[1].answer)
    )
    return ranked[0][1].answer


def build_preference(profile, abstention=ABSTENTION):
    """Preference tuple for a profile, or None for the stable FC case.

    The dispreferred pool for PC/FU excludes answers that are themselves the
    abstention string, so y_l never collides with an abstention y_w; an empty
    pool after that filter raises NoIncorrectCandidate.
    """
    profile.validate()
    category = categorize(profile)
    if category == FULLY_CORRECT:
        return None

    incorrect = [e for e in profile.entries
                 if not e.correct and e.answer.strip() != abstention]
    if category == PARTIALLY_CORRECT:
        correct = [e for e in profile.entries if e.correct]
        if not incorrect:
            raise NoIncorrectCandidate("PC profile has no non-abstention incorrect answer")
        y_w, y_l = _top_answer(correct), _top_answer(incorrect)
    elif category == FULLY_INCORRECT_UNANSWERABLE:
        if not incorrect:
            raise NoIncorrectCandidate("FU profile has no non-abstention incorrect answer")
        y_w, y_l = abstention, _top_answer(incorrect)
    else:  # FA
        y_w, y_l = profile.gold_answers[0], abstention

    docs = [profile.documents[p] for p in profile.chosen_permutation]
    return PreferenceTuple(
        query_id=profile.query_id,
        query=profile.query,
        documents=docs,
        y_w=y_w,
        y_l=y_l,
        category=category,
    )


def _merge_entries(raw_entries, gold_answers):
    """Merge answers that normalize identically, summing weights; the first
    raw surface form is kept and first-seen order is preserved."""
    order = []
    merged = {}
    for answer, weight in raw_entries:
        key = normalize_answer(answer).text
        if key not in merged:
            merged[key] = [answer, 0]
            order.append(key)
        merged[key][1] += weight
    return [
        ProfileEntry(answer=merged[k][0], weight=merged[k][1],
                     correct=bool(sub_em(merged[k][0], gold_answers)))
        for k in order
    ]


def profile_from_partition(partition, reps, bundle, chosen_permutation=None):
    """Answer profile for a bundle given its partition and representatives.

    In representative mode each cluster contributes its representative's
    answer weighted by the cluster size. When the bundle carries a decoded
    answer for every permutation, exhaustive mode is used instead: one entry
    per distinct normalized answer, weighted by its permutation count.
    """
    check_partition_matches(partition, bundle)
    if bundle.has_full_answers():
        raw = [(a, 1) for a in bundle.answers]
    else:
        if len(reps.clusters) != partition.k:
            raise MissingRepresentativeAnswer("representative set does not cover all clusters")
        raw = []
        for j, rep in enumerate(reps.clusters):
            if rep.representative_answer is None:
                raise MissingRepresentativeAnswer(f"cluster {j} has no decoded answer")
            raw.append((rep.representative_answer, int(partition.cluster_sizes[j])))
    if chosen_permutation is None:
        chosen_permutation = identity_permutation(bundle)
    return AnswerProfile(
        query_id=bundle.query_id,
        query=bundle.query,
        documents=list(bundle.documents),
        gold_answers=list(bundle.gold_answers),
        entries=_merge_entries(raw, bundle.gold_answers),
        gold_in_docs=gold_in_documents(bundle.gold_answers, bundle.documents),
        chosen_permutation=list(chosen_permutation),
    ).validate()


def exhaustive_profile(bundle, chosen_permutation=None):
    """Answer profile straight from a fully decoded bundle, no clustering."""
    if not bundle.has_full_answers():
        raise MissingFullAnswers("exhaustive profile needs a decoded answer per permutation")
    if chosen_permutation is None:
        chosen_permutation = identity_permutation(bundle)
    return AnswerProfile(
        query_id=bundle.query_id,
        query=bundle.query,
        documents=list(bundle.documents),
        gold_answers=list(bundle.gold_answers),
        entries=_merge_entries([(a, 1) for a in bundle.answers], bundle.gold_answers),
        gold_in_docs=gold_in_documents(bundle.gold_answers, bundle.documents),
        chosen_permutation=list(chosen_permutation),
    ).validate()


def build_preferences_for_bundle(partition, reps, bundle, per_representative=False):
    """Preference tuples for one bundle.

    By default one tuple is emitted with x in the original retrieval order.
    With ``per_representative`` each cluster's representative permutation
    renders its own x, giving one tuple per reasoning mode. FC bundles emit
    nothing either way.
    """
    if per_representative:
        orders = [list(int(v) for v in bundle.permutations[rep.representative_index])
                  for rep in reps.clusters]
    else:
        orders = [identity_permutation(bundle)]
    tuples = []
    for order in orders:
        profile = profile_from_partition(partition, reps, bundle, chosen_permutation=order)
        pref = build_preference(profile)
        if pref is None:
            return []
        tuples.append(pref)
    return tuples
