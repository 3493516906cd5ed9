"""Hand-built fixtures shared across test modules."""

import numpy as np

from permstab.modes import (
    ClusterRepresentative,
    HiddenStateBundle,
    ModePartition,
    RepresentativeSet,
    lexicographic_permutations,
)
from permstab.spectral import Assignment


def build_manual_fidelity_case(answers=None, rep_answers=None):
    """Five states in two clusters: A = rows 0-2, B = rows 3-4.

    Default answers are (a, a, b, b, b) with representatives (a, b), the
    worked example whose pooled precision and recall are both 4/5.
    """
    answers = answers if answers is not None else ["a", "a", "b", "b", "b"]
    rep_answers = rep_answers if rep_answers is not None else ["a", "b"]
    labels = np.array([0, 0, 0, 1, 1], dtype=np.int64)
    states = np.array(
        [[1, 0], [1, 0.1], [1, -0.1], [0, 1], [0.1, 1]], dtype=np.float32
    )
    bundle = HiddenStateBundle(
        query_id="manual",
        query="manual case",
        documents=["d0", "d1", "d2"],
        gold_answers=["a"],
        permutations=lexicographic_permutations(3, 5),
        states=states,
        answers=answers,
    ).validate()
    emb = np.zeros((5, 2))
    emb[:, 0] = 1.0
    part = ModePartition(
        eigenvalues=np.zeros(5),
        k=2,
        embedding=emb,
        assignment=Assignment(labels=labels, k=2),
        cluster_sizes=np.array([3, 2]),
        sigma_used=1.0,
    )
    reps = RepresentativeSet(
        clusters=[
            ClusterRepresentative(
                centroid=states[:3].mean(axis=0).astype(np.float64),
                representative_index=0,
                representative_answer=rep_answers[0],
                size=3,
            ),
            ClusterRepresentative(
                centroid=states[3:].mean(axis=0).astype(np.float64),
                representative_index=3,
                representative_answer=rep_answers[1],
                size=2,
            ),
        ]
    )
    return part, bundle, reps
