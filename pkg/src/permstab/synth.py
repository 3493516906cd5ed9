"""Ground-truth generator for latent reasoning modes plus the oracles used
to verify the clustering pipeline: adjusted Rand index against generator
labels and exact brute-force clustering for tiny inputs.

Modes are orthonormal directions, so the separation floor is controlled by
the noise level alone and recovery criteria are well-posed. Synthetic
answers are the mode label strings, which lets the preference builder and
the metrics run end to end with exact expected outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleSpec, LengthMismatch, TooLargeForBruteForce
from .modes import DEFAULT_TEMPERATURE, HiddenStateBundle, lexicographic_permutations
from .spectral import Assignment

BRUTE_FORCE_MAX_POINTS = 12


@dataclass(frozen=True)
class SynthSpec:
    true_modes: int
    dim: int
    n_states: int
    noise_std: float
    size_weights: tuple[float, ...] | None = None
    seed: int = 0

    def validate(self):
        if not 2 <= self.true_modes <= self.n_states:
            raise InfeasibleSpec(f"need 2 <= K* <= N, got K*={self.true_modes}, N={self.n_states}")
        if self.dim < self.true_modes:
            raise InfeasibleSpec(f"need d >= K*, got d={self.dim}, K*={self.true_modes}")
        if not self.noise_std > 0.0:
            raise InfeasibleSpec(f"noise_std must be > 0, got {self.noise_std}")
        if self.size_weights is not None:
            w = np.asarray(self.size_weights, dtype=np.float64)
            if w.shape != (self.true_modes,) or np.any(w < 0.0) or w.sum() <= 0.0:
                raise InfeasibleSpec(f"bad size_weights {self.size_weights}")
        return self


@dataclass
class LabeledBundle:
    bundle: HiddenStateBundle
    true_labels: np.ndarray


def mode_answer(label):
    return f"mode-{int(label)}"


def _orthonormal_rows(rng, k, d):
    basis = rng.normal(size=(k, d))
    for i in range(k):
        for j in range(i):
            basis[i] -= (basis[i] @ basis[j]) * basis[j]
        norm = np.linalg.norm(basis[i])
        if norm < 1e-12:
            raise InfeasibleSpec("Gram-Schmidt collapsed; dimension too small")
        basis[i] /= norm
    return basis


def smallest_factorial_base(n_states):
    """Smallest n with n! >= n_states."""
    n = 1
    while math.factorial(n) < n_states:
        n += 1
    return n


def generate(spec):
    """Labeled synthetic bundle: orthonormal mode directions plus isotropic
    Gaussian noise, labels drawn from size_weights (uniform by default),
    permutation table filled lexicographically. Deterministic per seed.
    Raises InfeasibleSpec when any true mode ends up with zero states.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    modes = _orthonormal_rows(rng, spec.true_modes, spec.dim)
    if spec.size_weights is None:
        weights = np.full(spec.true_modes, 1.0 / spec.true_modes)
    else:
        weights = np.asarray(spec.size_weights, dtype=np.float64)
        weights = weights / weights.sum()
    labels = rng.choice(spec.true_modes, size=spec.n_states, p=weights)
    if np.bincount(labels, minlength=spec.true_modes).min() == 0:
        raise InfeasibleSpec("a true mode received zero states; adjust weights or N")
    noise = rng.normal(0.0, spec.noise_std, size=(spec.n_states, spec.dim))
    states = (modes[labels] + noise).astype(np.float32)
    n_docs = smallest_factorial_base(spec.n_states)
    perms = lexicographic_permutations(n_docs, spec.n_states)
    bundle = HiddenStateBundle(
        query_id=f"synth-k{spec.true_modes}-n{spec.n_states}-seed{spec.seed}",
        query=f"synthetic mode-recovery query (seed {spec.seed})",
        documents=[f"synthetic passage {j}" for j in range(n_docs)],
        gold_answers=[mode_answer(0)],
        permutations=perms,
        states=states,
        answers=[mode_answer(lab) for lab in labels],
        model_id="synthetic",
        layer_index="synthetic",
        temperature=DEFAULT_TEMPERATURE,
    ).validate()
    return LabeledBundle(bundle=bundle, true_labels=labels.astype(np.int64))


def _comb2(x):
    return x * (x - 1) // 2


def adjusted_rand_index(a, b):
    """Chance-corrected agreement between two labelings, in [-0.5, 1]."""
    la = np.asarray(a).ravel()
    lb = np.asarray(b).ravel()
    if la.shape != lb.shape:
        raise LengthMismatch(f"label lengths differ: {la.shape[0]} vs {lb.shape[0]}")
    n = la.shape[0]
    if n == 0:
        raise ValueError("labelings must be non-empty")
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    rows = int(ia.max()) + 1
    cols = int(ib.max()) + 1
    table = np.zeros((rows, cols), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    sum_cells = int(sum(_comb2(int(v)) for v in table.ravel()))
    sum_rows = int(sum(_comb2(int(v)) for v in table.sum(axis=1)))
    sum_cols = int(sum(_comb2(int(v)) for v in table.sum(axis=0)))
    total = _comb2(n)
    expected = sum_rows * sum_cols / total if total else 0.0
    maximum = (sum_rows + sum_cols) / 2.0
    denom = maximum - expected
    if denom == 0.0:
        # both labelings trivial in the same way: perfect agreement
        return 1.0
    return (sum_cells - expected) / denom


def _restricted_growth_strings(n, k):
    """All label vectors of set partitions of n items into exactly k blocks,
    in lexicographic order (each vector is the canonical form of its
    partition)."""
    labels = [0] * n

    def rec(i, used):
        if n - i < k - used:  # not enough items left to open the remaining blocks
            return
        if i == n:
            if used == k:
                yield tuple(labels)
            return
        for v in range(min(used + 1, k)):
            labels[i] = v
            yield from rec(i + 1, max(used, v + 1))

    yield from rec(1, 1)


def brute_force_best_partition(embedding, k):
    """Exact minimum within-cluster sum of squares by enumerating every set
    partition into exactly k non-empty clusters. Capped at 12 points; ties
    resolve to the lexicographically smallest label vector.
    """
    x = np.asarray(embedding, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("embedding must be 2-D")
    n = x.shape[0]
    if n > BRUTE_FORCE_MAX_POINTS:
        raise TooLargeForBruteForce(f"N={n} exceeds cap {BRUTE_FORCE_MAX_POINTS}")
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    sq_norms = np.einsum("nd,nd->n", x, x)
    total_sq = float(sq_norms.sum())
    points = [x[i] for i in range(n)]
    best_obj = np.inf
    best = None
    dim = x.shape[1]
    for labels in _restricted_growth_strings(n, k):
        sums = np.zeros((k, dim))
        counts = [0] * k
        for i, lab in enumerate(labels):
            sums[lab] += points[i]
            counts[lab] += 1
        # WCSS = sum ||x||^2 - sum_j ||cluster sum||^2 / |cluster|
        reduction = sum(float(sums[j] @ sums[j]) / counts[j] for j in range(k))
        obj = total_sq - reduction
        if obj < best_obj:
            best_obj = obj
            best = labels
    return Assignment(labels=np.array(best, dtype=np.int64), k=int(k))


def wcss_objective(points, labels, k):
    """Within-cluster sum of squares of a labeling, for oracle comparisons."""
    x = np.asarray(points, dtype=np.float64)
    lab = np.asarray(labels)
    obj = 0.0
    for j in range(k):
        members = x[lab == j]
        if members.size:
            diff = members - members.mean(axis=0)
            obj += float(np.einsum("md,md->", diff, diff))
    return obj
