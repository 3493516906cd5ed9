"""Dense symmetric linear algebra and spectral-clustering primitives.

Pipeline order: ``cosine_affinity`` -> ``normalized_laplacian`` ->
``symmetric_eigen`` -> ``select_k_eigengap`` -> ``spectral_embed`` ->
``kmeans``. Everything here is a pure function of its arguments plus an
explicit seed, and all numerics run through single-threaded numpy ufuncs
(no BLAS matmul) so results are identical across platforms and thread
counts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    IsolatedNode,
    KTooLarge,
    NoConvergence,
    NonPositiveSigma,
    NotSymmetric,
    TooFewEigenvalues,
    ZeroNormRow,
)

MAX_EIGEN_SIDE = 5040  # 7!, the largest permutation bundle the pipeline accepts

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-8  # total squared center movement


@dataclass(frozen=True)
class EigenSystem:
    """Full spectrum of a symmetric matrix.

    ``eigenvalues`` are ascending; column ``i`` of ``eigenvectors`` pairs
    with ``eigenvalues[i]`` and has unit 2-norm.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class Assignment:
    """Cluster labels, one per row, each in ``[0, k)`` with no empty cluster."""

    labels: np.ndarray
    k: int


def _as_2d(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def unit_rows(h):
    """Rows scaled to unit 2-norm; raises ZeroNormRow below 1e-12."""
    x = _as_2d(h, "states")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    bad = np.flatnonzero(norms <= 1e-12)
    if bad.size:
        raise ZeroNormRow(f"row {bad[0]} has 2-norm {norms[bad[0]]:.3e} <= 1e-12")
    return x / norms[:, None]


def cosine_gram(u):
    """Exactly symmetric pairwise-cosine matrix for unit rows, clipped to [-1, 1]."""
    g = np.einsum("id,jd->ij", u, u)
    g = (g + g.T) / 2.0
    np.clip(g, -1.0, 1.0, out=g)
    return g


def affinity_from_gram(gram, sigma):
    """exp(-(1 - cos)/sigma) off the diagonal, 0 on it."""
    if not (sigma > 0.0):
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")
    a = np.exp(-(1.0 - gram) / sigma)
    np.fill_diagonal(a, 0.0)
    return a


def cosine_affinity(h, sigma):
    """Affinity matrix A with A_ij = exp(-(1 - cos(h_i, h_j)) / sigma), i != j.

    The diagonal is set to 0 (no self-loops), so off-diagonal entries lie in
    [exp(-2/sigma), 1]. Raises ZeroNormRow if any row of ``h`` has near-zero
    norm and NonPositiveSigma if ``sigma <= 0``.
    """
    if not (sigma > 0.0):
        raise NonPositiveSigma(f"sigma must be > 0, got {sigma}")
    return affinity_from_gram(cosine_gram(unit_rows(h)), sigma)


def normalized_laplacian(a):
    """L = I - D^{-1/2} A D^{-1/2} for a symmetric non-negative affinity A.

    Requires a zero diagonal and strictly positive row sums; a zero row sum
    raises IsolatedNode. The result is exactly symmetric with unit diagonal,
    and its eigenvalues lie in [0, 2] up to roundoff.
    """
    m = _as_2d(a, "affinity")
    n, c = m.shape
    if n != c:
        raise ValueError("affinity must be square")
    asym = float(np.abs(m - m.T).max()) if n else 0.0
    if asym > 1e-12 * max(1.0, float(np.abs(m).max())):
        raise ValueError("affinity must be symmetric")
    if np.any(m < 0.0):
        raise ValueError("affinity must be non-negative")
    if np.any(np.diag(m) != 0.0):
        raise ValueError("affinity must have a zero diagonal")
    deg = m.sum(axis=1)
    dead = np.flatnonzero(deg <= 0.0)
    if dead.size:
        raise IsolatedNode(f"node {dead[0]} has zero degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = -m * inv_sqrt[:, None] * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    np.fill_diagonal(lap, 1.0)
    return lap


@lru_cache(maxsize=64)
def _rotation_schedule(n):
    """Round-robin pairing: n-1 rounds of disjoint (p, q) pairs covering
    every unordered pair exactly once per sweep. Disjoint rotations commute,
    so each round can be applied as one batched update."""
    m = n if n % 2 == 0 else n + 1
    slots = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = []
        for i in range(m // 2):
            p, q = slots[i], slots[m - 1 - i]
            if p < n and q < n:
                pairs.append((min(p, q), max(p, q)))
        pairs.sort()
        ps = np.array([p for p, _ in pairs], dtype=np.intp)
        qs = np.array([q for _, q in pairs], dtype=np.intp)
        rounds.append((ps, qs))
        slots = [slots[0], slots[-1]] + slots[1:-1]
    return tuple(rounds)


def _offdiag_norm(a):
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.sqrt(np.einsum("ij,ij->", off, off)))


def symmetric_eigen(m, max_sweeps=100):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Rotations follow a round-robin ordering, batched per round; convergence
    is declared when the off-diagonal Frobenius norm drops to 1e-12 times
    the Frobenius norm of the input. Returns eigenvalues ascending with
    matching orthonormal eigenvector columns. Raises NotSymmetric for input
    asymmetric beyond 1e-10 relative tolerance and NoConvergence if the
    sweep budget runs out.
    """
    a = _as_2d(m, "matrix")
    n, c = a.shape
    if n != c:
        raise ValueError("matrix must be square")
    if n > MAX_EIGEN_SIDE:
        raise ValueError(f"matrix side {n} exceeds cap {MAX_EIGEN_SIDE}")
    fro = float(np.sqrt(np.einsum("ij,ij->", a, a)))
    asym = float(np.sqrt(np.einsum("ij,ij->", a - a.T, a - a.T)))
    if asym > 1e-10 * max(1.0, fro):
        raise NotSymmetric(f"||M - M^T||_F = {asym:.3e} exceeds tolerance")
    a = (a + a.T) / 2.0
    vec = np.eye(n)
    if n == 1:
        return EigenSystem(np.diag(a).copy(), vec)

    tol = 1e-12 * fro
    # entries this small can never lift the off-diagonal norm above tol
    skip = tol / n
    schedule = _rotation_schedule(n)
    sweeps = 0
    while _offdiag_norm(a) > tol:
        if sweeps >= max_sweeps:
            raise NoConvergence(f"off-diagonal mass left after {max_sweeps} sweeps")
        for ps, qs in schedule:
            apq = a[ps, qs]
            live = np.abs(apq) > skip
            if not live.any():
                continue
            if live.all():
                p, q = ps, qs
            else:
                p, q, apq = ps[live], qs[live], apq[live]
            app = a[p, p]
            aqq = a[q, q]
            with np.errstate(over="ignore"):
                tau = (aqq - app) / (2.0 * apq)
                den = np.abs(tau) + np.sqrt(1.0 + tau * tau)
                t = np.where(np.isfinite(den), np.where(tau >= 0.0, 1.0, -1.0) / den, 0.0)
            cos = 1.0 / np.sqrt(1.0 + t * t)
            sin = t * cos
            # advanced indexing yields copies, so the reads are safe snapshots
            rp = a[p, :]
            rq = a[q, :]
            a[p, :] = cos[:, None] * rp - sin[:, None] * rq
            a[q, :] = sin[:, None] * rp + cos[:, None] * rq
            cp = a[:, p]
            cq = a[:, q]
            a[:, p] = cp * cos - cq * sin
            a[:, q] = cp * sin + cq * cos
            vp = vec[:, p]
            vq = vec[:, q]
            vec[:, p] = vp * cos - vq * sin
            vec[:, q] = vp * sin + vq * cos
        sweeps += 1

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenSystem(w[order], vec[:, order])


def select_k_eigengap(eigenvalues):
    """Cluster count from the eigengap: K = max(2, argmax_i (l_{i+1} - l_i) + 1).

    Indices are 0-based, so the canonical two-cluster spectrum (two near-zero
    eigenvalues, then a jump) yields K = 2. Gap ties break toward the
    smallest index. Needs at least 3 eigenvalues, ascending.
    """
    w = np.asarray(eigenvalues, dtype=np.float64).ravel()
    if w.size < 3:
        raise TooFewEigenvalues(f"need >= 3 eigenvalues, got {w.size}")
    gaps = np.diff(w)
    if np.any(gaps < 0.0):
        raise ValueError("eigenvalues must be ascending")
    return max(2, int(np.argmax(gaps)) + 1)


def embedding_from_eigen(eig, k):
    """Rows of the k smallest-eigenvalue eigenvectors, scaled to unit norm.

    Rows that are exactly zero before normalization are replaced by e_1 so
    they stay on the unit sphere.
    """
    u = eig.eigenvectors[:, :k].copy()
    norms = np.sqrt(np.einsum("ij,ij->i", u, u))
    zero = norms == 0.0
    if zero.any():
        u[zero] = 0.0
        u[zero, 0] = 1.0
        norms[zero] = 1.0
    return u / norms[:, None]


def spectral_embed(lap, k):
    """N x k spectral embedding of a normalized Laplacian (row-normalized)."""
    a = _as_2d(lap, "laplacian")
    n = a.shape[0]
    if not 2 <= k <= n:
        raise ValueError(f"k must be in [2, {n}], got {k}")
    return embedding_from_eigen(symmetric_eigen(a), k)


def _sq_distances(x, centers):
    # broadcasting keeps this off BLAS, so reductions are deterministic
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeanspp_init(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    d2 = _sq_distances(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        centers[j] = x[idx]
        np.minimum(d2, _sq_distances(x, centers[j : j + 1])[:, 0], out=d2)
    return centers


def _assign(x, centers):
    d2 = _sq_distances(x, centers)
    # argmin takes the first minimum: ties go to the lowest center index
    return np.argmin(d2, axis=1), d2


def _repair_empty(labels, d2, k):
    """Give each empty cluster the point farthest from its current center,
    drawn from clusters that can spare one."""
    n = labels.shape[0]
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        own = d2[np.arange(n), labels]
        candidates = np.where(counts[labels] > 1, own, -np.inf)
        pick = int(np.argmax(candidates))
        counts[labels[pick]] -= 1
        labels[pick] = j
        counts[j] = 1
    return labels


def _cluster_means(x, labels, k):
    means = np.zeros((k, x.shape[1]), dtype=np.float64)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    np.add.at(means, labels, x)
    return means / counts[:, None]


def _wcss(x, labels, k):
    means = _cluster_means(x, labels, k)
    diff = x - means[labels]
    return float(np.einsum("nd,nd->", diff, diff))


def _lloyd(x, centers, k):
    for _ in range(KMEANS_MAX_ITER):
        labels, d2 = _assign(x, centers)
        labels = _repair_empty(labels, d2, k)
        new_centers = _cluster_means(x, labels, k)
        movement = float(np.einsum("kd,kd->", new_centers - centers, new_centers - centers))
        centers = new_centers
        if movement <= KMEANS_TOL:
            break
    labels, d2 = _assign(x, centers)
    labels = _repair_empty(labels, d2, k)
    return labels


def kmeans(points, k, seed):
    """Deterministic k-means: k-means++ seeding, 10 restarts, up to 300 Lloyd
    iterations each, convergence when the total squared center movement is
    <= 1e-8. Returns the restart with the lowest within-cluster sum of
    squares; point-to-center ties break toward the lowest center index and
    empty clusters are repaired by donating the farthest point.
    """
    x = _as_2d(points, "points")
    n = x.shape[0]
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    if k > n:
        raise KTooLarge(f"k={k} exceeds point count {n}")
    rng = np.random.default_rng(int(seed) % 2**64)
    best_labels = None
    best_obj = np.inf
    for _ in range(KMEANS_RESTARTS):
        centers = _kmeanspp_init(x, k, rng)
        labels = _lloyd(x, centers, k)
        obj = _wcss(x, labels, int(k))
        if obj < best_obj:
            best_obj = obj
            best_labels = labels
    return Assignment(labels=best_labels.astype(np.int64), k=int(k))
