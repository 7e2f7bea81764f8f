"""Spectral embedding and contiguous K-region partitioning.

The similarity graph is embedded through the top eigenvectors of the
degree-normalized affinity D^{-1/2} E D^{-1/2}; the continuous embedding
is rounded to region labels by alternating between row-wise assignment
and an orthogonal rotation recovered from an SVD, rather than by k-means,
so restarts agree except for genuinely ambiguous instances. Fragmented
regions are repaired by merging each fragment into the neighbouring
region it is most similar to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError, ValidationError
from .graph import AdjacencyMatrix, SimilarityGraph, ncut

DISCRETIZE_TOL = 1e-10
DISCRETIZE_MAX_OUTER = 100
DEFAULT_RESTARTS = 10


@dataclass(frozen=True)
class Embedding:
    """Row-normalized spectral coordinates of the working graph."""

    X: np.ndarray              # (S, K), unit-norm rows
    eigenvalues: np.ndarray    # descending, within [-1, 1]


@dataclass(frozen=True)
class Partition:
    """Region labels over the canonical unit order."""

    labels: np.ndarray
    K: int
    contiguous: bool = False
    converged: bool = True

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        if self.K < 1:
            raise ValidationError("partition needs at least one region")
        used = np.unique(labels)
        if used[0] < 0 or used[-1] >= self.K or len(used) != self.K:
            raise ValidationError(
                f"labels must use every region index in 0..{self.K - 1}")

    def region_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)


def spectral_embed(graph: SimilarityGraph, k: int) -> Embedding:
    """Top-k eigenpairs of D^{-1/2} E D^{-1/2}, row-normalized.

    Eigenvalues come back in descending order; the leading one equals 1
    whenever the graph has no isolated nodes. Each eigenvector's sign is
    fixed by making its largest-magnitude entry positive, and the
    coordinate rows are scaled back by D^{-1/2} before normalizing to
    unit length.
    """
    n = graph.n_units
    if not 2 <= k <= n:
        raise ValidationError(f"k={k} outside valid range 2..{n}")
    if np.any(graph.degree <= 0):
        raise ValidationError("working graph has isolated nodes; assign "
                              "them singleton regions before embedding")

    inv_sqrt_d = 1.0 / np.sqrt(graph.degree)
    dense = graph.matrix.toarray()
    dense *= inv_sqrt_d[:, None]
    dense *= inv_sqrt_d[None, :]
    try:
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[n - k, n - 1])
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc

    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], -1.0, 1.0)
    vecs = vecs[:, order]
    flip = vecs[np.abs(vecs).argmax(axis=0), np.arange(k)] < 0
    vecs[:, flip] *= -1.0

    z = vecs * inv_sqrt_d[:, None]
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms <= 0):
        raise NumericalError("embedding produced a zero coordinate row")
    return Embedding(X=z / norms[:, None], eigenvalues=vals)


def _init_rotation(x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Farthest-first anchor rows; the first anchor is drawn at random."""
    n, k = x.shape
    r = np.empty((k, k))
    r[:, 0] = x[rng.integers(n)]
    score = np.zeros(n)
    for col in range(1, k):
        score += np.abs(x @ r[:, col - 1])
        r[:, col] = x[int(np.argmin(score))]
    return r


def _discretize_core(x, rng, tol, max_outer):
    """Alternate row assignment and rotation until the SVD trace settles.

    Returns (labels, rho_trace, converged, reseeded). When the loop hits
    ``max_outer`` the labels of the best objective value seen are
    returned instead of the last iterate.
    """
    n, k = x.shape
    rotation = _init_rotation(x, rng)
    rho_prev = 0.0
    trace = []
    reseeded = False
    converged = False
    best_rho = -np.inf
    best_labels = None

    for _ in range(max_outer):
        xr = x @ rotation
        labels = np.argmax(xr, axis=1)

        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            reseeded = True
            row_fit = xr[np.arange(n), labels]
            order = np.argsort(row_fit, kind="stable")
            cursor = 0
            for col in empty:
                # Move the worst-represented row whose cluster survives it.
                while cursor < len(order):
                    cand = order[cursor]
                    cursor += 1
                    if counts[labels[cand]] > 1:
                        counts[labels[cand]] -= 1
                        counts[col] += 1
                        labels[cand] = col
                        break

        indicator = np.zeros((n, k))
        indicator[np.arange(n), labels] = 1.0
        u, sing, vt = scipy.linalg.svd(indicator.T @ x)
        rho = float(sing.sum())
        trace.append(rho)
        if rho > best_rho:
            best_rho = rho
            best_labels = labels
        if abs(rho - rho_prev) < tol:
            converged = True
            break
        rho_prev = rho
        rotation = (u @ vt).T       # orthogonal update V U'

    final = labels if converged else best_labels
    return final, np.array(trace), converged, reseeded


def discretize(embedding: Embedding, seed,
               tol: float = DISCRETIZE_TOL,
               max_outer: int = DISCRETIZE_MAX_OUTER) -> Partition:
    """Round a spectral embedding to hard region labels.

    ``seed`` may be an int or a numpy Generator. The result is not yet
    contiguity-checked; pass it through :func:`enforce_contiguity`.
    """
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    labels, _, converged, _ = _discretize_core(
        embedding.X, rng, tol, max_outer)
    labels = np.unique(labels, return_inverse=True)[1]
    return Partition(labels=labels, K=int(labels.max()) + 1,
                     contiguous=False, converged=converged)


def _label_components(labels, w: AdjacencyMatrix):
    """Connected components of each region's induced subgraph.

    Yields (label, [component unit arrays]) with components ordered
    largest first, ties broken by smallest member index.
    """
    n = w.n_units
    seen = np.zeros(n, dtype=bool)
    comps_by_label = {}
    for start in range(n):
        if seen[start]:
            continue
        lab = labels[start]
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in w.neighbors[i]:
                if not seen[j] and labels[j] == lab:
                    seen[j] = True
                    stack.append(j)
        comps_by_label.setdefault(lab, []).append(np.array(sorted(comp)))
    for lab in sorted(comps_by_label):
        comps = sorted(comps_by_label[lab], key=lambda c: (-len(c), c[0]))
        yield lab, comps


def enforce_contiguity(partition: Partition, w: AdjacencyMatrix,
                       graph: SimilarityGraph,
                       merge_fragments: bool = True) -> Partition:
    """Repair regions whose induced subgraph is disconnected.

    The largest component of each label keeps it. With
    ``merge_fragments`` (the default) every smaller fragment is absorbed
    into the adjacent region with the largest total connecting
    similarity, ties broken by edge count and then lowest region index;
    fragments with no external neighbours become their own regions.
    Without merging, every fragment is promoted to a fresh region.
    Labels are renumbered to 0..K'-1 preserving their sorted order.
    """
    labels = np.asarray(partition.labels, dtype=int).copy()
    if len(labels) != w.n_units:
        raise ValidationError("partition labels do not match adjacency "
                              "size")
    sim = graph.matrix

    next_label = labels.max() + 1
    while True:
        fragments = []
        for lab, comps in _label_components(labels, w):
            fragments.extend((lab, comp) for comp in comps[1:])
        if not fragments:
            break
        lab, frag = min(fragments, key=lambda t: (t[0], t[1][0]))

        if not merge_fragments:
            labels[frag] = next_label
            next_label += 1
            continue

        in_frag = np.zeros(len(labels), dtype=bool)
        in_frag[frag] = True
        weight, count = {}, {}
        for i in frag:
            row = sim[i]
            for j in w.neighbors[i]:
                if in_frag[j]:
                    continue
                tgt = labels[j]
                weight[tgt] = weight.get(tgt, 0.0) + float(row[0, j])
                count[tgt] = count.get(tgt, 0) + 1
        if not weight:
            labels[frag] = next_label     # island component, keep separate
            next_label += 1
            continue
        best = min(weight, key=lambda t: (-weight[t], -count[t], t))
        labels[frag] = best

    renumbered = np.unique(labels, return_inverse=True)[1]
    return Partition(labels=renumbered, K=int(renumbered.max()) + 1,
                     contiguous=True, converged=partition.converged)


def _subgraph_similarity(graph: SimilarityGraph,
                         keep: np.ndarray) -> SimilarityGraph:
    mat = graph.matrix[keep][:, keep].tocsr()
    return SimilarityGraph(matrix=mat,
                           degree=np.asarray(mat.sum(axis=1)).ravel(),
                           source_deviation=graph.source_deviation)


def segment(graph: SimilarityGraph, w: AdjacencyMatrix, k: int, seed,
            restarts: int = DEFAULT_RESTARTS) -> Partition:
    """Detect K contiguous regions minimizing the normalized cut.

    Embeds once, discretizes ``restarts`` times with independent RNG
    streams derived from ``(seed, restart index)``, repairs contiguity on
    every candidate, and returns the candidate with the smallest
    normalized cut (earliest restart wins ties). Isolated units never
    enter the embedding; they come back as singleton regions.

    Deterministic for fixed ``(graph, w, k, seed, restarts)``.
    """
    if restarts < 1:
        raise ValidationError("restarts must be >= 1")
    n = w.n_units
    if not 1 <= k <= n:
        raise ValidationError(f"k={k} outside valid range 1..{n}")

    working = np.setdiff1d(np.arange(n), w.isolated)
    k_eff = min(k, len(working)) if len(working) else 0

    def lift(sub_labels):
        full = np.empty(n, dtype=int)
        full[working] = sub_labels
        full[w.isolated] = k_eff + np.arange(len(w.isolated))
        return full

    if k_eff <= 1:
        raw = Partition(labels=lift(np.zeros(len(working), dtype=int)),
                        K=k_eff + len(w.isolated) if len(working) else n,
                        contiguous=False) if len(working) else \
            Partition(labels=np.arange(n), K=n, contiguous=False)
        return enforce_contiguity(raw, w, graph)

    sub_sim = _subgraph_similarity(graph, working)
    sub_w = w.subgraph(working)
    embedding = spectral_embed(sub_sim, k_eff)

    best = None
    best_score = np.inf
    for r in range(restarts):
        rng = np.random.default_rng([int(seed), r])
        sub_labels, _, converged, _ = _discretize_core(
            embedding.X, rng, DISCRETIZE_TOL, DISCRETIZE_MAX_OUTER)
        raw = Partition(
            labels=lift(np.unique(sub_labels, return_inverse=True)[1]),
            K=int(np.unique(sub_labels).size) + len(w.isolated),
            contiguous=False, converged=converged)
        candidate = enforce_contiguity(raw, w, graph)
        score_labels = np.unique(candidate.labels[working],
                                 return_inverse=True)[1]
        score = ncut(sub_sim, Partition(
            labels=score_labels, K=int(score_labels.max()) + 1))
        if score < best_score:
            best_score = score
            best = candidate
    return best
