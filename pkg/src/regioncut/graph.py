"""Spatial adjacency, deviation similarity, and the normalized-cut score.

The adjacency matrix W is binary spatial neighbourhood; the similarity
matrix E masks a Gaussian kernel of deviation differences onto W's
sparsity pattern, so E = E0 o W entrywise. Both are kept sparse; the
county-scale graphs this targets have a few edges per unit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .errors import (
    DegeneratePartitionError,
    DegenerateSimilarityError,
    ValidationError,
)
from .glm import DeviationVector


@dataclass(frozen=True)
class AdjacencyMatrix:
    """Symmetric binary adjacency stored as a sorted edge list.

    ``edges`` holds each undirected edge once as ``(i, j)`` with ``i < j``
    in lexicographic order; ``neighbors[i]`` is the sorted array of units
    adjacent to ``i``. Units with no neighbours are listed in
    ``isolated`` and are given singleton regions by the segmentation
    step rather than entering the spectral embedding.
    """

    n_units: int
    edges: np.ndarray                      # (m, 2) int array, i < j, sorted
    neighbors: list[np.ndarray] = field(repr=False)
    isolated: np.ndarray = field(default_factory=lambda: np.empty(0, int))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        """W as a symmetric CSR matrix of zeros and ones."""
        if self.n_edges == 0:
            return scipy.sparse.csr_matrix((self.n_units, self.n_units))
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        vals = np.ones(2 * self.n_edges)
        return scipy.sparse.csr_matrix(
            (vals, (rows, cols)), shape=(self.n_units, self.n_units))

    def degree(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors])

    def subgraph(self, keep: np.ndarray) -> "AdjacencyMatrix":
        """Induced adjacency on ``keep`` (indices), reindexed 0..len-1."""
        keep = np.asarray(keep)
        index = -np.ones(self.n_units, dtype=int)
        index[keep] = np.arange(len(keep))
        sub_edges = [(index[i], index[j]) for i, j in self.edges
                     if index[i] >= 0 and index[j] >= 0]
        return _from_edge_array(len(keep), sub_edges, warn_isolated=False)


def _from_edge_array(n, pairs, warn_isolated=True) -> AdjacencyMatrix:
    pairs = sorted({(min(a, b), max(a, b)) for a, b in pairs})
    edges = (np.array(pairs, dtype=int) if pairs
             else np.empty((0, 2), dtype=int))
    neighbors = [[] for _ in range(n)]
    for i, j in pairs:
        neighbors[i].append(j)
        neighbors[j].append(i)
    neighbors = [np.array(sorted(nb), dtype=int) for nb in neighbors]
    isolated = np.array([i for i, nb in enumerate(neighbors)
                         if len(nb) == 0], dtype=int)
    if warn_isolated and isolated.size:
        warnings.warn(f"{isolated.size} unit(s) have no neighbours and "
                      "will be assigned singleton regions", stacklevel=3)
    return AdjacencyMatrix(n_units=n, edges=edges, neighbors=neighbors,
                           isolated=isolated)


def build_adjacency(edges, unit_ids) -> AdjacencyMatrix:
    """Adjacency from an edge list of unit-id pairs.

    Applies the symmetric closure, drops duplicate edges, and rejects
    self-loops. Unknown ids raise a ValidationError listing every
    offender; isolated units produce a warning but a usable result.
    """
    index = {uid: k for k, uid in enumerate(unit_ids)}
    unknown = sorted({uid for pair in edges for uid in pair
                      if uid not in index})
    if unknown:
        raise ValidationError(f"edge list references unknown unit ids: "
                              f"{unknown}")
    pairs = []
    for a, b in edges:
        if a == b:
            raise ValidationError(f"self-loop on unit '{a}' not allowed")
        pairs.append((index[a], index[b]))
    return _from_edge_array(len(unit_ids), pairs)


def grid_adjacency(rows: int, cols: int) -> AdjacencyMatrix:
    """Rook (4-neighbour) adjacency on a rows x cols lattice.

    Cells are indexed row-major. A grid with m rows and n columns has
    2mn - m - n undirected edges.
    """
    if rows < 1 or cols < 1:
        raise ValidationError("grid dimensions must be >= 1")
    pairs = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                pairs.append((k, k + 1))
            if r + 1 < rows:
                pairs.append((k, k + cols))
    return _from_edge_array(rows * cols, pairs,
                            warn_isolated=(rows * cols == 1))


@dataclass(frozen=True)
class SimilarityGraph:
    """Adjacency-masked Gaussian similarity of deviations.

    ``matrix`` is symmetric CSR with entries in (0, 1] exactly on W's
    sparsity pattern; ``degree`` holds the row sums e_{i+}.
    """

    matrix: scipy.sparse.csr_matrix
    degree: np.ndarray
    source_deviation: DeviationVector | None = None

    @property
    def n_units(self) -> int:
        return self.matrix.shape[0]


def build_similarity(d: DeviationVector,
                     w: AdjacencyMatrix) -> SimilarityGraph:
    """Similarity e_ij = exp(-(d_i - d_j)^2 / (2 sigma_d^2)) on W's edges.

    Raises
    ------
    ValidationError
        Length mismatch between deviations and adjacency.
    DegenerateSimilarityError
        All deviations identical (sigma_d = 0); callers fall back to
        :func:`uniform_similarity` on the bare spatial graph.
    """
    dev = np.asarray(d.d, dtype=float)
    if len(dev) != w.n_units:
        raise ValidationError("deviation vector length does not match "
                              "adjacency size")
    if d.sigma_d <= 0:
        raise DegenerateSimilarityError(
            "all deviations identical; similarity kernel is degenerate")

    n = w.n_units
    if w.n_edges == 0:
        mat = scipy.sparse.csr_matrix((n, n))
        return SimilarityGraph(matrix=mat, degree=np.zeros(n),
                               source_deviation=d)
    i, j = w.edges[:, 0], w.edges[:, 1]
    gap = dev[i] - dev[j]
    vals = np.exp(-(gap ** 2) / (2.0 * d.sigma_d ** 2))
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    mat = scipy.sparse.csr_matrix(
        (np.concatenate([vals, vals]), (rows, cols)), shape=(n, n))
    return SimilarityGraph(matrix=mat,
                           degree=np.asarray(mat.sum(axis=1)).ravel(),
                           source_deviation=d)


def uniform_similarity(w: AdjacencyMatrix) -> SimilarityGraph:
    """E = W: the pure spatial graph, used as the degenerate fallback."""
    mat = w.to_sparse()
    return SimilarityGraph(matrix=mat,
                           degree=np.asarray(mat.sum(axis=1)).ravel(),
                           source_deviation=None)


def ncut(graph: SimilarityGraph, partition) -> float:
    """Normalized-cut objective sum_k cut(G_k, rest) / vol(G_k).

    ``cut`` sums similarities on edges leaving region k and ``vol`` sums
    the degrees of its members. Invariant under region relabelling and
    under uniform rescaling of all similarities.

    Raises
    ------
    ValidationError
        Labels do not cover all units of the graph.
    DegeneratePartitionError
        Some region has zero volume.
    """
    labels = np.asarray(partition.labels)
    if len(labels) != graph.n_units:
        raise ValidationError("partition labels do not match graph size")

    total = 0.0
    mat = graph.matrix.tocoo()
    for k in np.unique(labels):
        members = labels == k
        vol = float(graph.degree[members].sum())
        if vol <= 0.0:
            raise DegeneratePartitionError(
                f"region {int(k)} has zero volume")
        crossing = members[mat.row] & ~members[mat.col]
        cut = float(mat.data[crossing].sum())
        total += cut / vol
    return total
