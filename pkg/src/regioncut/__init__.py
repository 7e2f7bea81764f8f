"""Contiguous-region detection and region-wise regression for areal data."""

from .errors import (
    ConstantInputError,
    DegenerateLeverageError,
    DegeneratePartitionError,
    DegenerateSimilarityError,
    NumericalError,
    ParseError,
    RegionCutError,
    SingularDesignError,
    ValidationError,
)
from .glm import (
    GAUSSIAN,
    POISSON,
    Dataset,
    DeviationVector,
    GlmFit,
    dfbeta,
    exact_loo_beta,
    fit_glm,
)
from .graph import (
    AdjacencyMatrix,
    SimilarityGraph,
    build_adjacency,
    build_similarity,
    grid_adjacency,
    ncut,
    uniform_similarity,
)
from .segmentation import (
    Embedding,
    Partition,
    discretize,
    enforce_contiguity,
    segment,
    spectral_embed,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyMatrix",
    "ConstantInputError",
    "Dataset",
    "DegenerateLeverageError",
    "DegeneratePartitionError",
    "DegenerateSimilarityError",
    "DeviationVector",
    "Embedding",
    "GAUSSIAN",
    "GlmFit",
    "NumericalError",
    "POISSON",
    "ParseError",
    "Partition",
    "RegionCutError",
    "SimilarityGraph",
    "SingularDesignError",
    "ValidationError",
    "build_adjacency",
    "build_similarity",
    "dfbeta",
    "discretize",
    "enforce_contiguity",
    "exact_loo_beta",
    "fit_glm",
    "grid_adjacency",
    "ncut",
    "segment",
    "spectral_embed",
    "uniform_similarity",
]
