"""Toolkit for autoregressive graph generation with learned node orderings.

Trains adjacency-row and node-by-node graph models jointly with a variational
posterior over generation orderings, counts ordering multiplicities exactly via
a graph-automorphism engine (or bounds them via color refinement), and
evaluates marginal likelihoods by importance sampling.
"""

from .errors import (
    GenerationError,
    GraphOrderError,
    InputError,
    NumericError,
    ParseError,
    ResourceError,
)
from .graphs import (
    Graph,
    GraphSequence,
    LowerTriangularEncoding,
    decode_adjacency,
    degree_sequence,
    encode_adjacency,
    induced_subgraph,
    isomorphic,
    ordering_to_sequence,
)

__all__ = [
    "GenerationError",
    "Graph",
    "GraphOrderError",
    "GraphSequence",
    "InputError",
    "LowerTriangularEncoding",
    "NumericError",
    "ParseError",
    "ResourceError",
    "decode_adjacency",
    "degree_sequence",
    "encode_adjacency",
    "induced_subgraph",
    "isomorphic",
    "ordering_to_sequence",
]
