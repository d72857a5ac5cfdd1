"""
Graph generation, reachability closure and the equivalence checks used for scoring.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List

import networkx as nx
import numpy as np

try:
    from .models import GraphKind, InvalidComparisonError, InvalidConfigurationError
    from .utils import RandomStream
except ImportError:
    from models import GraphKind, InvalidComparisonError, InvalidConfigurationError
    from utils import RandomStream

logger = logging.getLogger(__name__)

# n x n matrix of 0/1 (uint8); entry (i, j) marks a directed path of length >= 1
ReachabilityMatrix = np.ndarray

DEFAULT_EDGE_DENSITY = 0.5


@dataclass(frozen=True, eq=False)
class AdjacencyMatrix:
    """Binary n x n adjacency matrix of a given kind.

    Only the structural shape (square, binary) is enforced on construction;
    kind invariants are reported by :func:`validate`, so agents' hypotheses
    can be represented and diagnosed even when they are wrong.
    """
    entries: np.ndarray
    kind: GraphKind

    def __post_init__(self):
        entries = np.asarray(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidConfigurationError(f"adjacency matrix must be square, got shape {entries.shape}")
        if entries.size and not np.isin(entries, (0, 1)).all():
            raise InvalidConfigurationError("adjacency matrix entries must be 0 or 1")
        entries = entries.astype(np.uint8)
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)
        object.__setattr__(self, 'kind', GraphKind(self.kind))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AdjacencyMatrix):
            return NotImplemented
        return self.kind is other.kind and np.array_equal(self.entries, other.entries)

    __hash__ = None

    def __repr__(self):
        return f"AdjacencyMatrix(kind={self.kind.value}, edges={self.edges()})"

    def edges(self) -> List[List[int]]:
        rows, cols = np.nonzero(self.entries)
        pairs = [[int(i), int(j)] for i, j in zip(rows, cols)]
        if self.kind is GraphKind.UNDIRECTED_SYMMETRIC:
            pairs = [p for p in pairs if p[0] < p[1]]
        return pairs

    def to_list(self) -> List[List[int]]:
        return self.entries.tolist()

    def to_dict(self) -> Dict:
        """Golden-file form: {"n", "kind", "edges"} with zero-based indices"""
        return {'n': self.n, 'kind': self.kind.value, 'edges': self.edges()}

    @classmethod
    def from_dict(cls, data: Dict) -> "AdjacencyMatrix":
        kind = GraphKind(data['kind'])
        entries = np.zeros((data['n'], data['n']), dtype=np.uint8)
        for i, j in data['edges']:
            entries[i, j] = 1
            if kind is GraphKind.UNDIRECTED_SYMMETRIC:
                entries[j, i] = 1
        return cls(entries, kind)

    @classmethod
    def zeros(cls, n: int, kind: GraphKind) -> "AdjacencyMatrix":
        return cls(np.zeros((n, n), dtype=np.uint8), kind)


def generate_graph(n: int, kind: GraphKind, edge_density: float = DEFAULT_EDGE_DENSITY,
                   rng: RandomStream = None) -> AdjacencyMatrix:
    """Sample a hidden ground-truth graph.

    DAGs: a uniformly random node permutation fixes the topological order and
    every forward pair becomes an edge independently with probability
    ``edge_density``. Symmetric graphs: every unordered pair independently.
    """
    if n < 1:
        raise InvalidConfigurationError(f"node count must be positive, got {n}")
    if not 0.0 <= edge_density <= 1.0:
        raise InvalidConfigurationError(f"edge density must lie in [0, 1], got {edge_density}")
    kind = GraphKind(kind)
    rng = rng if rng is not None else np.random.default_rng()

    if kind is GraphKind.DIRECTED_ACYCLIC:
        order = rng.permutation(n)
        forward = np.triu(rng.random((n, n)) < edge_density, k=1)
        entries = np.zeros((n, n), dtype=np.uint8)
        entries[np.ix_(order, order)] = forward
    else:
        upper = np.triu(rng.random((n, n)) < edge_density, k=1)
        entries = (upper | upper.T).astype(np.uint8)

    return AdjacencyMatrix(entries, kind)


def reachability_closure(k: AdjacencyMatrix) -> ReachabilityMatrix:
    """Boolean transitive closure: (i, j) = 1 iff some positive power of K is nonzero there.

    Same sign pattern as summing integer matrix powers, computed with a
    Warshall sweep so large n cannot overflow.
    """
    reach = k.entries.astype(bool)
    for via in range(k.n):
        reach |= np.outer(reach[:, via], reach[via, :])
    return reach.astype(np.uint8)


def graphs_equivalent(hypothesis: AdjacencyMatrix, truth: AdjacencyMatrix) -> bool:
    """Closure equality for DAGs, exact equality for symmetric graphs"""
    if hypothesis.n != truth.n:
        raise InvalidComparisonError(f"dimension mismatch: {hypothesis.n} vs {truth.n}")
    if hypothesis.kind is not truth.kind:
        raise InvalidComparisonError(f"kind mismatch: {hypothesis.kind.value} vs {truth.kind.value}")
    if truth.kind is GraphKind.DIRECTED_ACYCLIC:
        return np.array_equal(reachability_closure(hypothesis), reachability_closure(truth))
    return np.array_equal(hypothesis.entries, truth.entries)


def validate(matrix: AdjacencyMatrix) -> List[str]:
    """List every violated invariant; empty when the matrix is valid for its kind."""
    violations = []
    entries = matrix.entries

    for i in np.flatnonzero(np.diag(entries)):
        violations.append(f"self-loop at {int(i)}")

    if matrix.kind is GraphKind.DIRECTED_ACYCLIC:
        off_diagonal = entries.copy()
        np.fill_diagonal(off_diagonal, 0)
        graph = nx.from_numpy_array(off_diagonal, create_using=nx.DiGraph)
        if not nx.is_directed_acyclic_graph(graph):
            cycle = nx.find_cycle(graph)
            path = " -> ".join(str(u) for u, _ in cycle) + f" -> {cycle[0][0]}"
            violations.append(f"cycle {path}")
    else:
        rows, cols = np.nonzero(entries != entries.T)
        for i, j in zip(rows, cols):
            if i < j:
                violations.append(f"asymmetric pair ({int(i)}, {int(j)})")

    return violations
