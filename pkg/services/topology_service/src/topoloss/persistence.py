"""
Persistent homology over Z/2.

compute_persistence reduces the boundary matrix of a filtration, ordered by
(value, dimension, simplex id). compute_persistence_dim0 is the union-find
fast path for dimension 0 and produces the same pairs, birth and death
simplices included.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np

from .complex_core import Filtration, check_monotone
from .errors import InvalidInputError

logger = logging.getLogger(__name__)

MAX_HOM_DIM = 1


@dataclass(frozen=True)
class PersistencePoint:
    dim: int
    birth: float
    death: Optional[float]
    birth_simplex: int
    death_simplex: Optional[int]

    @property
    def is_essential(self) -> bool:
        return self.death is None

    @property
    def is_zero_persistence(self) -> bool:
        return self.death is not None and self.death == self.birth

    @property
    def persistence(self) -> float:
        if self.death is None:
            return float("inf")
        return self.death - self.birth

    def sort_key(self) -> Tuple[int, float, float, int]:
        death = float("inf") if self.death is None else self.death
        return (self.dim, self.birth, death, self.birth_simplex)


@dataclass(frozen=True)
class PersistenceDiagram:
    points: Tuple[PersistencePoint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[PersistencePoint]:
        return iter(self.points)

    def __getitem__(self, index: int) -> PersistencePoint:
        return self.points[index]

    def dims(self) -> Set[int]:
        return {point.dim for point in self.points}

    def restrict(self, dim: int) -> "PersistenceDiagram":
        return PersistenceDiagram(tuple(p for p in self.points if p.dim == dim))

    def finite_indices(self, dim: Optional[int] = None, include_zero: bool = False) -> np.ndarray:
        """Indices of finite points, zero-persistence ones only if asked."""
        return np.array(
            [
                i
                for i, p in enumerate(self.points)
                if not p.is_essential
                and (include_zero or not p.is_zero_persistence)
                and (dim is None or p.dim == dim)
            ],
            dtype=np.int64,
        )

    def essential(self, dim: Optional[int] = None) -> Tuple[PersistencePoint, ...]:
        return tuple(p for p in self.points if p.is_essential and (dim is None or p.dim == dim))

    def coordinates(self, indices: Sequence[int]) -> np.ndarray:
        """(k, 2) array of (birth, death) for finite points."""
        if len(indices) == 0:
            return np.zeros((0, 2))
        return np.array([[self.points[i].birth, self.points[i].death] for i in indices], dtype=float)

    def sorted(self) -> "PersistenceDiagram":
        return PersistenceDiagram(tuple(sorted(self.points, key=PersistencePoint.sort_key)))

    def multiset(self, include_zero: bool = True) -> List[Tuple[int, float, float]]:
        """Sorted (dim, birth, death) triples, essential deaths as inf."""
        return sorted(
            (p.dim, p.birth, float("inf") if p.death is None else p.death)
            for p in self.points
            if include_zero or not p.is_zero_persistence
        )


class UnionFind:
    """Disjoint sets whose root is always the oldest element of the set."""

    def __init__(self, ages: Sequence[Tuple[float, int]]):
        self.ages = list(ages)
        self.parent = list(range(len(self.ages)))

    def find(self, element: int) -> int:
        root = element
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[element] != root:
            self.parent[element], element = root, self.parent[element]
        return root

    def union(self, first: int, second: int) -> Optional[Tuple[int, int]]:
        """Merge two sets. Returns (surviving root, absorbed root) or None."""
        first, second = self.find(first), self.find(second)
        if first == second:
            return None
        if self.ages[second] < self.ages[first]:
            first, second = second, first
        self.parent[second] = first
        return first, second


def _check_hom_dim(max_hom_dim: int, filtration: Filtration) -> None:
    if not 0 <= max_hom_dim <= MAX_HOM_DIM:
        raise InvalidInputError(f"max_hom_dim must be 0 or 1, got {max_hom_dim}")
    if max_hom_dim > filtration.complex.max_dim:
        logger.debug(
            f"max_hom_dim {max_hom_dim} exceeds complex dimension {filtration.complex.max_dim}; "
            "higher classes are reported as essential"
        )


def compute_persistence(filtration: Filtration, max_hom_dim: int = 1) -> PersistenceDiagram:
    _check_hom_dim(max_hom_dim, filtration)
    check_monotone(filtration)
    complex_ = filtration.complex
    values = filtration.values
    dims = complex_.dimensions
    n = complex_.n_simplices
    ids = np.arange(n)

    order = np.lexsort((ids, dims, values))
    position = np.empty(n, dtype=np.int64)
    position[order] = np.arange(n)

    boundaries: Dict[int, np.ndarray] = {}
    for p in range(1, complex_.max_dim + 1):
        for simplex_id, faces in zip(complex_.ids_of_dim(p), complex_.face_ids(p)):
            boundaries[int(simplex_id)] = position[faces]

    pivot_owner: Dict[int, int] = {}
    reduced: Dict[int, Set[int]] = {}
    pairs: List[Tuple[int, int]] = []
    for pos in range(n):
        simplex_id = int(order[pos])
        if dims[simplex_id] == 0 or dims[simplex_id] > max_hom_dim + 1:
            continue
        column = set(int(f) for f in boundaries[simplex_id])
        while column:
            owner = pivot_owner.get(max(column))
            if owner is None:
                break
            column ^= reduced[owner]
        if column:
            low = max(column)
            pivot_owner[low] = pos
            reduced[pos] = column
            pairs.append((low, pos))

    points: List[PersistencePoint] = []
    for low, pos in pairs:
        birth_id, death_id = int(order[low]), int(order[pos])
        dim = int(dims[birth_id])
        if dim > max_hom_dim:
            continue
        points.append(
            PersistencePoint(dim, float(values[birth_id]), float(values[death_id]), birth_id, death_id)
        )
    for pos in range(n):
        simplex_id = int(order[pos])
        dim = int(dims[simplex_id])
        if dim > max_hom_dim or pos in reduced or pos in pivot_owner:
            continue
        points.append(PersistencePoint(dim, float(values[simplex_id]), None, simplex_id, None))

    logger.debug(f"Reduced {n} columns into {len(pairs)} pairs, {len(points)} points up to dim {max_hom_dim}")
    return PersistenceDiagram(tuple(points))


def compute_persistence_dim0(filtration: Filtration) -> PersistenceDiagram:
    """Dimension-0 persistence by union-find with the elder rule."""
    check_monotone(filtration)
    complex_ = filtration.complex
    values = filtration.values
    n_vertices = complex_.n_vertices
    vertex_values = values[:n_vertices]
    components = UnionFind([(float(vertex_values[v]), v) for v in range(n_vertices)])

    points: List[PersistencePoint] = []
    edge_ids = complex_.ids_of_dim(1)
    if edge_ids.size:
        edges = complex_.simplices[1]
        edge_values = values[edge_ids]
        for local in np.lexsort((edge_ids, edge_values)):
            merged = components.union(int(edges[local, 0]), int(edges[local, 1]))
            if merged is None:
                continue
            younger = merged[1]
            points.append(
                PersistencePoint(
                    0,
                    float(vertex_values[younger]),
                    float(edge_values[local]),
                    younger,
                    int(edge_ids[local]),
                )
            )
    for vertex in range(n_vertices):
        if components.find(vertex) == vertex:
            points.append(PersistencePoint(0, float(vertex_values[vertex]), None, vertex, None))
    return PersistenceDiagram(tuple(points))
