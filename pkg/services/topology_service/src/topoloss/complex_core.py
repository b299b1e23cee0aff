"""
Simplicial complexes and filtrations.

This module contains the objects persistence is computed from:
- PointCloud: validated (n, d) array of finite coordinates
- SimplicialComplex: face-closed complex of dimension at most 2, vertices 0..n-1
- Filtration: a complex plus one value per simplex and the input(s) each value
  depends on (its attribution)

Simplex ids are positions in the flat order: all vertices, then all edges,
then all triangles, each block in the order stored on the complex.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInputError

logger = logging.getLogger(__name__)

MAX_SIMPLEX_DIM = 2


class FiltrationKind(str, Enum):
    RIPS = "rips"
    LOWER_STAR = "lower_star"


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        if points.ndim == 1 and points.size > 0:
            points = points[:, None]
        if points.ndim != 2 or points.shape[0] < 1 or points.shape[1] < 1:
            raise InvalidInputError(
                f"A point cloud needs at least one point of dimension >= 1, got shape {points.shape}"
            )
        if not np.all(np.isfinite(points)):
            raise InvalidInputError("Point cloud coordinates must be finite")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.n_points


def as_point_cloud(data: Union[PointCloud, np.ndarray, Sequence[Sequence[float]]]) -> PointCloud:
    if isinstance(data, PointCloud):
        return data
    return PointCloud(np.asarray(data, dtype=float))


def edge_lengths(points: np.ndarray, first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Euclidean lengths of the edges (first[i], second[i]).

    Every Rips value in the package goes through this function so that a
    simplex value and its re-evaluation through attribution agree bit for bit.
    """
    diff = points[second] - points[first]
    squared = diff[:, 0] * diff[:, 0]
    for column in range(1, diff.shape[1]):
        squared = squared + diff[:, column] * diff[:, column]
    return np.sqrt(squared)


def _pair_keys(pairs: np.ndarray, n_vertices: int) -> np.ndarray:
    return pairs[:, 0].astype(np.int64) * n_vertices + pairs[:, 1].astype(np.int64)


@dataclass(frozen=True, eq=False)
class SimplicialComplex:
    """Face-closed simplicial complex.

    ``simplices[p]`` is an integer array of shape (m_p, p + 1) whose rows are
    strictly increasing vertex tuples. Vertices must be exactly 0..n-1 listed
    in order, so vertex ``v`` has simplex id ``v``.
    """

    simplices: Tuple[np.ndarray, ...]
    _offsets: np.ndarray = field(init=False, repr=False)
    _dimensions: np.ndarray = field(init=False, repr=False)
    _faces: Dict[int, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        blocks: List[np.ndarray] = []
        for p, block in enumerate(self.simplices):
            array = np.asarray(block, dtype=np.int64).reshape(-1, p + 1)
            array.setflags(write=False)
            blocks.append(array)
        if not blocks:
            raise InvalidInputError("A simplicial complex needs at least one vertex")
        if len(blocks) - 1 > MAX_SIMPLEX_DIM:
            raise InvalidInputError(f"Simplices above dimension {MAX_SIMPLEX_DIM} are not supported")
        while len(blocks) > 1 and blocks[-1].shape[0] == 0:
            blocks.pop()
        object.__setattr__(self, "simplices", tuple(blocks))
        self._validate()
        sizes = [block.shape[0] for block in blocks]
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        dimensions = np.concatenate(
            [np.full(size, p, dtype=np.int64) for p, size in enumerate(sizes)]
        )
        object.__setattr__(self, "_offsets", offsets)
        object.__setattr__(self, "_dimensions", dimensions)
        object.__setattr__(self, "_faces", self._compute_faces())

    def _validate(self) -> None:
        vertices = self.simplices[0]
        n_vertices = vertices.shape[0]
        if n_vertices < 1:
            raise InvalidInputError("A simplicial complex needs at least one vertex")
        if not np.array_equal(vertices[:, 0], np.arange(n_vertices)):
            raise InvalidInputError("Vertices must be exactly 0..n-1 in increasing order")
        for p in range(1, len(self.simplices)):
            block = self.simplices[p]
            if block.shape[0] == 0:
                continue
            if np.any(np.diff(block, axis=1) <= 0):
                raise InvalidInputError(f"Vertex indices of {p}-simplices must be strictly increasing")
            if block.min() < 0 or block.max() >= n_vertices:
                raise InvalidInputError(f"A {p}-simplex references a missing vertex")
            if np.unique(block, axis=0).shape[0] != block.shape[0]:
                raise InvalidInputError(f"Duplicate {p}-simplices")

    def _compute_faces(self) -> Dict[int, np.ndarray]:
        faces: Dict[int, np.ndarray] = {}
        if len(self.simplices) > 1:
            edges = self.simplices[1]
            # faces of (i, j) are (j) and (i); vertex ids are vertex indices
            faces[1] = np.column_stack([edges[:, 1], edges[:, 0]])
        if len(self.simplices) > 2:
            edges = self.simplices[1]
            triangles = self.simplices[2]
            n_vertices = self.n_vertices
            keys = _pair_keys(edges, n_vertices)
            order = np.argsort(keys, kind="stable")
            sorted_keys = keys[order]
            if triangles.shape[0] and not len(sorted_keys):
                raise InvalidInputError("Complex is not face-closed: a triangle edge is missing")
            columns = []
            for drop in range(3):
                kept = np.delete(triangles, drop, axis=1)
                wanted = _pair_keys(kept, n_vertices)
                position = np.searchsorted(sorted_keys, wanted)
                position = np.minimum(position, len(sorted_keys) - 1)
                if np.any(sorted_keys[position] != wanted):
                    raise InvalidInputError("Complex is not face-closed: a triangle edge is missing")
                columns.append(self._offsets_for(1) + order[position])
            faces[2] = np.column_stack(columns)
        return faces

    def _offsets_for(self, p: int) -> int:
        return int(sum(block.shape[0] for block in self.simplices[:p]))

    @classmethod
    def from_simplices(cls, simplices: Iterable[Sequence[int]]) -> "SimplicialComplex":
        """Build the face closure of the given simplices."""
        closure = [set() for _ in range(MAX_SIMPLEX_DIM + 1)]
        for simplex in simplices:
            vertices = tuple(sorted(int(v) for v in simplex))
            if len(set(vertices)) != len(vertices) or not vertices:
                raise InvalidInputError(f"Invalid simplex {tuple(simplex)}")
            if len(vertices) - 1 > MAX_SIMPLEX_DIM:
                raise InvalidInputError(f"Simplices above dimension {MAX_SIMPLEX_DIM} are not supported")
            for size in range(1, len(vertices) + 1):
                for face in combinations(vertices, size):
                    closure[size - 1].add(face)
        blocks = [np.array(sorted(block), dtype=np.int64).reshape(-1, p + 1) for p, block in enumerate(closure)]
        return cls(tuple(blocks))

    @property
    def n_vertices(self) -> int:
        return self.simplices[0].shape[0]

    @property
    def max_dim(self) -> int:
        return len(self.simplices) - 1

    @property
    def n_simplices(self) -> int:
        return int(self._offsets[-1])

    @property
    def dimensions(self) -> np.ndarray:
        return self._dimensions

    def ids_of_dim(self, p: int) -> np.ndarray:
        if p > self.max_dim:
            return np.zeros(0, dtype=np.int64)
        return np.arange(self._offsets[p], self._offsets[p + 1], dtype=np.int64)

    def face_ids(self, p: int) -> np.ndarray:
        """Simplex ids of the facets of every p-simplex, shape (m_p, p + 1)."""
        if p == 0:
            return np.zeros((self.n_vertices, 0), dtype=np.int64)
        return self._faces[p]

    def simplex(self, simplex_id: int) -> Tuple[int, ...]:
        if not 0 <= simplex_id < self.n_simplices:
            raise InvalidInputError(f"Simplex id {simplex_id} out of range")
        p = int(self._dimensions[simplex_id])
        return tuple(int(v) for v in self.simplices[p][simplex_id - self._offsets[p]])


def grid_complex(rows: int, cols: int) -> SimplicialComplex:
    """Triangulated rows x cols grid: every cell split along its diagonal."""
    if rows < 1 or cols < 1:
        raise InvalidInputError("Grid needs at least one row and column")
    simplices = [(r * cols + c,) for r in range(rows) for c in range(cols)]
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                simplices.append((v, v + 1))
            if r + 1 < rows:
                simplices.append((v, v + cols))
            if r + 1 < rows and c + 1 < cols:
                simplices.append((v, v + 1, v + cols + 1))
                simplices.append((v, v + cols, v + cols + 1))
    return SimplicialComplex.from_simplices(simplices)


@dataclass(frozen=True, eq=False)
class Filtration:
    complex: SimplicialComplex
    values: np.ndarray
    attribution: np.ndarray
    kind: FiltrationKind

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        attribution = np.asarray(self.attribution, dtype=np.int64)
        if values.shape != (self.complex.n_simplices,):
            raise InvalidInputError("One filtration value per simplex is required")
        if attribution.shape != (self.complex.n_simplices, 2):
            raise InvalidInputError("One attribution pair per simplex is required")
        values.setflags(write=False)
        attribution.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "attribution", attribution)

    @property
    def n_simplices(self) -> int:
        return self.complex.n_simplices

    def value(self, simplex_id: int) -> float:
        return float(self.values[simplex_id])


def build_rips(
    cloud: Union[PointCloud, np.ndarray],
    max_dim: int = 1,
    max_radius: float = np.inf,
) -> Filtration:
    """Vietoris-Rips filtration of a point cloud.

    Every simplex with diameter <= max_radius up to max_dim is included.
    Its value is its diameter and its attribution the diameter-realizing
    edge, ties broken by the lexicographically smallest endpoint pair.
    """
    if max_dim not in (0, 1, 2):
        raise InvalidInputError(f"max_dim must be 0, 1 or 2, got {max_dim}")
    if not max_radius > 0:
        raise InvalidInputError(f"max_radius must be positive, got {max_radius}")
    points = as_point_cloud(cloud).points
    n = points.shape[0]

    vertices = np.arange(n, dtype=np.int64)
    blocks = [vertices[:, None]]
    values = [np.zeros(n)]
    attribution = [np.column_stack([vertices, vertices])]

    if max_dim >= 1 and n > 1:
        rows, cols = np.triu_indices(n, k=1)
        lengths = edge_lengths(points, rows, cols)
        keep = lengths <= max_radius
        edges = np.column_stack([rows[keep], cols[keep]]).astype(np.int64)
        blocks.append(edges)
        values.append(lengths[keep])
        attribution.append(edges)

        if max_dim >= 2:
            distance = np.full((n, n), np.inf)
            distance[rows, cols] = lengths
            distance[cols, rows] = lengths
            adjacent = distance <= max_radius
            np.fill_diagonal(adjacent, False)
            triangles = []
            for i in range(n):
                neighbours = np.nonzero(adjacent[i, i + 1:])[0] + i + 1
                for j in neighbours:
                    ks = neighbours[neighbours > j]
                    ks = ks[adjacent[j, ks]]
                    for k in ks:
                        triangles.append((i, j, k))
            triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
            if triangles.shape[0]:
                i, j, k = triangles[:, 0], triangles[:, 1], triangles[:, 2]
                candidates = np.column_stack([distance[i, j], distance[i, k], distance[j, k]])
                # (i,j) < (i,k) < (j,k) lexicographically; argmax keeps the first
                choice = np.argmax(candidates, axis=1)
                first = np.choose(choice, [i, i, j])
                second = np.choose(choice, [j, k, k])
                blocks.append(triangles)
                values.append(candidates[np.arange(len(choice)), choice])
                attribution.append(np.column_stack([first, second]))

    complex_ = SimplicialComplex(tuple(blocks))
    filtration = Filtration(
        complex=complex_,
        values=np.concatenate(values[: complex_.max_dim + 1]),
        attribution=np.concatenate(attribution[: complex_.max_dim + 1]),
        kind=FiltrationKind.RIPS,
    )
    logger.debug(
        f"Rips filtration on {n} points: "
        + ", ".join(f"{block.shape[0]} {p}-simplices" for p, block in enumerate(complex_.simplices))
    )
    return filtration


def build_lower_star(complex_: SimplicialComplex, vertex_values: Sequence[float]) -> Filtration:
    """Lower-star filtration: each simplex takes the max of its vertex values."""
    vertex_values = np.asarray(vertex_values, dtype=float).reshape(-1)
    if vertex_values.shape[0] != complex_.n_vertices:
        raise InvalidInputError(
            f"Expected {complex_.n_vertices} vertex values, got {vertex_values.shape[0]}"
        )
    if not np.all(np.isfinite(vertex_values)):
        raise InvalidInputError("Vertex values must be finite")
    values = []
    attributed = []
    for block in complex_.simplices:
        # rows are increasing, so argmax's first hit is the smallest vertex index
        choice = np.argmax(vertex_values[block], axis=1)
        vertex = block[np.arange(block.shape[0]), choice]
        values.append(vertex_values[vertex])
        attributed.append(vertex)
    vertex = np.concatenate(attributed)
    return Filtration(
        complex=complex_,
        values=np.concatenate(values),
        attribution=np.column_stack([vertex, vertex]),
        kind=FiltrationKind.LOWER_STAR,
    )


def check_monotone(filtration: Filtration) -> None:
    """Raise InvalidInputError unless value(face) <= value(coface) everywhere."""
    complex_ = filtration.complex
    values = filtration.values
    for p in range(1, complex_.max_dim + 1):
        ids = complex_.ids_of_dim(p)
        faces = complex_.face_ids(p)
        if ids.size == 0:
            continue
        bad = values[faces] > values[ids][:, None]
        if np.any(bad):
            row = int(np.nonzero(bad.any(axis=1))[0][0])
            raise InvalidInputError(
                f"Filtration is not monotone at simplex {complex_.simplex(int(ids[row]))}"
            )


def _input_array(filtration: Filtration, inputs) -> np.ndarray:
    if filtration.kind == FiltrationKind.RIPS:
        array = as_point_cloud(inputs).points
    else:
        array = np.asarray(inputs, dtype=float).reshape(-1)
    if array.shape[0] != filtration.complex.n_vertices:
        raise InvalidInputError(
            f"Inputs describe {array.shape[0]} vertices, filtration has {filtration.complex.n_vertices}"
        )
    return array


def attributed_values(filtration: Filtration, inputs) -> np.ndarray:
    """Re-evaluate every simplex value through its frozen attribution."""
    array = _input_array(filtration, inputs)
    if filtration.kind == FiltrationKind.RIPS:
        return edge_lengths(array, filtration.attribution[:, 0], filtration.attribution[:, 1])
    return array[filtration.attribution[:, 0]].copy()


@dataclass(frozen=True)
class SparseGradient:
    indices: Tuple[int, ...]
    values: np.ndarray

    def to_dense(self, shape: Tuple[int, ...]) -> np.ndarray:
        dense = np.zeros(shape)
        for index, value in zip(self.indices, self.values):
            dense[index] += value
        return dense


def filtration_value_gradient(filtration: Filtration, simplex_id: int, inputs) -> SparseGradient:
    """Gradient of one simplex value w.r.t. the inputs it is attributed to.

    Lower-star: 1 at the attributed vertex. Rips: the gradient of the
    attributed edge length w.r.t. its two endpoints; a degenerate edge
    (coincident endpoints, or a vertex simplex) gets the zero subgradient.
    """
    if not 0 <= simplex_id < filtration.n_simplices:
        raise InvalidInputError(f"Simplex id {simplex_id} out of range")
    array = _input_array(filtration, inputs)
    first, second = (int(v) for v in filtration.attribution[simplex_id])
    if filtration.kind == FiltrationKind.LOWER_STAR:
        return SparseGradient(indices=(first,), values=np.array([1.0]))
    dim = array.shape[1]
    if first == second:
        return SparseGradient(indices=(first,), values=np.zeros((1, dim)))
    diff = array[second] - array[first]
    length = float(np.sqrt(np.dot(diff, diff)))
    if length == 0.0:
        return SparseGradient(indices=(first, second), values=np.zeros((2, dim)))
    unit = diff / length
    return SparseGradient(indices=(first, second), values=np.stack([-unit, unit]))


def accumulate_value_gradients(
    filtration: Filtration,
    simplex_ids: np.ndarray,
    coefficients: np.ndarray,
    inputs,
) -> np.ndarray:
    """Dense sum over s of coefficients[s] * d value(simplex_ids[s]) / d inputs."""
    array = _input_array(filtration, inputs)
    simplex_ids = np.asarray(simplex_ids, dtype=np.int64)
    coefficients = np.asarray(coefficients, dtype=float)
    out = np.zeros_like(array, dtype=float)
    if simplex_ids.size == 0:
        return out
    first = filtration.attribution[simplex_ids, 0]
    if filtration.kind == FiltrationKind.LOWER_STAR:
        np.add.at(out, first, coefficients)
        return out
    second = filtration.attribution[simplex_ids, 1]
    diff = array[second] - array[first]
    lengths = edge_lengths(array, first, second)
    usable = lengths > 0
    unit = np.zeros_like(diff)
    unit[usable] = diff[usable] / lengths[usable][:, None]
    contribution = coefficients[:, None] * unit
    np.add.at(out, second, contribution)
    np.add.at(out, first, -contribution)
    return out
