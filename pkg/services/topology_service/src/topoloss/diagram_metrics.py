"""
Distances and matchings between persistence diagrams.

Only finite points with positive persistence take part in matchings.
Assignment problems are solved with scipy's linear_sum_assignment. When
several assignments share the optimal cost, the lowest source index takes
the lowest target index it can, and the diagonal counts as the last target.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import InvalidInputError, SizeLimitError
from .persistence import PersistenceDiagram

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_TRUE = 5
BRUTE_FORCE_MAX_PRED = 7
BRUTE_FORCE_MAX_WASSERSTEIN = 6
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class MatchedPair:
    """source/target are point ids; None stands for the diagonal."""

    source: Optional[int]
    target: Optional[int]
    cost: float


@dataclass(frozen=True)
class Matching:
    pairs: Tuple[MatchedPair, ...]
    cost: float

    def recomputed_cost(self) -> float:
        return float(sum(pair.cost for pair in self.pairs))

    def targets(self) -> List[int]:
        return [pair.target for pair in self.pairs if pair.target is not None]

    def edges(self) -> List[Tuple[Optional[int], Optional[int]]]:
        return [(pair.source, pair.target) for pair in self.pairs]


def squared_pair_cost(birth_a, death_a, birth_b, death_b):
    birth_gap = birth_a - birth_b
    death_gap = death_a - death_b
    return birth_gap * birth_gap + death_gap * death_gap


def restoration_diagonal_cost(birth, death):
    gap = death - birth
    return gap * gap / 2.0


def _check_q(q: float) -> float:
    q = float(q)
    if not (q >= 1.0):
        raise InvalidInputError(f"q must be >= 1 or inf, got {q}")
    return q


def _check_k(k: int) -> int:
    if int(k) != k or k < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k}")
    return int(k)


def _single_dim(*diagrams: PersistenceDiagram) -> Optional[int]:
    dims = set()
    for diagram in diagrams:
        dims |= diagram.dims()
    if len(dims) > 1:
        raise InvalidInputError(
            f"Diagrams mix homology dimensions {sorted(dims)}; restrict them to one dimension first"
        )
    return next(iter(dims), None)


def _finite(diagram: PersistenceDiagram, dim: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    indices = diagram.finite_indices(dim=dim)
    return indices, diagram.coordinates(indices)


def _pair_costs(first: np.ndarray, second: np.ndarray, q: float) -> np.ndarray:
    birth_gap = np.abs(first[:, None, 0] - second[None, :, 0])
    death_gap = np.abs(first[:, None, 1] - second[None, :, 1])
    if math.isinf(q):
        return np.maximum(birth_gap, death_gap)
    return birth_gap ** q + death_gap ** q


def _diagonal_costs(points: np.ndarray, q: float) -> np.ndarray:
    half = (points[:, 1] - points[:, 0]) / 2.0
    if math.isinf(q):
        return half
    return 2.0 * half ** q


def _augmented_costs(first: np.ndarray, second: np.ndarray, q: float) -> np.ndarray:
    """Square cost matrix with one diagonal copy per point of either side."""
    m, n = first.shape[0], second.shape[0]
    costs = np.full((m + n, n + m), np.inf)
    costs[:m, :n] = _pair_costs(first, second, q)
    np.fill_diagonal(costs[:m, n:], _diagonal_costs(first, q))
    np.fill_diagonal(costs[m:, :n], _diagonal_costs(second, q))
    costs[m:, n:] = 0.0
    return costs


def _same_total(new: float, old: float) -> bool:
    return math.isfinite(new) and new <= old + TIE_TOLERANCE * max(1.0, abs(old))


def _assigned_targets(rows: np.ndarray, cols: np.ndarray, m: int, n: int) -> List[Optional[int]]:
    targets: List[Optional[int]] = [None] * m
    for row, col in zip(rows, cols):
        if row < m and col < n:
            targets[int(row)] = int(col)
    return targets


def _lowest_index_ties(
    pair_costs: np.ndarray,
    diagonal_a: np.ndarray,
    diagonal_b: np.ndarray,
    targets: List[Optional[int]],
) -> List[Optional[int]]:
    """Move an optimal matching to its lowest-index equivalent.

    Sources are visited in order. Each takes the lowest target (the diagonal
    last) it can reach without raising the total, possibly from a later
    source, which then gets the slot it gave up.
    """
    m, n = pair_costs.shape
    targets = list(targets)
    owner = {target: source for source, target in enumerate(targets) if target is not None}

    def held(source: int, target: Optional[int]) -> float:
        return diagonal_a[source] if target is None else pair_costs[source, target]

    def freed(target: Optional[int]) -> float:
        return 0.0 if target is None else diagonal_b[target]

    changed = True
    while changed:
        changed = False
        for source in range(m):
            current = targets[source]
            for target in range(n if current is None else current):
                holder = owner.get(target)
                if holder is None:
                    before = held(source, current) + diagonal_b[target]
                    after = pair_costs[source, target] + freed(current)
                elif holder > source:
                    before = held(source, current) + pair_costs[holder, target]
                    after = pair_costs[source, target] + held(holder, current)
                else:
                    continue
                if not _same_total(after, before):
                    continue
                if current is not None:
                    owner.pop(current)
                if holder is not None:
                    targets[holder] = current
                    if current is not None:
                        owner[current] = holder
                targets[source] = target
                owner[target] = source
                changed = True
                break
    return targets


def _threshold_feasible(costs: np.ndarray, threshold: float) -> bool:
    graph = csr_matrix((costs <= threshold).astype(np.int8))
    matched = maximum_bipartite_matching(graph, perm_type="column")
    return bool(np.all(matched >= 0))


def _smallest_feasible_threshold(costs: np.ndarray) -> float:
    candidates = np.unique(costs[np.isfinite(costs)])
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _threshold_feasible(costs, candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def _minimax_threshold(costs: np.ndarray) -> float:
    """Smallest largest cost over all assignments.

    Bisects the sorted costs; a threshold is reachable when the assignment
    minimizing the number of entries above it has none.
    """
    candidates = np.unique(costs[np.isfinite(costs)])
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        over = (costs > candidates[mid]).astype(float)
        rows, cols = linear_sum_assignment(over)
        if over[rows, cols].sum() == 0:
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def wasserstein(
    diagram_a: PersistenceDiagram,
    diagram_b: PersistenceDiagram,
    q: float = 2.0,
) -> Tuple[float, Matching]:
    """q-Wasserstein distance with its optimal matching.

    Matching costs are in q-th powers for finite q and the distance is the
    q-th root of the total. For q = inf the cost is the bottleneck value.
    """
    q = _check_q(q)
    _single_dim(diagram_a, diagram_b)
    ids_a, first = _finite(diagram_a)
    ids_b, second = _finite(diagram_b)
    m, n = len(ids_a), len(ids_b)
    if m == 0 and n == 0:
        return 0.0, Matching((), 0.0)

    costs = _augmented_costs(first, second, q)
    pair_costs, diagonal_a, diagonal_b = costs[:m, :n], _diagonal_costs(first, q), _diagonal_costs(second, q)
    if math.isinf(q):
        threshold = _minimax_threshold(costs)
        over = (costs > threshold).astype(float)
        targets = _assigned_targets(*linear_sum_assignment(over), m, n)
        targets = _lowest_index_ties(
            over[:m, :n],
            (diagonal_a > threshold).astype(float),
            (diagonal_b > threshold).astype(float),
            targets,
        )
    else:
        targets = _assigned_targets(*linear_sum_assignment(costs), m, n)
        targets = _lowest_index_ties(pair_costs, diagonal_a, diagonal_b, targets)

    pairs: List[MatchedPair] = []
    for row, col in enumerate(targets):
        cost = diagonal_a[row] if col is None else pair_costs[row, col]
        pairs.append(MatchedPair(int(ids_a[row]), None if col is None else int(ids_b[col]), float(cost)))
    matched = set(col for col in targets if col is not None)
    for col in range(n):
        if col not in matched:
            pairs.append(MatchedPair(None, int(ids_b[col]), float(diagonal_b[col])))

    if math.isinf(q):
        total = max(pair.cost for pair in pairs)
        return total, Matching(tuple(pairs), total)
    total = float(sum(pair.cost for pair in pairs))
    return total ** (1.0 / q), Matching(tuple(pairs), total)


def bottleneck(diagram_a: PersistenceDiagram, diagram_b: PersistenceDiagram) -> float:
    """Bottleneck distance by threshold search over bipartite matchings."""
    _single_dim(diagram_a, diagram_b)
    _, first = _finite(diagram_a)
    _, second = _finite(diagram_b)
    if first.shape[0] == 0 and second.shape[0] == 0:
        return 0.0
    return _smallest_feasible_threshold(_augmented_costs(first, second, np.inf))


def total_persistence(diagram: PersistenceDiagram, k: int = 2, dim: Optional[int] = None) -> float:
    """Sum of (death - birth)^k over finite points."""
    k = _check_k(k)
    _, points = _finite(diagram, dim)
    return persistence_moment(points[:, 1] - points[:, 0], k)


def persistence_moment(persistence: np.ndarray, k: int) -> float:
    return float(np.sum(np.abs(persistence) ** k))


def _truth_points(true_diagram, dim: Optional[int]) -> Tuple[np.ndarray, np.ndarray, Optional[int]]:
    if isinstance(true_diagram, PersistenceDiagram):
        resolved = _single_dim(true_diagram) if dim is None else dim
        ids, coordinates = _finite(true_diagram, resolved)
        return ids, coordinates, resolved
    if hasattr(true_diagram, "coordinates") and hasattr(true_diagram, "hom_dim"):
        coordinates = true_diagram.coordinates()
        resolved = true_diagram.hom_dim if dim is None else dim
        return np.arange(coordinates.shape[0]), coordinates, resolved
    coordinates = np.asarray(true_diagram, dtype=float).reshape(-1, 2)
    return np.arange(coordinates.shape[0]), coordinates, dim


def _pred_points(pred_diagram: PersistenceDiagram, dim: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    if dim is None:
        dim = _single_dim(pred_diagram)
    return _finite(pred_diagram, dim)


def restoration_match(
    true_diagram: Union[PersistenceDiagram, Sequence[Sequence[float]]],
    pred_diagram: PersistenceDiagram,
    dim: Optional[int] = None,
) -> Matching:
    """Optimal partial injection of true points into predicted points.

    Every true point is matched to a distinct predicted point at squared
    Euclidean cost, or to its own diagonal projection at (d - b)^2 / 2.
    Predicted points may stay unmatched for free. The target dimension comes
    from ``dim``, the truth's hom_dim, or the diagrams themselves.
    """
    source_ids, truth, dim = _truth_points(true_diagram, dim)
    target_ids, pred = _pred_points(pred_diagram, dim)
    n_true, n_pred = truth.shape[0], pred.shape[0]
    if n_true == 0:
        return Matching((), 0.0)

    pair_costs = squared_pair_cost(truth[:, None, 0], truth[:, None, 1], pred[None, :, 0], pred[None, :, 1])
    diagonal = restoration_diagonal_cost(truth[:, 0], truth[:, 1])
    costs = np.full((n_true, n_pred + n_true), np.inf)
    costs[:, :n_pred] = pair_costs
    np.fill_diagonal(costs[:, n_pred:], diagonal)
    targets = _assigned_targets(*linear_sum_assignment(costs), n_true, n_pred)
    targets = _lowest_index_ties(pair_costs, diagonal, np.zeros(n_pred), targets)

    pairs = tuple(
        MatchedPair(
            int(source_ids[row]),
            int(target_ids[col]) if col is not None else None,
            float(pair_costs[row, col]) if col is not None else float(diagonal[row]),
        )
        for row, col in enumerate(targets)
    )
    return Matching(pairs, float(sum(pair.cost for pair in pairs)))


def shrinking_cost(
    pred_diagram: PersistenceDiagram,
    matching: Matching,
    dim: Optional[int] = None,
) -> float:
    """Cost of sending every unmatched predicted point to the diagonal."""
    ids, points = _pred_points(pred_diagram, dim)
    matched = set(matching.targets())
    unmatched = np.array([i not in matched for i in ids], dtype=bool)
    if not unmatched.any():
        return 0.0
    return float(np.sum(restoration_diagonal_cost(points[unmatched, 0], points[unmatched, 1])))


def brute_force_match(
    true_diagram: Union[PersistenceDiagram, Sequence[Sequence[float]]],
    pred_diagram: PersistenceDiagram,
    dim: Optional[int] = None,
) -> Matching:
    """Exhaustive restoration matching for small diagrams."""
    source_ids, truth, dim = _truth_points(true_diagram, dim)
    target_ids, pred = _pred_points(pred_diagram, dim)
    if truth.shape[0] > BRUTE_FORCE_MAX_TRUE or pred.shape[0] > BRUTE_FORCE_MAX_PRED:
        raise SizeLimitError(
            f"Brute force accepts at most {BRUTE_FORCE_MAX_TRUE} true and "
            f"{BRUTE_FORCE_MAX_PRED} predicted points"
        )
    n_true, n_pred = truth.shape[0], pred.shape[0]
    pair_costs = squared_pair_cost(
        truth[:, None, 0], truth[:, None, 1], pred[None, :, 0], pred[None, :, 1]
    )
    diagonal = restoration_diagonal_cost(truth[:, 0], truth[:, 1])
    best_cost = math.inf
    best: List[Optional[int]] = []

    def visit(row: int, used: frozenset, chosen: List[Optional[int]], costs: List[float]):
        nonlocal best_cost, best
        if row == n_true:
            total = float(sum(costs))
            if total < best_cost:
                best_cost, best = total, list(chosen)
            return
        for col in range(n_pred):
            if col not in used:
                visit(row + 1, used | {col}, chosen + [col], costs + [float(pair_costs[row, col])])
        visit(row + 1, used, chosen + [None], costs + [float(diagonal[row])])

    visit(0, frozenset(), [], [])
    pairs = tuple(
        MatchedPair(
            int(source_ids[row]),
            int(target_ids[col]) if col is not None else None,
            float(pair_costs[row, col]) if col is not None else float(diagonal[row]),
        )
        for row, col in enumerate(best)
    )
    return Matching(pairs, float(sum(pair.cost for pair in pairs)))


def brute_force_wasserstein(
    diagram_a: PersistenceDiagram,
    diagram_b: PersistenceDiagram,
    q: float = 2.0,
) -> float:
    """Exhaustive q-Wasserstein distance for diagrams of at most six points."""
    q = _check_q(q)
    _single_dim(diagram_a, diagram_b)
    _, first = _finite(diagram_a)
    _, second = _finite(diagram_b)
    if first.shape[0] > BRUTE_FORCE_MAX_WASSERSTEIN or second.shape[0] > BRUTE_FORCE_MAX_WASSERSTEIN:
        raise SizeLimitError(f"Brute force accepts at most {BRUTE_FORCE_MAX_WASSERSTEIN} points per diagram")
    m, n = first.shape[0], second.shape[0]
    if m == 0 and n == 0:
        return 0.0
    pair_costs = _pair_costs(first, second, q)
    diagonal_a = _diagonal_costs(first, q)
    diagonal_b = _diagonal_costs(second, q)
    combine = max if math.isinf(q) else (lambda a, b: a + b)
    best = math.inf

    def visit(row: int, used: frozenset, acc: float):
        nonlocal best
        if row == m:
            total = acc
            for col in range(n):
                if col not in used:
                    total = combine(total, float(diagonal_b[col]))
            best = min(best, total)
            return
        for col in range(n):
            if col not in used:
                visit(row + 1, used | {col}, combine(acc, float(pair_costs[row, col])))
        visit(row + 1, used, combine(acc, float(diagonal_a[row])))

    visit(0, frozenset(), 0.0)
    return best if math.isinf(q) else best ** (1.0 / q)


def moment_perturbation_bound(
    diagram_a: PersistenceDiagram,
    diagram_b: PersistenceDiagram,
    k: int,
    sup_norm: float,
    dim: Optional[int] = None,
) -> float:
    """Upper bound on |Pers_k(a) - Pers_k(b)| for filtrations sup_norm apart.

    2 k ||f - g||_inf (Pers_{k-1}(a) + Pers_{k-1}(b)), valid for k >= 2.
    """
    k = _check_k(k)
    if k < 2:
        raise InvalidInputError("The perturbation bound needs k >= 2")
    if sup_norm < 0:
        raise InvalidInputError("sup_norm must be non-negative")
    lower = total_persistence(diagram_a, k - 1, dim) + total_persistence(diagram_b, k - 1, dim)
    return 2.0 * k * sup_norm * lower
