"""
Topology-aware loss with frozen configurations.

A Configuration records, at one iterate, which simplices realize every
matched and regularized diagram coordinate. While it is frozen the loss is a
smooth function of the inputs: each coordinate is read back as the value of
its recorded simplex through the filtration's attribution.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .complex_core import Filtration, PointCloud, accumulate_value_gradients, attributed_values, build_rips
from .diagram_metrics import (
    Matching,
    persistence_moment,
    restoration_diagonal_cost,
    restoration_match,
    squared_pair_cost,
)
from .errors import InvalidInputError, StaleConfigurationError
from .persistence import PersistenceDiagram, compute_persistence, compute_persistence_dim0

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GroundTruthDiagram:
    """Target points (birth, death) for one homology dimension, death > birth."""

    points: Tuple[Tuple[float, float], ...]
    hom_dim: int = 0

    def __post_init__(self):
        points = tuple((float(b), float(d)) for b, d in self.points)
        for birth, death in points:
            if not (np.isfinite(birth) and np.isfinite(death)):
                raise InvalidInputError("Ground-truth points must be finite")
            if not death > birth:
                raise InvalidInputError(f"Ground-truth point ({birth}, {death}) needs death > birth")
        if self.hom_dim not in (0, 1):
            raise InvalidInputError(f"hom_dim must be 0 or 1, got {self.hom_dim}")
        object.__setattr__(self, "points", points)

    @property
    def size(self) -> int:
        return len(self.points)

    def coordinates(self) -> np.ndarray:
        return np.array(self.points, dtype=float).reshape(-1, 2)

    @classmethod
    def from_diagram(cls, diagram: PersistenceDiagram, hom_dim: int = 0) -> "GroundTruthDiagram":
        indices = diagram.finite_indices(dim=hom_dim)
        return cls(tuple(map(tuple, diagram.coordinates(indices))), hom_dim)


def make_ground_truth(
    source: Union[PointCloud, PersistenceDiagram, Sequence[Sequence[float]]],
    hom_dim: int = 0,
    size: Optional[int] = None,
) -> GroundTruthDiagram:
    """Ground truth from a point cloud, a diagram, or explicit points.

    For a PointCloud the Rips diagram in ``hom_dim`` is computed and the
    ``size`` most persistent finite points are kept (ties by smaller birth).
    A PersistenceDiagram is truncated the same way. Any other sequence is
    taken as explicit (birth, death) pairs.
    """
    if size is not None and size < 1:
        raise InvalidInputError(f"Ground-truth size must be >= 1, got {size}")
    if isinstance(source, PointCloud):
        filtration = build_rips(source, max_dim=hom_dim + 1)
        if hom_dim == 0:
            diagram = compute_persistence_dim0(filtration)
        else:
            diagram = compute_persistence(filtration, hom_dim)
        return _most_persistent(diagram, hom_dim, size)
    if isinstance(source, PersistenceDiagram):
        return _most_persistent(source, hom_dim, size)
    truth = GroundTruthDiagram(tuple(tuple(point) for point in source), hom_dim)
    if size is not None and size != truth.size:
        raise InvalidInputError(f"Expected {size} ground-truth points, got {truth.size}")
    return truth


def _most_persistent(diagram: PersistenceDiagram, hom_dim: int, size: Optional[int]) -> GroundTruthDiagram:
    candidates = diagram.coordinates(diagram.finite_indices(dim=hom_dim))
    size = 1 if size is None else size
    if size > candidates.shape[0]:
        raise InvalidInputError(
            f"Requested {size} ground-truth points but only {candidates.shape[0]} finite "
            f"{hom_dim}-dimensional points exist"
        )
    order = np.lexsort((candidates[:, 0], -(candidates[:, 1] - candidates[:, 0])))
    chosen = candidates[order[:size]]
    return GroundTruthDiagram(tuple(map(tuple, chosen)), hom_dim)


def prior_ground_truth(beta: int, birth: float, death: float, hom_dim: int = 0) -> GroundTruthDiagram:
    """``beta`` copies of (birth, death): a prior asking for that many long-lived features."""
    if beta < 1:
        raise InvalidInputError("A prior needs at least one point")
    return GroundTruthDiagram(tuple((birth, death) for _ in range(beta)), hom_dim)


class LossWeights(BaseModel):
    model_config = ConfigDict(frozen=True)

    lambda_topo: float = Field(default=0.0, ge=0.0)
    lambda_reg: float = Field(default=0.0, ge=0.0)
    k: int = Field(default=2, ge=1)


@dataclass(frozen=True)
class LossBreakdown:
    l_supv: float
    l_topo: float
    l_reg: float
    lambda_topo: float
    lambda_reg: float
    k: int
    g: float

    @classmethod
    def assemble(cls, l_supv: float, l_topo: float, l_reg: float, weights: LossWeights) -> "LossBreakdown":
        g = l_supv + weights.lambda_topo * l_topo + weights.lambda_reg * l_reg
        return cls(
            float(l_supv), float(l_topo), float(l_reg), weights.lambda_topo, weights.lambda_reg, weights.k, float(g)
        )

    def as_dict(self) -> Dict[str, float]:
        return {
            "L_supv": self.l_supv,
            "L_topo": self.l_topo,
            "L_reg": self.l_reg,
            "lambda_topo": self.lambda_topo,
            "lambda_reg": self.lambda_reg,
            "k": self.k,
            "G": self.g,
        }


@dataclass(frozen=True, eq=False)
class Configuration:
    t: int
    hom_dim: int
    filtration: Filtration
    diagram: PersistenceDiagram
    matching: Matching
    matched_sources: np.ndarray = field(repr=False)
    matched_birth_ids: np.ndarray = field(repr=False)
    matched_death_ids: np.ndarray = field(repr=False)
    diagonal_sources: np.ndarray = field(repr=False)
    diagonal_costs: np.ndarray = field(repr=False)
    reg_birth_ids: np.ndarray = field(repr=False)
    reg_death_ids: np.ndarray = field(repr=False)

    @property
    def values(self) -> np.ndarray:
        return self.filtration.values

    @property
    def max_simplex_id(self) -> int:
        ids = [
            self.matched_birth_ids,
            self.matched_death_ids,
            self.reg_birth_ids,
            self.reg_death_ids,
        ]
        return max((int(a.max()) for a in ids if a.size), default=-1)


def snapshot_configuration(
    t: int,
    filtration: Filtration,
    diagram: PersistenceDiagram,
    truth: GroundTruthDiagram,
) -> Configuration:
    """Freeze the matching and the attributed simplices of one iterate."""
    matching = restoration_match(truth, diagram, dim=truth.hom_dim)
    truth_points = truth.coordinates()
    matched = [pair for pair in matching.pairs if pair.target is not None]
    diagonal = [pair.source for pair in matching.pairs if pair.target is None]
    matched_points = [diagram[pair.target] for pair in matched]
    regularized = [diagram[i] for i in diagram.finite_indices(dim=truth.hom_dim)]

    def ids(values):
        return np.array(values, dtype=np.int64)

    diagonal_sources = ids(diagonal)
    return Configuration(
        t=t,
        hom_dim=truth.hom_dim,
        filtration=filtration,
        diagram=diagram,
        matching=matching,
        matched_sources=ids([pair.source for pair in matched]),
        matched_birth_ids=ids([p.birth_simplex for p in matched_points]),
        matched_death_ids=ids([p.death_simplex for p in matched_points]),
        diagonal_sources=diagonal_sources,
        diagonal_costs=restoration_diagonal_cost(
            truth_points[diagonal_sources, 0], truth_points[diagonal_sources, 1]
        ).reshape(-1),
        reg_birth_ids=ids([p.birth_simplex for p in regularized]),
        reg_death_ids=ids([p.death_simplex for p in regularized]),
    )


def _check_values(config: Configuration, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or config.max_simplex_id >= values.shape[0]:
        raise StaleConfigurationError(
            f"Configuration from iteration {config.t} references simplices missing from the current values"
        )
    return values


def topo_term(config: Configuration, values: np.ndarray, truth: GroundTruthDiagram) -> float:
    truth_points = truth.coordinates()
    contributions = np.zeros(truth.size)
    if config.matched_sources.size:
        target = truth_points[config.matched_sources]
        contributions[config.matched_sources] = squared_pair_cost(
            target[:, 0], target[:, 1], values[config.matched_birth_ids], values[config.matched_death_ids]
        )
    contributions[config.diagonal_sources] = config.diagonal_costs
    return float(sum(contributions.tolist()))


def reg_term(config: Configuration, values: np.ndarray, k: int) -> float:
    return persistence_moment(values[config.reg_death_ids] - values[config.reg_birth_ids], k)


def eval_loss(
    config: Configuration,
    current_values: np.ndarray,
    supervision_value: float,
    truth: GroundTruthDiagram,
    weights: LossWeights,
) -> LossBreakdown:
    """Loss with the configuration frozen, evaluated at the given simplex values."""
    values = _check_values(config, current_values)
    return LossBreakdown.assemble(
        supervision_value,
        topo_term(config, values, truth),
        reg_term(config, values, weights.k),
        weights,
    )


def value_gradient(
    config: Configuration,
    values: np.ndarray,
    truth: GroundTruthDiagram,
    weights: LossWeights,
) -> np.ndarray:
    """Weighted derivative of the topology and regularization terms per simplex value."""
    values = _check_values(config, values)
    grad = np.zeros(values.shape[0])
    if weights.lambda_topo and config.matched_sources.size:
        target = truth.coordinates()[config.matched_sources]
        births = values[config.matched_birth_ids]
        deaths = values[config.matched_death_ids]
        np.add.at(grad, config.matched_birth_ids, weights.lambda_topo * 2.0 * (births - target[:, 0]))
        np.add.at(grad, config.matched_death_ids, weights.lambda_topo * 2.0 * (deaths - target[:, 1]))
    if weights.lambda_reg and config.reg_death_ids.size:
        gaps = values[config.reg_death_ids] - values[config.reg_birth_ids]
        coefficient = weights.lambda_reg * weights.k * np.abs(gaps) ** (weights.k - 1) * np.sign(gaps)
        np.add.at(grad, config.reg_death_ids, coefficient)
        np.add.at(grad, config.reg_birth_ids, -coefficient)
    return grad


def grad_loss(
    config: Configuration,
    inputs: np.ndarray,
    supervision_gradient: np.ndarray,
    backward_hook: Callable[[np.ndarray], np.ndarray],
    truth: GroundTruthDiagram,
    weights: LossWeights,
) -> np.ndarray:
    """Gradient of the frozen loss w.r.t. the parameters behind ``inputs``.

    ``inputs`` are the current filtration inputs (embedding or vertex
    values); they must reproduce the configuration's snapshot values exactly.
    The upstream gradient over inputs is handed to ``backward_hook``.
    """
    current = attributed_values(config.filtration, inputs)
    if not np.array_equal(current, config.values):
        raise StaleConfigurationError(
            f"Inputs no longer reproduce the filtration values frozen at iteration {config.t}"
        )
    per_value = value_gradient(config, current, truth, weights)
    active = np.nonzero(per_value)[0]
    upstream = np.asarray(supervision_gradient, dtype=float) + accumulate_value_gradients(
        config.filtration, active, per_value[active], inputs
    )
    return backward_hook(upstream)
