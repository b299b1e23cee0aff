"""
Embedding experiment and loss-weight sweeps.

run_embedding loads or generates the data, resolves the ground truth (a
diagram file, a prior, or the input cloud's own diagram), trains the network
and writes every artifact of the run into one directory, starting with the
resolved config (run_config.json).
"""

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .complex_core import PointCloud
from .datasets import CirclesConfig, circles_from_config
from .errors import InvalidInputError
from .model import Activation, DenseNetwork, NetworkConfig
from .optimizer import OptimizerConfig, RunResult, TheoremConstants, current_diagram, run
from .plotting import plot_configuration_updates, plot_embedding, plot_loss_curves
from .serialization import (
    read_checkpoint,
    read_ground_truth,
    read_point_cloud,
    write_checkpoint,
    write_diagram,
    write_json,
    write_labels,
    write_point_cloud,
    write_trace,
)
from .topo_loss import GroundTruthDiagram, make_ground_truth, prior_ground_truth

logger = logging.getLogger(__name__)

SWEEP_GRID: Tuple[Tuple[float, float], ...] = (
    (0.0, 0.0),
    (0.0005, 0.005),
    (0.0005, 0.01),
    (0.005, 0.01),
)


class PriorConfig(BaseModel):
    """``beta`` copies of (birth, death) as the ground truth."""

    model_config = ConfigDict(frozen=True)

    beta: int = Field(default=1, ge=1)
    birth: float = 0.0
    death: float

    @model_validator(mode="after")
    def death_after_birth(self):
        if not self.death > self.birth:
            raise ValueError(f"prior death {self.death} must exceed birth {self.birth}")
        return self


class RunConfig(BaseModel):
    """Everything needed to reproduce one embedding run.

    The ground truth is, in order of precedence, the diagram file ``truth``,
    the ``prior``, or the top ``truth_points`` points of the input's own
    diagram. ``init_checkpoint`` starts training from a saved network.
    """

    model_config = ConfigDict(frozen=True)

    seed: int = 0
    input: Optional[str] = None
    truth: Optional[str] = None
    prior: Optional[PriorConfig] = None
    init_checkpoint: Optional[str] = None
    n_per_circle: int = Field(default=100, ge=3)
    radii: Tuple[float, float] = (1.0, 2.0)
    noise: float = Field(default=0.05, ge=0.0)
    z_offset: float = 0.5
    hidden: Tuple[int, int, int] = (32, 32, 32)
    out_dim: int = Field(default=2, ge=1)
    activation: Activation = Activation.TANH
    init_scale: float = Field(default=0.1, gt=0.0)
    perplexity: float = Field(default=30.0, gt=1.0)
    eta: Union[float, Literal["theorem"]] = 0.25
    theorem_constants: Optional[TheoremConstants] = None
    epsilon: float = Field(default=1e-9, gt=0.0)
    max_iters: int = Field(default=2000, ge=1)
    lambda_topo: float = Field(default=0.0005, ge=0.0)
    lambda_reg: float = Field(default=0.005, ge=0.0)
    k: int = Field(default=2, ge=1)
    hom_dim: int = Field(default=0, ge=0, le=1)
    truth_points: int = Field(default=1, ge=1)
    max_radius: Optional[float] = Field(default=None, gt=0.0)
    log_every: int = Field(default=100, ge=1)

    @field_validator("eta")
    @classmethod
    def eta_positive(cls, value):
        if value != "theorem" and not value > 0:
            raise ValueError("eta must be positive or 'theorem'")
        return value

    @model_validator(mode="after")
    def one_ground_truth_source(self):
        if self.truth is not None and self.prior is not None:
            raise ValueError("set either truth or prior, not both")
        return self

    def circles_config(self) -> CirclesConfig:
        return CirclesConfig(
            n_per_circle=self.n_per_circle,
            radii=self.radii,
            noise=self.noise,
            z_offset=self.z_offset,
            seed=self.seed,
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            eta=self.eta,
            epsilon=self.epsilon,
            max_iters=self.max_iters,
            lambda_topo=self.lambda_topo,
            lambda_reg=self.lambda_reg,
            k=self.k,
            seed=self.seed,
            perplexity=self.perplexity,
            hom_dim=self.hom_dim,
            max_radius=self.max_radius,
            theorem_constants=self.theorem_constants,
            log_every=self.log_every,
        )

    def network_config(self) -> NetworkConfig:
        return NetworkConfig(
            hidden=self.hidden, out_dim=self.out_dim, activation=self.activation, init_scale=self.init_scale
        )


@dataclass(frozen=True)
class EmbeddingSummary:
    lambda_topo: float
    lambda_reg: float
    iterations: int
    stop_reason: str
    final_g: float
    first_descent_violation: Optional[int]
    input_top_persistence: float
    embedding_top_persistence: float
    persistence_ratio: float
    out_dir: str


def load_data(config: RunConfig) -> Tuple[PointCloud, Optional[np.ndarray]]:
    if config.input:
        return read_point_cloud(config.input), None
    return circles_from_config(config.circles_config())


def load_ground_truth(config: RunConfig, cloud: PointCloud) -> GroundTruthDiagram:
    if config.truth:
        truth = read_ground_truth(config.truth, config.hom_dim)
        if truth.size == 0:
            raise InvalidInputError(f"{config.truth} has no finite points in dimension {config.hom_dim}")
        return truth
    if config.prior is not None:
        prior = config.prior
        return prior_ground_truth(prior.beta, prior.birth, prior.death, config.hom_dim)
    return make_ground_truth(cloud, config.hom_dim, config.truth_points)


def build_network(config: RunConfig, d_in: int) -> DenseNetwork:
    if not config.init_checkpoint:
        return DenseNetwork.from_config(config.network_config(), d_in, seed=config.seed)
    network = DenseNetwork.from_checkpoint(read_checkpoint(config.init_checkpoint))
    if network.d_in != d_in:
        raise InvalidInputError(
            f"Checkpoint {config.init_checkpoint} expects {network.d_in} input features, the data has {d_in}"
        )
    logger.info(f"Starting from checkpoint {config.init_checkpoint}")
    return network


def top_finite_persistence(points: np.ndarray, hom_dim: int = 0) -> float:
    """Largest finite persistence in the Rips diagram of ``points``."""
    _, diagram = current_diagram(np.asarray(points, dtype=float), hom_dim)
    indices = diagram.finite_indices(dim=hom_dim)
    if indices.size == 0:
        return 0.0
    coordinates = diagram.coordinates(indices)
    return float(np.max(coordinates[:, 1] - coordinates[:, 0]))


def run_embedding(config: RunConfig, out_dir: Union[str, Path]) -> Tuple[EmbeddingSummary, RunResult]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "run_config.json", config.model_dump(mode="json"))

    cloud, labels = load_data(config)
    truth = load_ground_truth(config, cloud)
    logger.info(f"Ground truth for {cloud.n_points} points: {list(truth.points)}")
    network = build_network(config, cloud.dim)
    result = run(cloud.points, truth, network, config.optimizer_config())

    write_point_cloud(out_dir / "embedding.csv", result.embedding)
    write_trace(out_dir / "trace.csv", result.trace)
    write_diagram(out_dir / "embedding_diagram.json", result.diagram)
    write_checkpoint(out_dir / "network.json", network.to_checkpoint())
    if labels is not None:
        write_labels(out_dir / "labels.txt", labels)
    plot_embedding(
        out_dir / "embedding.svg",
        result.embedding,
        labels,
        title=f"lambda_topo={config.lambda_topo}, lambda_reg={config.lambda_reg}",
    )
    plot_loss_curves(out_dir / "loss_curves.svg", result.trace)

    input_top = top_finite_persistence(cloud.points, config.hom_dim)
    embedding_top = top_finite_persistence(result.embedding, config.hom_dim)
    summary = EmbeddingSummary(
        lambda_topo=config.lambda_topo,
        lambda_reg=config.lambda_reg,
        iterations=result.iterations,
        stop_reason=result.stop_reason.value,
        final_g=result.trace[-1].g_t1_wt1,
        first_descent_violation=result.first_descent_violation,
        input_top_persistence=input_top,
        embedding_top_persistence=embedding_top,
        persistence_ratio=embedding_top / input_top if input_top > 0 else float("nan"),
        out_dir=str(out_dir),
    )
    write_json(out_dir / "summary.json", asdict(summary))
    return summary, result


def trace_artifacts(records, out_dir: Union[str, Path]) -> List[Path]:
    out_dir = Path(out_dir)
    return [
        plot_loss_curves(out_dir / "loss_curves.svg", records),
        plot_configuration_updates(out_dir / "configuration_updates.svg", records),
    ]


def _cell_name(lambda_topo: float, lambda_reg: float) -> str:
    return f"topo_{lambda_topo:g}_reg_{lambda_reg:g}"


def _run_cell(config: RunConfig, out_dir: Path) -> EmbeddingSummary:
    summary, _ = run_embedding(config, out_dir)
    return summary


def run_sweep(
    config: RunConfig,
    out_dir: Union[str, Path],
    grid: Sequence[Tuple[float, float]] = SWEEP_GRID,
    n_jobs: int = -1,
) -> List[EmbeddingSummary]:
    """One independent embedding run per (lambda_topo, lambda_reg) cell."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = [
        (config.model_copy(update={"lambda_topo": topo, "lambda_reg": reg}), out_dir / _cell_name(topo, reg))
        for topo, reg in grid
    ]
    logger.info(f"Sweeping {len(cells)} cells with n_jobs={n_jobs}")
    summaries = Parallel(n_jobs=n_jobs)(delayed(_run_cell)(cell, path) for cell, path in cells)
    write_summary(out_dir / "summary.csv", summaries)
    return list(summaries)


def write_summary(path: Path, summaries: Sequence[EmbeddingSummary]) -> Path:
    columns = list(EmbeddingSummary.__dataclass_fields__)
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for summary in summaries:
            writer.writerow(asdict(summary))
    return path
