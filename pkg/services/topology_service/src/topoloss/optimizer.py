"""
Gradient descent on the topology-regularized loss.

Each iteration evaluates three numbers: the loss at the current weights with
the current configuration, the same frozen configuration after the step, and
the next configuration at the new weights. The third value becomes the next
iteration's first, which check_trace verifies.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .complex_core import attributed_values, build_rips
from .errors import InvalidInputError, NonFiniteLossError
from .model import AffinityMatrices, DenseNetwork, compute_P, resolve_perplexity, supervision_loss_and_grad
from .persistence import PersistenceDiagram, compute_persistence, compute_persistence_dim0
from .topo_loss import (
    Configuration,
    GroundTruthDiagram,
    LossBreakdown,
    LossWeights,
    eval_loss,
    grad_loss,
    snapshot_configuration,
)

logger = logging.getLogger(__name__)

DESCENT_TOLERANCE = 1e-9


class TheoremConstants(BaseModel):
    """Smoothness constants behind the guaranteed step size.

    ell0, ell1, ell2 bound the supervised loss and its first two
    derivatives, c_x bounds the filtration map, b is the ground-truth size
    and k the regularization exponent.
    """

    model_config = ConfigDict(frozen=True)

    ell0: Optional[float] = Field(default=None, gt=0.0)
    ell1: Optional[float] = Field(default=None, gt=0.0)
    ell2: float = Field(gt=0.0)
    c_x: float = Field(gt=0.0)
    b: int = Field(ge=0)
    k: int = Field(default=2, ge=1)

    def c0(self, lambda_topo: float, lambda_reg: float) -> float:
        if self.ell0 is None:
            raise InvalidInputError("c0 needs ell0")
        return self.ell0 + lambda_reg * self.c_x + lambda_topo * self.b

    def c1(self, lambda_topo: float, lambda_reg: float) -> float:
        if self.ell1 is None:
            raise InvalidInputError("c1 needs ell1")
        return self.ell1 + 2 * lambda_reg * self.k * self.c_x + 2 * lambda_topo * self.k * self.b

    def c2(self, lambda_topo: float, lambda_reg: float) -> float:
        return (
            self.ell2
            + 2 * lambda_reg * self.k * (self.k + 1) * self.c_x
            + 2 * lambda_topo * self.k * self.b
        )


def step_size_terms(
    constants: TheoremConstants,
    lambda_topo: float,
    lambda_reg: float,
    epsilon: float,
) -> Tuple[float, float, float]:
    """The three candidates: smoothness, topology and regularization terms.

    A candidate whose denominator vanishes (a zero weight or b = 0) is inf.
    """
    if epsilon <= 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    if lambda_topo < 0 or lambda_reg < 0:
        raise InvalidInputError("Loss weights must be non-negative")
    root = math.sqrt(epsilon)
    smooth = 1.0 / (2.0 * constants.c2(lambda_topo, lambda_reg))
    topo_denominator = 1024.0 * lambda_topo ** 2 * constants.b ** 2
    reg_denominator = 16.0 * lambda_reg ** 2 * constants.k ** 2 * constants.c_x ** 2
    topo = root / topo_denominator if topo_denominator > 0 else math.inf
    reg = root / reg_denominator if reg_denominator > 0 else math.inf
    return smooth, topo, reg


def theorem_step_size(
    constants: TheoremConstants,
    lambda_topo: float,
    lambda_reg: float,
    epsilon: float,
) -> float:
    """Largest step size for which the descent guarantee applies."""
    return min(step_size_terms(constants, lambda_topo, lambda_reg, epsilon))


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    eta: Union[float, Literal["theorem"]] = 0.25
    epsilon: float = Field(default=1e-9, gt=0.0)
    max_iters: int = Field(default=2000, ge=1)
    lambda_topo: float = Field(default=0.0005, ge=0.0)
    lambda_reg: float = Field(default=0.005, ge=0.0)
    k: int = Field(default=2, ge=1)
    seed: int = 0
    perplexity: float = Field(default=30.0, gt=1.0)
    hom_dim: int = Field(default=0, ge=0, le=1)
    max_radius: Optional[float] = Field(default=None, gt=0.0)
    theorem_constants: Optional[TheoremConstants] = None
    log_every: int = Field(default=100, ge=1)

    @field_validator("eta")
    @classmethod
    def eta_positive(cls, value):
        if value != "theorem" and not value > 0:
            raise ValueError("eta must be positive or 'theorem'")
        return value

    @model_validator(mode="after")
    def theorem_needs_constants(self):
        if self.eta == "theorem" and self.theorem_constants is None:
            raise ValueError("eta='theorem' requires theorem_constants")
        return self

    @property
    def weights(self) -> LossWeights:
        return LossWeights(lambda_topo=self.lambda_topo, lambda_reg=self.lambda_reg, k=self.k)

    def resolved_eta(self) -> float:
        if self.eta != "theorem":
            return float(self.eta)
        return theorem_step_size(self.theorem_constants, self.lambda_topo, self.lambda_reg, self.epsilon)


class StopReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max-iters"


@dataclass(frozen=True)
class TraceRecord:
    t: int
    g_t_wt: float
    g_t_wt1: float
    g_t1_wt1: float
    l_supv: float
    l_topo: float
    l_reg: float
    eta: float
    step_norm: Optional[float] = None
    phases: Optional[Tuple[LossBreakdown, LossBreakdown, LossBreakdown]] = field(default=None, compare=False)

    @property
    def decrease(self) -> float:
        return self.g_t_wt - self.g_t_wt1

    @property
    def configuration_increase(self) -> float:
        return self.g_t1_wt1 - self.g_t_wt1


@dataclass
class RunResult:
    parameters: np.ndarray
    trace: List[TraceRecord]
    stop_reason: StopReason
    eta: float
    embedding: np.ndarray
    diagram: PersistenceDiagram
    first_descent_violation: Optional[int] = None

    @property
    def iterations(self) -> int:
        return len(self.trace)


def current_diagram(Y: np.ndarray, hom_dim: int, max_radius: Optional[float] = None):
    radius = np.inf if max_radius is None else max_radius
    filtration = build_rips(Y, max_dim=hom_dim + 1, max_radius=radius)
    if hom_dim == 0:
        return filtration, compute_persistence_dim0(filtration)
    return filtration, compute_persistence(filtration, hom_dim)


def _snapshot(t: int, Y: np.ndarray, truth: GroundTruthDiagram, config: OptimizerConfig) -> Configuration:
    filtration, diagram = current_diagram(Y, truth.hom_dim, config.max_radius)
    return snapshot_configuration(t, filtration, diagram, truth)


def _finite_or_raise(breakdown: LossBreakdown, t: int) -> None:
    for name, value in (("L_supv", breakdown.l_supv), ("L_topo", breakdown.l_topo), ("L_reg", breakdown.l_reg)):
        if not math.isfinite(value):
            raise NonFiniteLossError(name, t)


def run(
    X: np.ndarray,
    truth: GroundTruthDiagram,
    network: DenseNetwork,
    config: OptimizerConfig,
    affinities: Optional[AffinityMatrices] = None,
) -> RunResult:
    """Train ``network`` on X until |G_t(W_t+1) - G_t(W_t)| <= epsilon or max_iters."""
    X = np.asarray(X, dtype=float)
    if truth.hom_dim != config.hom_dim:
        raise InvalidInputError(
            f"Ground truth is {truth.hom_dim}-dimensional but the run optimizes dimension {config.hom_dim}"
        )
    if affinities is None:
        affinities = compute_P(X, resolve_perplexity(config.perplexity, X.shape[0]))
    eta = config.resolved_eta()
    weights = config.weights
    constants = config.theorem_constants
    if config.eta == "theorem" and (constants.b != truth.size or constants.k != config.k):
        logger.warning(
            f"Step-size constants assume b={constants.b}, k={constants.k}; "
            f"run uses b={truth.size}, k={config.k}"
        )
    logger.info(
        f"Optimizing {network.n_parameters} parameters on {X.shape[0]} samples: "
        f"eta={eta:.6g}, epsilon={config.epsilon}, lambda_topo={config.lambda_topo}, "
        f"lambda_reg={config.lambda_reg}, k={config.k}"
    )

    W = network.get_parameters()
    Y = network.forward(X)
    supervision, supervision_grad = supervision_loss_and_grad(affinities, Y)
    configuration = _snapshot(0, Y, truth, config)
    at_current = eval_loss(configuration, configuration.values, supervision, truth, weights)
    _finite_or_raise(at_current, 0)

    trace: List[TraceRecord] = []
    first_violation: Optional[int] = None
    stop_reason = StopReason.MAX_ITERS
    for t in range(config.max_iters):
        gradient = grad_loss(configuration, Y, supervision_grad, network.backward, truth, weights)
        if not np.all(np.isfinite(gradient)):
            raise NonFiniteLossError("gradient", t)
        W_next = W - eta * gradient
        network.set_parameters(W_next)
        Y_next = network.forward(X)
        supervision_next, supervision_grad_next = supervision_loss_and_grad(affinities, Y_next)

        frozen_values = attributed_values(configuration.filtration, Y_next)
        at_frozen = eval_loss(configuration, frozen_values, supervision_next, truth, weights)
        next_configuration = _snapshot(t + 1, Y_next, truth, config)
        at_next = eval_loss(next_configuration, next_configuration.values, supervision_next, truth, weights)
        _finite_or_raise(at_frozen, t)
        _finite_or_raise(at_next, t)

        trace.append(
            TraceRecord(
                t=t,
                g_t_wt=at_current.g,
                g_t_wt1=at_frozen.g,
                g_t1_wt1=at_next.g,
                l_supv=at_current.l_supv,
                l_topo=at_current.l_topo,
                l_reg=at_current.l_reg,
                eta=eta,
                step_norm=float(np.linalg.norm(W_next - W)),
                phases=(at_current, at_frozen, at_next),
            )
        )
        if at_frozen.g > at_current.g + DESCENT_TOLERANCE and first_violation is None:
            first_violation = t
            logger.warning(
                f"Loss increased under a frozen configuration at iteration {t}: "
                f"{at_current.g:.10g} -> {at_frozen.g:.10g}; eta={eta:.6g} may be too large"
            )
        if t % config.log_every == 0:
            logger.info(
                f"t={t} G={at_current.g:.8f} L_supv={at_current.l_supv:.6f} "
                f"L_topo={at_current.l_topo:.6f} L_reg={at_current.l_reg:.6f}"
            )

        converged = abs(at_frozen.g - at_current.g) <= config.epsilon
        W, Y = W_next, Y_next
        supervision_grad = supervision_grad_next
        configuration, at_current = next_configuration, at_next
        if converged:
            stop_reason = StopReason.CONVERGED
            break

    logger.info(f"Stopped after {len(trace)} iterations ({stop_reason.value}), G={at_current.g:.8f}")
    return RunResult(
        parameters=W,
        trace=trace,
        stop_reason=stop_reason,
        eta=eta,
        embedding=Y,
        diagram=configuration.diagram,
        first_descent_violation=first_violation,
    )


@dataclass(frozen=True)
class PropertyCheck:
    name: str
    passed: bool
    first_violation: Optional[int] = None
    detail: str = ""


@dataclass(frozen=True)
class TraceReport:
    checks: Tuple[PropertyCheck, ...]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def get(self, name: str) -> PropertyCheck:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)


def _first_failure(rows: Sequence[TraceRecord], predicate) -> Optional[int]:
    for row in rows:
        if not predicate(row):
            return row.t
    return None


def _check(name: str, rows: Sequence[TraceRecord], predicate, detail: str = "") -> PropertyCheck:
    failure = _first_failure(rows, predicate)
    return PropertyCheck(name, failure is None, failure, detail)


def check_trace(
    records: Sequence[TraceRecord],
    epsilon: Optional[float] = None,
    tolerance: float = DESCENT_TOLERANCE,
) -> TraceReport:
    """Verify the descent properties a run at a safe step size must satisfy."""
    if not records:
        raise InvalidInputError("A trace needs at least one record")
    rows = list(records)
    checks = [
        _check(
            "frozen_descent",
            rows,
            lambda r: r.g_t_wt - r.g_t_wt1 >= -tolerance,
            "G_t(W_t+1) <= G_t(W_t)",
        ),
        _check(
            "configuration_increase_bounded",
            rows,
            lambda r: r.configuration_increase <= r.decrease + tolerance,
            "G_t+1(W_t+1) - G_t(W_t+1) <= G_t(W_t) - G_t(W_t+1)",
        ),
    ]

    if epsilon is None:
        checks.append(PropertyCheck("decrease_before_stop", True, None, "no epsilon given"))
    else:
        stop_row = next(
            (i for i, r in enumerate(rows) if abs(r.g_t_wt1 - r.g_t_wt) <= epsilon), len(rows)
        )
        checks.append(
            _check(
                "decrease_before_stop",
                rows[:stop_row],
                lambda r: r.g_t_wt - r.g_t1_wt1 >= epsilon / 2.0 - tolerance,
                f"G_t(W_t) - G_t+1(W_t+1) >= {epsilon / 2.0:g} before the stop row",
            )
        )

    stitch_failure = next(
        (previous.t for previous, current in zip(rows, rows[1:]) if previous.g_t1_wt1 != current.g_t_wt),
        None,
    )
    checks.append(
        PropertyCheck(
            "trace_stitching",
            stitch_failure is None,
            stitch_failure,
            "G_t+1(W_t+1) of a row equals G_t(W_t) of the next",
        )
    )

    with_steps = [r for r in rows if r.step_norm is not None]
    checks.append(
        _check(
            "improve_or_localize",
            with_steps,
            lambda r: r.step_norm ** 2 <= 4.0 * r.eta * r.decrease + tolerance,
            "||W_t+1 - W_t||^2 <= 4 eta (G_t(W_t) - G_t(W_t+1))",
        )
    )
    return TraceReport(tuple(checks))


def fit_inverse_epsilon(
    epsilons: Sequence[float],
    iterations: Sequence[int],
    slack: float = 4.0,
) -> Tuple[float, bool]:
    """Check that iteration counts grow no faster than c / epsilon.

    c is anchored on the largest epsilon; every run must satisfy
    n_i <= slack * c / epsilon_i.
    """
    if len(epsilons) != len(iterations) or not epsilons:
        raise InvalidInputError("Need matching, non-empty epsilon and iteration lists")
    if min(epsilons) <= 0:
        raise InvalidInputError("Epsilons must be positive")
    anchor = int(np.argmax(epsilons))
    c = iterations[anchor] * epsilons[anchor]
    passed = all(n <= slack * c / eps for eps, n in zip(epsilons, iterations))
    logger.info(f"Iterations vs 1/epsilon: c={c:.4g}, within slack {slack}: {passed}")
    return c, passed
