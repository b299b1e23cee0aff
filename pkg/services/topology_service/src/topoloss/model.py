"""
Embedding network and t-SNE supervision.

DenseNetwork maps rows of X (samples) to rows of Y. Weights have shape
(in, out), so a layer computes A @ W + b. compute_P calibrates Gaussian
affinities to a perplexity, compute_Q gives the Student-t affinities of an
embedding, and supervision_loss_and_grad returns KL(P || Q) with its
gradient w.r.t. Y.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import InvalidInputError, NetworkStateError

logger = logging.getLogger(__name__)

N_LAYERS = 4
SIGMA_FLOOR = 1e-12
LOG_BETA_RANGE = 40.0


class Activation(str, Enum):
    TANH = "tanh"
    LINEAR = "linear"


class NetworkConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    hidden: Tuple[int, int, int] = (32, 32, 32)
    out_dim: int = Field(default=2, ge=1)
    activation: Activation = Activation.TANH
    init_scale: float = Field(default=0.1, gt=0.0)


class DenseNetwork:
    """Four fully connected layers, activation on the three hidden ones."""

    def __init__(
        self,
        layer_sizes: Sequence[int],
        seed: int,
        activation: Activation = Activation.TANH,
        init_scale: float = 0.1,
    ):
        layer_sizes = tuple(int(size) for size in layer_sizes)
        if len(layer_sizes) != N_LAYERS + 1 or min(layer_sizes) < 1:
            raise InvalidInputError(
                f"Expected {N_LAYERS + 1} positive layer sizes, got {layer_sizes}"
            )
        self.layer_sizes = layer_sizes
        self.activation = Activation(activation)
        self.seed = seed
        self.init_scale = init_scale
        rng = np.random.default_rng(seed)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            self.weights.append(rng.uniform(-init_scale, init_scale, size=(n_in, n_out)))
            self.biases.append(rng.uniform(-init_scale, init_scale, size=n_out))
        self._activations: Optional[List[np.ndarray]] = None

    @classmethod
    def from_config(cls, config: NetworkConfig, d_in: int, seed: int) -> "DenseNetwork":
        sizes = (d_in, *config.hidden, config.out_dim)
        return cls(sizes, seed=seed, activation=config.activation, init_scale=config.init_scale)

    @property
    def d_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def d_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_parameters(self) -> np.ndarray:
        return np.concatenate([part for w, b in zip(self.weights, self.biases) for part in (w.ravel(), b)])

    def set_parameters(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_parameters,):
            raise InvalidInputError(f"Expected {self.n_parameters} parameters, got shape {flat.shape}")
        offset = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[offset:offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[i] = flat[offset:offset + b.size].copy()
            offset += b.size
        self._activations = None

    def _activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == Activation.TANH:
            return np.tanh(z)
        return z

    def forward(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d_in:
            raise InvalidInputError(f"Expected inputs of shape (n, {self.d_in}), got {X.shape}")
        activations = [X]
        current = X
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            current = current @ w + b
            if layer < N_LAYERS - 1:
                current = self._activate(current)
            activations.append(current)
        self._activations = activations
        return current

    def backward(self, dY: np.ndarray) -> np.ndarray:
        """Parameter gradient for upstream dY, using the last forward pass."""
        if self._activations is None:
            raise NetworkStateError("backward called without a forward pass at the current parameters")
        dY = np.asarray(dY, dtype=float)
        if dY.shape != self._activations[-1].shape:
            raise NetworkStateError(
                f"Upstream gradient shape {dY.shape} does not match output {self._activations[-1].shape}"
            )
        grads_w: List[np.ndarray] = [None] * N_LAYERS
        grads_b: List[np.ndarray] = [None] * N_LAYERS
        delta = dY
        for layer in reversed(range(N_LAYERS)):
            if layer < N_LAYERS - 1 and self.activation == Activation.TANH:
                output = self._activations[layer + 1]
                delta = delta * (1.0 - output * output)
            grads_w[layer] = self._activations[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            delta = delta @ self.weights[layer].T
        return np.concatenate([part for w, b in zip(grads_w, grads_b) for part in (w.ravel(), b)])

    def to_checkpoint(self) -> Dict[str, Any]:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation.value,
            "seed": self.seed,
            "init_scale": self.init_scale,
            "parameters": self.get_parameters().tolist(),
        }

    @classmethod
    def from_checkpoint(cls, checkpoint: Dict[str, Any]) -> "DenseNetwork":
        try:
            network = cls(
                checkpoint["layer_sizes"],
                seed=checkpoint["seed"],
                activation=checkpoint["activation"],
                init_scale=checkpoint["init_scale"],
            )
            network.set_parameters(np.array(checkpoint["parameters"], dtype=float))
        except KeyError as e:
            raise InvalidInputError(f"Checkpoint is missing {e}") from e
        return network


@dataclass(frozen=True, eq=False)
class AffinityMatrices:
    P: Optional[np.ndarray] = None
    Q: Optional[np.ndarray] = None
    conditional: Optional[np.ndarray] = None
    sigmas: Optional[np.ndarray] = None


def resolve_perplexity(requested: float, n_points: int) -> float:
    """Cap the perplexity at n/3; small samples cannot support the default."""
    perplexity = min(float(requested), n_points / 3.0)
    if perplexity <= 1.0:
        raise InvalidInputError(
            f"Perplexity {perplexity:.3g} for {n_points} points is too small; need more points"
        )
    if perplexity < requested:
        logger.info(f"Perplexity lowered from {requested} to {perplexity:.3f} for {n_points} points")
    return perplexity


def _squared_distances(X: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - X[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _row_distribution(shifted: np.ndarray, beta: float) -> Tuple[np.ndarray, float]:
    weights = np.exp(-beta * shifted)
    row = weights / weights.sum()
    positive = row[row > 0]
    entropy = float(-np.sum(positive * np.log(positive)))
    return row, float(np.exp(entropy))


def _calibrate_row(
    distances: np.ndarray,
    perplexity: float,
    tolerance: float,
    max_steps: int,
) -> Tuple[np.ndarray, float]:
    """Row of conditional affinities whose perplexity matches the target.

    Bisection on log(beta) with beta = 1 / (2 sigma^2). Returns the row and
    beta; unreachable targets clamp to the floor sigma or the uniform row.
    """
    shifted = distances - distances.min()
    positive = shifted[shifted > 0]
    scale = float(np.median(positive)) if positive.size else 1.0
    floor_beta = 1.0 / (2.0 * SIGMA_FLOOR * SIGMA_FLOOR)

    lo, hi = -LOG_BETA_RANGE, LOG_BETA_RANGE
    row, reached = _row_distribution(shifted, np.exp(hi) / scale)
    if reached > perplexity + tolerance:
        row, _ = _row_distribution(shifted, floor_beta)
        return row, floor_beta
    row, reached = _row_distribution(shifted, np.exp(lo) / scale)
    if reached < perplexity - tolerance:
        return row, np.exp(lo) / scale

    beta = np.exp(lo) / scale
    for _ in range(max_steps):
        mid = (lo + hi) / 2.0
        beta = np.exp(mid) / scale
        row, reached = _row_distribution(shifted, beta)
        if abs(reached - perplexity) <= tolerance:
            break
        if reached > perplexity:
            lo = mid
        else:
            hi = mid
    return row, float(beta)


def compute_P(
    X: np.ndarray,
    perplexity: float = 30.0,
    tolerance: float = 1e-5,
    max_steps: int = 50,
) -> AffinityMatrices:
    """Symmetrized Gaussian affinities P = (P_j|i + P_i|j) / 2n."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 3:
        raise InvalidInputError("compute_P needs at least 3 samples")
    n = X.shape[0]
    if not 1.0 < perplexity < n:
        raise InvalidInputError(f"Perplexity must lie in (1, {n}), got {perplexity}")
    squared = _squared_distances(X)
    conditional = np.zeros((n, n))
    sigmas = np.zeros(n)
    for i in range(n):
        others = np.arange(n) != i
        row, beta = _calibrate_row(squared[i, others], perplexity, tolerance, max_steps)
        conditional[i, others] = row
        sigmas[i] = max(np.sqrt(1.0 / (2.0 * beta)), SIGMA_FLOOR)
    P = (conditional + conditional.T) / (2.0 * n)
    logger.debug(f"Calibrated {n} rows at perplexity {perplexity}; median sigma {np.median(sigmas):.4g}")
    return AffinityMatrices(P=P, conditional=conditional, sigmas=sigmas)


def _student_t(Y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    numerator = 1.0 / (1.0 + _squared_distances(Y))
    np.fill_diagonal(numerator, 0.0)
    return numerator, numerator / numerator.sum()


def compute_Q(Y: np.ndarray) -> AffinityMatrices:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise InvalidInputError("compute_Q needs at least 2 embedded points")
    _, Q = _student_t(Y)
    return AffinityMatrices(Q=Q)


def supervision_loss_and_grad(
    P: Union[AffinityMatrices, np.ndarray],
    Y: np.ndarray,
) -> Tuple[float, np.ndarray]:
    if isinstance(P, AffinityMatrices):
        P = P.P
    Y = np.asarray(Y, dtype=float)
    if P is None or P.shape != (Y.shape[0], Y.shape[0]):
        raise InvalidInputError("P must be an n x n matrix matching the embedding")
    numerator, Q = _student_t(Y)
    support = P > 0
    loss = float(np.sum(P[support] * (np.log(P[support]) - np.log(Q[support]))))
    weighted = (P - Q) * numerator
    grad = 4.0 * (weighted.sum(axis=1)[:, None] * Y - weighted @ Y)
    return loss, grad
