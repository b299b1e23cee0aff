import logging
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .complex_core import PointCloud
from .errors import InvalidInputError

logger = logging.getLogger(__name__)


class CirclesConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_per_circle: int = Field(default=100, ge=3)
    radii: Tuple[float, float] = (1.0, 2.0)
    noise: float = Field(default=0.05, ge=0.0)
    z_offset: float = 0.5
    seed: int = 0

    @model_validator(mode="after")
    def distinct_positive_radii(self):
        r1, r2 = self.radii
        if r1 <= 0 or r2 <= 0 or r1 == r2:
            raise ValueError(f"radii must be positive and distinct, got {self.radii}")
        return self


def generate_nested_circles(
    n_per_circle: int = 100,
    radii: Tuple[float, float] = (1.0, 2.0),
    noise: float = 0.05,
    seed: int = 0,
    z_offset: float = 0.5,
) -> Tuple[PointCloud, np.ndarray]:
    """Two concentric circles in R^3, the outer one lifted by z_offset.

    Points sit at evenly spaced angles; Gaussian jitter of scale ``noise`` is
    added to all three coordinates. Returns the cloud and a 0/1 label per
    point (inner circle first).
    """
    if n_per_circle < 3:
        raise InvalidInputError(f"n_per_circle must be >= 3, got {n_per_circle}")
    r1, r2 = radii
    if r1 <= 0 or r2 <= 0 or r1 == r2:
        raise InvalidInputError(f"radii must be positive and distinct, got {radii}")
    if noise < 0:
        raise InvalidInputError(f"noise must be non-negative, got {noise}")

    rng = np.random.default_rng(seed)
    angles = 2.0 * np.pi * np.arange(n_per_circle) / n_per_circle
    rings = []
    for radius, height in ((r1, 0.0), (r2, z_offset)):
        rings.append(
            np.column_stack(
                [radius * np.cos(angles), radius * np.sin(angles), np.full(n_per_circle, height)]
            )
        )
    points = np.vstack(rings)
    if noise > 0:
        points = points + rng.normal(scale=noise, size=points.shape)
    labels = np.repeat([0, 1], n_per_circle)
    logger.debug(f"Generated {points.shape[0]} points on circles of radii {r1}, {r2}")
    return PointCloud(points), labels


def circles_from_config(config: CirclesConfig) -> Tuple[PointCloud, np.ndarray]:
    return generate_nested_circles(
        n_per_circle=config.n_per_circle,
        radii=config.radii,
        noise=config.noise,
        seed=config.seed,
        z_offset=config.z_offset,
    )
