"""Static SVG figures for embeddings and optimization traces."""

import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")  # headless
import matplotlib.pyplot as plt
import numpy as np

from .optimizer import TraceRecord

logger = logging.getLogger(__name__)

plt.rcParams.update(
    {
        "svg.hashsalt": "topoloss",
        "font.size": 10,
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)

PathLike = Union[str, Path]


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Wrote {path}")
    return path


def plot_embedding(path: PathLike, Y: np.ndarray, labels: Optional[Sequence[int]] = None, title: str = "") -> Path:
    Y = np.asarray(Y, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 5))
    colors = None if labels is None else np.asarray(labels)
    ax.scatter(Y[:, 0], Y[:, 1] if Y.shape[1] > 1 else np.zeros(len(Y)), c=colors, cmap="coolwarm", s=12)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_title(title or "Embedding")
    return _save(fig, path)


def plot_loss_curves(path: PathLike, records: Sequence[TraceRecord]) -> Path:
    """G_t(W_t) and G_t(W_t+1) per iteration, plus the three loss components."""
    t = np.array([r.t for r in records])
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    top.plot(t, [r.g_t_wt for r in records], label="G_t(W_t)")
    top.plot(t, [r.g_t_wt1 for r in records], label="G_t(W_t+1)", linestyle="--")
    top.set_ylabel("loss")
    top.legend()
    bottom.plot(t, [r.l_supv for r in records], label="L_supv")
    bottom.plot(t, [r.l_topo for r in records], label="L_topo")
    bottom.plot(t, [r.l_reg for r in records], label="L_reg")
    bottom.set_yscale("symlog", linthresh=1e-6)
    bottom.set_xlabel("iteration")
    bottom.legend()
    return _save(fig, path)


def plot_configuration_updates(path: PathLike, records: Sequence[TraceRecord]) -> Path:
    """Per-iteration decrease from the gradient step against the increase from the configuration update."""
    t = np.array([r.t for r in records])
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, [r.decrease for r in records], label="gradient-step decrease")
    ax.plot(t, [r.configuration_increase for r in records], label="configuration-update increase")
    ax.axhline(0.0, color="black", linewidth=0.5)
    ax.set_yscale("symlog", linthresh=1e-9)
    ax.set_xlabel("iteration")
    ax.legend()
    return _save(fig, path)
