"""Figure rendering for experiment reports.

Every figure-producing command also writes the underlying numbers as CSV:
plots are pure views of logged data.  Figures are rendered headless to SVG
files; the SVG hash salt and metadata are pinned so identical data produces
identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "aquaswarm"

_SAVE_KW = dict(metadata={"Date": None}, bbox_inches="tight")


def save_figure(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return path


def plot_trajectories(trajectory: np.ndarray, out_svg, *, fence=None,
                      waypoints=None, title: str | None = None) -> Path:
    """Robot paths with start squares and end circles.

    ``trajectory`` uses the standard log layout: rows of
    (t, id, x, y, heading, speed).
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    ids = np.unique(trajectory[:, 1]).astype(int) if len(trajectory) else []
    cmap = plt.get_cmap("tab10")
    for k, rid in enumerate(ids):
        rows = trajectory[trajectory[:, 1] == rid]
        color = cmap(k % 10)
        ax.plot(rows[:, 2], rows[:, 3], "-", lw=0.8, color=color, alpha=0.9)
        ax.plot(rows[0, 2], rows[0, 3], "s", ms=6, color="black", mfc=color)
        ax.plot(rows[-1, 2], rows[-1, 3], "o", ms=6, color="red", mfc=color)
    if fence is not None:
        xy = np.array([(v.x, v.y) for v in fence.vertices] + [(fence.vertices[0].x,
                                                               fence.vertices[0].y)])
        ax.plot(xy[:, 0], xy[:, 1], "k--", lw=1.2)
    if waypoints is not None:
        wp = np.atleast_2d(np.asarray(waypoints, dtype=float))
        ax.plot(wp[:, 0], wp[:, 1], "o", ms=10, color="gold", mec="black", zorder=5)
        for i, (x, y) in enumerate(wp):
            ax.annotate(chr(ord("A") + i), (x, y), ha="center", va="center", fontsize=8)
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    return save_figure(fig, out_svg)


def plot_coverage(values: np.ndarray, origin, cell_size: float, out_svg, *,
                  fence=None, trajectory: np.ndarray | None = None,
                  title: str | None = None) -> Path:
    """Coverage heatmap ((nx, ny) cell values) with optional paths on top."""
    nx, ny = values.shape
    extent = (origin[0], origin[0] + nx * cell_size,
              origin[1], origin[1] + ny * cell_size)
    fig, ax = plt.subplots(figsize=(6.5, 6))
    im = ax.imshow(values.T, origin="lower", extent=extent, cmap="Blues",
                   vmin=0.0, vmax=1.0)
    fig.colorbar(im, ax=ax, label="coverage value")
    if trajectory is not None and len(trajectory):
        for rid in np.unique(trajectory[:, 1]).astype(int):
            rows = trajectory[trajectory[:, 1] == rid]
            ax.plot(rows[:, 2], rows[:, 3], "-", lw=0.6, color="red", alpha=0.7)
    if fence is not None:
        xy = np.array([(v.x, v.y) for v in fence.vertices] + [(fence.vertices[0].x,
                                                               fence.vertices[0].y)])
        ax.plot(xy[:, 0], xy[:, 1], "k-", lw=1.2)
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    return save_figure(fig, out_svg)


def plot_heatmap(values: np.ndarray, origin, cell_size: float, out_svg, *,
                 label: str = "", title: str | None = None,
                 sample_positions: np.ndarray | None = None) -> Path:
    """Generic field map (temperature predictions, kriging error std)."""
    nx, ny = values.shape
    extent = (origin[0], origin[0] + nx * cell_size,
              origin[1], origin[1] + ny * cell_size)
    fig, ax = plt.subplots(figsize=(6.5, 6))
    im = ax.imshow(values.T, origin="lower", extent=extent, cmap="viridis")
    fig.colorbar(im, ax=ax, label=label)
    if sample_positions is not None and len(sample_positions):
        ax.plot(sample_positions[:, 0], sample_positions[:, 1], ".",
                ms=1.5, color="white", alpha=0.6)
    ax.set_xlabel("east (m)")
    ax.set_ylabel("north (m)")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    return save_figure(fig, out_svg)


def plot_metric_series(series, out_svg, column: str | None = None,
                       ylabel: str = "", title: str | None = None,
                       events: list[tuple[float, str]] | None = None) -> Path:
    """One metric column over time, with optional event markers."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    names = [column] if column else sorted(series.columns)
    for name in names:
        ax.plot(series.times, series.columns[name], lw=1.2, label=name)
    if events:
        for t, label in events:
            ax.axvline(t, color="red", lw=0.8, ls="--", alpha=0.7)
            ax.annotate(label, (t, ax.get_ylim()[1]), fontsize=7,
                        ha="left", va="top", rotation=90)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(ylabel or (column or "value"))
    if len(names) > 1:
        ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    return save_figure(fig, out_svg)


def plot_fitness_curves(summaries: list[np.ndarray], best_indices: list[int],
                        out_svg, title: str | None = None) -> Path:
    """Best-so-far fitness per generation across runs.

    ``summaries`` holds one (generations,) best-fitness array per run; the
    running maximum is drawn.  Runs in ``best_indices`` are highlighted in
    red, the across-run mean in blue with a gray +-std band.
    """
    curves = [np.maximum.accumulate(s) for s in summaries]
    n_gen = min(len(c) for c in curves)
    curves = np.stack([c[:n_gen] for c in curves])
    gens = np.arange(n_gen)
    fig, ax = plt.subplots(figsize=(6.5, 4))
    mean = curves.mean(axis=0)
    std = curves.std(axis=0)
    ax.fill_between(gens, mean - std, mean + std, color="0.8", label="+- std")
    for i, c in enumerate(curves):
        if i not in best_indices:
            ax.plot(gens, c, color="0.55", lw=0.7, alpha=0.8)
    for i in best_indices:
        ax.plot(gens, curves[i], color="red", lw=1.4)
    ax.plot(gens, mean, color="blue", lw=1.6, label="mean of runs")
    ax.set_xlabel("generation")
    ax.set_ylabel("best fitness so far")
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    return save_figure(fig, out_svg)


def write_csv(path, header: str, rows: list[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join([header, *rows]) + "\n")
    return path
