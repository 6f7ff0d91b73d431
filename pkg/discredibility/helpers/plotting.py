"""
Optional rendering of curve CSVs to SVG. The CSV files are the artifacts;
figures are a convenience and never read back.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import pandas as pd


def render_curve(
    csv_file: Union[str, Path],
    x: str,
    ys: Sequence[str],
    log: bool = False,
    title: str = "",
) -> Path:
    """
    Draw the columns ``ys`` of a curve CSV against column ``x`` next to the
    CSV as ``<name>.svg``.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_file = Path(csv_file)
    frame = pd.read_csv(csv_file)
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for y in ys:
        ax.step(frame[x], frame[y], where="post", label=y)
    if log:
        ax.set_xscale("log")
        ax.set_yscale("log")
    else:
        ax.plot([0, 1], [0, 1], color="grey", linestyle=":", linewidth=0.8)
    ax.set_xlabel(x)
    ax.legend(loc="lower right")
    ax.set_title(title or csv_file.stem)
    svg_file = csv_file.with_suffix(".svg")
    # Fixed metadata keeps repeated renders identical.
    fig.savefig(svg_file, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return svg_file


def render_histogram(csv_file: Union[str, Path], title: str = "") -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    csv_file = Path(csv_file)
    frame = pd.read_csv(csv_file)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for group, rows in frame.groupby("group", sort=True):
        centers = 0.5 * (rows["bin_left"] + rows["bin_right"])
        ax.step(centers, rows["count"], where="mid", label=str(group))
    ax.set_xlabel("membership score")
    ax.set_ylabel("count")
    ax.legend()
    ax.set_title(title or csv_file.stem)
    svg_file = csv_file.with_suffix(".svg")
    fig.savefig(svg_file, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return svg_file
