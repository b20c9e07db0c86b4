"""Pure CSV-to-PNG rendering of the solver's example outputs.

No model quantities are recomputed here: the renderer reads the CSVs the
solver CLI wrote and draws them with a fixed style, so reruns on identical
inputs produce byte-identical images.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .recipes import EXPECTED_CSVS, RECIPES, FigureRecipe  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "crossexec-figs",
}


class MissingInputError(FileNotFoundError):
    """Expected example CSVs are absent."""


def read_table(path: Path) -> tuple[list[str], np.ndarray]:
    """Read a solver CSV: '#' comment lines, one header row, float data."""
    header: list[str] | None = None
    rows: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise ValueError(f"{path}: no tabular content")
    return header, np.asarray(rows)


def render_one(recipe: FigureRecipe, example_dir: Path, out_dir: Path) -> Path:
    header, data = read_table(example_dir / recipe.csv_name)
    missing = [s.column for s in recipe.series if s.column not in header]
    if recipe.x_column not in header:
        missing.insert(0, recipe.x_column)
    if missing:
        raise ValueError(
            f"{recipe.csv_name}: columns {missing} not found in {header}"
        )
    if recipe.drop_pre_row:
        data = data[1:]
    x = data[:, header.index(recipe.x_column)]

    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for series in recipe.series:
            ax.plot(x, data[:, header.index(series.column)], series.style,
                    label=series.label, linewidth=1.4)
        ax.set_xlabel(recipe.xlabel)
        ax.set_ylabel(recipe.ylabel)
        ax.set_title(recipe.title)
        ax.axhline(0.0, color="black", linewidth=0.6)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        out_path = out_dir / f"{recipe.fig_id}.png"
        fig.savefig(out_path, format="png", metadata={"Software": None})
        plt.close(fig)
    return out_path


def render(example_dir: Path | str, out_dir: Path | str) -> list[Path]:
    """Render every figure from the example CSVs; returns the written paths.

    All expected inputs are checked up front: a missing CSV aborts the run
    with the full list of absent files.
    """
    example_dir = Path(example_dir)
    out_dir = Path(out_dir)
    missing = [name for name in EXPECTED_CSVS if not (example_dir / name).exists()]
    if missing:
        raise MissingInputError(
            f"missing example CSVs in {example_dir}: {', '.join(sorted(missing))}"
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    return [render_one(recipe, example_dir, out_dir) for recipe in RECIPES]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="crossexec-figs", description="Render example CSVs to PNG figures"
    )
    parser.add_argument("example_dir", help="directory with the solver's example CSVs")
    parser.add_argument("out_dir", help="directory for the PNG output")
    args = parser.parse_args(argv)
    try:
        paths = render(args.example_dir, args.out_dir)
    except (MissingInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
