"""Checked-in mapping from figure ids to CSV columns and styling."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Series:
    column: str
    label: str
    style: str = "-"


@dataclass(frozen=True)
class FigureRecipe:
    fig_id: str
    csv_name: str
    title: str
    ylabel: str
    series: tuple[Series, ...]
    xlabel: str = "t"
    x_column: str = "t"
    drop_pre_row: bool = False  # solver CSVs carry the pre-trade state in row 0


def _trajectory(fig_id: str, title: str, prefix: str, ylabel: str) -> FigureRecipe:
    return FigureRecipe(
        fig_id=fig_id,
        csv_name=f"{fig_id}.csv",
        title=title,
        ylabel=ylabel,
        series=(
            Series(f"{prefix}_1", "asset 1"),
            Series(f"{prefix}_2", "asset 2", "--"),
        ),
        drop_pre_row=True,
    )


RECIPES: tuple[FigureRecipe, ...] = (
    FigureRecipe(
        fig_id="fig1",
        csv_name="fig1.csv",
        title="Deviation in asset 1 after coupled block trades",
        ylabel="deviation",
        series=(
            Series("D1_31", "trade (3,1)"),
            Series("D1_31_base", "(3,1) no coupling", ":"),
            Series("D1_13", "trade (1,3)"),
            Series("D1_13_base", "(1,3) no coupling", ":"),
            Series("D1_3m1", "trade (3,-1)"),
            Series("D1_3m1_base", "(3,-1) no coupling", ":"),
            Series("D1_1m3", "trade (1,-3)"),
            Series("D1_1m3_base", "(1,-3) no coupling", ":"),
        ),
    ),
    FigureRecipe(
        fig_id="fig2",
        csv_name="fig2.csv",
        title="Deviation after a block trade (10, 0)",
        ylabel="deviation",
        series=(Series("D_1", "asset 1"), Series("D_2", "asset 2", "--")),
    ),
    _trajectory("fig3", "Optimal positions, coupled resilience", "X", "position"),
    _trajectory("fig4", "Optimal positions, coupled risk", "X", "position"),
    FigureRecipe(
        fig_id="fig5",
        csv_name="fig5.csv",
        title="Optimal deviation, coupled risk",
        ylabel="deviation",
        series=(Series("D_1", "asset 1"), Series("D_2", "asset 2", "--")),
        drop_pre_row=True,
    ),
    _trajectory("fig6", "Optimal positions, rotating impact", "X", "position"),
    FigureRecipe(
        fig_id="fig7",
        csv_name="fig7.csv",
        title="Optimal deviation, rotating impact",
        ylabel="deviation",
        series=(Series("D_1", "asset 1"), Series("D_2", "asset 2", "--")),
        drop_pre_row=True,
    ),
    _trajectory("fig8", "Optimal positions, stochastic impact (one path)", "X", "position"),
)

EXPECTED_CSVS = tuple(recipe.csv_name for recipe in RECIPES)
