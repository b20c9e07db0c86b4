"""CSV-to-PNG figure rendering for the execution solver's examples."""

from .recipes import EXPECTED_CSVS, RECIPES, FigureRecipe, Series
from .render import MissingInputError, read_table, render, render_one

__version__ = "0.1.0"
