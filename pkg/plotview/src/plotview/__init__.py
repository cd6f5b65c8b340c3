"""Figure rendering for randnls study CSVs."""

from .figures import (
    FIGURE_KINDS,
    EmptyDataError,
    FigureSpec,
    SchemaError,
    read_study_csv,
    render,
    render_all,
)

__version__ = "0.1.0"
