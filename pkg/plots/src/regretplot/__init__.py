"""Figures for phased-elimination regret summaries, decoupled from the simulator."""

from .figures import (
    DEFAULT_COLORS,
    DEFAULT_LABELS,
    SUMMARY_COLUMNS,
    FigureSpec,
    SummarySchemaError,
    load_summary,
    plot_summary,
    render_summary,
)

__all__ = [
    "DEFAULT_COLORS",
    "DEFAULT_LABELS",
    "SUMMARY_COLUMNS",
    "FigureSpec",
    "SummarySchemaError",
    "load_summary",
    "plot_summary",
    "render_summary",
]

__version__ = "0.1.0"
