"""Render regret curves from phased-elimination summary CSVs.

The input contract is a CSV with columns ``algorithm, round, mean, std, m,
normalized`` and one row per (algorithm, round): ``mean`` and ``std`` are the
across-replication mean and standard deviation of cumulative joint
pseudo-regret at that round, ``m`` is the number of agents, and ``normalized``
is 1 when the values are already per-agent.  Figures are rendered from the CSV
alone; nothing here imports or re-runs the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import matplotlib as mpl
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

__all__ = [
    "SUMMARY_COLUMNS",
    "SummarySchemaError",
    "FigureSpec",
    "load_summary",
    "render_summary",
    "plot_summary",
]

#: Required columns of a summary CSV, in producer order.
SUMMARY_COLUMNS = ("algorithm", "round", "mean", "std", "m", "normalized")

#: Stable default colors for the known algorithm identifiers.
DEFAULT_COLORS: Mapping[str, str] = {
    "cppe": "#1f77b4",
    "fedpe": "#d62728",
    "indpe": "#2ca02c",
}

#: Human-readable default legend labels for the known algorithm identifiers.
DEFAULT_LABELS: Mapping[str, str] = {
    "cppe": "collaborative-personalized",
    "fedpe": "federated",
    "indpe": "independent",
}

_FALLBACK_CYCLE = ("#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

#: Fixed salt so SVG element ids do not change between identical renders.
_SVG_HASHSALT = "regretplot"


class SummarySchemaError(ValueError):
    """The summary CSV does not match the expected column schema."""


@dataclass
class FigureSpec:
    """Everything needed to turn one summary CSV into one figure.

    ``labels`` and ``colors`` map algorithm identifiers to legend text and
    line colors; identifiers absent from the maps fall back to built-in
    defaults.  ``normalize`` divides curves by the agent count ``m`` so the
    y-axis reads per-agent regret (rows already marked normalized are left
    untouched).
    """

    summary_path: Path
    out_path: Path
    normalize: bool = False
    labels: Mapping[str, str] = field(default_factory=dict)
    colors: Mapping[str, str] = field(default_factory=dict)
    title: str | None = None

    def __post_init__(self) -> None:
        self.summary_path = Path(self.summary_path)
        self.out_path = Path(self.out_path)
        if not self.summary_path.is_file():
            raise FileNotFoundError(f"summary CSV not found: {self.summary_path}")


def load_summary(path: Path | str) -> pd.DataFrame:
    """Read and validate a summary CSV, returning its frame unmodified."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"summary CSV not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as err:
        raise SummarySchemaError(f"cannot parse summary CSV {path}: {err}") from None
    missing = [c for c in SUMMARY_COLUMNS if c not in frame.columns]
    if missing:
        raise SummarySchemaError(
            f"summary CSV {path} is missing columns {missing}; "
            f"expected {list(SUMMARY_COLUMNS)}, found {list(frame.columns)}"
        )
    if frame.empty:
        raise SummarySchemaError(f"summary CSV {path} has no data rows")
    return frame


def _label_for(spec: FigureSpec, algorithm: str) -> str:
    if algorithm in spec.labels:
        return spec.labels[algorithm]
    return DEFAULT_LABELS.get(algorithm, algorithm)


def _color_for(spec: FigureSpec, algorithm: str, index: int) -> str:
    if algorithm in spec.colors:
        return spec.colors[algorithm]
    if algorithm in DEFAULT_COLORS:
        return DEFAULT_COLORS[algorithm]
    return _FALLBACK_CYCLE[index % len(_FALLBACK_CYCLE)]


def render_summary(spec: FigureSpec) -> tuple[plt.Figure, plt.Axes]:
    """Build the figure for *spec* and return it open, for saving or inspection.

    One mean curve is drawn per algorithm, in CSV order, with a shaded band at
    mean +/- one standard deviation whenever the band has positive height.
    The caller owns the returned figure and should close it when done.
    """
    frame = load_summary(spec.summary_path)
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    per_agent = True
    for index, algorithm in enumerate(dict.fromkeys(frame["algorithm"])):
        rows = frame[frame["algorithm"] == algorithm].sort_values("round")
        rounds = rows["round"].to_numpy(dtype=float)
        mean = rows["mean"].to_numpy(dtype=float)
        std = rows["std"].to_numpy(dtype=float)
        already = rows["normalized"].to_numpy(dtype=float) != 0
        if spec.normalize:
            scale = np.where(already, 1.0, rows["m"].to_numpy(dtype=float))
            mean = mean / scale
            std = std / scale
        elif not already.all():
            per_agent = False
        color = _color_for(spec, str(algorithm), index)
        ax.plot(rounds, mean, color=color, label=_label_for(spec, str(algorithm)))
        if (std > 0).any():
            ax.fill_between(
                rounds, mean - std, mean + std, color=color, alpha=0.25, linewidth=0
            )
    ax.set_xlabel("round")
    if spec.normalize or per_agent:
        ax.set_ylabel("cumulative regret per agent")
    else:
        ax.set_ylabel("cumulative joint regret")
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig, ax


def _savefig_options(out_path: Path) -> dict:
    fmt = out_path.suffix.lower().lstrip(".") or "svg"
    options: dict = {"format": fmt, "dpi": 150}
    # Strip the embedded creation timestamp so identical inputs yield
    # identical bytes.
    if fmt == "svg":
        options["metadata"] = {"Date": None}
    elif fmt == "pdf":
        options["metadata"] = {"CreationDate": None}
    return options


def plot_summary(spec: FigureSpec) -> Path:
    """Render *spec* and write the image to ``spec.out_path``, returning it.

    The output format follows the file extension (vector formats such as
    ``.svg`` or ``.pdf`` preserve detail best).  Saving is deterministic:
    rendering the same CSV twice produces byte-identical files.
    """
    fig, _ = render_summary(spec)
    try:
        with mpl.rc_context({"svg.hashsalt": _SVG_HASHSALT}):
            fig.savefig(spec.out_path, **_savefig_options(spec.out_path))
    finally:
        plt.close(fig)
    return spec.out_path
