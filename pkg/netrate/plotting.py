"""
Static SVG plots of experiment CSVs.
"""

import logging
from pathlib import Path
from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import rcParams
from matplotlib.figure import Figure

from .exceptions import PlotError
from .experiments import read_csv

logger = logging.getLogger(__name__)

PLOT_KINDS = ("rate", "tau", "rate-per-bs")

# Fixed salt and no date keep SVG output byte-stable
rcParams["svg.hashsalt"] = "netrate"
rcParams["svg.fonttype"] = "none"

X_LABELS = {
    "snr": "SNR (dB)",
    "tau": "Training length τ (channel uses)",
    "backhaul": "Backhaul capacity C (bits/channel use)",
}

# kind -> (line column, marker column, y label)
KIND_COLUMNS = {
    "rate": ("r_net_det_bits", "r_net_mc_bits", "Net ergodic rate (bits/channel use)"),
    "tau": ("tau_star_det", "tau_star_mc", "Optimal training length (channel uses)"),
    "rate-per-bs": ("rate_per_bs_bits", None, "Rate per BS (bits/channel use)"),
}

LINE_NAMES = {
    "r_net_det_bits": "det. equivalent",
    "r_net_mc_bits": "Monte Carlo",
    "tau_star_det": "τ̄* (det.)",
    "tau_star_mc": "τ* (MC)",
    "rate_per_bs_bits": "M·R_net",
}


def _load(path) -> tuple:
    path = Path(path)
    if not path.exists():
        raise PlotError(f"CSV not found: {path}")
    try:
        header, frame = read_csv(path)
    except Exception as e:
        raise PlotError(f"{path}: cannot parse CSV ({e})") from e
    if "sweep_value" not in frame.columns:
        raise PlotError(f"{path}: missing column 'sweep_value'")
    if frame.empty:
        raise PlotError(f"{path}: no data rows")
    return header, frame


def _numeric(frame, column: str, path) -> np.ndarray:
    try:
        return frame[column].astype(float).to_numpy()
    except (TypeError, ValueError) as e:
        raise PlotError(f"{path}: column '{column}' is not numeric") from e


def emit_plot(csv_paths: Sequence, kind: str, out) -> Path:
    """
    Plot one or more experiment CSVs into a single SVG.

    Each CSV becomes one labeled series. Non-finite sweep values (the C=inf
    row of a backhaul sweep) are drawn as a dashed horizontal reference.

    Args:
        csv_paths: CSV files from run_sweep/run_optimum
        kind: One of PLOT_KINDS
        out: Output SVG path

    Returns:
        Path of the written SVG

    Raises:
        PlotError: On unknown kind, missing/empty/malformed CSV; no file is written
    """
    if kind not in KIND_COLUMNS:
        raise PlotError(f"Unknown plot kind '{kind}' (choose from {', '.join(PLOT_KINDS)})")
    if not csv_paths:
        raise PlotError("No CSV files given")
    line_col, marker_col, y_label = KIND_COLUMNS[kind]

    loaded = [(p, *_load(p)) for p in csv_paths]
    sweep_kinds = {h.get("sweep") for _, h, _ in loaded}

    fig = Figure(figsize=(6.4, 4.8))
    ax = fig.add_subplot(1, 1, 1)
    plotted = 0
    for index, (path, header, frame) in enumerate(loaded):
        if line_col not in frame.columns:
            raise PlotError(f"{path}: missing column '{line_col}' for plot kind '{kind}'")
        color = f"C{index}"
        series = header.get("series", Path(path).stem)
        x = _numeric(frame, "sweep_value", path)
        finite = np.isfinite(x)

        columns: List[str] = [line_col] + ([marker_col] if marker_col in frame.columns else [])
        for column in columns:
            y = _numeric(frame, column, path)
            mask = finite & np.isfinite(y)
            if not mask.any():
                continue
            style = "-" if column == line_col else "o"
            ax.plot(x[mask], y[mask], style, color=color, fillstyle="none",
                    label=f"{LINE_NAMES[column]}, {series}")
            plotted += 1
            limit = ~finite & np.isfinite(y)
            if limit.any() and column == line_col:
                ax.axhline(y[limit][0], color=color, linestyle="--", linewidth=0.8,
                           label=f"{LINE_NAMES[column]}, C = ∞")

    if plotted == 0:
        raise PlotError(f"No plottable values for kind '{kind}'")

    sweep = sweep_kinds.pop() if len(sweep_kinds) == 1 else None
    ax.set_xlabel(X_LABELS.get(sweep, "Sweep value"))
    ax.set_ylabel(y_label)
    ax.grid(True, linewidth=0.3)
    ax.legend(fontsize="small")

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    logger.info(f"Wrote {out_path} ({plotted} series)")
    return out_path
