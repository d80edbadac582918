"""Convergence plots for solver traces."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence, Tuple

from matplotlib.figure import Figure
from matplotlib.ticker import MaxNLocator

from .types import Trace
from .validate import InvalidArgumentError


def _finite(value: float | None) -> float:
    if value is None or math.isinf(value):
        return math.nan
    return value


def plot_traces(traces: Sequence[Tuple[str, Trace]]) -> Figure:
    """PSNR-vs-iteration next to residual-vs-iteration, one line per labelled trace.

    The PSNR panel is left out when no trace carries PSNR values.
    """

    if not traces or any(len(trace) == 0 for _, trace in traces):
        raise InvalidArgumentError("need at least one non-empty trace to plot")
    with_psnr = [(label, trace) for label, trace in traces if trace.has_psnr]
    panels = 2 if with_psnr else 1
    # pyplot-free figure: no global backend or figure registry is touched
    fig = Figure(figsize=(5 * panels, 4))
    axes = fig.subplots(1, panels, squeeze=False)
    last_iter = max(trace.records[-1].k for _, trace in traces)

    if with_psnr:
        ax = axes[0][0]
        for label, trace in with_psnr:
            ax.plot([r.k for r in trace.records], [_finite(r.psnr) for r in trace.records], marker="o", label=label)
        ax.set_ylabel("PSNR (dB)")

    ax_res = axes[0][-1]
    for label, trace in traces:
        ax_res.plot([r.k for r in trace.records], [r.data_residual for r in trace.records], marker="o", label=label)
    ax_res.set_ylabel("data residual")
    if all(r.data_residual > 0 for _, trace in traces for r in trace.records):
        ax_res.set_yscale("log")

    for ax in axes[0]:
        ax.set_xlabel("iteration")
        ax.set_xlim(1, max(last_iter, 2))
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        ax.grid(True, alpha=0.3)
        ax.legend()
    fig.tight_layout()
    return fig


def save_trace_plot(traces: Sequence[Tuple[str, Trace]], path: str | Path, dpi: int = 100) -> Path:
    path = Path(path)
    plot_traces(traces).savefig(path, dpi=dpi)
    return path
