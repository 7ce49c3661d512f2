import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go

logger = logging.getLogger(__name__)


def _save(fig: go.Figure, path: Path, name: str) -> Path:
    fig.write_html(str(path), include_plotlyjs="cdn", full_html=True, div_id=name)
    logger.info(f"wrote figure {path}")
    return path


def field_figure(summary: pd.DataFrame, path: Path) -> Path:
    """Posterior mean bed with its 95% band and, when present, the truth."""
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=summary["x"], y=summary["hi95"], mode="lines", line=dict(width=0), showlegend=False))
    fig.add_trace(
        go.Scatter(
            x=summary["x"], y=summary["lo95"], mode="lines", line=dict(width=0),
            fill="tonexty", fillcolor="rgba(31,119,180,0.25)", name="95% band",
        )
    )
    fig.add_trace(go.Scatter(x=summary["x"], y=summary["mean"], mode="lines", name="posterior mean"))
    if "truth" in summary.columns:
        fig.add_trace(go.Scatter(x=summary["x"], y=summary["truth"], mode="lines", line=dict(dash="dash"), name="truth"))
    fig.update_layout(title="Reconstructed bathymetry", xaxis_title="x (m)", yaxis_title="b (m)")
    return _save(fig, path, "field")


def landscape_figure(
    bp_grid: Sequence[float],
    bw_grid: Sequence[float],
    values: np.ndarray,
    path: Path,
    paths: Optional[pd.DataFrame] = None,
) -> Path:
    finite = np.where(np.isfinite(values), values, np.nan)
    fig = go.Figure(
        go.Contour(x=list(bw_grid), y=list(bp_grid), z=finite, colorbar=dict(title="log posterior"), ncontours=40)
    )
    if paths is not None:
        for chain, group in paths.groupby("chain"):
            fig.add_trace(go.Scatter(x=group["b_w"], y=group["b_p"], mode="lines", name=f"chain {chain}"))
    fig.update_layout(title="Log-posterior landscape", xaxis_title="b_w (m^2)", yaxis_title="b_p (m)")
    return _save(fig, path, "landscape")


def sweep_figure(sweep: pd.DataFrame, path: Path) -> Path:
    vary = sweep["vary"].iloc[0]
    column = "b_p" if vary == "position" else "b_w"
    fig = px.scatter(
        sweep,
        x="target",
        y=f"{column}_mean",
        error_y=f"{column}_se",
        title=f"Reconstructed {column} across a {vary} sweep",
        labels={"target": f"target {column}", f"{column}_mean": f"reconstructed {column}"},
    )
    fig.add_trace(go.Scatter(x=sweep["target"], y=sweep["target"], mode="lines", line=dict(dash="dot"), name="target"))
    return _save(fig, path, "sweep")


def trace_figure(chain: pd.DataFrame, path: Path) -> Path:
    fig = px.line(chain, x="step", y="log_posterior", title="Chain trace", labels={"log_posterior": "log posterior"})
    fig.update_layout(showlegend=False)
    return _save(fig, path, "trace")
