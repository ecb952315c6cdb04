"""Figures from a results file: bias, variance and MSE per strategy."""

import logging
from typing import Optional, Sequence

import pandas as pd

from interference_lab.errors import FeatureNotSupportedError

logger = logging.getLogger(__name__)

METRICS = ("bias", "var", "mse")
ERRORS = {"bias": "bias_se", "var": "var_se", "mse": "mse_se"}


def _pyplot():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as e:
        raise FeatureNotSupportedError("plotting without matplotlib (install the 'plot' extra)") from e
    return plt


def plot_results(results: pd.DataFrame, path: str, metrics: Sequence[str] = METRICS,
                 title: Optional[str] = None) -> None:
    """
    One panel per metric with a horizontal bar per strategy and its
    Monte-Carlo standard error. Skipped strategies are left out.
    """
    plt = _pyplot()
    frame = results
    if "skipped_reason" in frame.columns:
        frame = frame[frame["skipped_reason"].isna()]
    if frame.empty:
        logger.warning(f"no evaluated strategies to plot into {path}")
    fig, axes = plt.subplots(1, len(metrics), figsize=(4.0 * len(metrics), 0.4 * max(len(frame), 4) + 1.5),
                             sharey=True, squeeze=False)
    labels = frame["strategy"].tolist()
    for ax, metric in zip(axes[0], metrics):
        errors = frame[ERRORS[metric]] if ERRORS.get(metric) in frame.columns else None
        ax.barh(range(len(frame)), frame[metric], xerr=errors, color="0.6", ecolor="k", capsize=2)
        if metric == "bias":
            ax.axvline(x=0.0, ls=":", c="k")
        ax.set_xlabel(metric)
        ax.set_yticks(range(len(frame)))
        ax.set_yticklabels(labels)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.debug(f"wrote {len(frame)} strategies to {path}")
