"""Report figures rendered to PNG with the Agg backend.

PNG metadata is stripped of the software/version stamp so that identical
inputs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bn_infer import RiskReport  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str | Path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", dpi=100, metadata=_META)
    plt.close(fig)


def plot_roc(curves: Mapping[str, Sequence[tuple[float, float | None, float | None]]], path: str | Path):
    """Sensitivity against 1 - specificity for each named classifier."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for name, pts in curves.items():
        xs, ys = [], []
        for _, sens, spec in pts:
            if sens is None or spec is None:
                continue
            xs.append(1.0 - spec)
            ys.append(sens)
        ax.plot(xs, ys, marker=".", markersize=3, label=name)
    ax.plot([0, 1], [0, 1], color="0.7", linestyle=":", linewidth=1)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("1 - specificity")
    ax.set_ylabel("sensitivity")
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def plot_risk(reports: Sequence[tuple[str, RiskReport]], path: str | Path):
    """Paired bars of P(outcome) without and with the exposure, one pair per query."""
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(reports) + 1), 4))
    xs = range(len(reports))
    ref = [r.p_reference for _, r in reports]
    trt = [r.p_treated for _, r in reports]
    ax.bar([x - 0.2 for x in xs], ref, width=0.4, label="exposure = 0")
    ax.bar([x + 0.2 for x in xs], trt, width=0.4, label="exposure = 1")
    ax.set_xticks(list(xs))
    ax.set_xticklabels([name for name, _ in reports])
    ax.set_ylabel("P(outcome = 1)")
    ax.set_ylim(0, 1)
    for x, (_, r) in zip(xs, reports):
        ax.annotate(f"ARR {r.absolute_risk_reduction:+.3f}", (x, max(r.p_reference, r.p_treated) + 0.03),
                    ha="center", fontsize=8)
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save(fig, path)


def plot_alpha_sweep(alphas: Sequence[float], edge_counts: Sequence[int], path: str | Path):
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.plot(list(alphas), list(edge_counts), marker="o")
    ax.set_xscale("log")
    ax.set_xlabel("equivalent sample size alpha")
    ax.set_ylabel("edges in learnt structure")
    fig.tight_layout()
    _save(fig, path)
