"""Figure rendering for the report paths.

Audit and sweep commands write a PNG next to their delimited output:
the tradeoff curve (FP and FN rate against the threshold) and the audit
error rates with their Wilson intervals.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .audit import ConfusionReport, SweepRow


def render_tradeoff(rows: Sequence[SweepRow], path: Path) -> Path:
    thresholds = [r.threshold for r in rows]
    fp = [r.fp_rate if r.fp_rate is not None else float("nan") for r in rows]
    fn = [r.fn_rate if r.fn_rate is not None else float("nan") for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(thresholds, fp, marker="o", markersize=3, label="false positive rate")
    ax.plot(thresholds, fn, marker="s", markersize=3, label="false negative rate")
    ax.set_xlabel("score threshold")
    ax.set_ylabel("rate")
    ax.set_title("Misclassification tradeoff")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_audit(report: ConfusionReport, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4))
    names, rates, errs = [], [], []
    for name, rate, ci in (
        ("FP rate", report.fp_rate, report.fp_ci),
        ("FN rate", report.fn_rate, report.fn_ci),
    ):
        if rate is None:
            continue
        names.append(name)
        rates.append(rate)
        errs.append([rate - ci[0], ci[1] - rate])
    if names:
        err_array = list(zip(*errs))
        ax.bar(names, rates, yerr=err_array, capsize=6, color=["#c44e52", "#4c72b0"][: len(names)])
    ax.set_ylabel("rate")
    ax.set_ylim(0, 1)
    ax.set_title(f"Audit sample n={report.n} (95% Wilson CI)")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
