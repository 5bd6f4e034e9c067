"""Figure rendering for the report CLI: grouped bars for the corpus-mixing
grid and a log-x curve for the target-data sweep, written next to the TSVs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import MODES, EvalReport  # noqa: E402
from .representations import REP_DISPLAY  # noqa: E402


def render_table1(results: dict, path, modes=MODES) -> None:
    reps = [r for r in REP_DISPLAY if any((r, m) in results for m in modes)]
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    n = len(reps)
    bar_w = 0.8 / max(n, 1)
    for i, rep in enumerate(reps):
        xs, ys = [], []
        for j, mode in enumerate(modes):
            value = results.get((rep, mode))
            if isinstance(value, EvalReport):
                xs.append(j + (i - (n - 1) / 2) * bar_w)
                ys.append(value.token_accuracy)
        ax.bar(xs, ys, width=bar_w, label=REP_DISPLAY[rep])
    ax.set_xticks(range(len(modes)))
    ax.set_xticklabels(m.capitalize() for m in modes)
    ax.set_xlabel("unlabeled corpus for the HMM")
    ax.set_ylabel("target-test accuracy (%)")
    lo = min((v.token_accuracy for v in results.values()
              if isinstance(v, EvalReport)), default=0.0)
    ax.set_ylim(max(0.0, lo - 5.0), 100.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_curve(points: list, path) -> None:
    conditions = []
    for p in points:
        key = (p.labeled, p.rep_kind)
        if key not in conditions:
            conditions.append(key)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for labeled, rep_kind in conditions:
        series = [(p.count, p.report.token_accuracy) for p in points
                  if (p.labeled, p.rep_kind) == (labeled, rep_kind)]
        series.sort()
        label = f"{labeled}, {REP_DISPLAY.get(rep_kind, rep_kind)}"
        ax.plot([c for c, _ in series], [a for _, a in series],
                marker="o", label=label)
    ax.set_xscale("symlog", linthresh=10)
    ax.set_xlabel("labeled target sentences")
    ax.set_ylabel("target-test accuracy (%)")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
