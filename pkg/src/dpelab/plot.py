"""Regret-versus-log-time chart from a trace CSV."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import TraceFormatError, read_csv  # noqa: E402


def summary_path(csv_path: str | Path) -> Path:
    return Path(str(csv_path) + ".summary.json")


def emit_plot(csv_path: str | Path, output_path: str | Path,
              lower_bound: float | None = None) -> Path:
    """Plot seed-mean collision-zeroed regret against ln t, one line per algorithm.

    The C(mu) ln t reference line is drawn when ``lower_bound`` is given or the
    run's ``.summary.json`` sidecar is found next to the CSV.
    """
    rows = read_csv(csv_path)
    if lower_bound is None:
        side = summary_path(csv_path)
        if side.exists():
            data = json.loads(side.read_text())
            if isinstance(data, list):
                data = data[0]
            lower_bound = data.get("lower_bound_constant")

    series: dict[str, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if row.t < 1:
            raise TraceFormatError(f"row with t={row.t} < 1")
        series[row.algorithm][row.t].append(row.cum_regret_zeroed)

    plt.rcParams["svg.hashsalt"] = "dpelab"
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    t_max = 1
    for algo in sorted(series):
        ts = sorted(series[algo])
        t_max = max(t_max, ts[-1])
        ax.plot([math.log(t) for t in ts],
                [sum(series[algo][t]) / len(series[algo][t]) for t in ts],
                marker="o", label=algo)
    if lower_bound is not None:
        xs = [0.0, math.log(t_max)]
        ax.plot(xs, [lower_bound * x for x in xs], linestyle="--", color="gray",
                label=f"C(mu) ln t, C={lower_bound:.3f}")
    ax.set_xlabel("ln t")
    ax.set_ylabel("cumulative regret (collisions zeroed)")
    ax.legend(loc="upper left")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    out = Path(output_path)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out
