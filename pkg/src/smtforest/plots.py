"""Matplotlib figures for the CLI report paths (rendered off-screen)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_direct_repair(rows: Sequence[dict], path) -> Path:
    """Failure rates and average tries against the number of missed updates."""
    ms = [r["m"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, label in (("first_fail_rate", "fail on first try"), ("first10_fail_rate", "fail within 10 tries"), ("fail_rate", "fail after give-up")):
        ax.plot(ms, [r[key] for r in rows], marker="o", label=label)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("missed updates m")
    ax.set_ylabel("failure rate")
    ax2 = ax.twinx()
    ax2.plot(ms, [r["avg_tries"] for r in rows], color="grey", linestyle="--", marker="s", label="average tries")
    ax2.set_ylabel("average tries")
    lines = ax.get_legend_handles_labels()
    lines2 = ax2.get_legend_handles_labels()
    ax.legend(lines[0] + lines2[0], lines[1] + lines2[1], loc="upper left", fontsize=8)
    return _save(fig, path)


def plot_lc_failure(rows: Sequence[dict], path) -> Path:
    """Closed-form cache repair failure probability per cache depth."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for clvl in sorted({r["clvl"] for r in rows}):
        sel = [r for r in rows if r["clvl"] == clvl]
        ax.plot([r["m"] for r in sel], [r["closed_form"] for r in sel], label=f"clvl={clvl}")
        if all("monte_carlo" in r for r in sel):
            ax.scatter([r["m"] for r in sel], [r["monte_carlo"] for r in sel], s=10)
    ax.set_xlabel("missed updates m")
    ax.set_ylabel("failure probability")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_sim_daily(daily: Sequence[dict], path, title: str = "") -> Path:
    """Per-day forest staleness and outdated-proof counts of one run."""
    days = [d["day"] for d in daily]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(days, [d["stale_forest_share_after_update"] for d in daily], marker=".", label="stale forests after update")
    ax.plot(days, [d["stale_forest_share_end"] for d in daily], marker=".", label="stale forests at day end")
    ax.set_xlabel("day")
    ax.set_ylabel("share of nodes")
    ax2 = ax.twinx()
    ax2.plot(days, [d["outdated_nodes_end"] for d in daily], color="grey", linestyle="--", label="outdated proofs at day end")
    ax2.set_ylabel("nodes")
    lines = ax.get_legend_handles_labels()
    lines2 = ax2.get_legend_handles_labels()
    ax.legend(lines[0] + lines2[0], lines[1] + lines2[1], fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)
