"""Report figures rendered next to the delimited outputs.

Each sweep-style command saves one PNG beside its CSV.  Figures are plain
matplotlib line/bar charts; non-finite values (e.g. the saturated mutual
information at full reveal) are dropped from the plotted series.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SKIP_COLUMNS = {"parameter", "trials", "frames", "pipelines", "realizations", "aborted"}


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata={"Software": None})
    plt.close(fig)


def plot_sweep(rows: list[dict], path: Path) -> None:
    """Numeric aggregate columns against the swept parameter."""
    if not rows:
        return
    x = np.array([row["value"] for row in rows], dtype=float)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in rows[0]:
        if key in _SKIP_COLUMNS or key == "value":
            continue
        try:
            y = np.array([float(row[key]) for row in rows])
        except (TypeError, ValueError):
            continue
        finite = np.isfinite(y)
        if finite.sum() < 1 or np.all(y[finite] == 0):
            continue
        ax.plot(x[finite], y[finite], marker="o", label=key)
    ax.set_xlabel(rows[0].get("parameter", "value"))
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def _ci_err(rows: list[dict]) -> np.ndarray:
    """Asymmetric CI whiskers; the Wilson interval may exclude a point
    estimate at 0 or 1, so whiskers are clipped to non-negative."""
    err = np.array(
        [[row["p_detect"] - row["ci_low"], row["ci_high"] - row["p_detect"]] for row in rows]
    ).T
    return np.clip(err, 0.0, None)


def plot_attack_sweep(rows: list[dict], path: Path) -> None:
    """Detection probability (with CI) or leakage bars per attack."""
    if not rows:
        return
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if "value" in rows[0]:  # parameter sweep of one attack knob
        x = np.array([row["value"] for row in rows], dtype=float)
        y = np.array([row["p_detect"] for row in rows])
        err = _ci_err(rows)
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3)
        ax.set_xlabel(rows[0]["parameter"])
        ax.set_ylabel("detection probability")
    elif "p_detect" in rows[0]:
        labels = [row["attack"] for row in rows]
        y = [row["p_detect"] for row in rows]
        err = _ci_err(rows)
        ax.bar(labels, y, yerr=err, capsize=3, color="#0173b2")
        ax.set_ylabel("detection probability")
        ax.set_ylim(0, 1.05)
        plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    else:
        labels = [row["attack"] for row in rows]
        width = 0.4
        idx = np.arange(len(labels))
        ax.bar(idx - width / 2, [row["mi_tap_only_bits"] for row in rows], width,
               label="tap only", color="#0173b2")
        ax.bar(idx + width / 2, [row["mi_with_broadcasts_bits"] for row in rows], width,
               label="with broadcasts", color="#de8f05")
        ax.set_xticks(idx, labels)
        ax.set_ylabel("mutual information with Alice's amplitude (bits)")
        ax.legend()
        plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    ax.grid(alpha=0.3, axis="y")
    _save(fig, path)


def plot_capacity(rows: list[dict], path: Path) -> None:
    x = [row["r"] for row in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(x, [row["capacity_nats"] for row in rows], marker="o", label="capacity (nats)")
    ax.plot(x, [row["nbar"] for row in rows], marker="s", label="mean photon number")
    ax.set_xlabel("squeezing r")
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)
