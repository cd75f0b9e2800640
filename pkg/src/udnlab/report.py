"""PNG rendering of sweep tables (coverage and ASE against density)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def figure_path(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(".png")


def render(rows: list[dict], path: str | Path, x_key: str, title: str = "") -> Path:
    """Two-panel log-x plot, one line per distinct (model, fixed density) group."""
    fig, (ax_c, ax_a) = plt.subplots(1, 2, figsize=(10, 4))
    other = "ue_density_per_km2" if x_key == "bs_density_per_km2" else "bs_density_per_km2"
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["model"], r[other], r["height_diff_m"]), []).append(r)
    for (model, fixed, h), rs in groups.items():
        rs = sorted((r for r in rs if not math.isnan(r["coverage_prob"])), key=lambda r: r[x_key])
        if not rs:
            continue
        x = [r[x_key] for r in rs]
        label = f"{model}, {other.split('_')[0]}={fixed:g}" + (f", L={h:g} m" if h else "")
        ax_c.errorbar(x, [r["coverage_prob"] for r in rs], yerr=[r["coverage_ci95"] for r in rs],
                      marker="o", ms=3, capsize=2, label=label)
        ax_a.errorbar(x, [r["ase_bps_hz_km2"] for r in rs], yerr=[r["ase_ci95"] for r in rs],
                      marker="o", ms=3, capsize=2, label=label)
    xlabel = "BS density (BSs/km$^2$)" if x_key == "bs_density_per_km2" else "UE density (UEs/km$^2$)"
    for ax in (ax_c, ax_a):
        ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.grid(True, which="both", alpha=0.3)
    ax_c.set_ylabel("coverage probability")
    ax_c.set_ylim(0, 1)
    ax_a.set_ylabel("ASE (bps/Hz/km$^2$)")
    if x_key == "bs_density_per_km2" and any(r["ase_bps_hz_km2"] > 0 for r in rows):
        ax_a.set_yscale("log")
    ax_a.legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    out = Path(path)
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out
