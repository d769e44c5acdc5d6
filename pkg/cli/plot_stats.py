# plot_stats.py
#!/usr/bin/env python3
"""
plot_stats.py

Bar chart of a `pcbsample stats` table (CSV or JSON):
- plain histogram: one bar per distance band
- uniformity table (has a `method` column): grouped bars per method, cv_bins in the legend
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

plt.rcParams.update({
    "figure.facecolor": "#121212",
    "axes.facecolor": "#121212",
    "axes.edgecolor": "#2A2A2A",
    "axes.labelcolor": "#EAEAEA",
    "xtick.color": "#BDBDBD",
    "ytick.color": "#BDBDBD",
    "text.color": "#EAEAEA",
    "grid.color": "#2A2A2A",
    "grid.linestyle": ":",
    "grid.linewidth": 0.6,
    "axes.grid": True,
    "legend.frameon": False,
})

BAR_COLORS = ["#1BE7C7", "#F2A541", "#8E7CC3", "#E45B5B"]


def load_table(path: Path) -> pd.DataFrame:
    if path.suffix.lower() == ".json":
        df = pd.DataFrame(json.loads(path.read_text(encoding="utf-8")))
    else:
        df = pd.read_csv(path)
    missing = {"band_lo_m", "band_hi_m", "fraction"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    # JSON null / CSV 'inf' both mean an open last band
    df["band_hi_m"] = pd.to_numeric(df["band_hi_m"], errors="coerce").fillna(np.inf)
    return df


def band_labels(df: pd.DataFrame) -> list[str]:
    out = []
    for lo, hi in zip(df["band_lo_m"], df["band_hi_m"]):
        out.append(f"{lo:g}+" if not np.isfinite(hi) else f"{lo:g}-{hi:g}")
    return out


def plot_table(df: pd.DataFrame, out: Path, title: Optional[str] = None) -> Path:
    fig = plt.figure(figsize=(8, 3.5))
    ax = fig.gca()
    groups = list(df.groupby("method", sort=False)) if "method" in df.columns else [(None, df)]
    width = 0.8 / len(groups)
    labels = band_labels(groups[0][1])
    x = np.arange(len(labels))
    for i, (method, g) in enumerate(groups):
        name = method
        if method is not None and "cv_bins" in g.columns:
            name = f"{method} (cv_bins {g['cv_bins'].iloc[0]:.3f})"
        ax.bar(x + (i - (len(groups) - 1) / 2) * width, g["fraction"].to_numpy(), width,
               color=BAR_COLORS[i % len(BAR_COLORS)], label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_xlabel("Planar distance band (m)")
    ax.set_ylabel("Fraction of points")
    ax.set_title(title or "Distance bands")
    if groups[0][0] is not None:
        ax.legend()
    for sp in ax.spines.values():
        sp.set_color("#2A2A2A")
    fig.tight_layout()
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=160, facecolor=fig.get_facecolor())
    plt.close(fig)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(description="Plot a pcbsample stats table.")
    ap.add_argument("table", help="CSV or JSON written by `pcbsample stats`")
    ap.add_argument("--out", default=None, help="PNG path (default: next to the table)")
    ap.add_argument("--title", default=None)
    args = ap.parse_args(argv)

    table = Path(args.table)
    try:
        df = load_table(table)
    except (OSError, ValueError) as e:
        print(f"plot_stats: {e}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else table.with_suffix(".png")
    plot_table(df, out, args.title)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
