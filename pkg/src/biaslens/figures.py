"""SVG figure rendering for audit reports.

Three figure families: grouped profile-vs-recommendation ratio bars, a
percent-GAP-change bar chart, and one per-user scatter per algorithm. All
rendering uses an explicit SVG canvas with a fixed hash salt, glyphs
outlined as paths, and no timestamp metadata, so the same reports always
produce byte-identical files with no external references.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

_RC = {
    "svg.hashsalt": "biaslens",
    "svg.fonttype": "path",
    "figure.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10.0,
    "timezone": "UTC",
}

_PROFILE_COLOR = "#9aa2ab"
_REC_COLOR = "#2f6fb4"
_SCATTER_COLOR = "#2f6fb4"


def _save(fig: Figure, path) -> None:
    FigureCanvasSVG(fig)
    fig.savefig(path, format="svg", metadata={"Date": None})


def render_ratio_bars(reports, path) -> None:
    """Per-algorithm mean attribute ratio in profiles next to top-k lists."""
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(8.0, 4.0))
        ax = fig.add_subplot(111)
        xs = range(len(reports))
        width = 0.38
        ax.bar([x - width / 2 for x in xs],
               [r.avg_profile_ratio for r in reports],
               width, label="profile", color=_PROFILE_COLOR)
        ax.bar([x + width / 2 for x in xs],
               [r.avg_rec_ratio for r in reports],
               width, label="recommendations", color=_REC_COLOR)
        ax.set_xticks(list(xs))
        ax.set_xticklabels([r.algorithm.value for r in reports],
                           rotation=45, ha="right")
        ax.set_ylim(0.0, 1.0)
        ax.set_ylabel("mean attribute ratio")
        ax.legend(frameon=False)
        fig.tight_layout()
        _save(fig, path)


def render_delta_gap_bars(reports, path) -> None:
    """Percent change of mean recommended-item popularity per algorithm."""
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(8.0, 4.0))
        ax = fig.add_subplot(111)
        values = [r.delta_gap_pct for r in reports]
        colors = [_REC_COLOR if v >= 0 else _PROFILE_COLOR for v in values]
        ax.bar(range(len(reports)), values, 0.6, color=colors)
        ax.axhline(0.0, color="#444444", linewidth=0.8)
        ax.set_xticks(range(len(reports)))
        ax.set_xticklabels([r.algorithm.value for r in reports],
                           rotation=45, ha="right")
        ax.set_ylabel("popularity change of top-k vs profile (%)")
        fig.tight_layout()
        _save(fig, path)


def render_scatter(report, path) -> None:
    """One point per user with both ratios defined; the diagonal marks parity."""
    xs = [row.profile_ratio for row in report.per_user
          if row.profile_ratio is not None and row.rec_ratio is not None]
    ys = [row.rec_ratio for row in report.per_user
          if row.profile_ratio is not None and row.rec_ratio is not None]
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(4.5, 4.5))
        ax = fig.add_subplot(111)
        ax.plot([0.0, 1.0], [0.0, 1.0], linestyle="--", linewidth=0.8,
                color="#888888", zorder=1)
        ax.scatter(xs, ys, s=12, color=_SCATTER_COLOR, alpha=0.6,
                   linewidths=0, zorder=2)
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("attribute ratio in profile")
        ax.set_ylabel("attribute ratio in recommendations")
        ax.set_title(report.algorithm.value)
        fig.tight_layout()
        _save(fig, path)


def render_all(reports, outdir) -> list[Path]:
    """Write the two bar charts plus one scatter per report; returns the paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    ratio_path = outdir / "ratio_bars.svg"
    render_ratio_bars(reports, ratio_path)
    written.append(ratio_path)
    gap_path = outdir / "delta_gap_bars.svg"
    render_delta_gap_bars(reports, gap_path)
    written.append(gap_path)
    for report in reports:
        scatter_path = outdir / f"scatter_{report.algorithm.value}.svg"
        render_scatter(report, scatter_path)
        written.append(scatter_path)
    return written
