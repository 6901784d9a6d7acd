"""Chart data files and their static vector renderings.

Each chart dataset becomes one CSV (the artifact the tests target) and,
unless data-only mode is on, one SVG that faithfully renders that CSV.
Share and percentage columns are written as exact fractions.
"""

from __future__ import annotations

import csv
import logging
from fractions import Fraction
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .periods import ChartDataset  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "retcite"

SERIES_COLORS = {
    "mentioned": "#2e8b57",
    "not-mentioned": "#c23b22",
    "no-fulltext": "#9e9e9e",
    "negative": "#c23b22",
    "neutral": "#e0b400",
    "positive": "#2e8b57",
}

COLUMNS = {
    "d1-entities": ["period", "bin", "mentioned", "not-mentioned",
                    "no-fulltext", "total", "in_line"],
    "d1-citations": ["period", "bin", "negative", "neutral", "positive",
                     "total", "in_line"],
    "area-pie": ["area", "count", "mentioned", "not_mentioned",
                 "mentioned_pct", "not_mentioned_pct"],
    "intent-bars": ["name", "total", "share", "negative", "negative_share",
                    "neutral", "neutral_share", "positive", "positive_share"],
    "section-bars": ["name", "total", "share", "negative", "negative_share",
                     "neutral", "neutral_share", "positive", "positive_share"],
}


def dataset_stem(dataset: ChartDataset) -> str:
    parts = [dataset.chart_kind, dataset.category]
    if dataset.period:
        parts.append(dataset.period)
    return "_".join(parts)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, Fraction):
        return str(value)
    return str(value)


def write_chart_csv(dataset: ChartDataset, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{dataset_stem(dataset)}.csv"
    columns = COLUMNS[dataset.chart_kind]
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_ALL)
        writer.writerow(columns)
        for row in dataset.rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    tmp.replace(path)
    return path


def _slice_labels(rows):
    labels = []
    for row in rows:
        if row["bin"] is None:
            labels.append(row["period"])
        else:
            labels.append(f"{row['period']}/{row['bin']}")
    return labels


def _render_d1(dataset: ChartDataset, ax):
    series = (
        ("mentioned", "not-mentioned", "no-fulltext")
        if dataset.chart_kind == "d1-entities"
        else ("negative", "neutral", "positive")
    )
    rows = dataset.rows
    positions = range(len(rows))
    bottom = [0] * len(rows)
    for name in series:
        heights = [row[name] for row in rows]
        ax.bar(positions, heights, bottom=bottom, label=name,
               color=SERIES_COLORS[name], width=0.8)
        bottom = [b + h for b, h in zip(bottom, heights)]
    line_x = [i for i, row in enumerate(rows) if row["in_line"]]
    line_y = [rows[i]["total"] for i in line_x]
    ax.plot(line_x, line_y, color="#1f3b70", marker="o", linewidth=1.2,
            label="absolute total")
    ax.set_xticks(list(positions))
    ax.set_xticklabels(_slice_labels(rows), rotation=60, fontsize=7)
    ax.legend(fontsize=7)


def _render_pie(dataset: ChartDataset, ax):
    rows = [r for r in dataset.rows if r["count"]]
    if not rows:
        ax.text(0.5, 0.5, "no data", ha="center")
        return
    labels = [
        f"{r['area']} ({r['count']}, {float(r['mentioned_pct']):.0%} mention)"
        for r in rows
    ]
    ax.pie([r["count"] for r in rows], labels=labels,
           textprops={"fontsize": 7})


def _render_bars(dataset: ChartDataset, ax):
    rows = dataset.rows
    if not rows:
        ax.text(0.5, 0.5, "no data", ha="center")
        return
    positions = range(len(rows))
    left = [0.0] * len(rows)
    for sentiment in ("negative", "neutral", "positive"):
        widths = [float(row[f"{sentiment}_share"]) for row in rows]
        ax.barh(positions, widths, left=left, label=sentiment,
                color=SERIES_COLORS[sentiment], height=0.7)
        left = [x + w for x, w in zip(left, widths)]
    ax.set_yticks(list(positions))
    ax.set_yticklabels(
        [f"{row['name']} ({row['total']})" for row in rows], fontsize=7
    )
    ax.invert_yaxis()
    ax.set_xlabel("share of the period's in-text citations", fontsize=8)
    ax.legend(fontsize=7)


def render_chart_svg(dataset: ChartDataset, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{dataset_stem(dataset)}.svg"
    fig, ax = plt.subplots(figsize=(8, 4.5))
    title = dataset_stem(dataset).replace("_", " ")
    ax.set_title(title, fontsize=9)
    try:
        if dataset.chart_kind in ("d1-entities", "d1-citations"):
            _render_d1(dataset, ax)
        elif dataset.chart_kind == "area-pie":
            _render_pie(dataset, ax)
        else:
            _render_bars(dataset, ax)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return path


def emit_charts(
    datasets: list[ChartDataset], directory: str | Path, images: bool = True
) -> list[Path]:
    written = []
    for dataset in datasets:
        written.append(write_chart_csv(dataset, directory))
        if images:
            written.append(render_chart_svg(dataset, directory))
    return written
