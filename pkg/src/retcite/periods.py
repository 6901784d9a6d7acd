"""Period-placement statistics and chart datasets for the citing records.

Each citing entity is placed in the period of its cited article's
timeline that contains its publication year; within multi-year periods a
position value in [-1, +1] locates it between the period margins, and the
position is discretized into balanced slices (fifths by default).  All
position arithmetic is exact rational arithmetic.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import MalformedInputError, PlacementError
from .model import CitingEntity, InTextCitation, Period, RetractionTimeline

logger = logging.getLogger(__name__)

SINGLE_SLICE_PERIODS = ("P1", "P3")  # one bar, not part of the overlay line

CHART_KINDS = (
    "d1-entities",   # distribution of citing entities over the period set
    "area-pie",      # subject areas of one period's citing entities
    "d1-citations",  # distribution of in-text citations over the period set
    "intent-bars",   # citation functions of one period's in-text citations
    "section-bars",  # section kinds of one period's in-text citations
)

NAMED_SECTION_KINDS = (
    "introduction", "method", "abstract", "results", "conclusions",
    "background", "discussion",
)


@dataclass(frozen=True)
class CitationPlacement:
    entity_id: str
    retracted_id: str
    period_label: str
    p_cit: tuple[int, ...]
    p_cut: Fraction
    fifth_bin: int | None  # None marks the single-slice periods P1/P3
    category: str  # RET_A / RET_B
    citing_year: int  # after rounding up to the cited article's publication year


@dataclass
class ChartDataset:
    chart_kind: str
    category: str
    period: str | None
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.chart_kind not in CHART_KINDS:
            raise MalformedInputError(f"unknown chart kind {self.chart_kind!r}")


def compute_pcit(
    citing_year: int, periods: list[Period], e_retpub: int
) -> tuple[str, tuple[int, ...]]:
    """Containing period label and its inclusive year sequence.

    Citing years before the cited article's publication (preprint
    citations) are rounded up to the publication year first.
    """
    year = max(citing_year, e_retpub)
    for period in periods:
        if year in period:
            return period.label, period.years
    raise PlacementError(
        f"citing year {citing_year} falls outside the period set "
        f"(last covered year {periods[-1].last_year})"
    )


def compute_pcut(citing_year: int, p_cit: tuple[int, ...]) -> Fraction:
    """Position of the citing year between the period margins.

    ((citing - Y1) - (Yf - citing)) / (|P_CIT| - 1), which is -1 at the
    first year and +1 at the last; single-year periods get 0.
    """
    if citing_year not in p_cit:
        raise ValueError(f"citing year {citing_year} not in {p_cit}")
    if len(p_cit) == 1:
        return Fraction(0)
    first, last = p_cit[0], p_cit[-1]
    return Fraction((citing_year - first) - (last - citing_year), len(p_cit) - 1)


def _round_half_away_hundredths(value: Fraction) -> int:
    scaled = value * 100
    magnitude = math.floor(abs(scaled) + Fraction(1, 2))
    return magnitude if scaled >= 0 else -magnitude


def bin_fifth(p_cut, bin_count: int = 5) -> int:
    """Slice index of a position value, 0-based from the left margin.

    The value is first rounded half-away-from-zero to 2 decimals; rounded
    values landing exactly on an interior boundary go to the slice nearer
    the center, which reproduces the printed fifth intervals
    [-1.0,-0.61], [-0.60,-0.21], [-0.20,0.20], [0.21,0.60], [0.61,1.0].
    """
    if isinstance(p_cut, float):
        p_cut = Fraction(str(p_cut))
    else:
        p_cut = Fraction(p_cut)
    if not -1 <= p_cut <= 1:
        raise MalformedInputError(f"position value {p_cut} outside [-1, 1]")
    r = _round_half_away_hundredths(p_cut)
    scaled = (r + 100) * bin_count
    if r <= 0:
        index = scaled // 200
    else:
        index = -((-scaled) // 200) - 1
    return min(max(index, 0), bin_count - 1)


def place_pair(
    entity: CitingEntity,
    retracted_id: str,
    timeline: RetractionTimeline,
    periods: list[Period],
    bin_count: int = 5,
) -> CitationPlacement:
    if entity.year is None:
        raise PlacementError(f"entity {entity.entity_id} has no publication year")
    label, p_cit = compute_pcit(entity.year, periods, timeline.e_retpub)
    year = max(entity.year, timeline.e_retpub)
    p_cut = compute_pcut(year, p_cit)
    slice_index = (
        None if label in SINGLE_SLICE_PERIODS else bin_fifth(p_cut, bin_count)
    )
    return CitationPlacement(
        entity_id=entity.entity_id,
        retracted_id=retracted_id,
        period_label=label,
        p_cit=p_cit,
        p_cut=p_cut,
        fifth_bin=slice_index,
        category=timeline.category.value,
        citing_year=year,
    )


def compute_placements(
    entities: list[CitingEntity],
    timelines: dict[str, RetractionTimeline],
    periods_by_article: dict[str, list[Period]],
    bin_count: int = 5,
) -> tuple[list[CitationPlacement], list[tuple[str, str, str]]]:
    """One placement per (citing entity, retracted article) pair.

    Pairs that cannot be placed (unknown year, unknown timeline) are
    returned as (entity_id, retracted_id, reason) and logged.
    """
    placements, skipped = [], []
    for entity in entities:
        for retracted_id in entity.cites:
            if retracted_id not in timelines:
                skipped.append((entity.entity_id, retracted_id, "no-timeline"))
                continue
            if entity.year is None:
                skipped.append((entity.entity_id, retracted_id, "no-citing-year"))
                continue
            placements.append(place_pair(
                entity, retracted_id, timelines[retracted_id],
                periods_by_article[retracted_id], bin_count,
            ))
    for entity_id, retracted_id, reason in skipped:
        logger.warning(
            "pair (%s, %s) excluded from period analytics: %s",
            entity_id, retracted_id, reason,
        )
    return placements, skipped


def _category_period_labels(category: str) -> list[str]:
    return ["P0", "P1", "P2", "P3", "P4"] if category == "RET_A" else ["P0", "P3", "P4"]


def _check_single_category(placements, category):
    for p in placements:
        if p.category != category:
            raise MalformedInputError(
                f"placement of pair ({p.entity_id}, {p.retracted_id}) belongs "
                f"to {p.category}, not {category}; each category gets its own chart"
            )


def _slice_skeleton(category: str, bin_count: int, series_names) -> list[dict]:
    rows = []
    for label in _category_period_labels(category):
        if label in SINGLE_SLICE_PERIODS:
            bins = [None]
        else:
            bins = list(range(bin_count))
        for b in bins:
            row = {"period": label, "bin": b, "total": 0,
                   "in_line": label not in SINGLE_SLICE_PERIODS}
            for name in series_names:
                row[name] = 0
            rows.append(row)
    return rows


def entity_mention_status(
    entity: CitingEntity, mention_of: dict[str, str] | None
) -> str:
    """mentioned / not-mentioned / no-fulltext, the entity-chart series."""
    if entity.fulltext_available != "yes":
        return "no-fulltext"
    if mention_of and mention_of.get(entity.entity_id) == "yes":
        return "mentioned"
    return "not-mentioned"


def build_d1_entities(
    placements: list[CitationPlacement],
    entities: list[CitingEntity],
    category: str,
    mention_of: dict[str, str] | None = None,
    bin_count: int = 5,
) -> ChartDataset:
    """Distribution of the citing entities over the period set.

    Counts are per (entity, retracted) pair, split by whether the entity
    mentioned the retraction, did not, or has no accessible full text.
    The overlay line carries the absolute totals but skips the
    single-slice periods.
    """
    _check_single_category(placements, category)
    series = ("mentioned", "not-mentioned", "no-fulltext")
    rows = _slice_skeleton(category, bin_count, series)
    index = {(r["period"], r["bin"]): r for r in rows}
    by_id = {e.entity_id: e for e in entities}
    for p in placements:
        entity = by_id.get(p.entity_id)
        if entity is None:
            raise MalformedInputError(f"placement for unknown entity {p.entity_id}")
        status = entity_mention_status(entity, mention_of)
        row = index[(p.period_label, p.fifth_bin)]
        row[status] += 1
        row["total"] += 1
    return ChartDataset("d1-entities", category, None, rows)


def build_area_pie(
    placements: list[CitationPlacement],
    entities: list[CitingEntity],
    category: str,
    period: str,
    mention_of: dict[str, str] | None = None,
    top: int = 10,
) -> ChartDataset:
    """Subject-area pie of one period's citing entities.

    The ten most populated areas keep their slice; the rest are grouped
    under "Other subject areas".  Rank ties are broken by area name.  A
    pair with several areas counts once in each; mention percentages are
    relative to the slice.
    """
    _check_single_category(placements, category)
    by_id = {e.entity_id: e for e in entities}
    counts: dict[str, list[int]] = {}  # area -> [count, mentioned]
    for p in placements:
        if p.period_label != period:
            continue
        entity = by_id[p.entity_id]
        if not entity.subject_areas:
            logger.warning(
                "entity %s has no subject areas; left out of the area pie",
                entity.entity_id,
            )
            continue
        mentioned = entity_mention_status(entity, mention_of) == "mentioned"
        for area in entity.subject_areas:
            slot = counts.setdefault(area, [0, 0])
            slot[0] += 1
            slot[1] += int(mentioned)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1][0], kv[0]))
    keep, rest = ranked[:top], ranked[top:]
    if rest:
        other = [sum(v[0] for _, v in rest), sum(v[1] for _, v in rest)]
        keep.append(("Other subject areas", other))
    rows = []
    for area, (count, mentioned) in keep:
        rows.append({
            "area": area,
            "count": count,
            "mentioned": mentioned,
            "not_mentioned": count - mentioned,
            "mentioned_pct": Fraction(mentioned, count) if count else Fraction(0),
            "not_mentioned_pct": (
                Fraction(count - mentioned, count) if count else Fraction(0)
            ),
        })
    return ChartDataset("area-pie", category, period, rows)


def _placement_index(placements) -> dict[tuple[str, str], CitationPlacement]:
    return {(p.entity_id, p.retracted_id): p for p in placements}


def build_d1_citations(
    placements: list[CitationPlacement],
    citations: list[InTextCitation],
    category: str,
    bin_count: int = 5,
) -> ChartDataset:
    """Distribution of the in-text citations over the period set.

    Same slicing as the entity chart, with negative/neutral/positive
    series; covers only citations whose full text was accessible (the
    only ones that exist) and whose pair has a placement.
    """
    _check_single_category(placements, category)
    series = ("negative", "neutral", "positive")
    rows = _slice_skeleton(category, bin_count, series)
    index = {(r["period"], r["bin"]): r for r in rows}
    lookup = _placement_index(placements)
    for citation in citations:
        placement = lookup.get((citation.entity_id, citation.retracted_id))
        if placement is None:
            continue  # pair not placed in this category
        if not citation.sentiment:
            continue  # awaiting annotation
        row = index[(placement.period_label, placement.fifth_bin)]
        row[citation.sentiment] += 1
        row["total"] += 1
    return ChartDataset("d1-citations", category, None, rows)


def _sentiment_bar_rows(
    named_of, citations, placements, category, period
) -> list[dict]:
    lookup = _placement_index(placements)
    in_period = []
    for citation in citations:
        placement = lookup.get((citation.entity_id, citation.retracted_id))
        if placement is None or placement.period_label != period:
            continue
        if not citation.sentiment:
            continue
        in_period.append(citation)
    total = len(in_period)
    grouped: dict[str, dict[str, int]] = {}
    for citation in in_period:
        name = named_of(citation)
        agg = grouped.setdefault(
            name, {"negative": 0, "neutral": 0, "positive": 0}
        )
        agg[citation.sentiment] += 1
    rows = []
    for name, sentiments in grouped.items():
        row_total = sum(sentiments.values())
        row = {
            "name": name,
            "total": row_total,
            "share": Fraction(row_total, total) if total else Fraction(0),
        }
        for sentiment, count in sentiments.items():
            row[sentiment] = count
            row[f"{sentiment}_share"] = (
                Fraction(count, total) if total else Fraction(0)
            )
        rows.append(row)
    rows.sort(key=lambda r: (-r["share"], r["name"]))
    return rows


def build_intent_bars(
    citations: list[InTextCitation],
    placements: list[CitationPlacement],
    category: str,
    period: str,
) -> ChartDataset:
    """Horizontal bars of one period's citations grouped by citation function."""
    _check_single_category(placements, category)
    rows = _sentiment_bar_rows(
        lambda c: c.intent, citations, placements, category, period
    )
    return ChartDataset("intent-bars", category, period, rows)


def build_section_bars(
    citations: list[InTextCitation],
    placements: list[CitationPlacement],
    category: str,
    period: str,
) -> ChartDataset:
    """Same as the intent bars, grouped by section kind.

    Only the seven named kinds keep their own row; the residual kinds
    share the "unclassified" one.
    """
    _check_single_category(placements, category)

    def section_group(citation):
        kind = citation.section_kind
        return kind if kind in NAMED_SECTION_KINDS else "unclassified"

    rows = _sentiment_bar_rows(
        section_group, citations, placements, category, period
    )
    return ChartDataset("section-bars", category, period, rows)


def build_all_charts(
    placements: list[CitationPlacement],
    entities: list[CitingEntity],
    citations: list[InTextCitation],
    mention_of: dict[str, str] | None = None,
    bin_count: int = 5,
) -> list[ChartDataset]:
    """Every chart dataset for every category present in the placements."""
    datasets = []
    for category in sorted({p.category for p in placements}):
        subset = [p for p in placements if p.category == category]
        datasets.append(
            build_d1_entities(subset, entities, category, mention_of, bin_count)
        )
        datasets.append(build_d1_citations(subset, citations, category, bin_count))
        for period in _category_period_labels(category):
            datasets.append(
                build_area_pie(subset, entities, category, period, mention_of)
            )
            datasets.append(build_intent_bars(citations, subset, category, period))
            datasets.append(build_section_bars(citations, subset, category, period))
    return datasets
