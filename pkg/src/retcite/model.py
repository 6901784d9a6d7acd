"""Domain types shared by all pipeline stages.

Holds the retracted-article records, the retraction event timeline, the
period partition derived from it, and the citing-entity / in-text
citation records that the dataset tables persist.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum

from .errors import MalformedInputError

logger = logging.getLogger(__name__)

RETSET_FIELDS = (
    "id",
    "doi",
    "publication_year",
    "authors",
    "subjects",
    "partial_retraction_year",
    "full_retraction_year",
)

PUBLICATION_TYPES = (
    "journal-article",
    "book",
    "book-chapter",
    "conference-paper",
    "preprint",
    "thesis",
    "editorial",
    "other",
    "excluded-kind",
)

SECTION_KINDS = (
    "introduction",
    "method",
    "abstract",
    "results",
    "conclusions",
    "background",
    "discussion",
    "first-section",
    "middle-section",
    "final-section",
    "none",
)

SENTIMENTS = ("positive", "negative", "neutral")


class Category(str, Enum):
    """Retracted-article category: with / without an earlier partial retraction."""

    RET_A = "RET_A"
    RET_B = "RET_B"


@dataclass(frozen=True)
class RetractedArticle:
    id: str
    publication_year: int
    full_retraction_year: int
    doi: str | None = None
    authors: tuple[str, ...] = ()
    subjects: tuple[str, ...] = ()
    partial_retraction_year: int | None = None

    def __post_init__(self):
        if self.full_retraction_year is None:
            raise MalformedInputError(f"article {self.id!r}: missing full_retraction_year")
        if self.partial_retraction_year is not None:
            if not (
                self.publication_year
                <= self.partial_retraction_year
                <= self.full_retraction_year
            ):
                raise MalformedInputError(
                    f"article {self.id!r}: partial retraction year "
                    f"{self.partial_retraction_year} outside "
                    f"[{self.publication_year}, {self.full_retraction_year}]"
                )


@dataclass(frozen=True)
class RetractionTimeline:
    """The four event years that shape a retracted article's citation life."""

    e_retpub: int
    e_fr: int
    e_lastcit: int
    e_pr: int | None = None

    def __post_init__(self):
        if self.e_fr < self.e_retpub + 1:
            raise MalformedInputError(
                f"full retraction year {self.e_fr} must be at least one year "
                f"after publication year {self.e_retpub}"
            )
        if self.e_pr is not None and not (self.e_retpub <= self.e_pr <= self.e_fr):
            raise MalformedInputError(
                f"partial retraction year {self.e_pr} outside "
                f"[{self.e_retpub}, {self.e_fr}]"
            )
        if self.e_lastcit < self.e_fr + 1:
            raise MalformedInputError(
                f"last citation year {self.e_lastcit} must be at least one year "
                f"after full retraction year {self.e_fr}"
            )

    @property
    def category(self) -> Category:
        # A partial retraction in the same year as the full one counts as none.
        if self.e_pr is not None and self.e_pr < self.e_fr:
            return Category.RET_A
        return Category.RET_B


@dataclass(frozen=True)
class Period:
    label: str  # P0..P4
    first_year: int
    last_year: int  # first_year - 1 when the period is empty

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(range(self.first_year, self.last_year + 1))

    @property
    def empty(self) -> bool:
        return self.last_year < self.first_year

    def __contains__(self, year: object) -> bool:
        return isinstance(year, int) and self.first_year <= year <= self.last_year


@dataclass
class CitingEntity:
    entity_id: str
    doi: str | None = None
    year: int | None = None
    title: str = ""
    venue_id: str | None = None
    venue_title: str | None = None
    publication_type: str = "other"
    is_retracted: str = "no"
    subject_areas: list[str] = field(default_factory=list)
    subject_categories: list[str] = field(default_factory=list)
    abstract: str | None = None
    fulltext_available: str = "no"
    cites: list[str] = field(default_factory=list)  # retracted-article ids
    metadata_incomplete: bool = False
    excluded_reason: str = ""  # set when publication_type == "excluded-kind"

    def __post_init__(self):
        if self.publication_type not in PUBLICATION_TYPES:
            raise MalformedInputError(
                f"unknown publication type {self.publication_type!r}"
            )


@dataclass
class InTextCitation:
    entity_id: str
    retracted_id: str
    pointer: str
    context: str
    section_label: str
    section_kind: str
    sentiment: str = ""
    intent: str = ""
    mentions_retraction: str = "no"

    def __post_init__(self):
        if self.section_kind not in SECTION_KINDS:
            raise MalformedInputError(f"unknown section kind {self.section_kind!r}")
        if self.sentiment and self.sentiment not in SENTIMENTS:
            raise MalformedInputError(f"unknown sentiment {self.sentiment!r}")


@dataclass(frozen=True)
class EligibilityVerdict:
    article_id: str
    eligible: bool
    violated: tuple[str, ...] = ()  # subset of ("a", "b", "c")


def validate_ret_set(
    articles: list[RetractedArticle],
    citing_years: dict[str, list[int]],
) -> list[EligibilityVerdict]:
    """Check each retracted article against the three eligibility constraints.

    (a) fully retracted at least one year after publication, (b) cited at
    least once outside the retraction year, (c) cited at least once in a
    later year than the retraction year.  ``citing_years`` maps article id
    to the publication years of its citing entities (possibly empty).
    """
    verdicts = []
    for article in articles:
        years = citing_years.get(article.id, [])
        violated = []
        if article.full_retraction_year < article.publication_year + 1:
            violated.append("a")
        if not any(y != article.full_retraction_year for y in years):
            violated.append("b")
        if not any(y >= article.full_retraction_year + 1 for y in years):
            violated.append("c")
        verdicts.append(
            EligibilityVerdict(article.id, not violated, tuple(violated))
        )
    return verdicts


def derive_periods(timeline: RetractionTimeline) -> list[Period]:
    """Partition [e_retpub, e_lastcit] into the period set of the timeline.

    RET_A timelines yield five periods (P2 may be empty when the full
    retraction follows the partial one by exactly one year); RET_B
    timelines yield {P0, P3, P4}.
    """
    if timeline.category is Category.RET_A:
        e_pr = timeline.e_pr
        return [
            Period("P0", timeline.e_retpub, e_pr - 1),
            Period("P1", e_pr, e_pr),
            Period("P2", e_pr + 1, timeline.e_fr - 1),
            Period("P3", timeline.e_fr, timeline.e_fr),
            Period("P4", timeline.e_fr + 1, timeline.e_lastcit),
        ]
    return [
        Period("P0", timeline.e_retpub, timeline.e_fr - 1),
        Period("P3", timeline.e_fr, timeline.e_fr),
        Period("P4", timeline.e_fr + 1, timeline.e_lastcit),
    ]


def build_timeline(
    article: RetractedArticle, citing_years: list[int]
) -> RetractionTimeline:
    """Derive a timeline from an article record and its harvested citing years.

    The last-citation event is the maximum citing year, which must fall at
    least one year after the full retraction (eligibility constraint (c)).
    """
    post = [y for y in citing_years if y >= article.full_retraction_year + 1]
    if not post:
        raise MalformedInputError(
            f"article {article.id!r}: no citation after the full retraction year"
        )
    return RetractionTimeline(
        e_retpub=article.publication_year,
        e_fr=article.full_retraction_year,
        e_lastcit=max(post),
        e_pr=article.partial_retraction_year,
    )


def _int_or_none(value, line_no: int, name: str) -> int | None:
    if value is None or value == "":
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise MalformedInputError(f"line {line_no}: field {name!r} is not a year: {value!r}")


def load_ret_set(path) -> list[RetractedArticle]:
    """Read the retracted-article input file (one JSON record per line).

    Each record carries exactly the fields: id, doi, publication_year,
    authors, subjects, partial_retraction_year, full_retraction_year.
    """
    articles = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedInputError(f"line {line_no}: invalid record: {exc}")
            if not isinstance(record, dict):
                raise MalformedInputError(f"line {line_no}: record is not an object")
            unknown = set(record) - set(RETSET_FIELDS)
            if unknown:
                raise MalformedInputError(
                    f"line {line_no}: unknown fields {sorted(unknown)}"
                )
            for required in ("id", "publication_year", "full_retraction_year"):
                if record.get(required) in (None, ""):
                    raise MalformedInputError(
                        f"line {line_no}: missing required field {required!r}"
                    )
            article_id = str(record["id"])
            if article_id in seen:
                raise MalformedInputError(f"line {line_no}: duplicate id {article_id!r}")
            seen.add(article_id)
            try:
                article = RetractedArticle(
                    id=article_id,
                    doi=record.get("doi") or None,
                    publication_year=_int_or_none(
                        record["publication_year"], line_no, "publication_year"
                    ),
                    authors=tuple(record.get("authors") or ()),
                    subjects=tuple(record.get("subjects") or ()),
                    partial_retraction_year=_int_or_none(
                        record.get("partial_retraction_year"),
                        line_no,
                        "partial_retraction_year",
                    ),
                    full_retraction_year=_int_or_none(
                        record["full_retraction_year"], line_no, "full_retraction_year"
                    ),
                )
            except MalformedInputError as exc:
                raise MalformedInputError(f"line {line_no}: {exc}")
            articles.append(article)
    if not articles:
        raise MalformedInputError(f"{path}: no retracted-article records found")
    return articles
