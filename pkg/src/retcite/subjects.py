"""Subject-area and subject-category classification of citing entities.

Venues with an ISSN are matched against a local snapshot of the Scimago
journal classification (27 areas, 313 categories).  Books and book
chapters go through their ISBN: an external lookup returns the Library of
Congress Classification code, whose alphabetic prefix is mapped to a
discipline and then to a Scimago area or category.  Whatever remains ends
up in a manual queue.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from importlib import resources

from .errors import MalformedInputError

logger = logging.getLogger(__name__)

MISC_SUFFIX = " (miscellaneous)"

_ISSN_RE = re.compile(r"^\d{4}-\d{3}[\dX]$")


def _norm_name(value: str) -> str:
    """Whitespace-normalized casefold, used for exact name matching."""
    return " ".join(value.split()).casefold()


@dataclass
class ScimagoIndex:
    """Snapshot of the Scimago venue classification."""

    issn_map: dict[str, tuple[tuple[str, ...], tuple[str, ...]]]
    area_names: set[str]
    category_names: set[str]
    category_to_area: dict[str, str]
    _areas_by_norm: dict[str, str] = field(default_factory=dict, repr=False)
    _cats_by_norm: dict[str, str] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._areas_by_norm = {_norm_name(a): a for a in self.area_names}
        self._cats_by_norm = {_norm_name(c): c for c in self.category_names}

    def match_area(self, name: str) -> str | None:
        return self._areas_by_norm.get(_norm_name(name))

    def match_category(self, name: str) -> str | None:
        return self._cats_by_norm.get(_norm_name(name))

    def miscellaneous_category(self, area: str) -> str:
        """The catch-all category of an area, per the suffix rule.

        The Multidisciplinary area has no suffixed bucket in the snapshot;
        its single category carries the area name itself.
        """
        candidate = area + MISC_SUFFIX
        if candidate in self.category_names:
            return candidate
        if area in self.category_names and self.category_to_area[area] == area:
            return area
        return candidate


@dataclass
class LccIndex:
    """Alphabetic LCC prefix to discipline name, longest prefix wins."""

    prefix_to_discipline: dict[str, str]

    def __post_init__(self):
        for prefix in self.prefix_to_discipline:
            if not (1 <= len(prefix) <= 3 and prefix.isalpha() and prefix.isupper()):
                raise MalformedInputError(f"bad LCC prefix {prefix!r}")

    def lookup(self, alpha_prefix: str) -> str | None:
        for length in range(min(3, len(alpha_prefix)), 0, -1):
            discipline = self.prefix_to_discipline.get(alpha_prefix[:length])
            if discipline is not None:
                return discipline
        return None


def load_scimago_index(taxonomy_path=None, issn_path=None) -> ScimagoIndex:
    """Load the shipped (or an alternative) Scimago snapshot."""
    data = resources.files("retcite") / "data"
    taxonomy_path = taxonomy_path or data / "scimago_taxonomy.csv"
    issn_path = issn_path or data / "scimago_issn.csv"

    category_to_area: dict[str, str] = {}
    with open(str(taxonomy_path), encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            category_to_area[row["category"]] = row["area"]
    area_names = set(category_to_area.values())

    issn_map = {}
    with open(str(issn_path), encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            areas = tuple(a.strip() for a in row["areas"].split(";") if a.strip())
            cats = tuple(c.strip() for c in row["categories"].split(";") if c.strip())
            issn_map[row["issn"]] = (areas, cats)

    return ScimagoIndex(
        issn_map=issn_map,
        area_names=area_names,
        category_names=set(category_to_area),
        category_to_area=category_to_area,
    )


def load_lcc_index(path=None) -> LccIndex:
    path = path or resources.files("retcite") / "data" / "lcc_index.csv"
    prefix_to_discipline = {}
    with open(str(path), encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            prefix_to_discipline[row["prefix"]] = row["discipline"]
    return LccIndex(prefix_to_discipline)


def normalize_issn(issn: str) -> str:
    """Bring an ISSN to NNNN-NNNC form, raising on anything else."""
    compact = issn.strip().upper().replace("-", "").replace(" ", "")
    if len(compact) == 8 and re.fullmatch(r"\d{7}[\dX]", compact):
        return compact[:4] + "-" + compact[4:]
    raise MalformedInputError(f"malformed ISSN {issn!r}")


def classify_by_issn(
    issn: str, index: ScimagoIndex
) -> tuple[tuple[str, ...], tuple[str, ...]] | None:
    """All areas and categories of the venue, or None when not indexed."""
    normalized = normalize_issn(issn)
    return index.issn_map.get(normalized)


def lcc_to_subject(
    lcc_code: str, lcc_index: LccIndex, scimago: ScimagoIndex
) -> tuple[str, str] | None:
    """Resolve an LCC code to one (area, category) pair.

    Only the starting alphabetic segment of the code matters.  A discipline
    whose name equals a Scimago area gets that area plus its miscellaneous
    category; one equal to a Scimago category gets the category plus its
    macro area; anything else is left for manual annotation (None).
    """
    code = lcc_code.strip().upper()
    match = re.match(r"^[A-Z]+", code)
    if not match:
        raise MalformedInputError(f"LCC code {lcc_code!r} has no alphabetic prefix")
    discipline = lcc_index.lookup(match.group(0))
    if discipline is None:
        return None
    area = scimago.match_area(discipline)
    if area is not None:
        return area, scimago.miscellaneous_category(area)
    category = scimago.match_category(discipline)
    if category is not None:
        return scimago.category_to_area[category], category
    return None


def validate_isbn(isbn: str) -> str:
    """Check the ISBN-10 / ISBN-13 check digit; returns the compact form."""
    compact = isbn.replace("-", "").replace(" ", "").upper()
    if len(compact) == 10:
        if not re.fullmatch(r"\d{9}[\dX]", compact):
            raise MalformedInputError(f"malformed ISBN {isbn!r}")
        total = sum((10 - i) * (10 if ch == "X" else int(ch))
                    for i, ch in enumerate(compact))
        if total % 11 != 0:
            raise MalformedInputError(f"ISBN {isbn!r} fails its check digit")
        return compact
    if len(compact) == 13:
        if not compact.isdigit():
            raise MalformedInputError(f"malformed ISBN {isbn!r}")
        total = sum((1 if i % 2 == 0 else 3) * int(ch)
                    for i, ch in enumerate(compact))
        if total % 10 != 0:
            raise MalformedInputError(f"ISBN {isbn!r} fails its check digit")
        return compact
    raise MalformedInputError(f"malformed ISBN {isbn!r}")


@dataclass(frozen=True)
class ManualQueueItem:
    """An entity the automatic classifiers could not resolve."""

    entity_id: str
    reason: str
    metadata: str = ""


def classify_by_isbn(
    isbn: str,
    lcc_fetcher,
    lcc_index: LccIndex,
    scimago: ScimagoIndex,
    entity_id: str = "",
) -> tuple[str, str] | ManualQueueItem:
    """Resolve an ISBN through the LCC lookup service.

    ``lcc_fetcher`` is a callable mapping a compact ISBN to an LCC code
    string or None; see retcite.harvest.make_isbn_lcc_fetcher.
    """
    compact = validate_isbn(isbn)
    try:
        code = lcc_fetcher(compact)
    except Exception as exc:  # service failure is a queue item, not a crash
        logger.warning("ISBN service failed for %s: %s", compact, exc)
        return ManualQueueItem(entity_id, f"isbn-service-error: {exc}", compact)
    if not code:
        return ManualQueueItem(entity_id, "no-lcc-record", compact)
    resolved = lcc_to_subject(code, lcc_index, scimago)
    if resolved is None:
        return ManualQueueItem(entity_id, f"lcc-unresolved: {code}", compact)
    return resolved


def apply_manual_subject(
    entity_id: str, area: str, scimago: ScimagoIndex
) -> tuple[str, str]:
    """Record a manually chosen area; the category gets the suffix rule."""
    canonical = scimago.match_area(area)
    if canonical is None:
        raise MalformedInputError(
            f"entity {entity_id!r}: {area!r} is not a known subject area"
        )
    return canonical, scimago.miscellaneous_category(canonical)
