"""On-disk project store: dataset tables, run log, lock, export bundle.

Tables are UTF-8 CSV with a header row and fully quoted fields;
multi-valued cells join their parts with "; ".  Every write goes through
a temp-file-plus-rename, so a crash never leaves a half-written table.
"""

from __future__ import annotations

import csv
import datetime
import json
import logging
import os
import zipfile
from fractions import Fraction
from pathlib import Path

from .errors import MalformedInputError, StageOrderError
from .model import CitingEntity, InTextCitation
from .periods import CitationPlacement

logger = logging.getLogger(__name__)

MULTI_SEP = "; "

ENTITY_FIELDS = [
    "entity_id", "doi", "year", "title", "venue_id", "venue_title",
    "publication_type", "is_retracted", "subject_areas", "subject_categories",
    "abstract", "fulltext_available", "cites", "metadata_incomplete",
    "excluded_reason",
]

CITATION_FIELDS = [
    "entity_id", "retracted_id", "pointer", "context", "section_label",
    "section_kind", "sentiment", "intent", "mentions_retraction",
]

PLACEMENT_FIELDS = [
    "entity_id", "retracted_id", "category", "period_label", "citing_year",
    "p_cit", "p_cut", "fifth_bin",
]

# Flat view reproducing the published dataset schema, one row per
# in-text citation (entities without citations keep one row with the
# citation columns empty).
FLAT_FIELDS = [
    "doi", "year_of_publication", "title", "venue_id", "venue_title",
    "is_retracted", "subject_area", "subject_category", "abstract",
    "in_text_citation_section", "in_text_citation_context",
    "in_text_reference_pointer", "citation_intent", "citation_sentiment",
    "retraction_mentioned",
]


class ProjectStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.charts_dir = self.root / "charts"
        self.topics_dir = self.root / "topics"
        self.cache_dir = self.root / "cache"
        self._lock_fd = None

    # -- locking ------------------------------------------------------------
    @property
    def lock_path(self) -> Path:
        return self.root / ".lock"

    def acquire_lock(self):
        try:
            fd = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            pid_text = self.lock_path.read_text(encoding="utf-8").strip()
            if pid_text.isdigit() and not _pid_alive(int(pid_text)):
                logger.warning("removing stale lock of dead process %s", pid_text)
                self.lock_path.unlink()
                return self.acquire_lock()
            raise MalformedInputError(
                f"project {self.root} is locked by process {pid_text or '?'}"
            )
        os.write(fd, str(os.getpid()).encode())
        self._lock_fd = fd

    def release_lock(self):
        if self._lock_fd is not None:
            os.close(self._lock_fd)
            self._lock_fd = None
            self.lock_path.unlink(missing_ok=True)

    def __enter__(self):
        self.acquire_lock()
        return self

    def __exit__(self, *exc):
        self.release_lock()

    # -- paths ---------------------------------------------------------------
    def path(self, name: str) -> Path:
        return self.root / name

    def require(self, name: str, produced_by: str) -> Path:
        path = self.path(name)
        if not path.exists():
            raise StageOrderError(
                f"{name} not found in {self.root}; run '{produced_by}' first"
            )
        return path

    # -- generic table i/o ----------------------------------------------------
    def write_table(self, name: str, fieldnames: list[str], rows: list[dict]):
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames,
                                    quoting=csv.QUOTE_ALL)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row.get(k, "") for k in fieldnames})
        tmp.replace(path)

    def read_table(self, name: str) -> list[dict]:
        with open(self.path(name), encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))

    def append_jsonl(self, name: str, record: dict):
        with open(self.path(name), "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
            fh.flush()

    def read_jsonl(self, name: str) -> list[dict]:
        path = self.path(name)
        if not path.exists():
            return []
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return records

    def log_event(self, event: str, **detail):
        record = {
            "ts": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "event": event,
        }
        record.update(detail)
        self.append_jsonl("run.log", record)

    # -- entities -------------------------------------------------------------
    def write_entities(self, entities: list[CitingEntity]):
        rows = []
        for e in sorted(entities, key=lambda x: x.entity_id):
            rows.append({
                "entity_id": e.entity_id,
                "doi": e.doi or "",
                "year": "" if e.year is None else str(e.year),
                "title": e.title,
                "venue_id": e.venue_id or "",
                "venue_title": e.venue_title or "",
                "publication_type": e.publication_type,
                "is_retracted": e.is_retracted,
                "subject_areas": MULTI_SEP.join(e.subject_areas),
                "subject_categories": MULTI_SEP.join(e.subject_categories),
                "abstract": e.abstract or "",
                "fulltext_available": e.fulltext_available,
                "cites": MULTI_SEP.join(e.cites),
                "metadata_incomplete": "yes" if e.metadata_incomplete else "no",
                "excluded_reason": e.excluded_reason,
            })
        self.write_table("entities.csv", ENTITY_FIELDS, rows)

    def read_entities(self) -> list[CitingEntity]:
        entities = []
        for row in self.read_table("entities.csv"):
            entities.append(CitingEntity(
                entity_id=row["entity_id"],
                doi=row["doi"] or None,
                year=int(row["year"]) if row["year"] else None,
                title=row["title"],
                venue_id=row["venue_id"] or None,
                venue_title=row["venue_title"] or None,
                publication_type=row["publication_type"],
                is_retracted=row["is_retracted"],
                subject_areas=_split_multi(row["subject_areas"]),
                subject_categories=_split_multi(row["subject_categories"]),
                abstract=row["abstract"] or None,
                fulltext_available=row["fulltext_available"],
                cites=_split_multi(row["cites"]),
                metadata_incomplete=row["metadata_incomplete"] == "yes",
                excluded_reason=row["excluded_reason"],
            ))
        return entities

    # -- citations --------------------------------------------------------------
    def write_citations(self, citations: list[InTextCitation]):
        rows = [{
            "entity_id": c.entity_id,
            "retracted_id": c.retracted_id,
            "pointer": c.pointer,
            "context": c.context,
            "section_label": c.section_label,
            "section_kind": c.section_kind,
            "sentiment": c.sentiment,
            "intent": c.intent,
            "mentions_retraction": c.mentions_retraction,
        } for c in citations]
        self.write_table("citations.csv", CITATION_FIELDS, rows)

    def read_citations(self) -> list[InTextCitation]:
        return [
            InTextCitation(**row) for row in self.read_table("citations.csv")
        ]

    # -- placements ---------------------------------------------------------------
    def write_placements(self, placements: list[CitationPlacement]):
        rows = []
        for p in sorted(placements, key=lambda x: (x.entity_id, x.retracted_id)):
            rows.append({
                "entity_id": p.entity_id,
                "retracted_id": p.retracted_id,
                "category": p.category,
                "period_label": p.period_label,
                "citing_year": str(p.citing_year),
                "p_cit": MULTI_SEP.join(str(y) for y in p.p_cit),
                "p_cut": str(p.p_cut),
                "fifth_bin": "" if p.fifth_bin is None else str(p.fifth_bin),
            })
        self.write_table("placements.csv", PLACEMENT_FIELDS, rows)

    def read_placements(self) -> list[CitationPlacement]:
        placements = []
        for row in self.read_table("placements.csv"):
            placements.append(CitationPlacement(
                entity_id=row["entity_id"],
                retracted_id=row["retracted_id"],
                category=row["category"],
                period_label=row["period_label"],
                citing_year=int(row["citing_year"]),
                p_cit=tuple(int(y) for y in _split_multi(row["p_cit"])),
                p_cut=Fraction(row["p_cut"]),
                fifth_bin=int(row["fifth_bin"]) if row["fifth_bin"] else None,
            ))
        return placements

    # -- export ---------------------------------------------------------------------
    def write_flat_dataset(self, entities: list[CitingEntity],
                           citations: list[InTextCitation]):
        by_entity: dict[str, list[InTextCitation]] = {}
        for c in citations:
            by_entity.setdefault(c.entity_id, []).append(c)
        rows = []
        for e in sorted(entities, key=lambda x: x.entity_id):
            base = {
                "doi": e.doi or "None",
                "year_of_publication": "" if e.year is None else str(e.year),
                "title": e.title,
                "venue_id": e.venue_id or "",
                "venue_title": e.venue_title or "",
                "is_retracted": e.is_retracted,
                "subject_area": MULTI_SEP.join(e.subject_areas),
                "subject_category": MULTI_SEP.join(e.subject_categories),
                "abstract": e.abstract or "",
            }
            cited = by_entity.get(e.entity_id, [])
            if not cited:
                rows.append({**base,
                             "in_text_citation_section": "",
                             "in_text_citation_context": "",
                             "in_text_reference_pointer": "",
                             "citation_intent": "",
                             "citation_sentiment": "",
                             "retraction_mentioned": ""})
            for c in cited:
                rows.append({**base,
                             "in_text_citation_section": c.section_label,
                             "in_text_citation_context": c.context,
                             "in_text_reference_pointer": c.pointer,
                             "citation_intent": c.intent,
                             "citation_sentiment": c.sentiment,
                             "retraction_mentioned": c.mentions_retraction})
        self.write_table("flat_dataset.csv", FLAT_FIELDS, rows)

    def build_archive(self, archive_name: str = "export.zip") -> Path:
        """Bundle all produced artifacts; fixed timestamps keep it reproducible."""
        members = []
        for name in ("retset.jsonl", "entities.csv", "citations.csv",
                     "placements.csv", "verdicts.csv", "excluded.csv",
                     "flat_dataset.csv"):
            if self.path(name).exists():
                members.append(self.path(name))
        for folder in (self.charts_dir, self.topics_dir):
            if folder.exists():
                members.extend(p for p in folder.rglob("*") if p.is_file())
        members.sort(key=lambda p: str(p.relative_to(self.root)))
        archive_path = self.path(archive_name)
        tmp = archive_path.with_suffix(".tmp")
        with zipfile.ZipFile(tmp, "w", zipfile.ZIP_DEFLATED) as bundle:
            for member in members:
                info = zipfile.ZipInfo(
                    str(member.relative_to(self.root)),
                    date_time=(1980, 1, 1, 0, 0, 0),
                )
                info.compress_type = zipfile.ZIP_DEFLATED
                info.external_attr = 0o644 << 16
                bundle.writestr(info, member.read_bytes())
        tmp.replace(archive_path)
        return archive_path


def _split_multi(cell: str) -> list[str]:
    return [part for part in cell.split(MULTI_SEP) if part] if cell else []


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except OSError:
        return False
    return True
