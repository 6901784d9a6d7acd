"""Harvesting of citing entities from open citation and metadata services.

Every HTTP response is cached on disk keyed by the request, so a harvest
can be replayed offline and tests run exclusively against recorded
fixtures.  A shared token-bucket limiter keeps the request rate of each
endpoint under its configured ceiling even with parallel workers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import requests

from .errors import MalformedInputError, TransientServiceError
from .model import CitingEntity

logger = logging.getLogger(__name__)

MAX_RETRIES = 3
RETRY_BACKOFF = 1.0  # seconds, doubled per attempt

# Raw publication-type strings (Crossref vocabulary and close variants)
# normalized to the internal enum.  The four excluded kinds are mapped to
# their exclusion reason.
EXCLUDED_KINDS = {
    "bibliography": "bibliography",
    "retraction-notification": "retraction-notification",
    "retraction": "retraction-notification",
    "presentation": "presentation",
    "data-repository": "data-repository",
    "dataset": "data-repository",
    "database": "data-repository",
}

TYPE_MAP = {
    "journal-article": "journal-article",
    "article": "journal-article",
    "book": "book",
    "monograph": "book",
    "edited-book": "book",
    "reference-book": "book",
    "book-chapter": "book-chapter",
    "book-part": "book-chapter",
    "book-section": "book-chapter",
    "proceedings-article": "conference-paper",
    "conference-paper": "conference-paper",
    "posted-content": "preprint",
    "preprint": "preprint",
    "dissertation": "thesis",
    "thesis": "thesis",
    "editorial": "editorial",
}


@dataclass(frozen=True)
class CitationRecord:
    citing_doi: str
    cited_doi: str
    creation_year: int | None = None

    def __post_init__(self):
        if self.citing_doi == self.cited_doi:
            raise MalformedInputError(
                f"citation record cites itself: {self.citing_doi!r}"
            )


@dataclass
class ServiceEndpointConfig:
    base_url: str
    rate_limit: float = 5.0  # max requests per second
    polite_contact: str | None = None
    cache_dir: str | Path | None = None
    kind: str = "auto"  # response dialect: "coci", "crossref", "isbndb" or "auto"

    def __post_init__(self):
        if self.rate_limit <= 0:
            raise MalformedInputError("rate_limit must be positive")


class RateLimiter:
    """Token bucket; clock and sleep are injectable for testing."""

    def __init__(self, rate: float, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate
        self.capacity = max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._last) * self.rate
                )
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def normalize_doi(doi: str) -> str:
    doi = doi.strip()
    for prefix in ("https://doi.org/", "http://doi.org/", "http://dx.doi.org/", "doi:"):
        if doi.lower().startswith(prefix):
            doi = doi[len(prefix):]
    return doi.lower()


def is_valid_doi(doi: str) -> bool:
    return bool(re.match(r"^10\.\d{4,9}/\S+$", doi))


def normalize_title(title: str) -> str:
    """Casefold, strip punctuation and collapse whitespace."""
    decomposed = unicodedata.normalize("NFKD", title).casefold()
    cleaned = "".join(
        "" if unicodedata.combining(ch)
        else ch if ch.isalnum() or ch.isspace() else " "
        for ch in decomposed
    )
    return " ".join(cleaned.split())


def entity_key(doi: str | None, title: str = "", year=None) -> str:
    """Deduplication key: lowercase DOI, or a synthetic title+year hash."""
    if doi:
        return normalize_doi(doi)
    digest = hashlib.sha256(
        f"{normalize_title(title)}|{year or ''}".encode("utf-8")
    ).hexdigest()
    return f"x{digest[:12]}"


class ResponseCache:
    """One JSON file per request hash under the endpoint cache dir."""

    def __init__(self, cache_dir: str | Path):
        self.root = Path(cache_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, url: str) -> Path:
        return self.root / (hashlib.sha256(url.encode("utf-8")).hexdigest() + ".json")

    def get(self, url: str):
        path = self._path(url)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            record = json.load(fh)
        return record["status"], record["body"]

    def put(self, url: str, status: int, body: str):
        path = self._path(url)
        payload = json.dumps(
            {"url": url, "status": status, "body": body}, sort_keys=True
        )
        with self._lock:
            tmp = path.with_suffix(".tmp")
            tmp.write_text(payload, encoding="utf-8")
            tmp.replace(path)


def requests_transport(url: str, headers: dict) -> tuple[int, str]:
    response = requests.get(url, headers=headers, timeout=30)
    return response.status_code, response.text


class FixtureTransport:
    """Transport replaying a recorded url -> {status, body} JSON map."""

    def __init__(self, fixtures: dict | str | Path):
        if not isinstance(fixtures, dict):
            with open(fixtures, encoding="utf-8") as fh:
                fixtures = json.load(fh)
        self.fixtures = fixtures
        self.calls = 0

    def __call__(self, url: str, headers: dict) -> tuple[int, str]:
        self.calls += 1
        try:
            record = self.fixtures[url]
        except KeyError:
            raise requests.ConnectionError(f"no recorded response for {url}")
        body = record["body"]
        if not isinstance(body, str):
            body = json.dumps(body, sort_keys=True)
        return record.get("status", 200), body


class HttpClient:
    """Cache-first GET client with retries and rate limiting."""

    def __init__(self, endpoint: ServiceEndpointConfig, transport=None,
                 limiter: RateLimiter | None = None, offline: bool = False):
        self.endpoint = endpoint
        self.transport = transport or requests_transport
        self.limiter = limiter or RateLimiter(endpoint.rate_limit)
        self.offline = offline
        self.cache = ResponseCache(endpoint.cache_dir) if endpoint.cache_dir else None
        self.network_calls = 0

    def _headers(self) -> dict:
        headers = {"Accept": "application/json", "User-Agent": "retcite/0.1"}
        if self.endpoint.polite_contact:
            headers["User-Agent"] += f" (mailto:{self.endpoint.polite_contact})"
        return headers

    def get(self, url: str) -> tuple[int, str]:
        if self.cache is not None:
            hit = self.cache.get(url)
            if hit is not None:
                return hit
        if self.offline:
            raise TransientServiceError(
                f"offline mode and no cached response for {url}", retries=0
            )
        last_error = None
        for attempt in range(1, MAX_RETRIES + 1):
            self.limiter.acquire()
            try:
                self.network_calls += 1
                status, body = self.transport(url, self._headers())
            except requests.RequestException as exc:
                last_error = exc
                logger.warning("request failed (%d/%d) %s: %s",
                               attempt, MAX_RETRIES, url, exc)
            else:
                if status >= 500:
                    last_error = f"HTTP {status}"
                    logger.warning("server error (%d/%d) %s: HTTP %s",
                                   attempt, MAX_RETRIES, url, status)
                else:
                    if self.cache is not None:
                        self.cache.put(url, status, body)
                    return status, body
            if attempt < MAX_RETRIES:
                time.sleep(RETRY_BACKOFF * attempt)
        raise TransientServiceError(
            f"{url} failed after {MAX_RETRIES} attempts: {last_error}",
            retries=MAX_RETRIES,
        )


def _year_from_date(value) -> int | None:
    if value in (None, ""):
        return None
    match = re.match(r"^(\d{4})", str(value))
    return int(match.group(1)) if match else None


def fetch_citing(doi: str, client: HttpClient) -> list[CitationRecord]:
    """All citation records whose cited DOI is the given one, deduplicated."""
    doi = normalize_doi(doi)
    if not is_valid_doi(doi):
        raise MalformedInputError(f"not a DOI: {doi!r}")
    url = f"{client.endpoint.base_url.rstrip('/')}/citations/{doi}"
    status, body = client.get(url)
    if status == 404:
        return []
    if status != 200:
        raise TransientServiceError(f"{url}: HTTP {status}", retries=0)
    try:
        rows = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"{url}: bad JSON payload: {exc}")
    records = []
    seen = set()
    for row in rows or []:
        citing = normalize_doi(str(row.get("citing", "")))
        cited = normalize_doi(str(row.get("cited", "")))
        if not citing or cited != doi or citing == cited:
            continue
        if citing in seen:
            continue
        seen.add(citing)
        records.append(
            CitationRecord(citing, cited, _year_from_date(row.get("creation")))
        )
    return records


def _parse_crossref(message: dict, entity: CitingEntity):
    entity.title = (message.get("title") or [""])[0] or entity.title
    issued = (message.get("issued") or {}).get("date-parts") or [[None]]
    if issued[0] and issued[0][0]:
        entity.year = int(issued[0][0])
    venue = message.get("container-title") or []
    entity.venue_title = venue[0] if venue else None
    issn = message.get("ISSN") or []
    isbn = [i.rsplit("/", 1)[-1] for i in (message.get("ISBN") or [])]
    entity.venue_id = issn[0] if issn else (isbn[0] if isbn else None)
    raw_type = str(message.get("type", "")).lower()
    entity.publication_type, reason = normalize_publication_type(raw_type)
    entity.excluded_reason = reason or ""


def _parse_coci(rows: list, entity: CitingEntity):
    if not rows:
        return
    row = rows[0]
    entity.title = row.get("title") or entity.title
    entity.year = _year_from_date(row.get("year")) or entity.year
    entity.venue_title = row.get("source_title") or None
    source_id = row.get("source_id") or ""
    match = re.search(r"(?:issn|isbn):([\w-]+)", source_id)
    entity.venue_id = match.group(1) if match else (source_id or None)


def normalize_publication_type(raw: str) -> tuple[str, str | None]:
    """Internal enum value plus the exclusion reason, if any."""
    raw = raw.strip().lower()
    if raw in EXCLUDED_KINDS:
        return "excluded-kind", EXCLUDED_KINDS[raw]
    if raw in TYPE_MAP:
        return TYPE_MAP[raw], None
    if raw:
        logger.warning("unknown publication type %r kept as 'other'", raw)
    return "other", None


def fetch_metadata(doi: str, clients: list[HttpClient]) -> CitingEntity:
    """Basic metadata of one citing entity from the first answering service."""
    doi = normalize_doi(doi)
    if not is_valid_doi(doi):
        raise MalformedInputError(f"not a DOI: {doi!r}")
    entity = CitingEntity(entity_id=doi, doi=doi)
    for client in clients:
        kind = client.endpoint.kind
        base = client.endpoint.base_url.rstrip("/")
        if kind == "crossref" or (kind == "auto" and "crossref" in base):
            url = f"{base}/works/{doi}"
        else:
            url = f"{base}/metadata/{doi}"
        try:
            status, body = client.get(url)
        except TransientServiceError as exc:
            logger.warning("metadata endpoint failed for %s: %s", doi, exc)
            continue
        if status != 200:
            continue
        try:
            payload = json.loads(body)
        except json.JSONDecodeError:
            logger.warning("metadata endpoint returned bad JSON for %s", doi)
            continue
        if isinstance(payload, dict) and "message" in payload:
            _parse_crossref(payload["message"], entity)
        elif isinstance(payload, list):
            _parse_coci(payload, entity)
        else:
            continue
        for missing in ("year", "title", "venue_id", "venue_title"):
            if not getattr(entity, missing):
                logger.info("metadata of %s lacks %s", doi, missing)
        return entity
    entity.metadata_incomplete = True
    logger.warning("no metadata service answered for %s", doi)
    return entity


@dataclass(frozen=True)
class ExcludedEntity:
    entity: CitingEntity
    reason: str


def filter_publication_types(
    entities: list[CitingEntity],
) -> tuple[list[CitingEntity], list[ExcludedEntity]]:
    """Split the excluded publication kinds off, preserving input order."""
    kept, excluded = [], []
    for entity in entities:
        if entity.publication_type == "excluded-kind":
            excluded.append(ExcludedEntity(entity, entity.excluded_reason))
        else:
            kept.append(entity)
    return kept, excluded


def load_retraction_flags(path) -> dict[str, str]:
    """Two-column flags file: key (DOI or title), full_retraction yes/no."""
    import csv

    flags = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if "key" not in row or "full_retraction" not in row:
                raise MalformedInputError(
                    f"{path}: flags file needs 'key' and 'full_retraction' columns"
                )
            key = row["key"].strip()
            key = normalize_doi(key) if key.startswith("10.") else normalize_title(key)
            flags[key] = row["full_retraction"].strip().lower()
    return flags


def merge_retraction_flags(
    entities: list[CitingEntity], flags: dict[str, str]
) -> list[CitingEntity]:
    """Mark entities whose flag entry records a full retraction."""
    matched = set()
    for entity in entities:
        key = None
        if entity.doi and normalize_doi(entity.doi) in flags:
            key = normalize_doi(entity.doi)
        elif entity.title and normalize_title(entity.title) in flags:
            key = normalize_title(entity.title)
        if key is not None:
            matched.add(key)
            entity.is_retracted = "yes" if flags[key] == "yes" else "no"
        else:
            entity.is_retracted = "no"
    for key in set(flags) - matched:
        logger.warning("retraction flag key %r matched no entity", key)
    return entities


def make_isbn_lcc_fetcher(client: HttpClient):
    """LCC-code lookup against an ISBN metadata service."""

    def fetch(isbn: str) -> str | None:
        url = f"{client.endpoint.base_url.rstrip('/')}/book/{isbn}"
        status, body = client.get(url)
        if status == 404:
            return None
        if status != 200:
            raise TransientServiceError(f"{url}: HTTP {status}", retries=0)
        payload = json.loads(body)
        book = payload.get("book") or {}
        return book.get("lcc") or None

    return fetch


def harvest_citing_entities(
    retset,
    citations_client: HttpClient,
    metadata_clients: list[HttpClient],
    workers: int = 4,
) -> tuple[list[CitingEntity], list[ExcludedEntity], dict[str, list[CitationRecord]]]:
    """Gather every citing entity of a whole RET-SET.

    Returns the deduplicated citing entities (sorted by key), the excluded
    ones with reasons, and the raw citation records per retracted id.
    """
    records_by_article: dict[str, list[CitationRecord]] = {}
    for article in retset:
        if not article.doi:
            logger.warning("article %s has no DOI; nothing to harvest", article.id)
            records_by_article[article.id] = []
            continue
        records_by_article[article.id] = fetch_citing(article.doi, citations_client)

    cites_by_doi: dict[str, set[str]] = {}
    creation_by_doi: dict[str, int | None] = {}
    for article in retset:
        for record in records_by_article[article.id]:
            cites_by_doi.setdefault(record.citing_doi, set()).add(article.id)
            creation_by_doi.setdefault(record.citing_doi, record.creation_year)

    dois = sorted(cites_by_doi)
    if workers > 1 and len(dois) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fetched = list(pool.map(
                lambda d: fetch_metadata(d, metadata_clients), dois
            ))
    else:
        fetched = [fetch_metadata(d, metadata_clients) for d in dois]

    by_key: dict[str, CitingEntity] = {}
    for doi, entity in zip(dois, fetched):
        if entity.year is None and creation_by_doi.get(doi) is not None:
            logger.info("using citation creation year for %s", doi)
            entity.year = creation_by_doi[doi]
        entity.entity_id = entity_key(entity.doi, entity.title, entity.year)
        entity.cites = sorted(cites_by_doi[doi])
        if entity.entity_id in by_key:
            by_key[entity.entity_id].cites = sorted(
                set(by_key[entity.entity_id].cites) | set(entity.cites)
            )
        else:
            by_key[entity.entity_id] = entity

    ordered = [by_key[k] for k in sorted(by_key)]
    kept, excluded = filter_publication_types(ordered)
    return kept, excluded, records_by_article
