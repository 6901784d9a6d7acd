"""Run configuration: endpoints, seeds, stop lists, LDA settings."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MalformedInputError
from .harvest import ServiceEndpointConfig

POLITE_CONTACT_ENV = "RETCITE_MAILTO"

DEFAULT_CITATIONS_URL = "https://opencitations.net/index/coci/api/v1"
DEFAULT_METADATA_URLS = [
    ("https://api.crossref.org", "crossref"),
    ("https://opencitations.net/index/coci/api/v1", "coci"),
]
DEFAULT_ISBN_URL = "https://api2.isbndb.com"


@dataclass
class LdaSettings:
    alpha: float | None = None  # defaults to 50/K inside the trainer
    beta: float = 0.01
    iterations: int = 1000
    restarts: int = 3
    k_min: int = 1
    k_max: int = 40
    fixed_k: int | None = None
    top_n: int = 10
    coherence: str = "umass"
    stemming: bool = False
    vectorization: str = "bow"

    @property
    def k_values(self) -> list[int]:
        return list(range(self.k_min, self.k_max + 1))


@dataclass
class RunConfig:
    citations_url: str = DEFAULT_CITATIONS_URL
    metadata_urls: list = field(
        default_factory=lambda: [list(x) for x in DEFAULT_METADATA_URLS]
    )
    isbn_url: str = DEFAULT_ISBN_URL
    rate_limit: float = 5.0
    workers: int = 4
    bin_count: int = 5
    seed: int = 42
    chart_mode: str = "full"  # or "data-only"
    offline: bool = False
    fixtures_file: str | None = None
    context_removal_extra: list = field(default_factory=list)
    stop_base_path: str | None = None
    stop_abstracts_path: str | None = None
    lda: LdaSettings = field(default_factory=LdaSettings)

    def polite_contact(self) -> str | None:
        return os.environ.get(POLITE_CONTACT_ENV) or None

    def endpoint(self, base_url: str, kind: str, cache_dir) -> ServiceEndpointConfig:
        return ServiceEndpointConfig(
            base_url=base_url,
            rate_limit=self.rate_limit,
            polite_contact=self.polite_contact(),
            cache_dir=cache_dir,
            kind=kind,
        )


_TOP_KEYS = {
    "citations_url", "metadata_urls", "isbn_url", "rate_limit", "workers",
    "bin_count", "seed", "chart_mode", "offline", "fixtures_file",
    "context_removal_extra", "stop_base_path", "stop_abstracts_path", "lda",
}
_LDA_KEYS = {
    "alpha", "beta", "iterations", "restarts", "k_min", "k_max", "fixed_k",
    "top_n", "coherence", "stemming", "vectorization",
}


def load_config(path: str | Path | None) -> RunConfig:
    """Parse and validate a JSON config file; defaults apply when absent."""
    config = RunConfig()
    if path is None:
        return config
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MalformedInputError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        )
    if not isinstance(raw, dict):
        raise MalformedInputError(f"{path}: config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise MalformedInputError(f"{path}: unknown config keys {sorted(unknown)}")
    lda_raw = raw.pop("lda", {})
    unknown = set(lda_raw) - _LDA_KEYS
    if unknown:
        raise MalformedInputError(f"{path}: unknown lda keys {sorted(unknown)}")
    for key, value in raw.items():
        setattr(config, key, value)
    for key, value in lda_raw.items():
        setattr(config.lda, key, value)
    if config.fixtures_file:
        fixtures = Path(config.fixtures_file)
        if not fixtures.is_absolute():
            config.fixtures_file = str(Path(path).parent / fixtures)
    _validate(config, path)
    return config


def _validate(config: RunConfig, path):
    def fail(key, why):
        raise MalformedInputError(f"{path}: {key}: {why}")

    if config.rate_limit <= 0:
        fail("rate_limit", "must be positive")
    if config.workers < 1:
        fail("workers", "must be at least 1")
    if config.bin_count < 1:
        fail("bin_count", "must be at least 1")
    if config.chart_mode not in ("full", "data-only"):
        fail("chart_mode", "must be 'full' or 'data-only'")
    if config.lda.k_min < 1 or config.lda.k_max < config.lda.k_min:
        fail("lda.k_min/k_max", "need 1 <= k_min <= k_max")
    if config.lda.coherence not in ("umass", "npmi"):
        fail("lda.coherence", "must be 'umass' or 'npmi'")
    if config.lda.vectorization not in ("bow", "tfidf"):
        fail("lda.vectorization", "must be 'bow' or 'tfidf'")
    if config.lda.iterations < 1 or config.lda.restarts < 1:
        fail("lda.iterations/restarts", "must be at least 1")
    for pair in config.metadata_urls:
        if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
            fail("metadata_urls", "each entry must be [base_url, kind]")
