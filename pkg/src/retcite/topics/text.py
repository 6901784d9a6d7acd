"""Tokenization, stop-word handling and vectorization of the two corpora."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..errors import MalformedInputError

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z]{2,}")

# Longest-first suffix list of the optional rule-based stemmer.
_SUFFIXES = (
    ("ations", "ate"), ("ization", "ize"), ("ational", "ate"),
    ("fulness", "ful"), ("ousness", "ous"), ("iveness", "ive"),
    ("tional", "tion"), ("ation", "ate"), ("ement", "e"),
    ("ments", "ment"), ("ness", ""), ("ingly", ""), ("edly", ""),
    ("ing", ""), ("ies", "y"), ("ied", "y"), ("ed", ""), ("es", ""),
    ("ly", ""), ("s", ""),
)


def suffix_stem(token: str) -> str:
    for suffix, replacement in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: len(token) - len(suffix)] + replacement
    return token


@dataclass
class StopLists:
    base: frozenset = frozenset()
    abstracts_extra: frozenset = frozenset()
    context_removal: frozenset = frozenset()


def _read_word_list(path) -> frozenset:
    words = set()
    with open(str(path), encoding="utf-8") as fh:
        for line in fh:
            word = line.strip().casefold()
            if word and not word.startswith("#"):
                words.add(word)
    return frozenset(words)


def load_stop_lists(
    base_path=None, abstracts_path=None, context_removal=()
) -> StopLists:
    data = resources.files("retcite") / "data"
    return StopLists(
        base=_read_word_list(base_path or data / "stopwords_base.txt"),
        abstracts_extra=_read_word_list(
            abstracts_path or data / "stopwords_abstracts.txt"
        ),
        context_removal=frozenset(w.casefold() for w in context_removal),
    )


def removal_list_from_authors(authors) -> frozenset:
    """Tokens of the cited articles' author names, for the contexts profile."""
    tokens = set()
    for name in authors:
        tokens.update(_TOKEN_RE.findall(name.casefold()))
    return frozenset(tokens)


def tokenize(
    text: str,
    profile: str,
    stop_lists: StopLists,
    stem: bool = False,
) -> list[str]:
    """Casefolded alphabetic tokens with the profile's stop words removed.

    The "abstracts" profile additionally strips structural abstract words;
    the "contexts" profile strips the per-RET-SET removal list (author
    names and similar bibliographic-reference words).
    """
    if profile not in ("abstracts", "contexts"):
        raise MalformedInputError(f"unknown tokenization profile {profile!r}")
    removed = set(stop_lists.base)
    if profile == "abstracts":
        removed |= stop_lists.abstracts_extra
    else:
        removed |= stop_lists.context_removal
    tokens = [t for t in _TOKEN_RE.findall(text.casefold()) if t not in removed]
    if stem:
        tokens = [suffix_stem(t) for t in tokens]
    return tokens


@dataclass
class Corpus:
    doc_ids: list[str]
    documents: list[list[str]]  # token lists, parallel to doc_ids
    vocabulary: dict[str, int]  # term -> index
    metadata: dict[str, dict] = field(default_factory=dict)

    @property
    def terms(self) -> list[str]:
        ordered = [""] * len(self.vocabulary)
        for term, index in self.vocabulary.items():
            ordered[index] = term
        return ordered

    @property
    def token_count(self) -> int:
        return sum(len(doc) for doc in self.documents)

    def doc_term_sets(self) -> list[set[int]]:
        return [
            {self.vocabulary[t] for t in doc} for doc in self.documents
        ]


def build_corpus(
    docs: list[tuple[str, list[str]]], metadata: dict[str, dict] | None = None
) -> Corpus:
    """Index the token lists; empty documents are dropped and logged."""
    kept_ids, kept_docs = [], []
    for doc_id, tokens in docs:
        if not tokens:
            logger.warning("document %s is empty after preprocessing; dropped",
                           doc_id)
            continue
        kept_ids.append(doc_id)
        kept_docs.append(list(tokens))
    vocabulary = {
        term: i
        for i, term in enumerate(sorted({t for doc in kept_docs for t in doc}))
    }
    metadata = metadata or {}
    return Corpus(
        doc_ids=kept_ids,
        documents=kept_docs,
        vocabulary=vocabulary,
        metadata={d: metadata.get(d, {}) for d in kept_ids},
    )


def vectorize(corpus: Corpus, scheme: str = "bow") -> np.ndarray:
    """Document-term matrix: raw counts, or counts weighted by smooth IDF.

    idf(t) = ln((1 + D) / (1 + df(t))) + 1, so a term present in every
    document keeps weight count * 1.0.
    """
    if scheme not in ("bow", "tfidf"):
        raise MalformedInputError(f"unknown vectorization scheme {scheme!r}")
    if not corpus.vocabulary:
        raise MalformedInputError("empty vocabulary")
    n_docs = len(corpus.documents)
    matrix = np.zeros((n_docs, len(corpus.vocabulary)))
    for d, doc in enumerate(corpus.documents):
        for token in doc:
            matrix[d, corpus.vocabulary[token]] += 1.0
    if scheme == "bow":
        return matrix
    df = (matrix > 0).sum(axis=0)
    idf = np.log((1.0 + n_docs) / (1.0 + df)) + 1.0
    return matrix * idf
