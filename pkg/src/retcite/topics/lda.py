"""Collapsed Gibbs LDA, topic coherence, and topic-count selection."""

from __future__ import annotations

import logging
import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from ..errors import MalformedInputError
from .text import Corpus

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.01
DEFAULT_ITERATIONS = 1000
DEFAULT_RESTARTS = 3


@dataclass
class TopicModel:
    topic_term: np.ndarray  # K x V, rows sum to 1
    doc_topic: np.ndarray   # D x K, rows sum to 1
    prevalence: np.ndarray  # K, sums to 1
    alpha: float
    beta: float
    seed: int
    iterations: int
    terms: list[str]
    doc_ids: list[str]

    @property
    def n_topics(self) -> int:
        return self.topic_term.shape[0]

    @property
    def n_terms(self) -> int:
        return self.topic_term.shape[1]


def _seed_for(master_seed: int, *key) -> np.random.Generator:
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(sequence))


def train_lda(
    corpus: Corpus,
    k: int,
    alpha: float | None = None,
    beta: float = DEFAULT_BETA,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    audit: list | None = None,
) -> TopicModel:
    """Collapsed Gibbs sampling with a fixed seed; same seed, same model.

    alpha defaults to 50/K.  A single chain is sampled sequentially (the
    collapsed sampler is order-dependent), and the final count state gives
    the smoothed topic-term and document-topic distributions.  When
    ``audit`` is a list, the total assignment count of every sweep is
    appended to it.
    """
    if k < 1:
        raise MalformedInputError("topic count must be at least 1")
    if not corpus.documents:
        raise MalformedInputError("empty corpus")
    total_tokens = corpus.token_count
    if k > total_tokens:
        raise MalformedInputError(
            f"topic count {k} exceeds the corpus token count {total_tokens}"
        )
    if alpha is None:
        alpha = 50.0 / k
    n_terms = len(corpus.vocabulary)
    rng = _seed_for(seed, k)
    rand = rng.random

    docs = [
        [corpus.vocabulary[t] for t in doc] for doc in corpus.documents
    ]
    n_kt = [[0] * n_terms for _ in range(k)]
    n_k = [0] * k
    n_dk = [[0] * k for _ in docs]
    assignments = []
    for d, doc in enumerate(docs):
        doc_z = []
        for w in doc:
            t = int(rand() * k)
            doc_z.append(t)
            n_kt[t][w] += 1
            n_k[t] += 1
            n_dk[d][t] += 1
        assignments.append(doc_z)

    v_beta = n_terms * beta
    cum = [0.0] * k
    for _ in range(iterations):
        for d, doc in enumerate(docs):
            nd = n_dk[d]
            doc_z = assignments[d]
            for i, w in enumerate(doc):
                t = doc_z[i]
                n_kt[t][w] -= 1
                n_k[t] -= 1
                nd[t] -= 1
                total = 0.0
                for j in range(k):
                    total += (
                        (n_kt[j][w] + beta) / (n_k[j] + v_beta) * (nd[j] + alpha)
                    )
                    cum[j] = total
                t = bisect_left(cum, rand() * total)
                if t == k:  # guards against rounding at the top edge
                    t = k - 1
                doc_z[i] = t
                n_kt[t][w] += 1
                n_k[t] += 1
                nd[t] += 1
        if audit is not None:
            audit.append(sum(n_k))

    counts_kt = np.array(n_kt, dtype=float)
    counts_k = np.array(n_k, dtype=float)
    counts_dk = np.array(n_dk, dtype=float)
    doc_lengths = counts_dk.sum(axis=1, keepdims=True)
    topic_term = (counts_kt + beta) / (counts_k[:, None] + v_beta)
    doc_topic = (counts_dk + alpha) / (doc_lengths + k * alpha)
    prevalence = counts_k / counts_k.sum()
    return TopicModel(
        topic_term=topic_term,
        doc_topic=doc_topic,
        prevalence=prevalence,
        alpha=alpha,
        beta=beta,
        seed=seed,
        iterations=iterations,
        terms=corpus.terms,
        doc_ids=list(corpus.doc_ids),
    )


def top_keywords(model: TopicModel, n: int) -> list[list[tuple[str, float]]]:
    """Per-topic keyword lists ranked by probability, ties by term index."""
    if n > model.n_terms:
        logger.warning("asked for %d keywords with only %d terms", n,
                       model.n_terms)
        n = model.n_terms
    ranked = []
    indices = np.arange(model.n_terms)
    for row in model.topic_term:
        order = np.lexsort((indices, -row))[:n]
        ranked.append([(model.terms[i], float(row[i])) for i in order])
    return ranked


def doc_topic_table(model: TopicModel) -> list[tuple[str, list[float]]]:
    """Per-document topic representativeness; each row sums to 1."""
    return [
        (doc_id, [float(x) for x in row])
        for doc_id, row in zip(model.doc_ids, model.doc_topic)
    ]


def _doc_frequencies(corpus: Corpus, terms: list[str]):
    doc_sets = corpus.doc_term_sets()
    ids = [corpus.vocabulary.get(t, -1) for t in terms]
    df = {}
    co = {}
    for i, a in enumerate(ids):
        df[i] = sum(1 for s in doc_sets if a in s) if a >= 0 else 0
        for j, b in enumerate(ids[:i]):
            co[(i, j)] = (
                sum(1 for s in doc_sets if a in s and b in s)
                if a >= 0 and b >= 0 else 0
            )
    return df, co


def coherence(
    topics: list[list[str]], corpus: Corpus, measure: str = "umass"
) -> tuple[list[float], float]:
    """Co-occurrence coherence of each topic's top terms, plus the mean.

    The default is the document-co-occurrence (UMass-style) form with +1
    smoothing on both counts, so a topic whose top terms always co-occur
    scores exactly 0 and anything less co-occurring scores below 0.  An
    NPMI variant over the same document windows is available.
    """
    if measure not in ("umass", "npmi"):
        raise MalformedInputError(f"unknown coherence measure {measure!r}")
    n_docs = max(1, len(corpus.documents))
    scores = []
    for terms in topics:
        if len(terms) < 2:
            raise MalformedInputError("coherence needs at least two top terms")
        df, co = _doc_frequencies(corpus, terms)
        total = 0.0
        for i in range(1, len(terms)):
            for j in range(i):
                if measure == "umass":
                    total += math.log((co[(i, j)] + 1) / (df[j] + 1))
                else:
                    p_i = (df[i] + 1) / (n_docs + 1)
                    p_j = (df[j] + 1) / (n_docs + 1)
                    p_ij = (co[(i, j)] + 1) / (n_docs + 1)
                    total += math.log(p_ij / (p_i * p_j)) / -math.log(p_ij)
        scores.append(total)
    return scores, sum(scores) / len(scores)


@dataclass
class CoherenceSweep:
    k_values: list[int]
    mean_scores: list[float]
    chosen_k: int
    plateau_found: bool = True
    per_restart: dict = field(default_factory=dict)


def select_plateau(
    k_values: list[int],
    scores: list[float],
    window: int = 3,
    epsilon_frac: float = 0.02,
) -> tuple[int, bool]:
    """Smallest K opening a window of near-flat consecutive scores.

    Flat means every step inside the trailing window moves less than
    epsilon_frac of the curve's total range.  With no such window the
    largest K is returned, flagged as no-plateau for the operator.
    """
    if len(k_values) != len(scores) or not k_values:
        raise MalformedInputError("k_values and scores must align and be non-empty")
    if len(k_values) == 1:
        return k_values[0], True
    span = max(scores) - min(scores)
    epsilon = epsilon_frac * span
    window = min(window, len(scores))
    for start in range(0, len(scores) - window + 1):
        deltas = [
            abs(scores[i + 1] - scores[i])
            for i in range(start, start + window - 1)
        ]
        if all(d <= epsilon for d in deltas):
            return k_values[start], True
    return k_values[-1], False


def sweep_topic_counts(
    corpus: Corpus,
    k_values: list[int],
    restarts: int = DEFAULT_RESTARTS,
    alpha: float | None = None,
    beta: float = DEFAULT_BETA,
    iterations: int = DEFAULT_ITERATIONS,
    master_seed: int = 0,
    top_n: int = 10,
    measure: str = "umass",
    plateau_window: int = 3,
    plateau_epsilon: float = 0.02,
) -> CoherenceSweep:
    """Mean coherence over seeded restarts for each K, plus the chosen K."""
    if not k_values or sorted(k_values) != list(k_values):
        raise MalformedInputError("k_values must be non-empty and ascending")
    mean_scores = []
    per_restart = {}
    for k in k_values:
        run_scores = []
        for restart in range(restarts):
            seed_seq = np.random.SeedSequence(
                entropy=master_seed, spawn_key=(k, restart)
            )
            seed = int(seed_seq.generate_state(1)[0])
            model = train_lda(
                corpus, k, alpha=alpha, beta=beta,
                iterations=iterations, seed=seed,
            )
            n = min(top_n, model.n_terms)
            topics = [
                [term for term, _ in keywords]
                for keywords in top_keywords(model, n)
            ]
            _, mean = coherence(topics, corpus, measure)
            run_scores.append(mean)
        per_restart[k] = run_scores
        mean_scores.append(sum(run_scores) / len(run_scores))
    chosen, found = select_plateau(
        k_values, mean_scores, plateau_window, plateau_epsilon
    )
    if not found:
        logger.warning(
            "no coherence plateau in K=%s..%s; falling back to the largest K",
            k_values[0], k_values[-1],
        )
    return CoherenceSweep(
        k_values=list(k_values),
        mean_scores=mean_scores,
        chosen_k=chosen,
        plateau_found=found,
        per_restart=per_restart,
    )
