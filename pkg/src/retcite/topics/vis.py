"""Term saliency/relevance and the two visualization data exports.

The inter-topic map places topics in the plane by classical
multidimensional scaling over pairwise Jensen-Shannon divergences of the
topic-term rows; circle areas encode topic prevalence.  Term rankings use
the saliency measure globally and the lambda-weighted relevance measure
per topic.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from ..errors import MalformedInputError
from .lda import TopicModel

logger = logging.getLogger(__name__)

TOP_TERMS = 30
LAMBDA_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)


def term_marginals(model: TopicModel) -> np.ndarray:
    """P(w) = sum_t P(t) * P(w|t)."""
    return model.prevalence @ model.topic_term


def saliency_scores(model: TopicModel) -> np.ndarray:
    """saliency(w) = P(w) * sum_t P(t|w) log(P(t|w) / P(t)).

    The distinctiveness factor is a KL divergence, hence nonnegative.
    Topics with zero prevalence contribute nothing; terms never hit a zero
    log because the topic-term rows are smoothing-floored.
    """
    p_w = term_marginals(model)
    scores = np.zeros(model.n_terms)
    for w in range(model.n_terms):
        if p_w[w] <= 0:
            continue
        distinct = 0.0
        for t in range(model.n_topics):
            p_t = model.prevalence[t]
            if p_t <= 0:
                continue
            p_t_w = model.topic_term[t, w] * p_t / p_w[w]
            if p_t_w > 0:
                distinct += p_t_w * math.log(p_t_w / p_t)
        scores[w] = p_w[w] * distinct
    return scores


def _ranked(terms, values, limit) -> list[tuple[str, float]]:
    indices = np.lexsort((np.arange(len(values)), -np.asarray(values)))
    return [(terms[i], float(values[i])) for i in indices[:limit]]


def saliency(model: TopicModel, limit: int = TOP_TERMS) -> list[tuple[str, float]]:
    """The globally most salient terms, best first."""
    return _ranked(model.terms, saliency_scores(model), limit)


def relevance(
    model: TopicModel, topic: int, lam: float, limit: int = TOP_TERMS
) -> list[tuple[str, float]]:
    """relevance(w, t) = lambda log p(w|t) + (1-lambda) log(p(w|t)/p(w)).

    lambda 1 ranks by the topic-specific probability alone, lambda 0
    purely by lift.
    """
    if not 0 <= lam <= 1:
        raise MalformedInputError(f"lambda {lam} outside [0, 1]")
    if not 0 <= topic < model.n_topics:
        raise MalformedInputError(f"no topic {topic}")
    p_w = term_marginals(model)
    phi = model.topic_term[topic]
    scores = lam * np.log(phi) + (1.0 - lam) * np.log(phi / p_w)
    return _ranked(model.terms, scores, limit)


def jensen_shannon(p, q) -> float:
    """JS divergence with natural log; 0 for identical distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = (p + q) / 2.0
    total = 0.0
    for x, y, z in zip(p, q, m):
        if x > 0:
            total += 0.5 * x * math.log(x / z)
        if y > 0:
            total += 0.5 * y * math.log(y / z)
    return total


def jsd_matrix(model: TopicModel) -> np.ndarray:
    k = model.n_topics
    matrix = np.zeros((k, k))
    for i in range(k):
        for j in range(i):
            d = jensen_shannon(model.topic_term[i], model.topic_term[j])
            matrix[i, j] = matrix[j, i] = d
    return matrix


def classical_mds(distances: np.ndarray, dims: int = 2) -> np.ndarray:
    """Torgerson scaling of a symmetric distance matrix to `dims` axes.

    Axes beyond the positive eigenvalues are zero-padded; each axis's sign
    is fixed so the largest-magnitude coordinate is positive, keeping the
    embedding deterministic.
    """
    n = distances.shape[0]
    if n == 0:
        return np.zeros((0, dims))
    centering = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * centering @ (distances ** 2) @ centering
    eigenvalues, eigenvectors = np.linalg.eigh(b)
    order = np.argsort(eigenvalues)[::-1]
    coords = np.zeros((n, dims))
    axis = 0
    for idx in order:
        if axis >= dims or eigenvalues[idx] <= 1e-12:
            break
        column = eigenvectors[:, idx] * math.sqrt(eigenvalues[idx])
        anchor = int(np.argmax(np.abs(column)))
        if column[anchor] < 0:
            column = -column
        coords[:, axis] = column
        axis += 1
    return coords


def export_ldavis(
    model: TopicModel,
    path: str | Path | None = None,
    lambda_grid=LAMBDA_GRID,
    limit: int = TOP_TERMS,
) -> dict:
    """Data behind the inter-topic map and its term bars.

    Contains the 2D topic centers, per-topic prevalence (circle areas),
    the global saliency table and per-topic relevance tables over the
    lambda grid.
    """
    centers = classical_mds(jsd_matrix(model))
    topics = []
    for t in range(model.n_topics):
        topics.append({
            "topic": t,
            "x": float(centers[t, 0]),
            "y": float(centers[t, 1]),
            "prevalence": float(model.prevalence[t]),
            "relevance": {
                f"{lam:.1f}": [
                    [term, score] for term, score in relevance(model, t, lam, limit)
                ]
                for lam in lambda_grid
            },
        })
    payload = {
        "kind": "ldavis",
        "n_topics": model.n_topics,
        "lambda_grid": [f"{lam:.1f}" for lam in lambda_grid],
        "saliency": [[term, score] for term, score in saliency(model, limit)],
        "topics": topics,
    }
    if path is not None:
        _write_json(payload, path)
    return payload


def export_mtmvis(
    model: TopicModel,
    metadata: dict[str, dict],
    attribute: str,
    category: str,
    path: str | Path | None = None,
) -> dict:
    """Mean topic representativeness grouped by a metadata attribute.

    ``metadata`` maps doc id to {"placements": [(category, period), ...],
    "subject_areas": [...]}.  Only documents with a placement in the given
    category enter; documents lacking the attribute are listed and left
    out.
    """
    if attribute not in ("period", "subject_area"):
        raise MalformedInputError(f"unknown grouping attribute {attribute!r}")
    groups: dict[str, list[int]] = {}
    excluded = []
    for d, doc_id in enumerate(model.doc_ids):
        meta = metadata.get(doc_id, {})
        placements = [
            p for p in meta.get("placements", []) if p[0] == category
        ]
        if not placements:
            continue
        if attribute == "period":
            values = sorted({period for _, period in placements})
        else:
            values = sorted(set(meta.get("subject_areas", [])))
        if not values:
            excluded.append(doc_id)
            continue
        for value in values:
            groups.setdefault(value, []).append(d)
    for doc_id in excluded:
        logger.warning(
            "document %s lacks %s metadata; excluded from the grouped view",
            doc_id, attribute,
        )
    ordered = sorted(groups)
    series = []
    for t in range(model.n_topics):
        series.append({
            "topic": t,
            "values": [
                float(np.mean(model.doc_topic[groups[g], t])) for g in ordered
            ],
        })
    payload = {
        "kind": "mtmvis",
        "attribute": attribute,
        "category": category,
        "groups": ordered,
        "doc_counts": {g: len(groups[g]) for g in ordered},
        "series": series,
        "excluded": sorted(excluded),
    }
    if path is not None:
        _write_json(payload, path)
    return payload


def _write_json(payload: dict, path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False,
                  separators=(",", ":"))
        fh.write("\n")
    tmp.replace(path)
