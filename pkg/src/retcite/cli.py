"""Command-line front end wiring the pipeline stages together.

Subcommands mirror the workflow: harvest -> classify -> annotate ->
stats -> topics -> export.  Each one reads its predecessor's outputs from
the project store and refuses to run out of order (exit code 3); a
malformed input exits with code 2; warnings never change the exit code.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from pathlib import Path

from . import __version__
from .annotate import (
    AnnotationSession,
    extract_pending,
    load_decision_model,
    load_journal,
    load_section_keywords,
    parse_capture,
)
from .charts import emit_charts
from .config import RunConfig, load_config
from .errors import (
    MalformedInputError,
    PlacementError,
    RetciteError,
    StageOrderError,
)
from .harvest import (
    FixtureTransport,
    HttpClient,
    harvest_citing_entities,
    load_retraction_flags,
    make_isbn_lcc_fetcher,
    merge_retraction_flags,
)
from .model import build_timeline, derive_periods, load_ret_set, validate_ret_set
from .periods import build_all_charts, compute_placements
from .store import ProjectStore
from .subjects import (
    ManualQueueItem,
    apply_manual_subject,
    classify_by_isbn,
    classify_by_issn,
    load_lcc_index,
    load_scimago_index,
    normalize_issn,
    validate_isbn,
)
from .topics import (
    build_corpus,
    export_ldavis,
    export_mtmvis,
    load_stop_lists,
    sweep_topic_counts,
    tokenize,
    top_keywords,
    train_lda,
    vectorize,
)
from .topics.lda import doc_topic_table
from .topics.text import removal_list_from_authors

logger = logging.getLogger("retcite")


def _transport(config: RunConfig):
    if config.fixtures_file:
        return FixtureTransport(config.fixtures_file)
    return None


def _clients(config: RunConfig, store: ProjectStore):
    transport = _transport(config)
    offline = config.offline and transport is None
    citations = HttpClient(
        config.endpoint(config.citations_url, "coci", store.cache_dir / "citations"),
        transport=transport, offline=offline,
    )
    metadata = [
        HttpClient(
            config.endpoint(url, kind, store.cache_dir / f"metadata-{i}"),
            transport=transport, offline=offline,
        )
        for i, (url, kind) in enumerate(config.metadata_urls)
    ]
    isbn = HttpClient(
        config.endpoint(config.isbn_url, "isbndb", store.cache_dir / "isbn"),
        transport=transport, offline=offline,
    )
    return citations, metadata, isbn


def _citing_years(articles, entities):
    years = {}
    for article in articles:
        years[article.id] = [
            e.year for e in entities
            if article.id in e.cites and e.year is not None
        ]
    return years


def cmd_harvest(args, config: RunConfig, store: ProjectStore) -> int:
    articles = load_ret_set(args.retset)
    citations_client, metadata_clients, _ = _clients(config, store)
    kept, excluded, _records = harvest_citing_entities(
        articles, citations_client, metadata_clients, workers=config.workers
    )
    if args.flags:
        flags = load_retraction_flags(args.flags)
        merge_retraction_flags(kept, flags)
    if store.path("entities.csv").exists():
        # later stages own these columns; a re-harvest must not reset them
        previous = {e.entity_id: e for e in store.read_entities()}
        for entity in kept:
            old = previous.get(entity.entity_id)
            if old is None:
                continue
            entity.subject_areas = old.subject_areas
            entity.subject_categories = old.subject_categories
            entity.abstract = old.abstract
            entity.fulltext_available = old.fulltext_available
            if not args.flags:
                entity.is_retracted = old.is_retracted
    shutil.copyfile(args.retset, store.path("retset.jsonl"))
    store.write_entities(kept)
    store.write_table(
        "excluded.csv",
        ["entity_id", "doi", "reason"],
        [{"entity_id": x.entity.entity_id, "doi": x.entity.doi or "",
          "reason": x.reason} for x in excluded],
    )
    verdicts = validate_ret_set(articles, _citing_years(articles, kept))
    store.write_table(
        "verdicts.csv",
        ["article_id", "eligible", "violated"],
        [{"article_id": v.article_id,
          "eligible": "yes" if v.eligible else "no",
          "violated": "".join(v.violated)} for v in verdicts],
    )
    for verdict in verdicts:
        if not verdict.eligible:
            logger.warning(
                "article %s is not eligible (violates %s); it will be "
                "skipped by the period analytics",
                verdict.article_id, ", ".join(verdict.violated),
            )
    store.log_event("harvest", entities=len(kept), excluded=len(excluded))
    print(f"harvested {len(kept)} citing entities "
          f"({len(excluded)} excluded by kind) for {len(articles)} articles")
    return 0


def _classify_entity(entity, scimago, lcc, isbn_fetcher):
    """Returns (areas, categories) or a ManualQueueItem."""
    venue_id = (entity.venue_id or "").strip()
    if not venue_id:
        return ManualQueueItem(entity.entity_id, "no-venue-id", entity.title)
    try:
        normalize_issn(venue_id)
        is_issn = True
    except MalformedInputError:
        is_issn = False
    if is_issn:
        result = classify_by_issn(venue_id, scimago)
        if result is None:
            return ManualQueueItem(
                entity.entity_id, "issn-not-in-snapshot", venue_id
            )
        return result
    try:
        validate_isbn(venue_id)
    except MalformedInputError:
        return ManualQueueItem(
            entity.entity_id, "venue-id-unrecognized", venue_id
        )
    result = classify_by_isbn(
        venue_id, isbn_fetcher, lcc, scimago, entity.entity_id
    )
    if isinstance(result, ManualQueueItem):
        return result
    area, category = result
    return (area,), (category,)


def cmd_classify(args, config: RunConfig, store: ProjectStore) -> int:
    store.require("entities.csv", "harvest")
    entities = store.read_entities()
    scimago = load_scimago_index()
    lcc = load_lcc_index()
    _, _, isbn_client = _clients(config, store)
    isbn_fetcher = make_isbn_lcc_fetcher(isbn_client)

    manual = {}
    if store.path("manual_subjects.csv").exists():
        for row in store.read_table("manual_subjects.csv"):
            manual[row["entity_id"]] = row["area"]

    queue, classified = [], 0
    for entity in entities:
        if entity.entity_id in manual:
            area, category = apply_manual_subject(
                entity.entity_id, manual[entity.entity_id], scimago
            )
            entity.subject_areas = [area]
            entity.subject_categories = [category]
            classified += 1
            continue
        if entity.subject_areas:
            continue  # already classified on an earlier run
        result = _classify_entity(entity, scimago, lcc, isbn_fetcher)
        if isinstance(result, ManualQueueItem):
            queue.append(result)
            continue
        areas, categories = result
        entity.subject_areas = list(areas)
        entity.subject_categories = list(categories)
        classified += 1

    store.write_entities(entities)
    store.write_table(
        "manual_queue.csv",
        ["entity_id", "reason", "metadata"],
        [{"entity_id": q.entity_id, "reason": q.reason, "metadata": q.metadata}
         for q in queue],
    )
    store.log_event("classify", classified=classified, queued=len(queue))
    print(f"classified {classified} entities; {len(queue)} queued for "
          f"manual annotation (manual_queue.csv)")
    if queue:
        print("resolve them by adding rows to manual_subjects.csv "
              "(entity_id, area) and rerunning classify")
    return 0


def cmd_annotate(args, config: RunConfig, store: ProjectStore) -> int:
    store.require("entities.csv", "harvest")
    entities = store.read_entities()
    by_id = {e.entity_id: e for e in entities}
    texts_dir = Path(args.texts)
    if not texts_dir.is_dir():
        raise MalformedInputError(f"{texts_dir} is not a directory")
    keywords = load_section_keywords()
    pending = []
    for path in sorted(texts_dir.glob("*.txt")):
        doc = parse_capture(path)
        entity = by_id.get(doc.entity_id)
        if entity is None:
            logger.warning("capture %s names unknown entity %s; skipped",
                           path.name, doc.entity_id)
            continue
        entity.fulltext_available = "yes"
        if doc.abstract:
            entity.abstract = " ".join(doc.abstract)
        pending.extend(extract_pending(doc, keywords))

    with open(store.path("contexts.jsonl.tmp"), "w", encoding="utf-8") as fh:
        for item in pending:
            c = item.citation
            fh.write(json.dumps({
                "key": item.key, "entity_id": c.entity_id,
                "retracted_id": c.retracted_id, "pointer": c.pointer,
                "context": c.context, "section_label": c.section_label,
                "section_kind": c.section_kind,
                "auto_mention": c.mentions_retraction,
            }, sort_keys=True, ensure_ascii=False) + "\n")
    store.path("contexts.jsonl.tmp").replace(store.path("contexts.jsonl"))

    session = AnnotationSession(
        store.path("annotations.jsonl"), model=load_decision_model()
    )
    citations = session.run(pending)
    store.write_citations(citations)
    store.write_entities(entities)
    left = len(pending) - len(citations)
    store.log_event("annotate", contexts=len(pending), annotated=len(citations),
                    pending=left)
    print(f"extracted {len(pending)} citation contexts; "
          f"{len(citations)} annotated, {left} pending")
    return 0


def _timelines(articles, entities):
    years = _citing_years(articles, entities)
    verdicts = {v.article_id: v for v in validate_ret_set(articles, years)}
    timelines, periods = {}, {}
    for article in articles:
        if not verdicts[article.id].eligible:
            logger.warning("article %s ineligible (violates %s); skipped",
                           article.id, ", ".join(verdicts[article.id].violated))
            continue
        timeline = build_timeline(article, years[article.id])
        timelines[article.id] = timeline
        periods[article.id] = derive_periods(timeline)
    return timelines, periods


def _mention_by_entity(store: ProjectStore) -> dict[str, str]:
    journal = load_journal(store.path("annotations.jsonl"))
    mention = {}
    for row in store.read_jsonl("contexts.jsonl"):
        final = journal.get(row["key"], {}).get(
            "mentions_retraction", row["auto_mention"]
        )
        if final == "yes":
            mention[row["entity_id"]] = "yes"
        else:
            mention.setdefault(row["entity_id"], "no")
    return mention


def cmd_stats(args, config: RunConfig, store: ProjectStore) -> int:
    store.require("entities.csv", "harvest")
    retset_path = store.require("retset.jsonl", "harvest")
    entities = store.read_entities()
    articles = load_ret_set(retset_path)
    timelines, periods = _timelines(articles, entities)

    placements, skipped = compute_placements(
        entities, timelines, periods, config.bin_count
    )
    store.write_placements(placements)

    citations = []
    if store.path("citations.csv").exists():
        citations = store.read_citations()
    pending_contexts = store.read_jsonl("contexts.jsonl")
    unannotated = len(pending_contexts) - len(citations)
    if unannotated > 0:
        logger.warning(
            "%d extracted citation contexts are still unannotated and are "
            "excluded from the citation charts", unannotated,
        )
    mention_of = _mention_by_entity(store)

    datasets = build_all_charts(
        placements, entities, citations, mention_of, config.bin_count
    )
    if store.charts_dir.exists():
        shutil.rmtree(store.charts_dir)
    images = config.chart_mode == "full" and not args.data_only
    written = emit_charts(datasets, store.charts_dir, images=images)
    store.log_event("stats", placements=len(placements),
                    skipped_pairs=len(skipped), charts=len(datasets))
    print(f"placed {len(placements)} citing pairs; wrote {len(datasets)} "
          f"chart datasets ({len(written)} files) to {store.charts_dir}")
    return 0


def _abstract_corpus(entities, placements_by_entity, stop_lists, lda):
    docs, metadata = [], {}
    for entity in sorted(entities, key=lambda e: e.entity_id):
        if not entity.abstract:
            continue
        tokens = tokenize(entity.abstract, "abstracts", stop_lists,
                          stem=lda.stemming)
        docs.append((entity.entity_id, tokens))
        metadata[entity.entity_id] = {
            "placements": placements_by_entity.get(entity.entity_id, []),
            "subject_areas": list(entity.subject_areas),
        }
    return build_corpus(docs, metadata)


def _context_corpus(citations, placements, entities, stop_lists, lda):
    by_pair = {}
    for p in placements:
        by_pair[(p.entity_id, p.retracted_id)] = (p.category, p.period_label)
    areas = {e.entity_id: list(e.subject_areas) for e in entities}
    docs, metadata = [], {}
    for i, citation in enumerate(citations):
        doc_id = f"{citation.entity_id}|{citation.retracted_id}|{i}"
        tokens = tokenize(citation.context, "contexts", stop_lists,
                          stem=lda.stemming)
        docs.append((doc_id, tokens))
        pair = by_pair.get((citation.entity_id, citation.retracted_id))
        metadata[doc_id] = {
            "placements": [pair] if pair else [],
            "subject_areas": areas.get(citation.entity_id, []),
        }
    return build_corpus(docs, metadata)


def _run_topic_analysis(name, corpus, config: RunConfig, out_dir: Path, store):
    lda = config.lda
    if len(corpus.documents) < 2:
        logger.warning(
            "corpus %r has %d usable documents; topic analysis needs at "
            "least 2, skipping", name, len(corpus.documents),
        )
        return False
    k_cap = min(lda.k_max, corpus.token_count)
    k_values = [k for k in lda.k_values if k <= k_cap]
    if lda.fixed_k is not None:
        chosen_k, sweep = lda.fixed_k, None
    else:
        sweep = sweep_topic_counts(
            corpus, k_values, restarts=lda.restarts, alpha=lda.alpha,
            beta=lda.beta, iterations=lda.iterations,
            master_seed=config.seed, top_n=lda.top_n, measure=lda.coherence,
        )
        chosen_k = sweep.chosen_k
    model = train_lda(
        corpus, chosen_k, alpha=lda.alpha, beta=lda.beta,
        iterations=lda.iterations, seed=config.seed,
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    if sweep is not None:
        store.write_table(
            f"topics/{name}/coherence_sweep.csv",
            ["k", "mean_coherence", "chosen"],
            [{"k": str(k), "mean_coherence": repr(s),
              "chosen": "yes" if k == sweep.chosen_k else "no"}
             for k, s in zip(sweep.k_values, sweep.mean_scores)],
        )
    keyword_rows = []
    for topic, keywords in enumerate(top_keywords(model, lda.top_n)):
        for rank, (term, probability) in enumerate(keywords, start=1):
            keyword_rows.append({
                "topic": str(topic), "rank": str(rank), "term": term,
                "probability": repr(probability),
            })
    store.write_table(
        f"topics/{name}/keywords.csv",
        ["topic", "rank", "term", "probability"], keyword_rows,
    )
    store.write_table(
        f"topics/{name}/doc_topics.csv",
        ["doc_id"] + [f"topic_{t}" for t in range(model.n_topics)],
        [dict({"doc_id": doc_id},
              **{f"topic_{t}": repr(v) for t, v in enumerate(values)})
         for doc_id, values in doc_topic_table(model)],
    )
    if lda.vectorization == "tfidf":
        matrix = vectorize(corpus, "tfidf")
        terms = corpus.terms
        store.write_table(
            f"topics/{name}/tfidf.csv",
            ["doc_id"] + terms,
            [dict({"doc_id": doc_id},
                  **{t: repr(float(w)) for t, w in zip(terms, row)})
             for doc_id, row in zip(corpus.doc_ids, matrix)],
        )
    export_ldavis(model, out_dir / "ldavis.json")
    categories = sorted({
        cat for meta in corpus.metadata.values()
        for cat, _ in meta.get("placements", [])
    })
    for category in categories:
        for attribute in ("period", "subject_area"):
            export_mtmvis(
                model, corpus.metadata, attribute, category,
                out_dir / f"mtmvis_{attribute}_{category}.json",
            )
    print(f"topic model '{name}': {len(corpus.documents)} documents, "
          f"K={chosen_k}" + ("" if sweep is None else
                             f" (plateau={'yes' if sweep.plateau_found else 'no'})"))
    return True


def cmd_topics(args, config: RunConfig, store: ProjectStore) -> int:
    store.require("entities.csv", "harvest")
    store.require("placements.csv", "stats")
    retset_path = store.require("retset.jsonl", "harvest")
    entities = store.read_entities()
    placements = store.read_placements()
    citations = (
        store.read_citations() if store.path("citations.csv").exists() else []
    )
    articles = load_ret_set(retset_path)

    removal = set(removal_list_from_authors(
        name for article in articles for name in article.authors
    ))
    removal.update(w.casefold() for w in config.context_removal_extra)
    stop_lists = load_stop_lists(
        base_path=config.stop_base_path,
        abstracts_path=config.stop_abstracts_path,
        context_removal=removal,
    )

    placements_by_entity: dict[str, list] = {}
    for p in placements:
        placements_by_entity.setdefault(p.entity_id, []).append(
            (p.category, p.period_label)
        )

    if store.topics_dir.exists():
        shutil.rmtree(store.topics_dir)
    ran = 0
    corpora = {
        "abstracts": _abstract_corpus(
            entities, placements_by_entity, stop_lists, config.lda
        ),
        "contexts": _context_corpus(
            citations, placements, entities, stop_lists, config.lda
        ),
    }
    for name, corpus in corpora.items():
        if _run_topic_analysis(name, corpus, config, store.topics_dir / name,
                               store):
            ran += 1
    store.log_event("topics", corpora=ran)
    if ran == 0:
        print("no corpus had enough documents for a topic analysis")
    return 0


def cmd_export(args, config: RunConfig, store: ProjectStore) -> int:
    store.require("entities.csv", "harvest")
    entities = store.read_entities()
    citations = (
        store.read_citations() if store.path("citations.csv").exists() else []
    )
    store.write_flat_dataset(entities, citations)
    archive = store.build_archive()
    store.log_event("export", archive=archive.name)
    print(f"wrote {store.path('flat_dataset.csv')} and {archive}")
    return 0


COMMANDS = {
    "harvest": cmd_harvest,
    "classify": cmd_classify,
    "annotate": cmd_annotate,
    "stats": cmd_stats,
    "topics": cmd_topics,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retcite",
        description="Citation analysis pipeline for retracted articles",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--project", required=True,
                        help="project store directory")
    parser.add_argument("--config", help="JSON run-configuration file")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--offline", action="store_true",
                        help="never touch the network; use cache/fixtures only")
    sub = parser.add_subparsers(dest="command", required=True)

    harvest = sub.add_parser("harvest", help="gather the citing entities")
    harvest.add_argument("retset", help="retracted-article input file (JSONL)")
    harvest.add_argument("--flags", help="retraction flags CSV (key, full_retraction)")

    sub.add_parser("classify", help="assign subject areas and categories")

    annotate = sub.add_parser("annotate", help="extract and label in-text citations")
    annotate.add_argument("--texts", required=True,
                          help="directory of captured full-text files")

    stats = sub.add_parser("stats", help="compute placements and chart data")
    stats.add_argument("--data-only", action="store_true",
                       help="skip the SVG renderings")

    sub.add_parser("topics", help="run the topic-model analysis")
    sub.add_parser("export", help="write the flat dataset and archive")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.offline:
            config.offline = True
        store = ProjectStore(args.project)
        with store:
            return COMMANDS[args.command](args, config, store)
    except StageOrderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (MalformedInputError, PlacementError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RetciteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
