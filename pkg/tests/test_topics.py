import json
import math
import random

import numpy as np
import pytest

from retcite.errors import MalformedInputError
from retcite.topics import (
    TopicModel,
    build_corpus,
    classical_mds,
    coherence,
    doc_topic_table,
    export_ldavis,
    export_mtmvis,
    jensen_shannon,
    jsd_matrix,
    load_stop_lists,
    relevance,
    saliency,
    select_plateau,
    sweep_topic_counts,
    tokenize,
    top_keywords,
    train_lda,
    vectorize,
)
from retcite.topics.text import removal_list_from_authors, suffix_stem
from retcite.topics.vis import saliency_scores, term_marginals


@pytest.fixture(scope="module")
def stop_lists():
    return load_stop_lists(context_removal=["wakefield"])


class TestTokenize:
    def test_abstracts_profile_strips_structural_words(self, stop_lists):
        tokens = tokenize(
            "The results confirm the earlier hypothesis.", "abstracts", stop_lists
        )
        assert tokens == ["confirm", "earlier", "hypothesis"]
        assert "results" not in tokens

    def test_empty_text(self, stop_lists):
        assert tokenize("", "abstracts", stop_lists) == []

    def test_context_removal_list(self, stop_lists):
        tokens = tokenize(
            "Wakefield reported a gut-brain link.", "contexts", stop_lists
        )
        assert "wakefield" not in tokens
        assert "reported" in tokens

    def test_contexts_keep_abstract_words(self, stop_lists):
        tokens = tokenize("These results were retracted.", "contexts", stop_lists)
        assert "results" in tokens

    def test_punctuation_and_case(self, stop_lists):
        tokens = tokenize("Data-driven (fully) ANALYSES!", "abstracts", stop_lists)
        assert tokens == ["data", "driven", "fully", "analyses"]

    def test_optional_stemmer(self, stop_lists):
        tokens = tokenize(
            "retracted retractions citing", "contexts", stop_lists, stem=True
        )
        assert tokens == ["retract", "retraction", "cit"]
        assert suffix_stem("studies") == "study"

    def test_removal_list_from_authors(self):
        removal = removal_list_from_authors(["A. J. Wakefield", "S. Murch"])
        assert "wakefield" in removal and "murch" in removal

    def test_unknown_profile(self, stop_lists):
        with pytest.raises(MalformedInputError):
            tokenize("x", "tweets", stop_lists)


class TestCorpusAndVectorize:
    def test_empty_documents_dropped(self):
        corpus = build_corpus([("d1", ["alpha"]), ("d2", [])])
        assert corpus.doc_ids == ["d1"]

    def test_single_doc_bow_counts(self):
        corpus = build_corpus([("d1", ["apple", "pear", "apple"])])
        matrix = vectorize(corpus, "bow")
        assert matrix[0, corpus.vocabulary["apple"]] == 2
        assert matrix[0, corpus.vocabulary["pear"]] == 1

    def test_term_in_every_doc_has_unit_idf(self):
        corpus = build_corpus([
            ("d1", ["common", "one"]),
            ("d2", ["common", "two"]),
            ("d3", ["common", "common"]),
        ])
        weighted = vectorize(corpus, "tfidf")
        col = corpus.vocabulary["common"]
        counts = vectorize(corpus, "bow")[:, col]
        assert np.allclose(weighted[:, col], counts * 1.0)

    def test_two_doc_matrix_matches_hand_oracle(self):
        corpus = build_corpus([
            ("d1", ["apple", "apple", "pear"]),
            ("d2", ["pear", "plum"]),
        ])
        matrix = vectorize(corpus, "tfidf")

        def idf(df):
            return math.log((1 + 2) / (1 + df)) + 1

        expected = np.zeros((2, 3))
        expected[0, corpus.vocabulary["apple"]] = 2 * idf(1)
        expected[0, corpus.vocabulary["pear"]] = 1 * idf(2)
        expected[1, corpus.vocabulary["pear"]] = 1 * idf(2)
        expected[1, corpus.vocabulary["plum"]] = 1 * idf(1)
        assert np.allclose(matrix, expected, atol=1e-12)

    def test_empty_vocabulary_rejected(self):
        corpus = build_corpus([])
        with pytest.raises(MalformedInputError):
            vectorize(corpus, "bow")


def two_cluster_corpus(docs_per_cluster=20, terms_per_cluster=15, length=20,
                       seed=7):
    rng = random.Random(seed)
    vocab_a = [f"alpha{i}" for i in range(terms_per_cluster)]
    vocab_b = [f"beta{i}" for i in range(terms_per_cluster)]
    docs = []
    for i in range(docs_per_cluster):
        docs.append((f"a{i}", [rng.choice(vocab_a) for _ in range(length)]))
    for i in range(docs_per_cluster):
        docs.append((f"b{i}", [rng.choice(vocab_b) for _ in range(length)]))
    return build_corpus(docs)


class TestTrainLda:
    def test_k1_phi_equals_smoothed_corpus_distribution(self):
        corpus = build_corpus([
            ("d1", ["apple", "apple", "pear"]),
            ("d2", ["pear", "plum", "apple"]),
        ])
        model = train_lda(corpus, 1, iterations=5, seed=3)
        counts = np.zeros(3)
        for doc in corpus.documents:
            for token in doc:
                counts[corpus.vocabulary[token]] += 1
        expected = (counts + model.beta) / (counts.sum() + 3 * model.beta)
        assert np.allclose(model.topic_term[0], expected, atol=1e-12)
        assert np.allclose(model.doc_topic, 1.0)
        assert model.prevalence.tolist() == [1.0]

    def test_same_seed_identical_matrices(self):
        corpus = two_cluster_corpus(8, 6, 10)
        m1 = train_lda(corpus, 3, iterations=40, seed=11)
        m2 = train_lda(corpus, 3, iterations=40, seed=11)
        assert np.array_equal(m1.topic_term, m2.topic_term)
        assert np.array_equal(m1.doc_topic, m2.doc_topic)
        m3 = train_lda(corpus, 3, iterations=40, seed=12)
        assert not np.array_equal(m1.topic_term, m3.topic_term)

    def test_rows_are_stochastic(self):
        corpus = two_cluster_corpus(10, 8, 12)
        model = train_lda(corpus, 4, iterations=60, seed=5)
        assert np.allclose(model.topic_term.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(model.doc_topic.sum(axis=1), 1.0, atol=1e-9)
        assert abs(model.prevalence.sum() - 1.0) < 1e-9
        assert (model.topic_term >= 0).all() and (model.doc_topic >= 0).all()

    def test_assignment_counts_conserved_every_sweep(self):
        corpus = two_cluster_corpus(6, 5, 8)
        audit = []
        train_lda(corpus, 3, iterations=25, seed=2, audit=audit)
        assert len(audit) == 25
        assert set(audit) == {corpus.token_count}

    def test_two_cluster_separation(self):
        # docs must be long enough for 0.7 mass under the 50/K prior:
        # theta_max = (L + alpha) / (L + K*alpha)
        corpus = two_cluster_corpus(docs_per_cluster=20, length=60)
        model = train_lda(corpus, 2, iterations=200, seed=42)
        rows = dict(zip(model.doc_ids, model.doc_topic))
        topic_of = {}
        for cluster in "ab":
            mean = np.mean(
                [rows[d] for d in model.doc_ids if d.startswith(cluster)], axis=0
            )
            topic_of[cluster] = int(mean.argmax())
        assert topic_of["a"] != topic_of["b"]
        separated = sum(
            1 for d in model.doc_ids if rows[d][topic_of[d[0]]] >= 0.7
        )
        assert separated >= 0.9 * len(model.doc_ids)

    def test_k_larger_than_token_count_rejected(self):
        corpus = build_corpus([("d1", ["one", "two"])])
        with pytest.raises(MalformedInputError):
            train_lda(corpus, 3, iterations=1)

    def test_empty_corpus_rejected(self):
        with pytest.raises(MalformedInputError):
            train_lda(build_corpus([]), 1)


class TestKeywordsAndDocTable:
    def toy_model(self):
        phi = np.array([
            [0.5, 0.2, 0.2, 0.1],
            [0.1, 0.4, 0.4, 0.1],
        ])
        theta = np.array([[0.75, 0.25], [0.5, 0.5]])
        return TopicModel(
            topic_term=phi, doc_topic=theta,
            prevalence=np.array([0.6, 0.4]), alpha=0.1, beta=0.01,
            seed=0, iterations=0, terms=["a", "b", "c", "d"],
            doc_ids=["d1", "d2"],
        )

    def test_keywords_ranked_with_index_tiebreak(self):
        model = self.toy_model()
        keywords = top_keywords(model, 4)
        assert [t for t, _ in keywords[0]] == ["a", "b", "c", "d"]
        assert [t for t, _ in keywords[1]] == ["b", "c", "a", "d"]

    def test_keywords_match_brute_force_sort(self):
        rng = np.random.default_rng(5)
        phi = rng.dirichlet(np.ones(30), size=4)
        model = TopicModel(
            topic_term=phi, doc_topic=np.eye(4),
            prevalence=np.full(4, 0.25), alpha=0.1, beta=0.01, seed=0,
            iterations=0, terms=[f"t{i:02d}" for i in range(30)],
            doc_ids=[f"d{i}" for i in range(4)],
        )
        keywords = top_keywords(model, 30)
        for t in range(4):
            expected = sorted(
                range(30), key=lambda i: (-phi[t, i], i)
            )
            assert [term for term, _ in keywords[t]] == [
                model.terms[i] for i in expected
            ]

    def test_n_larger_than_vocabulary_truncates(self):
        model = self.toy_model()
        assert len(top_keywords(model, 99)[0]) == 4

    def test_doc_topic_rows_sum_to_one(self):
        model = self.toy_model()
        table = doc_topic_table(model)
        assert [row[0] for row in table] == ["d1", "d2"]
        for _, values in table:
            assert abs(sum(values) - 1.0) < 1e-9

    def test_k1_keywords_follow_global_frequency(self):
        corpus = build_corpus([
            ("d1", ["apple", "apple", "apple", "pear", "pear", "plum"]),
        ])
        model = train_lda(corpus, 1, iterations=5, seed=1)
        keywords = top_keywords(model, 3)[0]
        assert [t for t, _ in keywords] == ["apple", "pear", "plum"]


class TestCoherence:
    def test_perfect_cooccurrence_scores_zero(self):
        corpus = build_corpus([
            ("d1", ["apple", "banana"]),
            ("d2", ["banana", "apple"]),
        ])
        scores, mean = coherence([["apple", "banana"]], corpus)
        assert scores == [0.0] and mean == 0.0

    def test_never_cooccurring_scores_lower(self):
        corpus = build_corpus([
            ("d1", ["apple", "banana"]),
            ("d2", ["cherry", "date"]),
        ])
        _, together = coherence([["apple", "banana"]], corpus)
        _, apart = coherence([["apple", "cherry"]], corpus)
        assert apart < together

    def test_three_doc_corpus_matches_hand_sum(self):
        corpus = build_corpus([
            ("d1", ["apple", "banana"]),
            ("d2", ["apple", "banana", "cherry"]),
            ("d3", ["apple", "date"]),
        ])
        scores, mean = coherence([["apple", "banana", "cherry"]], corpus)
        # ranked terms: apple > banana > cherry; denominators use the
        # higher-ranked term's document frequency
        expected = (
            math.log((2 + 1) / (3 + 1))   # (banana | apple)
            + math.log((1 + 1) / (3 + 1))  # (cherry | apple)
            + math.log((1 + 1) / (2 + 1))  # (cherry | banana)
        )
        assert abs(scores[0] - expected) < 1e-9
        assert abs(mean - expected) < 1e-9

    def test_term_absent_from_corpus_is_smoothed(self):
        corpus = build_corpus([("d1", ["apple"])])
        scores, _ = coherence([["apple", "zebra"]], corpus)
        assert scores[0] == math.log(1 / 2)

    def test_npmi_variant_available(self):
        corpus = build_corpus([
            ("d1", ["apple", "banana"]),
            ("d2", ["apple", "banana"]),
            ("d3", ["apple", "date"]),
        ])
        scores, _ = coherence([["apple", "banana"]], corpus, measure="npmi")
        assert len(scores) == 1


class TestPlateauSelection:
    def test_flat_from_22_over_1_to_40(self):
        k_values = list(range(1, 41))
        scores = [float(min(k, 22)) for k in k_values]
        chosen, found = select_plateau(k_values, scores)
        assert (chosen, found) == (22, True)

    def test_strictly_increasing_flags_no_plateau(self):
        k_values = list(range(1, 11))
        scores = [float(k) for k in k_values]
        chosen, found = select_plateau(k_values, scores)
        assert chosen == 10 and not found

    def test_noisy_plateau_found_at_its_start(self):
        rng = random.Random(88)
        k_values = list(range(1, 31))
        scores = []
        for k in k_values:
            base = float(min(k, 15))
            jitter = rng.uniform(-0.05, 0.05) if k >= 15 else 0.0
            scores.append(base + jitter)
        chosen, found = select_plateau(k_values, scores)
        assert found
        assert chosen == 15

    def test_sweep_smoke(self):
        corpus = two_cluster_corpus(6, 5, 8)
        sweep = sweep_topic_counts(
            corpus, [1, 2, 3], restarts=2, iterations=20, master_seed=9,
            top_n=4,
        )
        assert len(sweep.mean_scores) == 3
        assert sweep.chosen_k in (1, 2, 3)
        rerun = sweep_topic_counts(
            corpus, [1, 2, 3], restarts=2, iterations=20, master_seed=9,
            top_n=4,
        )
        assert rerun.mean_scores == sweep.mean_scores

    def test_unsorted_k_values_rejected(self):
        with pytest.raises(MalformedInputError):
            select_plateau([], [])
        corpus = two_cluster_corpus(4, 4, 6)
        with pytest.raises(MalformedInputError):
            sweep_topic_counts(corpus, [3, 1], restarts=1, iterations=5)


def hand_model():
    phi = np.array([[0.5, 0.3, 0.2], [0.1, 0.3, 0.6]])
    return TopicModel(
        topic_term=phi,
        doc_topic=np.array([[0.5, 0.5]]),
        prevalence=np.array([0.5, 0.5]),
        alpha=0.1, beta=0.01, seed=0, iterations=0,
        terms=["a", "b", "c"], doc_ids=["d0"],
    )


class TestSaliencyRelevance:
    def test_saliency_matches_hand_computation(self):
        model = hand_model()
        phi = model.topic_term
        expected = []
        for w in range(3):
            p_w = 0.5 * phi[0, w] + 0.5 * phi[1, w]
            distinct = 0.0
            for t in range(2):
                p_t_w = phi[t, w] * 0.5 / p_w
                distinct += p_t_w * math.log(p_t_w / 0.5)
            expected.append(p_w * distinct)
        assert np.allclose(saliency_scores(model), expected, atol=1e-9)

    def test_saliency_nonnegative_on_random_models(self):
        rng = np.random.default_rng(17)
        for _ in range(25):
            k, v = rng.integers(2, 6), rng.integers(3, 40)
            raw = rng.dirichlet(np.ones(v), size=k) + 1e-9
            phi = raw / raw.sum(axis=1, keepdims=True)
            prev = rng.dirichlet(np.ones(k))
            model = TopicModel(
                topic_term=phi, doc_topic=np.eye(k), prevalence=prev,
                alpha=0.1, beta=0.01, seed=0, iterations=0,
                terms=[f"t{i}" for i in range(v)],
                doc_ids=[f"d{i}" for i in range(k)],
            )
            assert (saliency_scores(model) >= -1e-12).all()

    def test_saliency_returns_ranked_top_terms(self):
        model = hand_model()
        ranked = saliency(model, limit=2)
        scores = saliency_scores(model)
        best = int(np.argmax(scores))
        assert ranked[0][0] == model.terms[best]
        assert len(ranked) == 2

    def test_lambda_one_ranks_by_topic_probability(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            v = int(rng.integers(5, 60))
            phi = rng.dirichlet(np.ones(v), size=3)
            model = TopicModel(
                topic_term=phi, doc_topic=np.eye(3),
                prevalence=rng.dirichlet(np.ones(3)),
                alpha=0.1, beta=0.01, seed=0, iterations=0,
                terms=[f"t{i:03d}" for i in range(v)],
                doc_ids=["d0", "d1", "d2"],
            )
            for t in range(3):
                by_phi = [
                    model.terms[i]
                    for i in sorted(range(v), key=lambda i: (-phi[t, i], i))
                ]
                ranked = [term for term, _ in relevance(model, t, 1.0, limit=v)]
                assert ranked == by_phi

    def test_lambda_zero_ranks_by_lift(self):
        rng = np.random.default_rng(29)
        for _ in range(10):
            v = int(rng.integers(5, 60))
            phi = rng.dirichlet(np.ones(v), size=2)
            model = TopicModel(
                topic_term=phi, doc_topic=np.eye(2),
                prevalence=rng.dirichlet(np.ones(2)),
                alpha=0.1, beta=0.01, seed=0, iterations=0,
                terms=[f"t{i:03d}" for i in range(v)],
                doc_ids=["d0", "d1"],
            )
            p_w = term_marginals(model)
            for t in range(2):
                lift = phi[t] / p_w
                by_lift = [
                    model.terms[i]
                    for i in sorted(range(v), key=lambda i: (-lift[i], i))
                ]
                ranked = [term for term, _ in relevance(model, t, 0.0, limit=v)]
                assert ranked == by_lift

    def test_relevance_limit_and_validation(self):
        model = hand_model()
        assert len(relevance(model, 0, 0.6)) == 3
        with pytest.raises(MalformedInputError):
            relevance(model, 0, 1.5)
        with pytest.raises(MalformedInputError):
            relevance(model, 9, 0.5)


class TestJsdMds:
    def test_identical_distributions_have_zero_divergence(self):
        p = np.array([0.2, 0.3, 0.5])
        assert jensen_shannon(p, p) == 0.0

    def test_matches_brute_force_formula(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            v = int(rng.integers(2, 50))
            p = rng.dirichlet(np.ones(v))
            q = rng.dirichlet(np.ones(v))
            m = (p + q) / 2
            expected = 0.5 * np.sum(p * np.log(p / m)) + 0.5 * np.sum(
                q * np.log(q / m)
            )
            assert abs(jensen_shannon(p, q) - expected) < 1e-9

    def test_two_topic_centers_symmetric_about_origin(self):
        model = hand_model()
        centers = classical_mds(jsd_matrix(model))
        assert np.allclose(centers[0], -centers[1], atol=1e-9)
        distance = np.linalg.norm(centers[0] - centers[1])
        assert abs(distance - jsd_matrix(model)[0, 1]) < 1e-9

    def test_identical_topics_coincide(self):
        phi = np.array([[0.5, 0.5], [0.5, 0.5]])
        model = TopicModel(
            topic_term=phi, doc_topic=np.eye(2),
            prevalence=np.array([0.5, 0.5]), alpha=0.1, beta=0.01,
            seed=0, iterations=0, terms=["a", "b"], doc_ids=["d0", "d1"],
        )
        matrix = jsd_matrix(model)
        assert matrix[0, 1] == 0.0
        centers = classical_mds(matrix)
        assert np.allclose(centers[0], centers[1])
        assert np.allclose(centers, 0.0)

    def test_mds_deterministic_sign(self):
        rng = np.random.default_rng(37)
        phi = rng.dirichlet(np.ones(12), size=5)
        model = TopicModel(
            topic_term=phi, doc_topic=np.eye(5),
            prevalence=np.full(5, 0.2), alpha=0.1, beta=0.01,
            seed=0, iterations=0, terms=[f"t{i}" for i in range(12)],
            doc_ids=[f"d{i}" for i in range(5)],
        )
        c1 = classical_mds(jsd_matrix(model))
        c2 = classical_mds(jsd_matrix(model))
        assert np.array_equal(c1, c2)


class TestExports:
    def test_ldavis_payload_shape(self, tmp_path):
        corpus = two_cluster_corpus(8, 6, 10)
        model = train_lda(corpus, 2, iterations=60, seed=4)
        payload = export_ldavis(model, tmp_path / "ldavis.json")
        assert payload["n_topics"] == 2
        assert len(payload["saliency"]) <= 30
        assert set(payload["topics"][0]["relevance"]) == {
            "0.0", "0.2", "0.4", "0.6", "0.8", "1.0"
        }
        on_disk = json.loads((tmp_path / "ldavis.json").read_text("utf-8"))
        assert on_disk == json.loads(json.dumps(payload))

    def test_same_seed_byte_identical_exports(self, tmp_path):
        corpus = two_cluster_corpus(8, 6, 10)
        for name in ("one", "two"):
            model = train_lda(corpus, 2, iterations=60, seed=4)
            export_ldavis(model, tmp_path / f"{name}.json")
        assert (tmp_path / "one.json").read_bytes() == (
            tmp_path / "two.json"
        ).read_bytes()

    def test_mtmvis_groups_by_period_and_category(self, tmp_path):
        corpus = two_cluster_corpus(4, 4, 6)
        model = train_lda(corpus, 2, iterations=30, seed=8)
        metadata = {}
        for i, doc_id in enumerate(model.doc_ids):
            metadata[doc_id] = {
                "placements": [("RET_A", "P0" if i % 2 else "P4")],
                "subject_areas": ["Medicine"] if i % 3 else [],
            }
        payload = export_mtmvis(model, metadata, "period", "RET_A",
                                tmp_path / "mtm.json")
        assert payload["groups"] == ["P0", "P4"]
        assert len(payload["series"]) == 2
        for series in payload["series"]:
            assert len(series["values"]) == 2
        by_group = {g: [] for g in payload["groups"]}
        for i, doc_id in enumerate(model.doc_ids):
            for cat, period in metadata[doc_id]["placements"]:
                by_group[period].append(i)
        for t, series in enumerate(payload["series"]):
            for g, group in enumerate(payload["groups"]):
                expected = float(np.mean(model.doc_topic[by_group[group], t]))
                assert abs(series["values"][g] - expected) < 1e-12

    def test_mtmvis_excludes_docs_without_attribute(self):
        corpus = two_cluster_corpus(3, 4, 6)
        model = train_lda(corpus, 2, iterations=20, seed=8)
        metadata = {
            doc_id: {"placements": [("RET_B", "P3")], "subject_areas": []}
            for doc_id in model.doc_ids
        }
        payload = export_mtmvis(model, metadata, "subject_area", "RET_B")
        assert payload["groups"] == []
        assert payload["excluded"] == sorted(model.doc_ids)

    def test_mtmvis_skips_docs_of_other_category(self):
        corpus = two_cluster_corpus(3, 4, 6)
        model = train_lda(corpus, 2, iterations=20, seed=8)
        metadata = {
            doc_id: {"placements": [("RET_B", "P3")], "subject_areas": ["X"]}
            for doc_id in model.doc_ids
        }
        payload = export_mtmvis(model, metadata, "period", "RET_A")
        assert payload["groups"] == [] and payload["excluded"] == []
