import zipfile
from fractions import Fraction

import pytest

from retcite.errors import MalformedInputError, StageOrderError
from retcite.model import CitingEntity, InTextCitation
from retcite.periods import CitationPlacement
from retcite.store import (
    CITATION_FIELDS,
    ENTITY_FIELDS,
    FLAT_FIELDS,
    ProjectStore,
)


def sample_entity(**kw):
    base = dict(
        entity_id="10.1/x", doi="10.1/x", year=2011,
        title='A title with "quotes", commas\nand a newline',
        venue_id="1588-2861", venue_title="Scientometrics",
        publication_type="journal-article", is_retracted="no",
        subject_areas=["Computer Science", "Social Sciences"],
        subject_categories=["Computer Science Applications"],
        abstract="Two sentences. And more.", fulltext_available="yes",
        cites=["ra", "rb"], metadata_incomplete=False, excluded_reason="",
    )
    base.update(kw)
    return CitingEntity(**base)


class TestTables:
    def test_entities_round_trip(self, tmp_path):
        store = ProjectStore(tmp_path)
        entities = [
            sample_entity(),
            sample_entity(entity_id="xabc", doi=None, year=None, title="Z",
                          subject_areas=[], subject_categories=[],
                          abstract=None, cites=["ra"],
                          metadata_incomplete=True),
        ]
        store.write_entities(entities)
        back = store.read_entities()
        assert back == sorted(entities, key=lambda e: e.entity_id)

    def test_citations_round_trip(self, tmp_path):
        store = ProjectStore(tmp_path)
        citations = [InTextCitation(
            entity_id="10.1/x", retracted_id="ra", pointer="[1]",
            context='He said "no", twice.', section_label="2. Methods",
            section_kind="method", sentiment="neutral", intent="confirms",
            mentions_retraction="yes",
        )]
        store.write_citations(citations)
        assert store.read_citations() == citations

    def test_placements_round_trip(self, tmp_path):
        store = ProjectStore(tmp_path)
        placements = [
            CitationPlacement(
                entity_id="e1", retracted_id="ra", period_label="P2",
                p_cit=(2009, 2010, 2011), p_cut=Fraction(-1, 2), fifth_bin=1,
                category="RET_A", citing_year=2009,
            ),
            CitationPlacement(
                entity_id="e1", retracted_id="rb", period_label="P3",
                p_cit=(2010,), p_cut=Fraction(0), fifth_bin=None,
                category="RET_B", citing_year=2010,
            ),
        ]
        store.write_placements(placements)
        assert store.read_placements() == placements

    def test_atomic_write_leaves_no_partials(self, tmp_path):
        store = ProjectStore(tmp_path)
        store.write_table("t.csv", ["a"], [{"a": "1"}])
        assert not list(tmp_path.glob("*.tmp"))
        assert (tmp_path / "t.csv").exists()

    def test_require_raises_stage_order(self, tmp_path):
        store = ProjectStore(tmp_path)
        with pytest.raises(StageOrderError, match="harvest"):
            store.require("entities.csv", "harvest")


class TestLock:
    def test_second_acquisition_fails(self, tmp_path):
        first = ProjectStore(tmp_path)
        first.acquire_lock()
        second = ProjectStore(tmp_path)
        with pytest.raises(MalformedInputError, match="locked"):
            second.acquire_lock()
        first.release_lock()
        second.acquire_lock()
        second.release_lock()

    def test_stale_lock_is_recovered(self, tmp_path):
        store = ProjectStore(tmp_path)
        store.lock_path.write_text("999999999", encoding="utf-8")
        store.acquire_lock()
        store.release_lock()


class TestArchive:
    def test_fixed_timestamps_and_sorted_members(self, tmp_path):
        store = ProjectStore(tmp_path)
        store.write_entities([sample_entity()])
        store.write_citations([])
        store.write_flat_dataset([sample_entity()], [])
        first = store.build_archive().read_bytes()
        second = store.build_archive().read_bytes()
        assert first == second
        with zipfile.ZipFile(store.path("export.zip")) as bundle:
            names = bundle.namelist()
            assert names == sorted(names)
            for info in bundle.infolist():
                assert info.date_time == (1980, 1, 1, 0, 0, 0)

    def test_flat_dataset_covers_every_feature_once(self, tmp_path):
        # the two normalized tables jointly carry each published feature
        # exactly once; the flat view re-joins them
        entity_features = {
            "doi", "year", "title", "venue_id", "venue_title",
            "is_retracted", "subject_areas", "subject_categories", "abstract",
        }
        citation_features = {
            "section_label", "context", "pointer", "intent", "sentiment",
            "mentions_retraction",
        }
        assert entity_features <= set(ENTITY_FIELDS)
        assert citation_features <= {
            f if f != "section_kind" else f for f in CITATION_FIELDS
        }
        assert len(FLAT_FIELDS) == len(entity_features) + len(citation_features)

    def test_flat_rows_per_citation_plus_lonely_entities(self, tmp_path):
        store = ProjectStore(tmp_path)
        e1, e2 = sample_entity(), sample_entity(entity_id="10.1/y", doi="10.1/y")
        citations = [
            InTextCitation(
                entity_id="10.1/x", retracted_id="ra", pointer="[1]",
                context="c1", section_label="Intro",
                section_kind="introduction", sentiment="neutral",
                intent="confirms", mentions_retraction="no",
            ),
            InTextCitation(
                entity_id="10.1/x", retracted_id="rb", pointer="[2]",
                context="c2", section_label="Intro",
                section_kind="introduction", sentiment="positive",
                intent="supports", mentions_retraction="no",
            ),
        ]
        store.write_flat_dataset([e1, e2], citations)
        rows = store.read_table("flat_dataset.csv")
        assert len(rows) == 3
        assert rows[0]["in_text_reference_pointer"] == "[1]"
        assert rows[2]["in_text_reference_pointer"] == ""
        assert rows[2]["doi"] == "10.1/y"
