from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

WAKEFIELD_DOI = "10.1016/s0140-6736(97)11096-0"

COCI_BASE = "https://coci.test/index/api/v1"
CROSSREF_BASE = "https://api.crossref.test"
ISBN_BASE = "https://isbndb.test/api"


def crossref_work(doi, type_, title, year, venue=None, issn=None, isbn=None):
    message = {
        "DOI": doi,
        "type": type_,
        "title": [title],
        "issued": {"date-parts": [[year]]},
    }
    if venue:
        message["container-title"] = [venue]
    if issn:
        message["ISSN"] = [issn]
    if isbn:
        message["ISBN"] = [isbn]
    return {"status": 200, "body": {"status": "ok", "message": message}}


def coci_citations(cited, citing_years):
    rows = [
        {"citing": citing, "cited": cited, "creation": f"{year}-03-01"}
        for citing, year in citing_years
    ]
    return {"status": 200, "body": rows}


@pytest.fixture(scope="session")
def recorded_responses():
    """Recorded service responses used by all offline harvest tests."""
    responses = {
        f"{COCI_BASE}/citations/{WAKEFIELD_DOI}": coci_citations(
            WAKEFIELD_DOI,
            [
                ("10.1000/cite.1", 1999),
                ("10.1000/cite.2", 2004),
                ("10.1000/cite.3", 2011),
                ("10.1000/cite.4", 2011),
                ("10.1000/notice.1", 2010),
                ("10.1000/dup.1", 2012),
                ("10.1000/dup.1", 2012),  # duplicate row on purpose
            ],
        ),
        f"{COCI_BASE}/citations/10.1000/unknown": {"status": 404, "body": ""},
        f"{CROSSREF_BASE}/works/10.1000/cite.1": crossref_work(
            "10.1000/cite.1", "journal-article",
            "Early replication attempt", 1999,
            venue="The Lancet", issn="0140-6736",
        ),
        f"{CROSSREF_BASE}/works/10.1000/cite.2": crossref_work(
            "10.1000/cite.2", "book-chapter",
            "A chapter discussing the case", 2004,
            venue="Handbook of Vaccine Controversies", isbn="9780306406157",
        ),
        f"{CROSSREF_BASE}/works/10.1000/cite.3": crossref_work(
            "10.1000/cite.3", "journal-article",
            "Citation patterns after retraction", 2011,
            venue="Scientometrics", issn="1588-2861",
        ),
        f"{CROSSREF_BASE}/works/10.1000/cite.4": crossref_work(
            "10.1000/cite.4", "editorial",
            "An editorial on research misconduct", 2011,
            venue="BMJ", issn="0959-8138",
        ),
        f"{CROSSREF_BASE}/works/10.1000/notice.1": crossref_work(
            "10.1000/notice.1", "retraction",
            "Retraction notice", 2010, venue="The Lancet", issn="0140-6736",
        ),
        f"{CROSSREF_BASE}/works/10.1000/dup.1": crossref_work(
            "10.1000/dup.1", "journal-article",
            "A later analysis", 2012,
            venue="Vaccine", issn="0264-410X",
        ),
        f"{ISBN_BASE}/book/9780306406157": {
            "status": 200,
            "body": {"book": {"isbn13": "9780306406157", "lcc": "RC360"}},
        },
        f"{ISBN_BASE}/book/9999999999991": {"status": 404, "body": ""},
        f"{COCI_BASE}/metadata/10.1000/cite.1": {
            "status": 200,
            "body": [{
                "doi": "10.1000/cite.1",
                "title": "Early replication attempt",
                "year": "1999",
                "source_title": "The Lancet",
                "source_id": "issn:0140-6736",
                "citing": "", "cited": "",
            }],
        },
    }
    return {
        url: {"status": rec["status"], "body": rec["body"]}
        for url, rec in responses.items()
    }


@pytest.fixture()
def fixture_transport(recorded_responses):
    from retcite.harvest import FixtureTransport

    return FixtureTransport(recorded_responses)
