import json

import pytest
from hypothesis import given, settings, strategies as st

from contribscope.corpus import (
    PLACEHOLDER,
    AuthorName,
    CitationContext,
    ContributionType,
    CorpusError,
    CreditRole,
    PaperRecord,
    derive_initial_forms,
    load_corpus,
    looks_structured,
    normalize_text,
    save_corpus,
)

from conftest import context, paper


def test_enums_are_fixed():
    assert [t.value for t in ContributionType] == [
        "Theoretical", "Methodological", "Experimental", "Data-based", "Other"]
    assert [r.value for r in CreditRole] == list(range(1, 15))
    assert CreditRole.INVESTIGATION.value == 5
    assert CreditRole.WRITING_REVIEW_EDITING.label == "WritingReviewEditing"


@pytest.mark.parametrize("text, expected", [
    ("Data-based", ContributionType.DATA_BASED),
    ("DataBased", ContributionType.DATA_BASED),
    ("theoretical", ContributionType.THEORETICAL),
])
def test_type_parse(text, expected):
    assert ContributionType.parse(text) is expected


def test_type_parse_rejects_unknown():
    with pytest.raises(ValueError):
        ContributionType.parse("Banana")


def test_role_parse_accepts_display_names():
    assert CreditRole.parse("Writing – review & editing") is CreditRole.WRITING_REVIEW_EDITING
    assert CreditRole.parse("Formal analysis") is CreditRole.FORMAL_ANALYSIS


def test_load_well_formed(jsonl):
    p = jsonl("papers.jsonl", [paper("a"), paper("b")])
    c = jsonl("contexts.jsonl", [context("c1", "a"), context("c2", "a"), context("c3", "b")])
    corpus, report = load_corpus(p, c)
    assert len(corpus.papers) == 2
    assert corpus.n_contexts == 3
    assert report.rejections == []
    assert [x.context_id for x in corpus.contexts_of("a")] == ["c1", "c2"]


def test_orphan_context_is_rejected(jsonl):
    p = jsonl("papers.jsonl", [paper("a")])
    c = jsonl("contexts.jsonl", [context("c1", "a"), context("c2", "zzz")])
    corpus, report = load_corpus(p, c)
    assert corpus.n_contexts == 1
    assert [(r.line_number, r.reason) for r in report.rejections] == [(2, "orphan")]


def test_missing_placeholder_is_rejected(jsonl):
    p = jsonl("papers.jsonl", [paper("a")])
    c = jsonl("contexts.jsonl", [context("c1", "a", text="no reference token here")])
    _, report = load_corpus(p, c)
    assert report.rejections[0].reason == "missing placeholder"


def test_malformed_line_reports_line_number(jsonl):
    p = jsonl("papers.jsonl", [paper("a"), "{not json", paper("b", year=1850)])
    c = jsonl("contexts.jsonl", [])
    corpus, report = load_corpus(p, c)
    assert list(corpus.papers) == ["a"]
    reasons = {r.line_number: r.reason for r in report.rejections}
    assert reasons[2].startswith("malformed JSON")
    assert "year out of range" in reasons[3]
    assert json.loads(json.dumps(report.rejections[0].to_json()))["raw"] == "{not json"


def test_duplicate_paper_id(jsonl):
    p = jsonl("papers.jsonl", [paper("a"), paper("a", journal="Science")])
    corpus, report = load_corpus(p, jsonl("c.jsonl", []))
    assert corpus.papers["a"].journal == "Nature"
    assert report.rejections[0].reason == "duplicate paper_id"


def test_duplicate_context_id_last_wins(jsonl):
    p = jsonl("papers.jsonl", [paper("a")])
    c = jsonl("contexts.jsonl", [
        context("c1", "a", text="first [target cited reference]"),
        context("c1", "a", text="second [target cited reference]"),
    ])
    corpus, report = load_corpus(p, c)
    assert [x.text for x in corpus.contexts_of("a")] == ["second [target cited reference]"]
    assert report.warnings["duplicate_context_id"] == 1
    assert report.accepted + len(report.rejections) == report.input_lines


def test_multiple_placeholders_accepted_with_warning(jsonl):
    p = jsonl("papers.jsonl", [paper("a")])
    c = jsonl("contexts.jsonl", [context("c1", "a", text=f"{PLACEHOLDER} and {PLACEHOLDER}")])
    corpus, report = load_corpus(p, c)
    assert corpus.n_contexts == 1
    assert report.warnings == {"multiple_placeholders": 1}


def test_label_without_source_defaults_to_gold(jsonl):
    p = jsonl("papers.jsonl", [paper("a")])
    c = jsonl("contexts.jsonl", [context("c1", "a", label="Data-based")])
    corpus, _ = load_corpus(p, c)
    ctx = corpus.contexts_of("a")[0]
    assert ctx.label is ContributionType.DATA_BASED and ctx.label_source == "gold"


def test_bad_confidence_and_label_rejected(jsonl):
    p = jsonl("papers.jsonl", [paper("a")])
    c = jsonl("contexts.jsonl", [
        context("c1", "a", label="Theoretical", confidence=1.5),
        context("c2", "a", label="Banana"),
        context("c3", "a", label="Theoretical", label_source="oracle"),
    ])
    corpus, report = load_corpus(p, c)
    assert corpus.n_contexts == 0
    assert len(report.rejections) == 3


def test_unreadable_file(tmp_path, jsonl):
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "nope.jsonl", jsonl("c.jsonl", []))


def test_text_normalization(jsonl):
    decomposed = "Café   [target cited reference]\n\tresult"
    p = jsonl("papers.jsonl", [paper("a")])
    c = jsonl("contexts.jsonl", [context("c1", "a", text=decomposed)])
    corpus, _ = load_corpus(p, c)
    assert corpus.contexts_of("a")[0].text == "Café [target cited reference] result"
    assert normalize_text("a  b\n\n  c d ", keep_newlines=True) == "a b\nc d"


def test_round_trip(tmp_path, jsonl):
    p = jsonl("papers.jsonl", [
        paper("a", statement="L.C.: Conceptualization\nJ.D.: Software", disciplines=["physics", "chemistry"]),
        paper("b", authors=["Plato"]),
    ])
    c = jsonl("contexts.jsonl", [
        context("c1", "b"),
        context("c2", "a", label="Other", label_source="lexicon", confidence=0.25, citing_paper_id="x"),
        context("c3", "a"),
    ])
    first, _ = load_corpus(p, c)
    save_corpus(first, tmp_path / "p2.jsonl", tmp_path / "c2.jsonl")
    second, report = load_corpus(tmp_path / "p2.jsonl", tmp_path / "c2.jsonl")
    assert report.rejections == []
    assert second == first
    assert second.papers["a"].statement_structured


_line = st.one_of(
    st.builds(lambda i: json.dumps(context(f"c{i}", "a")), st.integers(0, 30)),
    st.builds(lambda i: json.dumps(context(f"c{i}", "ghost")), st.integers(0, 30)),
    st.builds(lambda i: json.dumps(context(f"c{i}", "a", text="nothing")), st.integers(0, 30)),
    st.just("{broken"),
    st.just("[1, 2]"),
)


@settings(max_examples=60, deadline=None)
@given(st.lists(_line, max_size=25))
def test_rejection_completeness(tmp_path_factory, lines):
    d = tmp_path_factory.mktemp("rc")
    (d / "p.jsonl").write_text(json.dumps(paper("a")) + "\n" + "oops\n")
    (d / "c.jsonl").write_text("".join(line + "\n" for line in lines))
    corpus, report = load_corpus(d / "p.jsonl", d / "c.jsonl")
    assert report.input_lines == 2 + len(lines)
    assert report.accepted + len(report.rejections) == report.input_lines
    assert corpus.n_contexts + len(corpus.papers) == report.accepted


@pytest.mark.parametrize("name, expected", [
    ("Liyue Chen", ["L.C.", "L. Chen", "Chen", "Liyue Chen"]),
    ("Plato", ["Plato"]),
    ("Mary Ann Smith", ["M.A.S.", "M. Smith", "Smith", "Mary Ann Smith"]),
    ("  Liyue   Chen ", ["L.C.", "L. Chen", "Chen", "Liyue Chen"]),
])
def test_derive_initial_forms(name, expected):
    assert derive_initial_forms(name) == expected


def test_initial_forms_contains_jd():
    assert "J.D." in derive_initial_forms("Jielan Ding")
    assert AuthorName("Jielan Ding").initial_forms == derive_initial_forms("Jielan Ding")


@given(st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Zs")), min_size=1, max_size=40)
       .filter(lambda s: s.strip()))
def test_initial_forms_pure_and_unique(name):
    a, b = derive_initial_forms(name), derive_initial_forms(name)
    assert a == b
    assert len(a) == len(set(a))
    assert a[-1] == normalize_text(name)


def test_record_invariants():
    with pytest.raises(ValueError):
        PaperRecord("p", "J", 2020, (), ())
    with pytest.raises(ValueError):
        PaperRecord(" ", "J", 2020, (), (AuthorName("A B"),))
    with pytest.raises(ValueError):
        AuthorName("   ")
    with pytest.raises(ValueError):
        CitationContext("c", "p", "text", label=ContributionType.OTHER)


@pytest.mark.parametrize("statement, structured", [
    ("Liyue Chen: Conceptualization\nJ.D.: Software", True),
    ("All authors: review", True),
    ("Conceptualization: L.C., J.D.", True),
    ("L.C. designed the study. J.D. wrote it.", False),
    ("Author contributions: L.C. designed the study.", False),
])
def test_structured_detection(statement, structured):
    assert looks_structured(statement) is structured
