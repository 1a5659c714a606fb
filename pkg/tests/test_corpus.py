"""Corpus file formats, cross-linking, and the vote/label quality measures."""

import json

import numpy as np
import pytest

from cqarank import corpus as cp
from cqarank.corpus import (
    BAD,
    GOOD,
    POTENTIALLY_USEFUL,
    Answer,
    AnswererRecord,
    Corpus,
    DanglingReferenceError,
    FollowerProfile,
    KnowledgeGraph,
    ParseError,
    Question,
    TagTaxonomy,
    VoteMode,
    group_tags,
    load_corpus,
    save_corpus,
    vote_measure,
)


def write_corpus_file(tmp_path, lines):
    path = tmp_path / cp.CORPUS_FILE
    path.write_text("\n".join(json.dumps(obj) for obj in lines) + "\n")
    return path


def minimal_records(**answer_extra):
    return [
        {"kind": "question", "id": "q1", "text": "knee pain", "tags": ["knees"]},
        {"kind": "answerer", "id": "u1"},
        {
            "kind": "answer", "id": "a1", "question_id": "q1", "answerer_id": "u1",
            "text": "rest and ice", "tags": ["knees"], **answer_extra,
        },
    ]


def write_taxonomy(tmp_path, pairs=(("knees", "orthopedics"),)):
    path = tmp_path / cp.TAXONOMY_FILE
    path.write_text("\n".join(f"{raw}\t{grp}" for raw, grp in pairs) + "\n")
    return path


class TestTaxonomy:
    def test_group_order_is_first_occurrence(self):
        tax = TagTaxonomy.from_pairs(
            [("a", "G1"), ("b", "G2"), ("c", "G1"), ("d", "G3")]
        )
        assert tax.groups == ["G1", "G2", "G3", "other"]
        assert tax.group_index("c") == 0

    def test_lookup_is_case_insensitive(self):
        tax = TagTaxonomy.from_pairs([("Knee Pain", "Orthopedics")])
        assert tax.group_index("knee pain") == 0
        assert tax.group_index("  KNEE PAIN ") == 0

    def test_unknown_tags_land_in_other(self):
        tax = TagTaxonomy.from_pairs([("a", "G1")])
        assert tax.group_index("zzz") == tax.other_index
        assert tax.groups[tax.other_index] == "other"

    def test_explicit_other_group_is_reused(self):
        tax = TagTaxonomy.from_pairs([("a", "G1"), ("misc", "other")])
        assert tax.groups.count("other") == 1
        assert tax.group_index("misc") == tax.other_index

    def test_conflicting_mapping_rejected(self):
        with pytest.raises(ParseError, match="two different groups"):
            TagTaxonomy.from_pairs([("a", "G1"), ("A", "G2")])

    def test_size_counts_groups(self):
        tax = TagTaxonomy.from_pairs([("a", "G1"), ("b", "G2")])
        assert tax.size == 3


class TestGroupTags:
    def test_counts_per_group(self):
        tax = TagTaxonomy.from_pairs([("a", "G1"), ("b", "G1"), ("c", "G2")])
        vec = group_tags(["a", "b", "a", "c", "mystery"], tax)
        assert vec.tolist() == [3.0, 1.0, 1.0]
        assert vec.sum() == 5.0

    def test_empty_tag_list(self):
        tax = TagTaxonomy.from_pairs([("a", "G1")])
        assert group_tags([], tax).tolist() == [0.0, 0.0]


class TestKnowledgeGraph:
    def test_edges_indexed_by_concept(self):
        kg = KnowledgeGraph(
            edges=[("fever", "flu", 0.5), ("fever", "cold", 0.3), ("ache", "flu", 0.2)]
        )
        assert kg.concepts == ["fever", "ache"]
        assert kg.edges_from("FEVER") == [("flu", 0.5), ("cold", 0.3)]
        assert kg.edges_from("unknown") == []


class TestVoteMeasure:
    def test_count_mode_returns_raw_votes(self):
        a = Answer(id="a", question_id="q", answerer_id="u", text="t", tags=[], vote=7)
        assert vote_measure(a, VoteMode.COUNT) == 7.0

    def test_categorical_mapping(self):
        for label, value in ((GOOD, 2.0), (POTENTIALLY_USEFUL, 1.0), (BAD, 0.0)):
            a = Answer(
                id="a", question_id="q", answerer_id="u", text="t", tags=[],
                quality_label=label,
            )
            assert vote_measure(a, VoteMode.CATEGORICAL) == value

    def test_missing_value_raises(self):
        a = Answer(id="a", question_id="q", answerer_id="u", text="t", tags=[])
        with pytest.raises(ValueError, match="no vote"):
            vote_measure(a, VoteMode.COUNT)
        with pytest.raises(ValueError, match="no quality label"):
            vote_measure(a, VoteMode.CATEGORICAL)


class TestLoadCorpus:
    def test_minimal_corpus_loads_and_cross_links(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=3))
        write_taxonomy(tmp_path)
        corpus = load_corpus(tmp_path)
        assert [q.id for q in corpus.questions] == ["q1"]
        assert corpus.candidates("q1")[0].id == "a1"
        assert corpus.answerer("u1").previous_answers[0].id == "a1"
        assert corpus.vote_mode() is VoteMode.COUNT
        assert not corpus.label_based

    def test_followers_attach_to_answerer(self, tmp_path):
        records = minimal_records(vote=1)
        records.insert(
            2,
            {"kind": "follower", "follower_id": "f1", "answerer_id": "u1",
             "tags": ["knees", "knees", "hips"]},
        )
        write_corpus_file(tmp_path, records)
        write_taxonomy(tmp_path)
        corpus = load_corpus(tmp_path)
        follower = corpus.answerer("u1").followers[0]
        assert follower.follower_id == "f1"
        # duplicate tags collapse
        assert follower.tags == ["knees", "hips"]

    def test_label_corpus_detected(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(quality_label=GOOD))
        write_taxonomy(tmp_path)
        corpus = load_corpus(tmp_path)
        assert corpus.label_based
        assert corpus.vote_mode() is VoteMode.CATEGORICAL

    def test_kg_file_is_optional(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=1))
        write_taxonomy(tmp_path)
        assert load_corpus(tmp_path).kg is None
        (tmp_path / cp.KG_FILE).write_text("swelling\tknees\t0.4\n")
        corpus = load_corpus(tmp_path)
        assert corpus.kg.edges_from("swelling") == [("knees", 0.4)]

    def test_all_texts_covers_questions_and_answers(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=1))
        write_taxonomy(tmp_path)
        assert load_corpus(tmp_path).all_texts() == ["knee pain", "rest and ice"]


class TestParseErrors:
    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / cp.CORPUS_FILE
        path.write_text('{"kind": "question"}\nnot json\n')
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match=r":1:"):
            load_corpus(tmp_path)

    def test_unknown_kind(self, tmp_path):
        write_corpus_file(tmp_path, [{"kind": "mystery"}])
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="unknown record kind"):
            load_corpus(tmp_path)

    def test_duplicate_question_id(self, tmp_path):
        records = minimal_records(vote=1)
        records.append({"kind": "question", "id": "q1", "text": "again", "tags": []})
        write_corpus_file(tmp_path, records)
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="duplicate question id"):
            load_corpus(tmp_path)

    def test_duplicate_answer_id(self, tmp_path):
        records = minimal_records(vote=1)
        records.append(dict(records[2]))
        write_corpus_file(tmp_path, records)
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="duplicate answer id"):
            load_corpus(tmp_path)

    def test_negative_vote_rejected(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=-1))
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="non-negative integer"):
            load_corpus(tmp_path)

    def test_boolean_vote_rejected(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=True))
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="non-negative integer"):
            load_corpus(tmp_path)

    def test_unknown_quality_label_rejected(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(quality_label="Excellent"))
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="unknown quality label"):
            load_corpus(tmp_path)

    def test_mixed_styles_rejected(self, tmp_path):
        records = minimal_records(vote=1)
        records.append(
            {"kind": "answer", "id": "a2", "question_id": "q1", "answerer_id": "u1",
             "text": "see a doctor", "tags": [], "quality_label": GOOD}
        )
        write_corpus_file(tmp_path, records)
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="mixed corpus style"):
            load_corpus(tmp_path)

    def test_missing_field_reported(self, tmp_path):
        write_corpus_file(tmp_path, [{"kind": "question", "id": "q1"}])
        write_taxonomy(tmp_path)
        with pytest.raises(ParseError, match="missing 'text'"):
            load_corpus(tmp_path)

    def test_bad_taxonomy_line(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=1))
        (tmp_path / cp.TAXONOMY_FILE).write_text("only-one-column\n")
        with pytest.raises(ParseError, match="tab-separated"):
            load_corpus(tmp_path)

    def test_bad_kg_weight(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=1))
        write_taxonomy(tmp_path)
        (tmp_path / cp.KG_FILE).write_text("fever\tknees\tmany\n")
        with pytest.raises(ParseError, match="not a number"):
            load_corpus(tmp_path)

    def test_negative_kg_weight(self, tmp_path):
        write_corpus_file(tmp_path, minimal_records(vote=1))
        write_taxonomy(tmp_path)
        (tmp_path / cp.KG_FILE).write_text("fever\tknees\t-0.5\n")
        with pytest.raises(ParseError, match="finite and >= 0"):
            load_corpus(tmp_path)


class TestDanglingReferences:
    def test_answer_to_unknown_question(self, tmp_path):
        records = minimal_records(vote=1)
        records[2]["question_id"] = "q999"
        write_corpus_file(tmp_path, records)
        write_taxonomy(tmp_path)
        with pytest.raises(DanglingReferenceError, match="unknown question"):
            load_corpus(tmp_path)

    def test_answer_to_unknown_answerer(self, tmp_path):
        records = minimal_records(vote=1)
        records[2]["answerer_id"] = "u999"
        write_corpus_file(tmp_path, records)
        write_taxonomy(tmp_path)
        with pytest.raises(DanglingReferenceError, match="unknown answerer"):
            load_corpus(tmp_path)

    def test_follower_of_unknown_answerer(self, tmp_path):
        records = minimal_records(vote=1)
        records.append(
            {"kind": "follower", "follower_id": "f1", "answerer_id": "u999",
             "tags": []}
        )
        write_corpus_file(tmp_path, records)
        write_taxonomy(tmp_path)
        with pytest.raises(DanglingReferenceError, match="unknown answerer"):
            load_corpus(tmp_path)


class TestSaveLoadRoundTrip:
    def build_corpus(self):
        tax = TagTaxonomy.from_pairs([("knees", "orthopedics"), ("hips", "orthopedics")])
        kg = KnowledgeGraph(edges=[("swelling", "knees", 0.25)])
        q = Question(id="q1", text="sore knee", tags=["knees"])
        answers = [
            Answer(id="a1", question_id="q1", answerer_id="u1", text="ice it",
                   tags=["knees"], vote=4),
            Answer(id="a2", question_id="q1", answerer_id="u1", text="walk it off",
                   tags=["hips"], vote=1),
        ]
        rec = AnswererRecord(
            id="u1",
            followers=[FollowerProfile(follower_id="f1", tags=["knees"])],
        )
        rec.previous_answers = list(answers)
        return Corpus(questions=[q], answers=answers, answerers=[rec],
                      taxonomy=tax, kg=kg)

    def test_round_trip_preserves_content(self, tmp_path):
        original = self.build_corpus()
        save_corpus(original, tmp_path)
        loaded = load_corpus(tmp_path)
        assert loaded.questions == original.questions
        assert loaded.answers == original.answers
        assert [a.id for a in loaded.answerer("u1").previous_answers] == ["a1", "a2"]
        assert loaded.answerer("u1").followers == original.answerers[0].followers
        assert loaded.taxonomy.groups == original.taxonomy.groups
        assert loaded.kg.edges == original.kg.edges

    def test_save_is_deterministic(self, tmp_path):
        corpus = self.build_corpus()
        save_corpus(corpus, tmp_path / "one")
        save_corpus(corpus, tmp_path / "two")
        for name in (cp.CORPUS_FILE, cp.TAXONOMY_FILE, cp.KG_FILE):
            assert (tmp_path / "one" / name).read_bytes() == (
                tmp_path / "two" / name
            ).read_bytes()
