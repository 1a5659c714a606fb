"""Generator invariants: determinism, planted signal, and sidecar consistency.

The recoverability checks use a token-level oracle instead of the model:
score a candidate by the fraction of its tokens drawn from the question's
topic slice. With signal_strength 1.0 that oracle must always find the
planted best answer; with 0.0 the candidates are exchangeable and the
oracle does no better than chance.
"""

import dataclasses

import numpy as np
import pytest

from cqarank import synth
from cqarank.corpus import GOOD, load_corpus
from cqarank.synth import SynthConfig, generate, load_truth

SMALL = SynthConfig(
    seed=3,
    num_questions=12,
    candidates_per_question=6,
    num_answerers=6,
    num_tags=6,
    vocab_size=90,
    topic_count=3,
    follower_count_range=(1, 3),
)


@pytest.fixture(scope="module")
def small_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth_small")
    generate(SMALL, out)
    return out


def token_topic(token):
    # w{t}_{i} vocabulary words and sym{t}_{i} concept mentions
    head = token.lstrip("wsym")
    return int(head.split("_")[0])


def topic_fraction(text, topic):
    tokens = text.split()
    return sum(1 for tok in tokens if token_topic(tok) == topic) / len(tokens)


class TestValidation:
    @pytest.mark.parametrize(
        "field,value,msg",
        [
            ("num_questions", 0, "num_questions"),
            ("candidates_per_question", 1, "candidates_per_question"),
            ("topic_count", 1, "topic_count"),
            ("num_answerers", 2, "answerer per topic"),
            ("num_tags", 2, "raw tag per topic"),
            ("vocab_size", 5, "vocabulary words per topic"),
            ("signal_strength", 1.5, "signal_strength"),
            ("expertise_noise", -0.1, "expertise_noise"),
            ("question_len_range", (5, 2), "question_len_range"),
            ("answer_len_range", (0, 4), "at least one token"),
            ("best_vote_range", (1, 4), "at least 2"),
        ],
    )
    def test_bad_config_rejected(self, field, value, msg):
        config = dataclasses.replace(SMALL, **{field: value})
        with pytest.raises(ValueError, match=msg):
            config.validate()

    def test_default_config_is_valid(self):
        SynthConfig().validate()


class TestDeterminism:
    FILES = ("corpus.jsonl", "taxonomy.tsv", "kg.tsv", synth.TRUTH_FILE)

    def test_same_seed_same_bytes(self, tmp_path):
        generate(SMALL, tmp_path / "one")
        generate(SMALL, tmp_path / "two")
        for name in self.FILES:
            assert (tmp_path / "one" / name).read_bytes() == (
                tmp_path / "two" / name
            ).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        generate(SMALL, tmp_path / "one")
        generate(dataclasses.replace(SMALL, seed=4), tmp_path / "two")
        assert (tmp_path / "one" / "corpus.jsonl").read_bytes() != (
            tmp_path / "two" / "corpus.jsonl"
        ).read_bytes()


class TestShape:
    def test_summary_counts(self, tmp_path):
        summary = generate(SMALL, tmp_path)
        assert summary["questions"] == 12
        assert summary["answers"] == 12 * 6
        assert summary["answerers"] == 6
        assert summary["groups"] == 3
        assert not summary["label_style"]

    def test_corpus_loads_and_links(self, small_dir):
        corpus = load_corpus(small_dir)
        assert len(corpus.questions) == 12
        for q in corpus.questions:
            assert len(corpus.candidates(q.id)) == 6
        authored = sum(len(r.previous_answers) for r in corpus.answerers)
        assert authored == len(corpus.answers)

    def test_question_lengths_in_range(self, small_dir):
        corpus = load_corpus(small_dir)
        lo, hi = SMALL.question_len_range
        for q in corpus.questions:
            assert lo <= len(q.text.split()) <= hi

    def test_tags_respect_taxonomy(self, small_dir):
        corpus = load_corpus(small_dir)
        for q in corpus.questions:
            for tag in q.tags:
                topic = int(tag.lstrip("tag").split("_")[0])
                assert corpus.taxonomy.groups[corpus.taxonomy.group_index(tag)] == (
                    f"group{topic}"
                )

    def test_every_tag_reachable_from_kg(self, small_dir):
        corpus = load_corpus(small_dir)
        linked = {
            tag for concept in corpus.kg.concepts
            for tag, _ in corpus.kg.edges_from(concept)
        }
        all_tags = {f"tag{t}_{j}" for t in range(3) for j in range(2)}
        assert linked == all_tags
        for _, _, weight in corpus.kg.edges:
            assert 0.5 <= weight <= 1.5


class TestPlantedBest:
    def test_vote_gap(self, small_dir):
        corpus = load_corpus(small_dir)
        truth = load_truth(small_dir)
        for q in corpus.questions:
            votes = {a.id: a.vote for a in corpus.candidates(q.id)}
            best_id = truth[q.id]["best_answer_id"]
            best = votes.pop(best_id)
            assert SMALL.best_vote_range[0] <= best <= SMALL.best_vote_range[1]
            assert all(v <= best - 2 for v in votes.values())

    def test_label_style_has_one_good(self, tmp_path):
        generate(dataclasses.replace(SMALL, label_style=True), tmp_path)
        corpus = load_corpus(tmp_path)
        truth = load_truth(tmp_path)
        assert corpus.label_based
        for q in corpus.questions:
            good = [a.id for a in corpus.candidates(q.id) if a.quality_label == GOOD]
            assert good == [truth[q.id]["best_answer_id"]]
            assert all(a.vote is None for a in corpus.candidates(q.id))

    def test_truth_sidecar_consistent(self, small_dir):
        corpus = load_corpus(small_dir)
        truth = load_truth(small_dir)
        assert set(truth) == {q.id for q in corpus.questions}
        for n, q in enumerate(corpus.questions):
            rec = truth[q.id]
            assert rec["topic"] == n % 3
            ids = {a.id for a in corpus.candidates(q.id)}
            assert set(rec["answer_topics"]) == ids
            assert rec["best_answer_id"] in ids
            assert rec["answer_topics"][rec["best_answer_id"]] == rec["topic"]

    def test_best_answer_mentions_a_concept(self, small_dir):
        corpus = load_corpus(small_dir)
        truth = load_truth(small_dir)
        by_id = {a.id: a for a in corpus.answers}
        for rec in truth.values():
            tokens = by_id[rec["best_answer_id"]].text.split()
            concepts = [tok for tok in tokens if tok.startswith("sym")]
            assert 1 <= len(concepts) <= 2


class TestRecoverability:
    def test_full_signal_oracle_is_perfect(self, tmp_path):
        config = dataclasses.replace(SMALL, signal_strength=1.0, num_questions=30)
        generate(config, tmp_path)
        corpus = load_corpus(tmp_path)
        truth = load_truth(tmp_path)
        for q in corpus.questions:
            rec = truth[q.id]
            scored = [
                (topic_fraction(a.text, rec["topic"]), a.id)
                for a in corpus.candidates(q.id)
            ]
            best_score, best_id = max(scored)
            assert best_id == rec["best_answer_id"]
            assert best_score == 1.0
            runner_up = max(s for s, aid in scored if aid != best_id)
            assert runner_up == 0.0

    def test_zero_signal_oracle_is_chance(self, tmp_path):
        config = dataclasses.replace(
            SMALL, signal_strength=0.0, num_questions=500,
            candidates_per_question=8, seed=7,
        )
        generate(config, tmp_path)
        corpus = load_corpus(tmp_path)
        truth = load_truth(tmp_path)
        rng = np.random.default_rng(0)
        hits = 0
        for q in corpus.questions:
            rec = truth[q.id]
            candidates = corpus.candidates(q.id)
            scores = np.array(
                [topic_fraction(a.text, rec["topic"]) for a in candidates]
            )
            # every candidate is pure question-topic, so ties are total
            assert np.all(scores == 1.0)
            pick = candidates[rng.integers(len(candidates))]
            hits += pick.id == rec["best_answer_id"]
        rate = hits / len(corpus.questions)
        p = 1.0 / 8
        sigma = (p * (1 - p) / len(corpus.questions)) ** 0.5
        assert abs(rate - p) <= 3 * sigma
