"""Pool normalization, ranking metrics on hand-worked pools, folds, ablations.

Metric oracles are tiny pools whose P@K, AP, threshold, accuracy, and F1
are computed by hand in the fixtures; the ranking convention (stable
descending sort, first index wins ties) is pinned separately.
"""

import dataclasses

import numpy as np
import pytest

from cqarank.corpus import (
    BAD,
    GOOD,
    Answer,
    AnswererRecord,
    Corpus,
    Question,
    TagTaxonomy,
    VoteMode,
)
from cqarank.embedding import train_skipgram
from cqarank.eval import (
    AblationConfig,
    Candidate,
    RankedPool,
    build_pools,
    choose_score_threshold,
    enumerate_ablation_configs,
    evaluate_pools,
    kfold_split,
    map_accuracy_f1,
    normalize_pool,
    precision_at_k,
    run_ablation,
    score_pools,
)
from cqarank.model import Hyper, init_model


def make_answer(aid, vote=None, label=None, text="some words here", qid="q1"):
    return Answer(
        id=aid, question_id=qid, answerer_id="u1", text=text, tags=[],
        vote=vote, quality_label=label,
    )


def hand_pool(scores, best_index, relevant=None, qid="q1"):
    relevant = relevant or [False] * len(scores)
    candidates = [
        Candidate(
            answer=make_answer(f"{qid}_a{i}", label=GOOD if relevant[i] else BAD),
            genuine=True, best=(i == best_index), relevant=relevant[i],
        )
        for i in range(len(scores))
    ]
    pool = RankedPool(
        question=Question(id=qid, text="q", tags=[]), candidates=candidates
    )
    pool.scores = np.asarray(scores, dtype=np.float64)
    return pool


class TestRanking:
    def test_descending_order(self):
        pool = hand_pool([0.1, 0.9, 0.5], best_index=0)
        assert pool.ranking().tolist() == [1, 2, 0]

    def test_ties_keep_candidate_order(self):
        pool = hand_pool([0.5, 0.5, 0.2], best_index=0)
        assert pool.ranking().tolist() == [0, 1, 2]

    def test_unscored_pool_rejected(self):
        pool = hand_pool([0.1], best_index=0)
        pool.scores = None
        with pytest.raises(ValueError, match="not been scored"):
            pool.ranking()

    def test_two_best_rejected(self):
        candidates = [
            Candidate(answer=make_answer("a1"), genuine=True, best=True, relevant=False),
            Candidate(answer=make_answer("a2"), genuine=True, best=True, relevant=False),
        ]
        with pytest.raises(ValueError, match="designates 2 best"):
            RankedPool(question=Question(id="q1", text="q", tags=[]), candidates=candidates)


class TestPrecisionAtK:
    def test_hand_worked_pools(self):
        top = hand_pool([0.9, 0.5, 0.1], best_index=0, qid="q1")
        second = hand_pool([0.5, 0.9, 0.1], best_index=0, qid="q2")
        last = hand_pool([0.1, 0.5, 0.9], best_index=0, qid="q3")
        assert precision_at_k([top], 1) == 1.0
        assert precision_at_k([second], 1) == 0.0
        assert precision_at_k([second], 2) == 1.0
        assert precision_at_k([last], 2) == 0.0
        assert precision_at_k([top, second], 1) == 0.5
        assert precision_at_k([top, second, last], 2) == pytest.approx(2 / 3)

    def test_tied_top_goes_to_lower_index(self):
        # best sits second; the tie resolves to index 0, so the best misses top-1
        pool = hand_pool([0.5, 0.5], best_index=1)
        assert precision_at_k([pool], 1) == 0.0
        assert precision_at_k([hand_pool([0.5, 0.5], best_index=0)], 1) == 1.0

    def test_validation(self):
        pool = hand_pool([0.5], best_index=0)
        with pytest.raises(ValueError, match="k must be positive"):
            precision_at_k([pool], 0)
        with pytest.raises(ValueError, match="no pools"):
            precision_at_k([], 1)


class TestMapAccuracyF1:
    def test_hand_worked_average_precision(self):
        # relevant at ranks 1 and 3: AP = (1/1 + 2/3) / 2 = 5/6
        a = hand_pool([0.9, 0.5, 0.3], 0, relevant=[True, False, True], qid="q1")
        # relevant at rank 2: AP = 1/2
        b = hand_pool([0.9, 0.5], 0, relevant=[False, True], qid="q2")
        m, _, _, excluded = map_accuracy_f1([a, b], threshold=0.0)
        assert m == pytest.approx((5 / 6 + 1 / 2) / 2)
        assert excluded == 0

    def test_pools_without_relevant_are_excluded(self):
        a = hand_pool([0.9, 0.5], 0, relevant=[True, False], qid="q1")
        empty = hand_pool([0.9, 0.5], 0, relevant=[False, False], qid="q2")
        m, _, _, excluded = map_accuracy_f1([a, empty], threshold=0.0)
        assert m == 1.0
        assert excluded == 1

    def test_all_pools_unrelevant_rejected(self):
        empty = hand_pool([0.9], 0, relevant=[False])
        with pytest.raises(ValueError, match="MAP undefined"):
            map_accuracy_f1([empty], threshold=0.0)

    def test_accuracy_and_f1_at_fixed_threshold(self):
        pool = hand_pool(
            [0.9, 0.8, 0.2, 0.1], 0, relevant=[True, True, False, False]
        )
        _, acc, f1, _ = map_accuracy_f1([pool], threshold=0.5)
        assert acc == 1.0
        assert f1 == 1.0
        _, acc, f1, _ = map_accuracy_f1([pool], threshold=0.15)
        # one false positive at 0.2
        assert acc == pytest.approx(3 / 4)
        assert f1 == pytest.approx(2 * (2 / 3) * 1.0 / (2 / 3 + 1.0))


class TestThreshold:
    def test_perfect_separation_found(self):
        pool = hand_pool(
            [0.9, 0.8, 0.2, 0.1], 0, relevant=[True, True, False, False]
        )
        assert choose_score_threshold([pool]) == pytest.approx(0.2)

    def test_all_negative_prefers_smallest_cut(self):
        # F1 ties at zero everywhere; the predict-everything cut wins
        pool = hand_pool([0.4, 0.6], 0, relevant=[False, False])
        assert choose_score_threshold([pool]) == pytest.approx(0.4 - 1.0)

    def test_all_positive_keeps_everything(self):
        pool = hand_pool([0.4, 0.6], 0, relevant=[True, True])
        assert choose_score_threshold([pool]) == pytest.approx(0.4 - 1.0)

    def test_unscored_pool_rejected(self):
        pool = hand_pool([0.4], 0)
        pool.scores = None
        with pytest.raises(ValueError, match="scored before"):
            choose_score_threshold([pool])


class TestEvaluatePools:
    def test_vote_style_report_has_no_label_metrics(self):
        pool = hand_pool([0.9, 0.1], 0)
        for cand in pool.candidates:
            cand.answer.quality_label = None
        report = evaluate_pools([pool])
        assert report["questions"] == 1
        assert report["p_at_1"] == 1.0
        assert "map" not in report

    def test_label_style_report_complete(self):
        pool = hand_pool([0.9, 0.1], 0, relevant=[True, False])
        report = evaluate_pools([pool])
        for key in ("map", "accuracy", "f1", "threshold", "map_excluded"):
            assert key in report
        assert report["map"] == 1.0

    def test_fixed_threshold_passes_through(self):
        pool = hand_pool([0.9, 0.1], 0, relevant=[True, False])
        report = evaluate_pools([pool], threshold=0.5)
        assert report["threshold"] == 0.5


class TestNormalizePool:
    def filler(self, n=6):
        return [make_answer(f"f{i}", vote=0, qid="other") for i in range(n)]

    def test_shortfall_filled_with_non_genuine(self):
        q = Question(id="q1", text="q", tags=[])
        answers = [make_answer("a1", vote=3), make_answer("a2", vote=1)]
        rng = np.random.default_rng(0)
        pool = normalize_pool(q, answers, self.filler(), VoteMode.COUNT, 5, rng)
        assert pool.size == 5
        genuine = [c for c in pool.candidates if c.genuine]
        fillers = [c for c in pool.candidates if not c.genuine]
        assert [c.answer.id for c in genuine] == ["a1", "a2"]
        assert len(fillers) == 3
        assert all(not c.best and not c.relevant for c in fillers)

    def test_excess_trimmed_to_top_measures_keeping_best(self):
        q = Question(id="q1", text="q", tags=[])
        votes = [1, 0, 5, 2, 4]
        answers = [make_answer(f"a{i}", vote=v) for i, v in enumerate(votes)]
        pool = normalize_pool(
            q, answers, [], VoteMode.COUNT, 3, np.random.default_rng(0)
        )
        # top three votes are 5, 4, 2, kept in original order
        assert [c.answer.id for c in pool.candidates] == ["a2", "a3", "a4"]
        assert [c.best for c in pool.candidates] == [True, False, False]

    def test_trim_is_stable_on_ties(self):
        q = Question(id="q1", text="q", tags=[])
        votes = [5, 3, 3, 3, 1]
        answers = [make_answer(f"a{i}", vote=v) for i, v in enumerate(votes)]
        pool = normalize_pool(
            q, answers, [], VoteMode.COUNT, 3, np.random.default_rng(0)
        )
        assert [c.answer.id for c in pool.candidates] == ["a0", "a1", "a2"]

    def test_zero_token_answers_dropped(self):
        q = Question(id="q1", text="q", tags=[])
        answers = [make_answer("a1", vote=3), make_answer("a2", vote=5, text="...")]
        pool = normalize_pool(
            q, answers, self.filler(), VoteMode.COUNT, 2, np.random.default_rng(0)
        )
        ids = [c.answer.id for c in pool.candidates]
        assert "a2" not in ids
        assert pool.candidates[0].best  # a1 is the only genuine candidate left

    def test_small_filler_pool_reuses_answers(self):
        q = Question(id="q1", text="q", tags=[])
        answers = [make_answer("a1", vote=3), make_answer("a2", vote=1)]
        pool = normalize_pool(
            q, answers, self.filler(1), VoteMode.COUNT, 6, np.random.default_rng(0)
        )
        assert pool.size == 6

    def test_errors(self):
        q = Question(id="q1", text="q", tags=[])
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="no usable answers"):
            normalize_pool(q, [make_answer("a1", vote=1, text="..")], [], VoteMode.COUNT, 3, rng)
        answers = [make_answer("a1", vote=3)]
        with pytest.raises(ValueError, match="pool size"):
            normalize_pool(q, answers, [], VoteMode.COUNT, 0, rng)
        with pytest.raises(ValueError, match="none are available"):
            normalize_pool(q, answers, [], VoteMode.COUNT, 3, rng)


def tiny_corpus(num_questions=4, answers_per=3):
    tax = TagTaxonomy.from_pairs([("knees", "orthopedics")])
    questions = []
    answers = []
    rec = AnswererRecord(id="u1")
    for n in range(num_questions):
        questions.append(
            Question(id=f"q{n}", text=f"knee question number {n}", tags=["knees"])
        )
        for j in range(answers_per):
            answers.append(
                Answer(
                    id=f"a{n}_{j}", question_id=f"q{n}", answerer_id="u1",
                    text=f"answer {j} about rest and ice", tags=["knees"],
                    vote=answers_per - j,
                )
            )
    rec.previous_answers = list(answers)
    return Corpus(questions=questions, answers=answers, answerers=[rec], taxonomy=tax)


class TestBuildPools:
    def test_exact_size_and_skip_count(self):
        corpus = tiny_corpus()
        corpus.questions.append(Question(id="qbad", text="...", tags=[]))
        pools, skipped = build_pools(corpus, pool_size=5, seed=0)
        assert skipped == 1
        assert [p.size for p in pools] == [5, 5, 5, 5]

    def test_fillers_come_from_other_questions(self):
        pools, _ = build_pools(tiny_corpus(), pool_size=6, seed=0)
        for pool in pools:
            for cand in pool.candidates:
                if not cand.genuine:
                    assert cand.answer.question_id != pool.question.id

    def test_seeded_filler_determinism(self):
        ids = []
        for _ in range(2):
            pools, _ = build_pools(tiny_corpus(), pool_size=6, seed=3)
            ids.append([[c.answer.id for c in p.candidates] for p in pools])
        assert ids[0] == ids[1]
        other, _ = build_pools(tiny_corpus(), pool_size=6, seed=4)
        assert ids[0] != [[c.answer.id for c in p.candidates] for p in other]

    def test_question_filter(self):
        pools, _ = build_pools(tiny_corpus(), question_ids=["q2"], pool_size=4)
        assert [p.question.id for p in pools] == ["q2"]


@pytest.fixture(scope="module")
def scoring_setup():
    corpus = tiny_corpus()
    table = train_skipgram(corpus.all_texts(), dim=8, epochs=1, seed=0)
    hyper = Hyper(
        hidden_size=4, embed_dim=8, max_question_len=6, max_answer_len=8,
        profile_rank=2,
    )
    params = init_model(table, hyper, seed=0)
    pools, _ = build_pools(corpus, pool_size=4, seed=0)
    return corpus, params, pools


class TestScorePools:
    def test_scores_filled_and_finite(self, scoring_setup):
        _, params, pools = scoring_setup
        score_pools(pools, params, {})
        for pool in pools:
            assert pool.scores.shape == (pool.size,)
            assert np.isfinite(pool.scores).all()
            assert np.all(np.abs(pool.scores) < 1.0)

    def test_worker_count_never_changes_scores(self, scoring_setup):
        _, params, pools = scoring_setup
        score_pools(pools, params, {}, workers=1)
        serial = [p.scores.copy() for p in pools]
        score_pools(pools, params, {}, workers=4)
        for got, want in zip((p.scores for p in pools), serial):
            np.testing.assert_array_equal(got, want)


class TestKFold:
    def test_partition_properties(self):
        ids = [f"q{i}" for i in range(23)]
        folds = kfold_split(ids, folds=5, seed=0)
        assert len(folds) == 5
        flat = [q for fold in folds for q in fold]
        assert sorted(flat) == sorted(ids)
        sizes = [len(f) for f in folds]
        assert max(sizes) - min(sizes) <= 1

    def test_seeded_determinism(self):
        ids = [f"q{i}" for i in range(10)]
        assert kfold_split(ids, 3, seed=1) == kfold_split(ids, 3, seed=1)
        assert kfold_split(ids, 3, seed=1) != kfold_split(ids, 3, seed=2)

    def test_validation(self):
        with pytest.raises(ValueError, match="at least 2"):
            kfold_split(["a", "b"], folds=1)
        with pytest.raises(ValueError, match="cannot split"):
            kfold_split(["a", "b"], folds=3)


class TestAblation:
    def test_enumeration_order_and_names(self):
        names = [c.name for c in enumerate_ablation_configs()]
        assert names == [
            "none", "expertise", "authority", "kg",
            "expertise+authority", "authority+kg", "expertise+kg", "full",
        ]
        assert len(set(enumerate_ablation_configs())) == 8

    def test_name_round_trip_flags(self):
        config = AblationConfig(True, False, True)
        assert config.name == "expertise+kg"
        assert not AblationConfig(False, False, False).expertise

    def test_run_ablation_rows(self):
        corpus = tiny_corpus(num_questions=4)
        table = train_skipgram(corpus.all_texts(), dim=8, epochs=1, seed=0)
        hyper = Hyper(
            hidden_size=3, embed_dim=8, max_question_len=6, max_answer_len=8,
            profile_rank=2, epochs=1, batch_size=8,
        )
        from cqarank.community import compute_profiles

        profiles = compute_profiles(corpus, VoteMode.COUNT, k=2)
        rows = run_ablation(
            corpus, table, profiles, hyper,
            train_ids=["q0", "q1"], test_ids=["q2", "q3"],
            seed=0, pool_size=3,
        )
        assert [r["config"] for r in rows] == [
            c.name for c in enumerate_ablation_configs()
        ]
        for row in rows:
            assert row["questions"] == 2
            assert 0.0 <= row["p_at_1"] <= 1.0
            assert row["epochs_run"] == 1
            assert np.isfinite(row["final_train_loss"])
