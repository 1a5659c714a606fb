"""Ranking metrics, pool normalization, k-fold splits, and ablations.

Every question is evaluated over a pool of exactly `pool_size` candidates
(default 20). Questions with more answers keep the top ones by ground-truth
measure (stable order, so the best answer always survives); questions with
fewer are padded with seeded random answers borrowed from other questions,
marked neither best nor relevant.

Metrics: P@K over the designated best answer, and for label-style ground
truth MAP (Good answers are the relevant set), plus Accuracy and F1 of
Good-vs-rest classification at a score threshold fitted by F1 maximization.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass

import numpy as np

from . import attention, encoder
from .community import mask_profiles, zero_profiles
from .corpus import GOOD, Answer, Corpus, Question, VoteMode, vote_measure
from .embedding import embed, tokenize
from .model import ModelParams

POOL_SPAWN_KEY = (2,)


@dataclass
class Candidate:
    answer: Answer
    genuine: bool
    best: bool
    relevant: bool


@dataclass
class RankedPool:
    """Fixed-size candidate pool for one question, scores filled in later."""

    question: Question
    candidates: list
    scores: np.ndarray = None

    def __post_init__(self):
        best_count = sum(1 for c in self.candidates if c.best)
        if best_count > 1:
            raise ValueError(
                f"pool for {self.question.id} designates {best_count} best answers"
            )

    @property
    def size(self) -> int:
        return len(self.candidates)

    def ranking(self) -> np.ndarray:
        """Candidate indices by descending score; ties keep candidate order."""
        if self.scores is None:
            raise ValueError("pool has not been scored")
        return np.argsort(-self.scores, kind="stable")


def normalize_pool(
    question: Question,
    answers,
    filler_pool,
    mode: VoteMode,
    pool_size: int,
    rng,
) -> RankedPool:
    """Force exactly pool_size candidates for one question.

    Excess answers are cut to the top pool_size by vote measure (stable, so
    the designated best is always retained). Shortfalls are filled with
    seeded draws from filler_pool (answers to other questions), marked not
    best and not relevant.
    """
    answers = [a for a in answers if tokenize(a.text)]
    if not answers:
        raise ValueError(f"question {question.id} has no usable answers")
    if pool_size < 1:
        raise ValueError("pool size must be positive")
    measures = [vote_measure(a, mode) for a in answers]
    best_index = measures.index(max(measures))
    if len(answers) > pool_size:
        keep = list(np.argsort([-m for m in measures], kind="stable")[:pool_size])
        keep.sort()
    else:
        keep = list(range(len(answers)))
    candidates = [
        Candidate(
            answer=answers[i],
            genuine=True,
            best=(i == best_index),
            relevant=(answers[i].quality_label == GOOD),
        )
        for i in keep
    ]
    need = pool_size - len(candidates)
    if need > 0:
        usable = [a for a in filler_pool if tokenize(a.text)]
        if not usable:
            raise ValueError(
                f"question {question.id} needs {need} fillers but none are available"
            )
        picks = rng.choice(len(usable), size=need, replace=len(usable) < need)
        for i in picks:
            candidates.append(
                Candidate(answer=usable[int(i)], genuine=False, best=False, relevant=False)
            )
    return RankedPool(question=question, candidates=candidates)


def build_pools(
    corpus: Corpus,
    question_ids=None,
    mode: VoteMode = None,
    pool_size: int = 20,
    seed: int = 0,
):
    """Normalized pools for the selected questions (all by default).

    Fillers for a question are drawn from every other question's answers in
    the whole corpus. Questions whose text or answers embed to zero tokens
    are skipped and counted; returns (pools, skipped).
    """
    if mode is None:
        mode = corpus.vote_mode()
    wanted = None if question_ids is None else set(question_ids)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=POOL_SPAWN_KEY)
    )
    pools = []
    skipped = 0
    for question in corpus.questions:
        if wanted is not None and question.id not in wanted:
            continue
        if not tokenize(question.text):
            skipped += 1
            continue
        answers = corpus.candidates(question.id)
        filler = [a for a in corpus.answers if a.question_id != question.id]
        try:
            pools.append(
                normalize_pool(question, answers, filler, mode, pool_size, rng)
            )
        except ValueError:
            skipped += 1
    return pools, skipped


def _score_one_pool(pool: RankedPool, params: ModelParams, profiles: dict) -> np.ndarray:
    hyper = params.hyper
    q_seq = embed(tokenize(pool.question.text), params.table, hyper.max_question_len)
    a_seqs = [
        embed(tokenize(c.answer.text), params.table, hyper.max_answer_len)
        for c in pool.candidates
    ]
    a_lens = np.array([s.length for s in a_seqs])
    a_max = int(a_lens.max())
    q_hidden, _ = encoder.encode_batch(
        q_seq.matrix[None, : q_seq.length],
        np.array([q_seq.length]),
        params.fwd,
        params.bwd,
    )
    a_hidden, _ = encoder.encode_batch(
        np.stack([s.matrix[:a_max] for s in a_seqs]), a_lens, params.fwd, params.bwd
    )
    q_enc = encoder.EncodedSequence(
        hidden=q_hidden[0], length=q_seq.length, mask=q_seq.mask[: q_seq.length]
    )
    scores = np.empty(pool.size)
    for j, cand in enumerate(pool.candidates):
        a_enc = encoder.EncodedSequence(
            hidden=a_hidden[j], length=a_seqs[j].length, mask=a_seqs[j].mask[:a_max]
        )
        prof = profiles.get(cand.answer.id)
        if prof is None:
            prof = zero_profiles(hyper.profile_rank)
        scores[j] = attention.attention_forward(
            q_enc, a_enc, prof, params.inter
        ).score
    return scores


def score_pools(pools, params: ModelParams, profiles: dict, workers: int = 1) -> None:
    """Fill pool.scores in place; pools are independent, so worker count
    changes only wall time, never results."""
    if workers <= 1:
        for pool in pools:
            pool.scores = _score_one_pool(pool, params, profiles)
        return
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool_exec:
        futures = {
            pool_exec.submit(_score_one_pool, pool, params, profiles): pool
            for pool in pools
        }
        for fut, pool in futures.items():
            pool.scores = fut.result()


def precision_at_k(pools, k: int) -> float:
    """Fraction of pools whose designated best answer ranks in the top k."""
    if k < 1:
        raise ValueError("k must be positive")
    if not pools:
        raise ValueError("no pools to evaluate")
    hits = 0
    for pool in pools:
        best = [i for i, c in enumerate(pool.candidates) if c.best]
        if not best:
            raise ValueError(f"pool for {pool.question.id} has no best answer")
        if best[0] in pool.ranking()[:k]:
            hits += 1
    return hits / len(pools)


def _average_precision(pool: RankedPool):
    order = pool.ranking()
    relevant = np.array([pool.candidates[i].relevant for i in order])
    if not relevant.any():
        return None
    cum = np.cumsum(relevant)
    ranks = np.arange(1, len(order) + 1)
    return float((cum[relevant] / ranks[relevant]).mean())


def choose_score_threshold(pools) -> float:
    """Threshold maximizing F1 of score>t as a Good predictor.

    Candidates are all distinct observed scores plus one value below the
    minimum (predict-everything); ties prefer the smallest threshold.
    """
    scores, truth = _flatten_labels(pools)
    if scores.size == 0:
        raise ValueError("no labeled candidates to fit a threshold on")
    cuts = np.unique(scores)
    candidates = np.concatenate([[cuts[0] - 1.0], cuts])
    best_t = candidates[0]
    best_f1 = -1.0
    for t in candidates:
        f1 = _f1_at(scores, truth, t)
        if f1 > best_f1:
            best_f1 = f1
            best_t = t
    return float(best_t)


def _flatten_labels(pools):
    scores = []
    truth = []
    for pool in pools:
        if pool.scores is None:
            raise ValueError("pools must be scored before computing label metrics")
        for i, cand in enumerate(pool.candidates):
            scores.append(pool.scores[i])
            truth.append(cand.relevant)
    return np.asarray(scores, dtype=np.float64), np.asarray(truth, dtype=bool)


def _f1_at(scores, truth, threshold) -> float:
    pred = scores > threshold
    tp = int(np.sum(pred & truth))
    fp = int(np.sum(pred & ~truth))
    fn = int(np.sum(~pred & truth))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def map_accuracy_f1(pools, threshold: float = None):
    """(MAP, Accuracy, F1, questions excluded from MAP).

    MAP treats Good answers as relevant; pools with no relevant candidate
    are excluded and counted. Accuracy and F1 classify every candidate as
    Good iff its score exceeds the threshold (fitted here if not supplied;
    fit it on held-in pools for honest held-out numbers).
    """
    if not pools:
        raise ValueError("no pools to evaluate")
    if threshold is None:
        threshold = choose_score_threshold(pools)
    aps = []
    excluded = 0
    for pool in pools:
        ap = _average_precision(pool)
        if ap is None:
            excluded += 1
        else:
            aps.append(ap)
    if not aps:
        raise ValueError("every pool lacks a relevant answer; MAP undefined")
    scores, truth = _flatten_labels(pools)
    pred = scores > threshold
    accuracy = float(np.mean(pred == truth))
    f1 = _f1_at(scores, truth, threshold)
    return float(np.mean(aps)), accuracy, f1, excluded


def evaluate_pools(pools, labeled: bool = None, threshold: float = None) -> dict:
    """P@1/P@2 always; MAP/Accuracy/F1 when the ground truth carries labels."""
    report = {
        "questions": len(pools),
        "p_at_1": precision_at_k(pools, 1),
        "p_at_2": precision_at_k(pools, 2),
    }
    if labeled is None:
        labeled = any(
            c.answer.quality_label is not None for p in pools for c in p.candidates
        )
    if labeled:
        if threshold is None:
            threshold = choose_score_threshold(pools)
        m, acc, f1, excluded = map_accuracy_f1(pools, threshold)
        report.update(
            {
                "map": m,
                "accuracy": acc,
                "f1": f1,
                "threshold": threshold,
                "map_excluded": excluded,
            }
        )
    return report


def kfold_split(question_ids, folds: int = 5, seed: int = 0):
    """Seeded partition of question ids into folds of near-equal size.

    Returns a list of id lists: pairwise disjoint, exhaustive, sizes
    differing by at most one.
    """
    ids = list(question_ids)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if len(ids) < folds:
        raise ValueError(f"cannot split {len(ids)} questions into {folds} folds")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    out = [[] for _ in range(folds)]
    for pos, idx in enumerate(order):
        out[pos % folds].append(ids[int(idx)])
    return out


@dataclass(frozen=True)
class AblationConfig:
    expertise: bool
    authority: bool
    knowledge_graph: bool

    @property
    def name(self) -> str:
        if not any((self.expertise, self.authority, self.knowledge_graph)):
            return "none"
        if all((self.expertise, self.authority, self.knowledge_graph)):
            return "full"
        parts = []
        if self.expertise:
            parts.append("expertise")
        if self.authority:
            parts.append("authority")
        if self.knowledge_graph:
            parts.append("kg")
        return "+".join(parts)


def enumerate_ablation_configs():
    """The 8 on/off combinations, singles then pairs then full."""
    return [
        AblationConfig(False, False, False),
        AblationConfig(True, False, False),
        AblationConfig(False, True, False),
        AblationConfig(False, False, True),
        AblationConfig(True, True, False),
        AblationConfig(False, True, True),
        AblationConfig(True, False, True),
        AblationConfig(True, True, True),
    ]


def run_ablation(
    corpus: Corpus,
    table,
    full_profiles: dict,
    hyper,
    train_ids,
    test_ids,
    mode: VoteMode = None,
    seed: int = 0,
    pool_size: int = 20,
    workers: int = 1,
):
    """Train and evaluate one model per ablation row.

    All rows share the seed, so initialization and triplet sampling are
    identical; only which community profile blocks are zeroed differs.
    Returns a list of row dicts in enumerate_ablation_configs order.
    """
    from .training import train

    if mode is None:
        mode = corpus.vote_mode()
    rows = []
    for config in enumerate_ablation_configs():
        masked = {
            aid: mask_profiles(
                prof,
                expertise=config.expertise,
                authority=config.authority,
                knowledge_graph=config.knowledge_graph,
            )
            for aid, prof in full_profiles.items()
        }
        result = train(
            corpus, table, masked, hyper, mode=mode, seed=seed,
            question_ids=train_ids,
        )
        pools, _ = build_pools(
            corpus, question_ids=test_ids, mode=mode, pool_size=pool_size, seed=seed
        )
        score_pools(pools, result.params, masked, workers=workers)
        report = evaluate_pools(pools)
        rows.append(
            {
                "config": config.name,
                "expertise": config.expertise,
                "authority": config.authority,
                "knowledge_graph": config.knowledge_graph,
                "seed": seed,
                "epochs_run": result.epochs_run,
                "final_train_loss": result.epoch_losses[-1],
                **report,
            }
        )
    return rows
