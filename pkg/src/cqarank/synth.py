"""Synthetic community generator with a planted, recoverable ranking signal.

The vocabulary, raw tags, and symptom concepts are partitioned across
latent topics. A question and its best answer draw tokens from the same
topic slice (Zipf-shaped unigrams); every distractor is assigned an
off-topic and draws each token from that off-topic with probability
signal_strength, otherwise from the question's topic. At signal_strength 0
all candidates are textually indistinguishable from the best answer; at 1
the distractors are purely off-topic.

Community structure mirrors the text: each answerer specializes in one
topic, the best answer is authored by a question-topic specialist with
probability signal_strength * (1 - expertise_noise), answer and follower
tags concentrate on the author's specialty, and the knowledge graph links
every raw tag to a same-topic concept. Votes give the best answer a lead
of at least two; in label style exactly one answer is Good.

Output is the corpus/taxonomy/knowledge-graph file set plus truth.jsonl,
a sidecar naming each question's topic, best answer, and the per-answer
assigned topics. Generation is a pure function of the config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    BAD,
    GOOD,
    POTENTIALLY_USEFUL,
    Answer,
    AnswererRecord,
    Corpus,
    FollowerProfile,
    KnowledgeGraph,
    Question,
    TagTaxonomy,
    save_corpus,
)

TRUTH_FILE = "truth.jsonl"


@dataclass
class SynthConfig:
    seed: int = 0
    num_questions: int = 100
    candidates_per_question: int = 20
    num_answerers: int = 30
    num_tags: int = 12
    vocab_size: int = 600
    topic_count: int = 6
    signal_strength: float = 0.9
    follower_count_range: tuple = (2, 6)
    expertise_noise: float = 0.1
    label_style: bool = False
    question_len_range: tuple = (6, 12)
    answer_len_range: tuple = (10, 20)
    best_vote_range: tuple = (5, 9)

    def validate(self) -> None:
        if self.num_questions < 1:
            raise ValueError("num_questions must be at least 1")
        if self.candidates_per_question < 2:
            raise ValueError("candidates_per_question must be at least 2")
        if self.topic_count < 2:
            raise ValueError("topic_count must be at least 2")
        if self.num_answerers < self.topic_count:
            raise ValueError("need at least one answerer per topic")
        if self.num_tags < self.topic_count:
            raise ValueError("need at least one raw tag per topic")
        if self.vocab_size < 2 * self.topic_count:
            raise ValueError("need at least two vocabulary words per topic")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal_strength must lie in [0, 1]")
        if not 0.0 <= self.expertise_noise <= 1.0:
            raise ValueError("expertise_noise must lie in [0, 1]")
        for name in ("follower_count_range", "question_len_range", "answer_len_range",
                     "best_vote_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ValueError(f"{name} must be a (low, high) pair with 0 <= low <= high")
        if self.follower_count_range[0] < 0:
            raise ValueError("follower counts cannot be negative")
        if self.question_len_range[0] < 1 or self.answer_len_range[0] < 1:
            raise ValueError("texts need at least one token")
        if self.best_vote_range[0] < 2:
            raise ValueError("best vote must be at least 2 to leave a gap below")


def _inc(pair):
    return pair[0], pair[1] + 1


class _World:
    """Topic-partitioned vocabulary, tags, and concepts."""

    def __init__(self, config: SynthConfig):
        t = config.topic_count
        self.words_per_topic = config.vocab_size // t
        self.tags_per_topic = config.num_tags // t
        self.concepts_per_topic = min(3, self.tags_per_topic)
        self.words = [
            [f"w{topic}_{i}" for i in range(self.words_per_topic)] for topic in range(t)
        ]
        self.tags = [
            [f"tag{topic}_{j}" for j in range(self.tags_per_topic)] for topic in range(t)
        ]
        self.concepts = [
            [f"sym{topic}_{i}" for i in range(self.concepts_per_topic)]
            for topic in range(t)
        ]
        ranks = np.arange(self.words_per_topic) + 1.0
        self.zipf = (1.0 / ranks) / (1.0 / ranks).sum()


def _draw_tags(world: _World, rng, topic: int, noise: float, topic_count: int):
    count = int(rng.integers(1, min(2, world.tags_per_topic) + 1))
    out = []
    for _ in range(count):
        src = topic
        if rng.random() < noise:
            src = int(rng.integers(topic_count))
        out.append(world.tags[src][int(rng.integers(world.tags_per_topic))])
    return out


def _draw_text(world: _World, rng, primary: int, other: int, mix: float, length: int):
    """length tokens; each comes from `other` with probability mix, else `primary`."""
    idx = rng.choice(world.words_per_topic, size=length, p=world.zipf)
    use_other = rng.random(length) < mix
    return [
        world.words[other if flip else primary][int(i)]
        for i, flip in zip(idx, use_other)
    ]


def _pick_answerer(rng, specialists, topic: int, p_specialist: float, total: int) -> int:
    if rng.random() < p_specialist:
        pool = specialists[topic]
        return pool[int(rng.integers(len(pool)))]
    return int(rng.integers(total))


def generate(config: SynthConfig, out_dir) -> dict:
    """Write corpus.jsonl, taxonomy.tsv, kg.tsv, and truth.jsonl; return counts."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    world = _World(config)
    t_count = config.topic_count
    noise = config.expertise_noise
    p_specialist = config.signal_strength * (1.0 - noise)

    taxonomy = TagTaxonomy.from_pairs(
        [
            (tag, f"group{topic}")
            for topic in range(t_count)
            for tag in world.tags[topic]
        ]
    )
    kg_edges = []
    for topic in range(t_count):
        for j, tag in enumerate(world.tags[topic]):
            concept = world.concepts[topic][j % world.concepts_per_topic]
            kg_edges.append((concept, tag, round(float(rng.uniform(0.5, 1.5)), 6)))
    kg = KnowledgeGraph(edges=kg_edges)

    answerers = []
    specialists = {topic: [] for topic in range(t_count)}
    follower_total = 0
    for m in range(config.num_answerers):
        specialty = m % t_count
        specialists[specialty].append(m)
        lo, hi = config.follower_count_range
        followers = []
        for i in range(int(rng.integers(lo, hi + 1))):
            followers.append(
                FollowerProfile(
                    follower_id=f"f{m}_{i}",
                    tags=_draw_tags(world, rng, specialty, noise, t_count),
                )
            )
        follower_total += len(followers)
        answerers.append(AnswererRecord(id=f"u{m}", followers=followers))

    questions = []
    answers = []
    truth_lines = []
    for n in range(config.num_questions):
        topic = n % t_count
        q_len = int(rng.integers(*_inc(config.question_len_range)))
        question = Question(
            id=f"q{n}",
            text=" ".join(_draw_text(world, rng, topic, topic, 0.0, q_len)),
            tags=_draw_tags(world, rng, topic, 0.0, t_count),
        )
        questions.append(question)

        best_pos = int(rng.integers(config.candidates_per_question))
        best_vote = int(rng.integers(*_inc(config.best_vote_range)))
        answer_topics = {}
        for j in range(config.candidates_per_question):
            aid = f"a{n}_{j}"
            if j == best_pos:
                a_topic = topic
                a_len = int(rng.integers(*_inc(config.answer_len_range)))
                tokens = _draw_text(world, rng, topic, topic, 0.0, a_len)
                n_concepts = int(rng.integers(1, 3))
                for _ in range(n_concepts):
                    tokens.append(
                        world.concepts[topic][int(rng.integers(world.concepts_per_topic))]
                    )
                vote = best_vote
                label = GOOD
                who = _pick_answerer(
                    rng, specialists, topic, p_specialist, config.num_answerers
                )
            else:
                off = int(rng.integers(t_count - 1))
                a_topic = off if off < topic else off + 1
                a_len = int(rng.integers(*_inc(config.answer_len_range)))
                tokens = _draw_text(
                    world, rng, topic, a_topic, config.signal_strength, a_len
                )
                for _ in range(int(rng.integers(0, 3))):
                    src = a_topic if rng.random() < config.signal_strength else topic
                    tokens.append(
                        world.concepts[src][int(rng.integers(world.concepts_per_topic))]
                    )
                vote = int(rng.integers(0, best_vote - 1))
                label = POTENTIALLY_USEFUL if rng.random() < 0.3 else BAD
                who = _pick_answerer(
                    rng, specialists, a_topic, p_specialist, config.num_answerers
                )
            answer_topics[aid] = a_topic
            answers.append(
                Answer(
                    id=aid,
                    question_id=question.id,
                    answerer_id=f"u{who}",
                    text=" ".join(tokens),
                    tags=_draw_tags(world, rng, a_topic, noise, t_count),
                    vote=None if config.label_style else vote,
                    quality_label=label if config.label_style else None,
                )
            )
        truth_lines.append(
            json.dumps(
                {
                    "kind": "truth",
                    "question_id": question.id,
                    "topic": topic,
                    "best_answer_id": f"a{n}_{best_pos}",
                    "answer_topics": answer_topics,
                },
                sort_keys=True,
            )
        )

    by_author = {rec.id: [] for rec in answerers}
    for ans in answers:
        by_author[ans.answerer_id].append(ans)
    for rec in answerers:
        rec.previous_answers = by_author[rec.id]

    corpus = Corpus(
        questions=questions,
        answers=answers,
        answerers=answerers,
        taxonomy=taxonomy,
        kg=kg,
    )
    out_dir = Path(out_dir)
    save_corpus(corpus, out_dir)
    (out_dir / TRUTH_FILE).write_text("\n".join(truth_lines) + "\n", encoding="utf-8")
    return {
        "questions": len(questions),
        "answers": len(answers),
        "answerers": len(answerers),
        "followers": follower_total,
        "raw_tags": t_count * world.tags_per_topic,
        "groups": t_count,
        "concepts": t_count * world.concepts_per_topic,
        "vocab_words": t_count * world.words_per_topic,
        "label_style": config.label_style,
    }


def load_truth(directory) -> dict:
    """truth.jsonl as a dict keyed by question id."""
    out = {}
    path = Path(directory) / TRUTH_FILE
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["question_id"]] = rec
    return out
