"""Data model and file ingestion for community Q&A corpora.

A corpus lives in a directory of up to three files:

  corpus.jsonl   one JSON object per line with a "kind" field, one of
                 question | answer | answerer | follower
  taxonomy.tsv   raw_tag <TAB> higher_level_tag; the first-occurrence order of
                 higher-level tags fixes the column order of every tag matrix
  kg.tsv         symptom_concept <TAB> raw_disease_tag <TAB> weight (optional)

Tag matching is case-insensitive after whitespace trimming. Raw tags the
taxonomy does not know fall into a reserved "other" group appended after the
explicit groups. Answer records reference their question and answerer by id;
follower records carry the id of the answerer they follow. An answerer's
history (previous_answers) is the list of corpus answers they authored, in
file order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

GOOD = "Good"
POTENTIALLY_USEFUL = "PotentiallyUseful"
BAD = "Bad"

# Numeric value of each categorical quality label.
QUALITY_VALUES = {GOOD: 2.0, POTENTIALLY_USEFUL: 1.0, BAD: 0.0}

OTHER_GROUP = "other"


class VoteMode(Enum):
    """How an answer's worth is measured: raw up-vote counts or label values."""

    COUNT = "count"
    CATEGORICAL = "categorical"


class CorpusError(Exception):
    """Base class for corpus ingestion problems."""


class ParseError(CorpusError):
    """Malformed record; the message carries file and line number."""


class DanglingReferenceError(CorpusError):
    """A record references an id that does not exist in the corpus."""


@dataclass
class Question:
    id: str
    text: str
    tags: list[str]


@dataclass
class Answer:
    id: str
    question_id: str
    answerer_id: str
    text: str
    tags: list[str]
    vote: int | None = None
    quality_label: str | None = None


@dataclass
class FollowerProfile:
    follower_id: str
    tags: list[str]


@dataclass
class AnswererRecord:
    id: str
    previous_answers: list[Answer] = field(default_factory=list)
    followers: list[FollowerProfile] = field(default_factory=list)


def _norm_tag(tag: str) -> str:
    return tag.strip().lower()


@dataclass
class TagTaxonomy:
    """Raw tag to higher-level group mapping with a fixed column order."""

    groups: list[str]
    mapping: dict[str, int]
    other_index: int

    @classmethod
    def from_pairs(cls, pairs: list[tuple[str, str]]) -> "TagTaxonomy":
        groups: list[str] = []
        seen: dict[str, int] = {}
        mapping: dict[str, int] = {}
        for raw, group in pairs:
            key = _norm_tag(group)
            if key not in seen:
                seen[key] = len(groups)
                groups.append(group.strip())
            idx = seen[key]
            raw_key = _norm_tag(raw)
            if raw_key in mapping and mapping[raw_key] != idx:
                raise ParseError(f"raw tag {raw!r} mapped to two different groups")
            mapping[raw_key] = idx
        if OTHER_GROUP in seen:
            other_index = seen[OTHER_GROUP]
        else:
            other_index = len(groups)
            groups.append(OTHER_GROUP)
        return cls(groups=groups, mapping=mapping, other_index=other_index)

    @property
    def size(self) -> int:
        """Number of higher-level groups, the T of every tag matrix."""
        return len(self.groups)

    def group_index(self, raw_tag: str) -> int:
        return self.mapping.get(_norm_tag(raw_tag), self.other_index)


@dataclass
class KnowledgeGraph:
    """Weighted symptom-concept to raw-disease-tag edges."""

    edges: list[tuple[str, str, float]]
    concepts: list[str] = field(init=False, compare=False, repr=False)
    _by_concept: dict[str, list[tuple[str, float]]] = field(
        init=False, compare=False, repr=False
    )

    def __post_init__(self):
        self.concepts = []
        self._by_concept = {}
        for concept, raw_tag, weight in self.edges:
            key = concept.strip().lower()
            if key not in self._by_concept:
                self._by_concept[key] = []
                self.concepts.append(key)
            self._by_concept[key].append((raw_tag, float(weight)))

    def edges_from(self, concept: str) -> list[tuple[str, float]]:
        return self._by_concept.get(concept.strip().lower(), [])


@dataclass
class Corpus:
    questions: list[Question]
    answers: list[Answer]
    answerers: list[AnswererRecord]
    taxonomy: TagTaxonomy
    kg: KnowledgeGraph | None = None
    _by_question: dict[str, list[Answer]] = field(
        init=False, compare=False, repr=False
    )
    _answerer_by_id: dict[str, AnswererRecord] = field(
        init=False, compare=False, repr=False
    )

    def __post_init__(self):
        self._by_question = {q.id: [] for q in self.questions}
        for ans in self.answers:
            self._by_question[ans.question_id].append(ans)
        self._answerer_by_id = {a.id: a for a in self.answerers}

    def candidates(self, question_id: str) -> list[Answer]:
        return self._by_question.get(question_id, [])

    def answerer(self, answerer_id: str) -> AnswererRecord:
        return self._answerer_by_id[answerer_id]

    @property
    def label_based(self) -> bool:
        return bool(self.answers) and self.answers[0].quality_label is not None

    def vote_mode(self) -> VoteMode:
        return VoteMode.CATEGORICAL if self.label_based else VoteMode.COUNT

    def all_texts(self) -> list[str]:
        return [q.text for q in self.questions] + [a.text for a in self.answers]


def vote_measure(answer: Answer, mode: VoteMode) -> float:
    """Numeric worth of an answer under the given mode.

    COUNT returns the raw up-vote count, unnormalized. CATEGORICAL maps
    Good -> 2, PotentiallyUseful -> 1, Bad -> 0.
    """
    if mode is VoteMode.COUNT:
        if answer.vote is None:
            raise ValueError(f"answer {answer.id!r} has no vote count")
        return float(answer.vote)
    if answer.quality_label is None:
        raise ValueError(f"answer {answer.id!r} has no quality label")
    return QUALITY_VALUES[answer.quality_label]


def group_tags(raw_tags: list[str], taxonomy: TagTaxonomy) -> np.ndarray:
    """Count raw tags per higher-level group; unknown tags land in "other".

    Returns a (T,) float64 vector whose entries sum to len(raw_tags).
    """
    out = np.zeros(taxonomy.size)
    for tag in raw_tags:
        out[taxonomy.group_index(tag)] += 1.0
    return out


# ---------------------------------------------------------------------------
# file ingestion


def _split_tsv_line(line: str, n_cols: int, path, line_no: int) -> list[str]:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != n_cols or any(not p.strip() for p in parts):
        raise ParseError(
            f"{path}:{line_no}: expected {n_cols} non-empty tab-separated fields"
        )
    return parts


def load_taxonomy(path) -> TagTaxonomy:
    path = Path(path)
    pairs: list[tuple[str, str]] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            raw, group = _split_tsv_line(line, 2, path, line_no)
            pairs.append((raw, group))
    return TagTaxonomy.from_pairs(pairs)


def load_knowledge_graph(path) -> KnowledgeGraph:
    path = Path(path)
    edges: list[tuple[str, str, float]] = []
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            concept, raw_tag, weight_s = _split_tsv_line(line, 3, path, line_no)
            try:
                weight = float(weight_s)
            except ValueError:
                raise ParseError(f"{path}:{line_no}: weight {weight_s!r} is not a number")
            if not np.isfinite(weight) or weight < 0.0:
                raise ParseError(f"{path}:{line_no}: edge weight must be finite and >= 0")
            edges.append((concept.strip(), raw_tag.strip(), weight))
    return KnowledgeGraph(edges=edges)


def _need(obj: dict, key: str, kind, path, line_no: int):
    if key not in obj:
        raise ParseError(f"{path}:{line_no}: {obj.get('kind', '?')} record missing {key!r}")
    value = obj[key]
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"{path}:{line_no}: field {key!r} has the wrong type")
    return value


def _str_list(obj: dict, key: str, path, line_no: int) -> list[str]:
    value = _need(obj, key, list, path, line_no)
    if not all(isinstance(t, str) for t in value):
        raise ParseError(f"{path}:{line_no}: field {key!r} must be a list of strings")
    return [t.strip() for t in value]


def _dedup_tags(tags: list[str]) -> list[str]:
    seen = set()
    out = []
    for tag in tags:
        key = _norm_tag(tag)
        if key and key not in seen:
            seen.add(key)
            out.append(tag)
    return out


def load_corpus_file(path) -> tuple[list[Question], list[Answer], list[AnswererRecord]]:
    """Parse corpus.jsonl and cross-link answers and followers to answerers.

    Raises ParseError (with file:line) for malformed records and
    DanglingReferenceError when an answer or follower points at an unknown id.
    """
    path = Path(path)
    questions: list[Question] = []
    answers: list[Answer] = []
    answerers: list[AnswererRecord] = []
    pending_answers: list[tuple[Answer, int]] = []
    pending_followers: list[tuple[str, FollowerProfile, int]] = []
    question_ids: set[str] = set()
    answer_ids: set[str] = set()
    answerer_ids: set[str] = set()

    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{line_no}: invalid JSON ({exc.msg})")
            if not isinstance(obj, dict):
                raise ParseError(f"{path}:{line_no}: record is not an object")
            kind = obj.get("kind")
            if kind == "question":
                qid = _need(obj, "id", str, path, line_no)
                if qid in question_ids:
                    raise ParseError(f"{path}:{line_no}: duplicate question id {qid!r}")
                text = _need(obj, "text", str, path, line_no)
                if not text.strip():
                    raise ParseError(f"{path}:{line_no}: question {qid!r} has empty text")
                question_ids.add(qid)
                questions.append(
                    Question(id=qid, text=text, tags=_str_list(obj, "tags", path, line_no))
                )
            elif kind == "answer":
                aid = _need(obj, "id", str, path, line_no)
                if aid in answer_ids:
                    raise ParseError(f"{path}:{line_no}: duplicate answer id {aid!r}")
                answer_ids.add(aid)
                vote = obj.get("vote")
                if vote is not None:
                    if not isinstance(vote, int) or isinstance(vote, bool) or vote < 0:
                        raise ParseError(
                            f"{path}:{line_no}: vote must be a non-negative integer"
                        )
                label = obj.get("quality_label")
                if label is not None and label not in QUALITY_VALUES:
                    raise ParseError(
                        f"{path}:{line_no}: unknown quality label {label!r}"
                    )
                ans = Answer(
                    id=aid,
                    question_id=_need(obj, "question_id", str, path, line_no),
                    answerer_id=_need(obj, "answerer_id", str, path, line_no),
                    text=_need(obj, "text", str, path, line_no),
                    tags=_str_list(obj, "tags", path, line_no),
                    vote=vote,
                    quality_label=label,
                )
                answers.append(ans)
                pending_answers.append((ans, line_no))
            elif kind == "answerer":
                rid = _need(obj, "id", str, path, line_no)
                if rid in answerer_ids:
                    raise ParseError(f"{path}:{line_no}: duplicate answerer id {rid!r}")
                answerer_ids.add(rid)
                answerers.append(AnswererRecord(id=rid))
            elif kind == "follower":
                profile = FollowerProfile(
                    follower_id=_need(obj, "follower_id", str, path, line_no),
                    tags=_dedup_tags(_str_list(obj, "tags", path, line_no)),
                )
                pending_followers.append(
                    (_need(obj, "answerer_id", str, path, line_no), profile, line_no)
                )
            else:
                raise ParseError(f"{path}:{line_no}: unknown record kind {kind!r}")

    by_id = {a.id: a for a in answerers}
    for ans, line_no in pending_answers:
        if ans.question_id not in question_ids:
            raise DanglingReferenceError(
                f"{path}:{line_no}: answer {ans.id!r} references unknown question "
                f"{ans.question_id!r}"
            )
        if ans.answerer_id not in by_id:
            raise DanglingReferenceError(
                f"{path}:{line_no}: answer {ans.id!r} references unknown answerer "
                f"{ans.answerer_id!r}"
            )
        by_id[ans.answerer_id].previous_answers.append(ans)
    for owner_id, profile, line_no in pending_followers:
        if owner_id not in by_id:
            raise DanglingReferenceError(
                f"{path}:{line_no}: follower {profile.follower_id!r} references "
                f"unknown answerer {owner_id!r}"
            )
        by_id[owner_id].followers.append(profile)

    with_label = sum(1 for a in answers if a.quality_label is not None)
    if with_label not in (0, len(answers)):
        raise ParseError(
            f"{path}: mixed corpus style, {with_label} of {len(answers)} answers "
            "carry a quality label"
        )
    return questions, answers, answerers


CORPUS_FILE = "corpus.jsonl"
TAXONOMY_FILE = "taxonomy.tsv"
KG_FILE = "kg.tsv"


def load_corpus(directory) -> Corpus:
    """Load corpus.jsonl + taxonomy.tsv (+ kg.tsv if present) from a directory."""
    directory = Path(directory)
    questions, answers, answerers = load_corpus_file(directory / CORPUS_FILE)
    taxonomy = load_taxonomy(directory / TAXONOMY_FILE)
    kg_path = directory / KG_FILE
    kg = load_knowledge_graph(kg_path) if kg_path.exists() else None
    return Corpus(
        questions=questions,
        answers=answers,
        answerers=answerers,
        taxonomy=taxonomy,
        kg=kg,
    )


def save_corpus(corpus: Corpus, directory) -> None:
    """Write the three corpus files; the inverse of load_corpus."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for q in corpus.questions:
        lines.append(
            json.dumps(
                {"kind": "question", "id": q.id, "text": q.text, "tags": q.tags},
                sort_keys=True,
            )
        )
    for rec in corpus.answerers:
        lines.append(json.dumps({"kind": "answerer", "id": rec.id}, sort_keys=True))
        for follower in rec.followers:
            lines.append(
                json.dumps(
                    {
                        "kind": "follower",
                        "follower_id": follower.follower_id,
                        "answerer_id": rec.id,
                        "tags": follower.tags,
                    },
                    sort_keys=True,
                )
            )
    for ans in corpus.answers:
        obj = {
            "kind": "answer",
            "id": ans.id,
            "question_id": ans.question_id,
            "answerer_id": ans.answerer_id,
            "text": ans.text,
            "tags": ans.tags,
        }
        if ans.vote is not None:
            obj["vote"] = ans.vote
        if ans.quality_label is not None:
            obj["quality_label"] = ans.quality_label
        lines.append(json.dumps(obj, sort_keys=True))
    (directory / CORPUS_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")

    tax_lines = []
    emitted: set[str] = set()
    for raw_key, idx in corpus.taxonomy.mapping.items():
        if raw_key not in emitted:
            emitted.add(raw_key)
            tax_lines.append(f"{raw_key}\t{corpus.taxonomy.groups[idx]}")
    (directory / TAXONOMY_FILE).write_text(
        "\n".join(tax_lines) + "\n", encoding="utf-8"
    )

    if corpus.kg is not None:
        kg_lines = [
            f"{concept}\t{raw}\t{weight!r}" for concept, raw, weight in corpus.kg.edges
        ]
        (directory / KG_FILE).write_text("\n".join(kg_lines) + "\n", encoding="utf-8")
