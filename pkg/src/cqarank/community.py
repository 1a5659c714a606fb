"""Answerer-side community features reduced into one latent tag basis.

Three matrices are built over the same higher-level tag columns T:

  expertise   one row per previous answer of the answerer, the row being the
              grouped tag counts of that answer scaled by its vote measure
  authority   one row per follower, the row being the follower's grouped
              interest-tag counts
  knowledge   one row per distinct symptom concept mentioned in one candidate
              answer's text, the row holding summed edge weights into each
              disease tag's group

The expertise matrix is factorized by SVD; its right factor V (truncated at
k' = min(k, numerical rank)) becomes the shared basis, and the authority and
knowledge matrices are projected onto that same V. Each projected matrix is
reduced to a k-vector by a column-wise mean over rows, zero-padded from k' up
to k. Empty matrices (no history, no followers, no mentions) reduce to zero
vectors, as does everything for an answerer with no usable history.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    AnswererRecord,
    Corpus,
    KnowledgeGraph,
    TagTaxonomy,
    VoteMode,
    group_tags,
    vote_measure,
)
from .embedding import tokenize
from .linalg import numerical_rank, svd


@dataclass
class CommunityProfiles:
    """Reduced community features attached to one candidate answer.

    basis is the shared tag factor all three blocks were projected with
    (None when the answerer has no usable expertise history). Inactive
    components are exact zero vectors.
    """

    p_exp: np.ndarray  # (k,)
    p_auth: np.ndarray  # (k,)
    p_kg: np.ndarray  # (k,)
    expertise_active: bool = True
    authority_active: bool = True
    kg_active: bool = True
    basis: np.ndarray | None = None


def zero_profiles(k: int, **flags) -> CommunityProfiles:
    return CommunityProfiles(
        p_exp=np.zeros(k), p_auth=np.zeros(k), p_kg=np.zeros(k), **flags
    )


def build_expertise(
    answerer: AnswererRecord, taxonomy: TagTaxonomy, mode: VoteMode
) -> np.ndarray:
    """(A, T) matrix: grouped tag counts of each previous answer times its vote measure."""
    rows = [
        group_tags(ans.tags, taxonomy) * vote_measure(ans, mode)
        for ans in answerer.previous_answers
    ]
    if not rows:
        return np.zeros((0, taxonomy.size))
    return np.stack(rows)


def build_authority(answerer: AnswererRecord, taxonomy: TagTaxonomy) -> np.ndarray:
    """(F, T) matrix of grouped follower interest-tag counts."""
    rows = [group_tags(f.tags, taxonomy) for f in answerer.followers]
    if not rows:
        return np.zeros((0, taxonomy.size))
    return np.stack(rows)


def _concept_sequences(kg: KnowledgeGraph) -> list[tuple[tuple[str, ...], str]]:
    seqs = [(tuple(tokenize(c)), c) for c in kg.concepts]
    seqs = [(toks, c) for toks, c in seqs if toks]
    # Longest first so maximal munch wins at each position.
    seqs.sort(key=lambda item: -len(item[0]))
    return seqs


def find_concepts(answer_text: str, kg: KnowledgeGraph) -> list[str]:
    """Distinct lexicon concepts mentioned in the text, in first-mention order.

    Matching is longest-first over the tokenized text, case-insensitive; a
    matched span is consumed, so "chest pain" does not additionally count as
    "pain".
    """
    tokens = tokenize(answer_text)
    seqs = _concept_sequences(kg)
    found: list[str] = []
    seen: set[str] = set()
    i = 0
    while i < len(tokens):
        advanced = 1
        for toks, concept in seqs:
            if tuple(tokens[i : i + len(toks)]) == toks:
                if concept not in seen:
                    seen.add(concept)
                    found.append(concept)
                advanced = len(toks)
                break
        i += advanced
    return found


def build_kg_matrix(
    answer_text: str, kg: KnowledgeGraph, taxonomy: TagTaxonomy
) -> np.ndarray:
    """(SC, T) matrix: per mentioned concept, summed edge weights into each group."""
    concepts = find_concepts(answer_text, kg)
    rows = []
    for concept in concepts:
        row = np.zeros(taxonomy.size)
        for raw_tag, weight in kg.edges_from(concept):
            row[taxonomy.group_index(raw_tag)] += weight
        rows.append(row)
    if not rows:
        return np.zeros((0, taxonomy.size))
    return np.stack(rows)


def shared_tag_basis(expertise: np.ndarray, k: int) -> np.ndarray | None:
    """Right SVD factor of the expertise matrix at k' = min(k, numerical rank).

    Returns None when the matrix has no rows or is numerically zero (cold
    start), in which case every profile reduces to zeros.
    """
    if k < 1:
        raise ValueError("profile rank k must be at least 1")
    if expertise.shape[0] == 0:
        return None
    full = svd(expertise, min(expertise.shape))
    rank = numerical_rank(full.sigma)
    k_eff = min(k, rank)
    if k_eff == 0:
        return None
    return full.v[:, :k_eff].copy()


def _reduce(matrix: np.ndarray, basis: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros(k)
    if matrix.shape[0] == 0:
        return out
    projected = matrix @ basis  # rows expressed in the shared basis
    out[: basis.shape[1]] = projected.mean(axis=0)
    return out


def factorize_shared(
    expertise: np.ndarray,
    authority: np.ndarray,
    knowledge: np.ndarray,
    k: int,
) -> CommunityProfiles:
    """Reduce the three community matrices to k-vectors in one shared basis."""
    t = expertise.shape[1]
    if authority.shape[1] != t or knowledge.shape[1] != t:
        raise ValueError(
            f"community matrices disagree on tag columns: "
            f"{t}, {authority.shape[1]}, {knowledge.shape[1]}"
        )
    basis = shared_tag_basis(expertise, k)
    if basis is None:
        return zero_profiles(k)
    return CommunityProfiles(
        p_exp=_reduce(expertise, basis, k),
        p_auth=_reduce(authority, basis, k),
        p_kg=_reduce(knowledge, basis, k),
        basis=basis,
    )


def mask_profiles(
    profiles: CommunityProfiles,
    expertise: bool = True,
    authority: bool = True,
    knowledge_graph: bool = True,
) -> CommunityProfiles:
    """Ablation gate: inactive components become exact zero vectors."""
    return CommunityProfiles(
        p_exp=profiles.p_exp if expertise else np.zeros_like(profiles.p_exp),
        p_auth=profiles.p_auth if authority else np.zeros_like(profiles.p_auth),
        p_kg=profiles.p_kg if knowledge_graph else np.zeros_like(profiles.p_kg),
        expertise_active=expertise,
        authority_active=authority,
        kg_active=knowledge_graph,
        basis=profiles.basis,
    )


def compute_profiles(
    corpus: Corpus,
    mode: VoteMode,
    k: int,
    expertise: bool = True,
    authority: bool = True,
    knowledge_graph: bool = True,
) -> dict[str, CommunityProfiles]:
    """Profiles for every candidate answer in the corpus, keyed by answer id.

    The expertise and authority blocks depend only on the answerer and are
    computed once per answerer; the knowledge block is a function of each
    answer's own text, projected with that answerer's basis.
    """
    per_answerer: dict[str, tuple[np.ndarray | None, np.ndarray, np.ndarray]] = {}
    for rec in corpus.answerers:
        h = build_expertise(rec, corpus.taxonomy, mode)
        basis = shared_tag_basis(h, k)
        if basis is None:
            per_answerer[rec.id] = (None, np.zeros(k), np.zeros(k))
            continue
        s = build_authority(rec, corpus.taxonomy)
        per_answerer[rec.id] = (basis, _reduce(h, basis, k), _reduce(s, basis, k))

    out: dict[str, CommunityProfiles] = {}
    for ans in corpus.answers:
        basis, p_exp, p_auth = per_answerer[ans.answerer_id]
        if basis is None or corpus.kg is None:
            p_kg = np.zeros(k)
        else:
            p_kg = _reduce(build_kg_matrix(ans.text, corpus.kg, corpus.taxonomy), basis, k)
        full = CommunityProfiles(
            p_exp=p_exp.copy(), p_auth=p_auth.copy(), p_kg=p_kg, basis=basis
        )
        out[ans.id] = mask_profiles(
            full,
            expertise=expertise,
            authority=authority,
            knowledge_graph=knowledge_graph,
        )
    return out


def save_profiles(path, profiles: dict[str, CommunityProfiles]) -> None:
    """Sidecar cache: one line per id, then the 3k floats exp | auth | kg."""
    path = Path(path)
    lines = []
    for key, prof in profiles.items():
        values = np.concatenate([prof.p_exp, prof.p_auth, prof.p_kg])
        lines.append(key + " " + " ".join(f"{x:.17g}" for x in values))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_profiles(path) -> dict[str, CommunityProfiles]:
    """Read a sidecar cache back; flags come back all-active, basis is dropped."""
    path = Path(path)
    out: dict[str, CommunityProfiles] = {}
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if (len(parts) - 1) % 3 != 0 or len(parts) < 4:
                raise ValueError(f"{path}:{line_no}: malformed profile line")
            k = (len(parts) - 1) // 3
            values = np.array([float(x) for x in parts[1:]])
            out[parts[0]] = CommunityProfiles(
                p_exp=values[:k], p_auth=values[k : 2 * k], p_kg=values[2 * k :]
            )
    return out
