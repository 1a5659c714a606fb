"""Word embeddings: tokenizer, vocabulary, skip-gram trainer, padded lookup.

The trainer is a plain numpy skip-gram with negative sampling. Updates are
applied one sentence at a time (all center/context pairs of a sentence share
one gradient step), which keeps the whole run vectorized and bitwise
deterministic for a fixed seed. Index 0 is reserved for padding and index 1
for unknown tokens; the padding row is never touched by training and stays
exactly zero.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_INDEX = 0
UNK_INDEX = 1

_TOKEN_RE = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation boundaries."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class Vocabulary:
    """Token list with reserved padding and unknown slots at indices 0 and 1."""

    tokens: list[str]
    _index: dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the padding and unknown tokens")
        self._index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    @classmethod
    def from_texts(cls, texts) -> "Vocabulary":
        counts: Counter = Counter()
        first_seen: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] += 1
                if tok not in first_seen:
                    first_seen[tok] = len(first_seen)
        ordered = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
        return cls(tokens=[PAD_TOKEN, UNK_TOKEN] + ordered)

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def indices(self, tokens) -> list[int]:
        return [self._index.get(t, UNK_INDEX) for t in tokens]


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    vectors: np.ndarray  # (V, dim) float64, row PAD_INDEX all zero

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])


@dataclass
class EmbeddedSequence:
    """A text mapped to a fixed-length float matrix plus its true length."""

    matrix: np.ndarray  # (max_len, dim), zero rows past length
    length: int
    mask: np.ndarray  # (max_len,) float64, 1.0 at true positions


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def train_skipgram(
    texts,
    dim: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    learning_rate: float = 0.025,
    seed: int = 0,
) -> EmbeddingTable:
    """Train skip-gram with negative sampling on the given texts.

    Context windows shrink by a random amount per center word (the usual
    distance weighting) and negatives come from the unigram^0.75 noise
    distribution. The learning rate decays linearly over all processed tokens
    with a floor at 1e-4 of the initial rate. Deterministic for a fixed seed.

    Raises ValueError if the texts contain no tokens at all.
    """
    vocab = Vocabulary.from_texts(texts)
    sentences = [ids for text in texts if (ids := vocab.indices(tokenize(text)))]
    if not sentences:
        raise ValueError("cannot train embeddings on an empty corpus")
    size = len(vocab)
    rng = np.random.default_rng(seed)

    counts = np.zeros(size)
    for sent in sentences:
        np.add.at(counts, sent, 1.0)
    noise = counts**0.75
    noise[PAD_INDEX] = 0.0
    noise[UNK_INDEX] = 0.0
    noise_cdf = np.cumsum(noise / noise.sum())

    w_in = (rng.random((size, dim)) - 0.5) / dim
    w_in[PAD_INDEX] = 0.0
    w_in[UNK_INDEX] = 0.0
    w_out = np.zeros((size, dim))

    total = sum(len(s) for s in sentences) * epochs
    processed = 0
    for _ in range(epochs):
        for sent in sentences:
            n = len(sent)
            lr = max(learning_rate * (1.0 - processed / total), learning_rate * 1e-4)
            processed += n
            if n < 2:
                continue
            spans = rng.integers(1, window + 1, size=n)
            centers: list[int] = []
            contexts: list[int] = []
            for pos in range(n):
                lo = max(0, pos - int(spans[pos]))
                hi = min(n, pos + int(spans[pos]) + 1)
                for ctx in range(lo, hi):
                    if ctx != pos:
                        centers.append(sent[pos])
                        contexts.append(sent[ctx])
            if not centers:
                continue
            c_idx = np.asarray(centers)
            o_idx = np.asarray(contexts)
            neg_idx = np.searchsorted(
                noise_cdf, rng.random((c_idx.size, negatives))
            )
            valid = neg_idx != o_idx[:, None]  # drop accidental positives

            vc = w_in[c_idx]  # (P, dim)
            uo = w_out[o_idx]  # (P, dim)
            un = w_out[neg_idx]  # (P, N, dim)
            g_pos = _sigmoid(np.einsum("pd,pd->p", vc, uo)) - 1.0
            g_neg = _sigmoid(np.einsum("pd,pnd->pn", vc, un)) * valid
            d_vc = g_pos[:, None] * uo + np.einsum("pn,pnd->pd", g_neg, un)
            np.add.at(w_in, c_idx, -lr * d_vc)
            np.add.at(w_out, o_idx, -lr * g_pos[:, None] * vc)
            np.add.at(
                w_out,
                neg_idx.ravel(),
                (-lr * g_neg[..., None] * vc[:, None, :]).reshape(-1, dim),
            )
    return EmbeddingTable(vocab=vocab, vectors=w_in)


def embed(tokens, table: EmbeddingTable, max_len: int) -> EmbeddedSequence:
    """Look up tokens, truncate to max_len, zero-pad to exactly max_len rows."""
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    ids = table.vocab.indices(tokens)[:max_len]
    matrix = np.zeros((max_len, table.dim))
    if ids:
        matrix[: len(ids)] = table.vectors[ids]
    mask = np.zeros(max_len)
    mask[: len(ids)] = 1.0
    return EmbeddedSequence(matrix=matrix, length=len(ids), mask=mask)


def save_embeddings(table: EmbeddingTable, path) -> None:
    """Text format: "V dim" header, then one "token v1 .. vdim" line per token."""
    path = Path(path)
    size, dim = table.vectors.shape
    rows = [f"{size} {dim}"]
    for i, tok in enumerate(table.vocab.tokens):
        rows.append(tok + " " + " ".join(f"{x:.17g}" for x in table.vectors[i]))
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def load_embeddings(path) -> EmbeddingTable:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: malformed embedding header")
        size, dim = int(header[0]), int(header[1])
        tokens: list[str] = []
        vectors = np.zeros((size, dim))
        for i in range(size):
            parts = fh.readline().split()
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: malformed embedding line {i + 2}")
            tokens.append(parts[0])
            vectors[i] = [float(x) for x in parts[1:]]
    return EmbeddingTable(vocab=Vocabulary(tokens=tokens), vectors=vectors)
