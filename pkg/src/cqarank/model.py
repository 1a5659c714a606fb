"""Parameter bundle, end-to-end pair scoring, and SGD plumbing.

A model is the embedding table plus two LSTM directions shared by questions
and answers, plus the interaction/attention parameters. Embeddings are fixed
after pre-training; gradients flow through the recurrent and interaction
parts only.

The flatten/assign helpers expose every trainable scalar as one 1-d vector
in a fixed order, which is what the finite-difference checker consumes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention, encoder
from .attention import AttentionTrace, InteractionGrads, InteractionParams
from .community import CommunityProfiles
from .embedding import EmbeddedSequence, EmbeddingTable
from .encoder import EncoderCache, LstmGrads, LstmParams


@dataclass
class Hyper:
    """Training-time knobs; defaults match the reference configuration."""

    hidden_size: int = 128
    embed_dim: int = 100
    margin: float = 0.05
    learning_rate: float = 0.01
    batch_size: int = 256
    max_question_len: int = 40
    max_answer_len: int = 80
    profile_rank: int = 8
    epochs: int = 20
    clip_norm: float = 5.0
    negatives_per_question: int = 4
    early_stop_delta: float = 1e-4
    early_stop_patience: int = 3

    def to_dict(self) -> dict:
        return {
            "hidden_size": self.hidden_size,
            "embed_dim": self.embed_dim,
            "margin": self.margin,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_question_len": self.max_question_len,
            "max_answer_len": self.max_answer_len,
            "profile_rank": self.profile_rank,
            "epochs": self.epochs,
            "clip_norm": self.clip_norm,
            "negatives_per_question": self.negatives_per_question,
            "early_stop_delta": self.early_stop_delta,
            "early_stop_patience": self.early_stop_patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ModelParams:
    table: EmbeddingTable
    fwd: LstmParams
    bwd: LstmParams
    inter: InteractionParams
    hyper: Hyper


def init_model(table: EmbeddingTable, hyper: Hyper, seed: int = 0) -> ModelParams:
    """Deterministic initialization from one integer seed."""
    if table.dim != hyper.embed_dim:
        raise ValueError(
            f"embedding table dim {table.dim} does not match configured {hyper.embed_dim}"
        )
    rng = np.random.default_rng(seed)
    fwd = encoder.init_lstm_params(hyper.hidden_size, table.dim, rng)
    bwd = encoder.init_lstm_params(hyper.hidden_size, table.dim, rng)
    inter = attention.init_interaction_params(hyper.hidden_size, hyper.profile_rank, rng)
    return ModelParams(table=table, fwd=fwd, bwd=bwd, inter=inter, hyper=hyper)


@dataclass
class Grads:
    """Accumulator mirroring the trainable parameters."""

    fwd: LstmGrads
    bwd: LstmGrads
    inter: InteractionGrads

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Grads":
        return cls(
            fwd=encoder.zero_lstm_grads(params.fwd),
            bwd=encoder.zero_lstm_grads(params.bwd),
            inter=attention.zero_interaction_grads(params.inter),
        )

    def add_(self, other: "Grads") -> None:
        self.fwd.w += other.fwd.w
        self.fwd.u += other.fwd.u
        self.fwd.b += other.fwd.b
        self.bwd.w += other.bwd.w
        self.bwd.u += other.bwd.u
        self.bwd.b += other.bwd.b
        self.inter.w1 += other.inter.w1
        self.inter.b1 += other.inter.b1
        self.inter.w2 += other.inter.w2
        self.inter.w3 += other.inter.w3
        self.inter.w4 += other.inter.w4
        self.inter.w5 += other.inter.w5
        self.inter.b2 += other.inter.b2
        self.inter.u_r += other.inter.u_r

    def scale_(self, factor: float) -> None:
        self.fwd.w *= factor
        self.fwd.u *= factor
        self.fwd.b *= factor
        self.bwd.w *= factor
        self.bwd.u *= factor
        self.bwd.b *= factor
        self.inter.w1 *= factor
        self.inter.b1 *= factor
        self.inter.w2 *= factor
        self.inter.w3 *= factor
        self.inter.w4 *= factor
        self.inter.w5 *= factor
        self.inter.b2 *= factor
        self.inter.u_r *= factor

    def _arrays(self):
        return [
            self.fwd.w, self.fwd.u, self.fwd.b,
            self.bwd.w, self.bwd.u, self.bwd.b,
            self.inter.w1, self.inter.w3, self.inter.w4, self.inter.w5,
            self.inter.u_r,
        ]

    def global_norm(self) -> float:
        total = sum(float(np.sum(a * a)) for a in self._arrays())
        total += self.inter.b1**2 + self.inter.w2**2 + self.inter.b2**2
        return float(np.sqrt(total))

    def clip_(self, max_norm: float) -> float:
        """Scale in place so the global norm is at most max_norm; returns the norm."""
        norm = self.global_norm()
        if norm > max_norm > 0:
            self.scale_(max_norm / norm)
        return norm


def _param_arrays(params: ModelParams):
    inter = params.inter
    return [
        params.fwd.w, params.fwd.u, params.fwd.b,
        params.bwd.w, params.bwd.u, params.bwd.b,
        inter.w1, inter.w3, inter.w4, inter.w5,
        inter.u_r,
    ]


_SCALAR_FIELDS = ("b1", "w2", "b2")


def flatten_params(params: ModelParams) -> np.ndarray:
    """All trainable values as one float64 vector in a fixed order."""
    parts = [a.ravel() for a in _param_arrays(params)]
    parts.append(np.array([getattr(params.inter, n) for n in _SCALAR_FIELDS]))
    return np.concatenate(parts).astype(np.float64)


def assign_params(params: ModelParams, flat: np.ndarray) -> None:
    """Inverse of flatten_params; writes values back into the live arrays."""
    arrays = _param_arrays(params)
    expected = sum(a.size for a in arrays) + len(_SCALAR_FIELDS)
    if flat.size != expected:
        raise ValueError(f"expected {expected} values, got {flat.size}")
    offset = 0
    for a in arrays:
        a[...] = flat[offset : offset + a.size].reshape(a.shape)
        offset += a.size
    for name in _SCALAR_FIELDS:
        setattr(params.inter, name, float(flat[offset]))
        offset += 1


def flatten_grads(grads: Grads) -> np.ndarray:
    """Gradient vector aligned with flatten_params order."""
    parts = [a.ravel() for a in grads._arrays()]
    parts.append(np.array([grads.inter.b1, grads.inter.w2, grads.inter.b2]))
    return np.concatenate(parts).astype(np.float64)


@dataclass
class PairTrace:
    """Caches from scoring one question-answer pair."""

    q_cache: EncoderCache
    a_cache: EncoderCache
    att: AttentionTrace


def score_pair(
    q_seq: EmbeddedSequence,
    a_seq: EmbeddedSequence,
    profiles: CommunityProfiles,
    params: ModelParams,
):
    """Encode both sides with the shared biLSTM and score; returns (score, trace)."""
    q_enc, q_cache = encoder.encode_bidirectional(q_seq, params.fwd, params.bwd)
    a_enc, a_cache = encoder.encode_bidirectional(a_seq, params.fwd, params.bwd)
    att = attention.attention_forward(q_enc, a_enc, profiles, params.inter)
    return att.score, PairTrace(q_cache=q_cache, a_cache=a_cache, att=att)


def pair_backward(trace: PairTrace, d_score: float, params: ModelParams) -> Grads:
    """Full backward for one scored pair; encoder grads from both sides are summed."""
    inter_grads, d_hq, d_ha = attention.attention_backward(trace.att, d_score)
    q_fwd, q_bwd, _ = encoder.encoder_backward(trace.q_cache, d_hq[None, :, :])
    a_fwd, a_bwd, _ = encoder.encoder_backward(trace.a_cache, d_ha[None, :, :])
    q_fwd.w += a_fwd.w
    q_fwd.u += a_fwd.u
    q_fwd.b += a_fwd.b
    q_bwd.w += a_bwd.w
    q_bwd.u += a_bwd.u
    q_bwd.b += a_bwd.b
    return Grads(fwd=q_fwd, bwd=q_bwd, inter=inter_grads)


def sgd_step(params: ModelParams, grads: Grads, learning_rate: float) -> None:
    """Plain gradient descent update in place."""
    lr = learning_rate
    params.fwd.w -= lr * grads.fwd.w
    params.fwd.u -= lr * grads.fwd.u
    params.fwd.b -= lr * grads.fwd.b
    params.bwd.w -= lr * grads.bwd.w
    params.bwd.u -= lr * grads.bwd.u
    params.bwd.b -= lr * grads.bwd.b
    inter = params.inter
    g = grads.inter
    inter.w1 -= lr * g.w1
    inter.b1 -= lr * g.b1
    inter.w2 -= lr * g.w2
    inter.w3 -= lr * g.w3
    inter.w4 -= lr * g.w4
    inter.w5 -= lr * g.w5
    inter.b2 -= lr * g.b2
    inter.u_r -= lr * g.u_r
