"""Question-answer interaction, pooled attention, and pair scoring.

Forward pipeline for one encoded pair (question states Hq, answer states Ha,
both (length, 2h) with zero rows at padding):

  G[i, j]  = sig(u . Hq[i] + v . Ha[j] + b1)    with w1 = [u; v]
  r_q[i]   = max_j G[i, j]    (row max over true answer positions)
  r_a[j]   = max_i G[i, j]
  y[j]     = tanh(w2 * r_a[j] + w3.p_exp + w4.p_auth + w5.p_kg + b2)
  alpha_a  = softmax(y)       alpha_q = softmax(r_q)
  rq_vec   = sum_i alpha_q[i] Hq[i]     ra_vec = sum_j alpha_a[j] Ha[j]
  score    = tanh(rq_vec^T U_r ra_vec)

Padding rows and columns of G hold a -inf sentinel so the max pooling never
sees them; attention weights are exactly zero at padded positions. The
backward pass routes max-pool gradients to the first (lowest-index) argmax,
the usual subgradient choice at ties.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .community import CommunityProfiles
from .encoder import EncodedSequence


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(x) -> np.ndarray:
    """Shift-stable softmax over a 1-d array."""
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - np.max(x))
    return e / e.sum()


@dataclass
class InteractionParams:
    w1: np.ndarray  # (4h,) interaction weights, question half then answer half
    b1: float
    w2: float
    w3: np.ndarray  # (k,) expertise weights
    w4: np.ndarray  # (k,) authority weights
    w5: np.ndarray  # (k,) knowledge-graph weights
    b2: float
    u_r: np.ndarray  # (2h, 2h) bilinear score form


@dataclass
class InteractionGrads:
    w1: np.ndarray
    b1: float
    w2: float
    w3: np.ndarray
    w4: np.ndarray
    w5: np.ndarray
    b2: float
    u_r: np.ndarray


def init_interaction_params(hidden_size: int, profile_rank: int, rng) -> InteractionParams:
    """Uniform(-0.1, 0.1) weights; the score form starts at identity / 2h."""
    span = 0.1
    two_h = 2 * hidden_size
    return InteractionParams(
        w1=rng.uniform(-span, span, 2 * two_h),
        b1=float(rng.uniform(-span, span)),
        w2=float(rng.uniform(-span, span)),
        w3=rng.uniform(-span, span, profile_rank),
        w4=rng.uniform(-span, span, profile_rank),
        w5=rng.uniform(-span, span, profile_rank),
        b2=float(rng.uniform(-span, span)),
        u_r=np.eye(two_h) / two_h,
    )


def zero_interaction_grads(params: InteractionParams) -> InteractionGrads:
    return InteractionGrads(
        w1=np.zeros_like(params.w1),
        b1=0.0,
        w2=0.0,
        w3=np.zeros_like(params.w3),
        w4=np.zeros_like(params.w4),
        w5=np.zeros_like(params.w5),
        b2=0.0,
        u_r=np.zeros_like(params.u_r),
    )


def interaction_matrix(
    q_enc: EncodedSequence, a_enc: EncodedSequence, params: InteractionParams
) -> np.ndarray:
    """Padded interaction grid; -inf sentinels outside the true block."""
    m = q_enc.length
    l = a_enc.length
    if m == 0 or l == 0:
        raise ValueError("cannot interact an all-padding sequence")
    two_h = q_enc.hidden.shape[1]
    if params.w1.size != 2 * two_h:
        raise ValueError(
            f"interaction weight length {params.w1.size} does not match state size {two_h}"
        )
    u = params.w1[:two_h]
    v = params.w1[two_h:]
    z = (q_enc.hidden[:m] @ u)[:, None] + (a_enc.hidden[:l] @ v)[None, :] + params.b1
    g = np.full((q_enc.hidden.shape[0], a_enc.hidden.shape[0]), -np.inf)
    g[:m, :l] = _sigmoid(z)
    return g


def _true_block(g: np.ndarray):
    finite = np.isfinite(g)
    m = int(finite.any(axis=1).sum())
    l = int(finite.any(axis=0).sum())
    if m == 0 or l == 0:
        raise ValueError("interaction matrix has an empty true block")
    return g[:m, :l], m, l


def pool(g: np.ndarray):
    """Row-wise and column-wise max over the finite block of g.

    Returns (r_q, r_a) with lengths (true question length, true answer length).
    """
    sub, _, _ = _true_block(g)
    return sub.max(axis=1), sub.max(axis=0)


def question_attention(r_q: np.ndarray) -> np.ndarray:
    """Softmax over the pooled row maxima."""
    return softmax(r_q)


def _answer_pre_activation(r_a, profiles: CommunityProfiles, params: InteractionParams):
    shift = (
        float(params.w3 @ profiles.p_exp)
        + float(params.w4 @ profiles.p_auth)
        + float(params.w5 @ profiles.p_kg)
        + params.b2
    )
    return np.tanh(params.w2 * r_a + shift)


def answer_attention(
    r_a: np.ndarray, profiles: CommunityProfiles, params: InteractionParams
) -> np.ndarray:
    """Softmax over tanh(w2 r_a + community shift); sums to 1 over true positions."""
    return softmax(_answer_pre_activation(r_a, profiles, params))


def represent_and_score(
    q_enc: EncodedSequence,
    a_enc: EncodedSequence,
    alpha_q: np.ndarray,
    alpha_a: np.ndarray,
    params: InteractionParams,
) -> float:
    """tanh of the bilinear form between the attention-pooled state sums.

    alpha vectors may be padded to the full sequence length (zeros at padding)
    or given over true positions only.
    """
    rq_vec = alpha_q @ q_enc.hidden[: alpha_q.size]
    ra_vec = alpha_a @ a_enc.hidden[: alpha_a.size]
    return float(np.tanh(rq_vec @ params.u_r @ ra_vec))


@dataclass
class AttentionTrace:
    """Everything the forward pass computed, kept for the backward pass."""

    params: InteractionParams
    profiles: CommunityProfiles
    q_hidden: np.ndarray  # (Mp, 2h) ref
    a_hidden: np.ndarray  # (Lp, 2h) ref
    q_len: int
    a_len: int
    g: np.ndarray  # padded, -inf sentinels
    r_q: np.ndarray  # (M,)
    r_a: np.ndarray  # (L,)
    argmax_rows: np.ndarray  # (M,) column index of each row max
    argmax_cols: np.ndarray  # (L,) row index of each column max
    y_a: np.ndarray  # (L,) pre-softmax answer activations
    alpha_q: np.ndarray  # (Mp,) zeros at padding
    alpha_a: np.ndarray  # (Lp,)
    rq_vec: np.ndarray  # (2h,)
    ra_vec: np.ndarray  # (2h,)
    score: float


def attention_forward(
    q_enc: EncodedSequence,
    a_enc: EncodedSequence,
    profiles: CommunityProfiles,
    params: InteractionParams,
) -> AttentionTrace:
    """Run the full interaction/attention/score pipeline for one pair."""
    g = interaction_matrix(q_enc, a_enc, params)
    sub, m, l = _true_block(g)
    r_q = sub.max(axis=1)
    r_a = sub.max(axis=0)
    argmax_rows = np.argmax(sub, axis=1)
    argmax_cols = np.argmax(sub, axis=0)
    y_a = _answer_pre_activation(r_a, profiles, params)
    alpha_q = np.zeros(q_enc.hidden.shape[0])
    alpha_q[:m] = softmax(r_q)
    alpha_a = np.zeros(a_enc.hidden.shape[0])
    alpha_a[:l] = softmax(y_a)
    rq_vec = alpha_q[:m] @ q_enc.hidden[:m]
    ra_vec = alpha_a[:l] @ a_enc.hidden[:l]
    score = float(np.tanh(rq_vec @ params.u_r @ ra_vec))
    return AttentionTrace(
        params=params,
        profiles=profiles,
        q_hidden=q_enc.hidden,
        a_hidden=a_enc.hidden,
        q_len=m,
        a_len=l,
        g=g,
        r_q=r_q,
        r_a=r_a,
        argmax_rows=argmax_rows,
        argmax_cols=argmax_cols,
        y_a=y_a,
        alpha_q=alpha_q,
        alpha_a=alpha_a,
        rq_vec=rq_vec,
        ra_vec=ra_vec,
        score=score,
    )


def _softmax_backward(alpha: np.ndarray, d_alpha: np.ndarray) -> np.ndarray:
    return alpha * (d_alpha - float(alpha @ d_alpha))


def attention_backward(trace: AttentionTrace, d_score: float):
    """Gradients of d_score * score w.r.t. parameters and the encoded states.

    Returns (InteractionGrads, d_q_hidden, d_a_hidden). Max-pool gradients go
    to the lowest-index argmax recorded by the forward pass; gradients for the
    community weights are the softmax-backward sum times the profile vectors,
    so inactive (zeroed) components receive exact zeros.
    """
    params = trace.params
    m, l = trace.q_len, trace.a_len
    hq = trace.q_hidden[:m]
    ha = trace.a_hidden[:l]
    alpha_q = trace.alpha_q[:m]
    alpha_a = trace.alpha_a[:l]
    two_h = hq.shape[1]

    dz = d_score * (1.0 - trace.score**2)
    d_rq_vec = dz * (params.u_r @ trace.ra_vec)
    d_ra_vec = dz * (params.u_r.T @ trace.rq_vec)
    g_u_r = dz * np.outer(trace.rq_vec, trace.ra_vec)

    d_alpha_q = hq @ d_rq_vec
    d_alpha_a = ha @ d_ra_vec
    d_hq = np.outer(alpha_q, d_rq_vec)
    d_ha = np.outer(alpha_a, d_ra_vec)

    d_r_q = _softmax_backward(alpha_q, d_alpha_q)
    d_y = _softmax_backward(alpha_a, d_alpha_a)
    d_pre = d_y * (1.0 - trace.y_a**2)
    g_w2 = float(d_pre @ trace.r_a)
    d_r_a = params.w2 * d_pre
    pre_sum = float(d_pre.sum())
    g_w3 = pre_sum * trace.profiles.p_exp
    g_w4 = pre_sum * trace.profiles.p_auth
    g_w5 = pre_sum * trace.profiles.p_kg
    g_b2 = pre_sum

    d_g = np.zeros((m, l))
    d_g[np.arange(m), trace.argmax_rows] += d_r_q
    d_g[trace.argmax_cols, np.arange(l)] += d_r_a
    g_true = trace.g[:m, :l]
    d_pre_g = g_true * (1.0 - g_true) * d_g
    row_sum = d_pre_g.sum(axis=1)
    col_sum = d_pre_g.sum(axis=0)
    u = params.w1[:two_h]
    v = params.w1[two_h:]
    g_w1 = np.concatenate([hq.T @ row_sum, ha.T @ col_sum])
    g_b1 = float(d_pre_g.sum())
    d_hq += np.outer(row_sum, u)
    d_ha += np.outer(col_sum, v)

    grads = InteractionGrads(
        w1=g_w1, b1=g_b1, w2=g_w2, w3=g_w3, w4=g_w4, w5=g_w5, b2=g_b2, u_r=g_u_r
    )
    d_q_hidden = np.zeros_like(trace.q_hidden)
    d_q_hidden[:m] = d_hq
    d_a_hidden = np.zeros_like(trace.a_hidden)
    d_a_hidden[:l] = d_ha
    return grads, d_q_hidden, d_a_hidden
