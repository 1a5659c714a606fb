"""Bidirectional LSTM encoder with exact hand-written reverse-mode gradients.

Gate parameters are stored stacked: one (4h, d) input map, one (4h, h)
recurrent map and one (4h,) bias, in gate order input, forget, output,
candidate. The per-position output is the concatenation of the left-to-right
hidden state and the right-to-left hidden state, so each true position yields
a 2h vector; padded positions yield exact zeros and receive exact zero
gradients.

The batch kernel runs many sequences of different true lengths on one padded
time grid. At steps past a sequence's length the state is carried through
unchanged (forward direction) or held at zero (reverse direction), and the
backward pass mirrors that blending exactly, so adding padding never changes
any value or gradient bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import EmbeddedSequence


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LstmParams:
    w: np.ndarray  # (4h, d)
    u: np.ndarray  # (4h, h)
    b: np.ndarray  # (4h,)

    @property
    def hidden_size(self) -> int:
        return int(self.u.shape[1])

    @property
    def input_size(self) -> int:
        return int(self.w.shape[1])

    # Per-gate views, gate order i, f, o, c.
    @property
    def w_i(self):
        return self.w[: self.hidden_size]

    @property
    def w_f(self):
        return self.w[self.hidden_size : 2 * self.hidden_size]

    @property
    def w_o(self):
        return self.w[2 * self.hidden_size : 3 * self.hidden_size]

    @property
    def w_c(self):
        return self.w[3 * self.hidden_size :]


@dataclass
class LstmGrads:
    w: np.ndarray
    u: np.ndarray
    b: np.ndarray


def zero_lstm_grads(params: LstmParams) -> LstmGrads:
    return LstmGrads(
        w=np.zeros_like(params.w), u=np.zeros_like(params.u), b=np.zeros_like(params.b)
    )


def init_lstm_params(hidden_size: int, input_size: int, rng) -> LstmParams:
    """Uniform(-r, r) with r = 1/sqrt(h); forget-gate bias starts at 1.0."""
    r = 1.0 / np.sqrt(hidden_size)
    w = rng.uniform(-r, r, (4 * hidden_size, input_size))
    u = rng.uniform(-r, r, (4 * hidden_size, hidden_size))
    b = rng.uniform(-r, r, 4 * hidden_size)
    b[hidden_size : 2 * hidden_size] = 1.0
    return LstmParams(w=w, u=u, b=b)


def lstm_step(x, h_prev, c_prev, params: LstmParams):
    """One cell update on plain vectors; returns (h_t, c_t).

    i = sig(W_i x + U_i h + b_i), f and o likewise, g = tanh(W_c x + U_c h + b_c),
    c_t = i*g + f*c_prev, h_t = o*tanh(c_t).
    """
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    h = params.hidden_size
    if x.shape != (params.input_size,) or h_prev.shape != (h,) or c_prev.shape != (h,):
        raise ValueError(
            f"lstm_step shape mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for a cell with input {params.input_size} and hidden {h}"
        )
    pre = params.w @ x + params.u @ h_prev + params.b
    i = _sigmoid(pre[:h])
    f = _sigmoid(pre[h : 2 * h])
    o = _sigmoid(pre[2 * h : 3 * h])
    g = np.tanh(pre[3 * h :])
    c_t = i * g + f * c_prev
    h_t = o * np.tanh(c_t)
    return h_t, c_t


@dataclass
class EncodedSequence:
    hidden: np.ndarray  # (L, 2h), zero rows at padding
    length: int
    mask: np.ndarray  # (L,)


@dataclass
class _DirectionCache:
    i: np.ndarray  # (B, L, h) each
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    tanh_c: np.ndarray
    c_prev: np.ndarray
    h_prev: np.ndarray
    reverse: bool


@dataclass
class EncoderCache:
    x: np.ndarray  # (B, L, d)
    mask: np.ndarray  # (B, L)
    fwd_params: LstmParams
    bwd_params: LstmParams
    fwd: _DirectionCache
    bwd: _DirectionCache


def _direction_forward(x, mask, params: LstmParams, reverse: bool):
    batch, length, _ = x.shape
    h = params.hidden_size
    shape = (batch, length, h)
    cache = _DirectionCache(
        i=np.zeros(shape),
        f=np.zeros(shape),
        o=np.zeros(shape),
        g=np.zeros(shape),
        tanh_c=np.zeros(shape),
        c_prev=np.zeros(shape),
        h_prev=np.zeros(shape),
        reverse=reverse,
    )
    out = np.zeros(shape)
    xw = x.reshape(batch * length, -1) @ params.w.T
    xw = xw.reshape(batch, length, 4 * h)
    h_t = np.zeros((batch, h))
    c_t = np.zeros((batch, h))
    order = range(length - 1, -1, -1) if reverse else range(length)
    for t in order:
        m = mask[:, t][:, None]
        cache.h_prev[:, t] = h_t
        cache.c_prev[:, t] = c_t
        pre = xw[:, t] + h_t @ params.u.T + params.b
        i = _sigmoid(pre[:, :h])
        f = _sigmoid(pre[:, h : 2 * h])
        o = _sigmoid(pre[:, 2 * h : 3 * h])
        g = np.tanh(pre[:, 3 * h :])
        c_new = i * g + f * c_t
        tc = np.tanh(c_new)
        h_new = o * tc
        cache.i[:, t] = i
        cache.f[:, t] = f
        cache.o[:, t] = o
        cache.g[:, t] = g
        cache.tanh_c[:, t] = tc
        h_t = m * h_new + (1.0 - m) * h_t
        c_t = m * c_new + (1.0 - m) * c_t
        out[:, t] = m * h_new
    return out, cache


def _direction_backward(d_out, x, mask, params: LstmParams, cache: _DirectionCache):
    batch, length, h = d_out.shape
    gw = np.zeros_like(params.w)
    gu = np.zeros_like(params.u)
    gb = np.zeros_like(params.b)
    dx = np.zeros_like(x)
    dh_carry = np.zeros((batch, h))
    dc_carry = np.zeros((batch, h))
    order = range(length) if cache.reverse else range(length - 1, -1, -1)
    for t in order:
        m = mask[:, t][:, None]
        dh_total = d_out[:, t] + dh_carry
        dc_total = dc_carry
        dh_new = m * dh_total
        dc_new = m * dc_total
        i = cache.i[:, t]
        f = cache.f[:, t]
        o = cache.o[:, t]
        g = cache.g[:, t]
        tc = cache.tanh_c[:, t]
        c_prev = cache.c_prev[:, t]
        h_prev = cache.h_prev[:, t]
        do = dh_new * tc
        dc = dc_new + dh_new * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_prev = dc * f
        da = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                do * o * (1.0 - o),
                dg * (1.0 - g * g),
            ],
            axis=1,
        )
        gw += da.T @ x[:, t]
        gu += da.T @ h_prev
        gb += da.sum(axis=0)
        dx[:, t] = da @ params.w
        dh_carry = da @ params.u + (1.0 - m) * dh_total
        dc_carry = dc_prev + (1.0 - m) * dc_total
    return LstmGrads(w=gw, u=gu, b=gb), dx


def encode_batch(x, lengths, fwd: LstmParams, bwd: LstmParams):
    """Encode a padded batch; returns ((B, L, 2h) hidden states, cache).

    x is (B, L, d) with zero rows past each true length; lengths is (B,).
    """
    x = np.asarray(x, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if x.ndim != 3:
        raise ValueError(f"expected a (batch, length, dim) input, got shape {x.shape}")
    batch, length, dim = x.shape
    if dim != fwd.input_size or dim != bwd.input_size:
        raise ValueError(
            f"input dim {dim} does not match encoder input size "
            f"{fwd.input_size}/{bwd.input_size}"
        )
    if fwd.hidden_size != bwd.hidden_size:
        raise ValueError("forward and reverse cells must share a hidden size")
    mask = (np.arange(length)[None, :] < lengths[:, None]).astype(np.float64)
    h_fwd, cache_f = _direction_forward(x, mask, fwd, reverse=False)
    h_bwd, cache_b = _direction_forward(x, mask, bwd, reverse=True)
    hidden = np.concatenate([h_fwd, h_bwd], axis=2)
    cache = EncoderCache(
        x=x, mask=mask, fwd_params=fwd, bwd_params=bwd, fwd=cache_f, bwd=cache_b
    )
    return hidden, cache


def encode_bidirectional(seq: EmbeddedSequence, fwd: LstmParams, bwd: LstmParams):
    """Encode one embedded sequence; returns (per-position 2h states, cache)."""
    hidden, cache = encode_batch(seq.matrix[None], np.array([seq.length]), fwd, bwd)
    enc = EncodedSequence(hidden=hidden[0], length=seq.length, mask=seq.mask.copy())
    return enc, cache


def encoder_backward(cache: EncoderCache, d_hidden):
    """Gradients of a scalar loss through encode_batch.

    d_hidden is (B, L, 2h), the upstream gradient for every position (zeros at
    padding). Returns (forward-cell grads, reverse-cell grads, d_input).
    """
    d_hidden = np.asarray(d_hidden, dtype=np.float64)
    h = cache.fwd_params.hidden_size
    if d_hidden.shape != cache.x.shape[:2] + (2 * h,):
        raise ValueError(
            f"upstream gradient shape {d_hidden.shape} does not match the cached "
            f"forward pass"
        )
    g_fwd, dx_f = _direction_backward(
        d_hidden[:, :, :h], cache.x, cache.mask, cache.fwd_params, cache.fwd
    )
    g_bwd, dx_b = _direction_backward(
        d_hidden[:, :, h:], cache.x, cache.mask, cache.bwd_params, cache.bwd
    )
    return g_fwd, g_bwd, dx_f + dx_b
