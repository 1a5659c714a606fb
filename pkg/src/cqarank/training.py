"""Pairwise hinge training over (question, better, worse) answer triplets.

Each training question contributes its best answer as the positive and a
seeded uniform sample of strictly worse siblings as negatives. A batch is a
flat shuffled list of such triplets; the loss is the batch mean of
max(0, margin + s_minus - s_plus), optimized by plain SGD with global-norm
gradient clipping.

Forward work is batched: every unique question and unique (question, answer)
pair in a batch is encoded exactly once, attention runs per pair, and the
encoder backward runs once per side over the whole batch.

Checkpoints are a versioned binary: magic, format version, a JSON header
(hyperparameters, vocabulary, scalar parameters, tensor manifest), row-major
float64 tensor payloads, and a trailing sha256 over everything before it.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import attention, encoder
from . import model as model_mod
from .community import CommunityProfiles, zero_profiles
from .corpus import Corpus, VoteMode, vote_measure
from .embedding import EmbeddedSequence, EmbeddingTable, Vocabulary, embed, tokenize
from .model import Grads, Hyper, ModelParams

SAMPLER_SPAWN_KEY = (1,)


class TrainingError(RuntimeError):
    """Raised when optimization cannot proceed or produced non-finite values."""


class CheckpointError(RuntimeError):
    """Raised for unreadable, corrupted, or incompatible checkpoint files."""


def hinge_loss(s_plus: float, s_minus: float, margin: float) -> float:
    """max(0, margin + s_minus - s_plus); zero iff the pair satisfies the margin."""
    if not (np.isfinite(s_plus) and np.isfinite(s_minus)):
        raise ValueError("hinge loss needs finite scores")
    return max(0.0, margin + s_minus - s_plus)


@dataclass
class TrainInstance:
    """One question with its embedded candidates and per-answer profiles."""

    question_id: str
    q_seq: EmbeddedSequence
    answer_ids: list
    a_seqs: list
    profiles: list
    best_index: int
    worse_indices: list


def _profile_for(answer_id: str, profiles: dict, k: int) -> CommunityProfiles:
    p = profiles.get(answer_id)
    if p is None:
        return zero_profiles(k)
    if p.p_exp.size != k:
        raise ValueError(
            f"profile rank {p.p_exp.size} does not match configured rank {k}"
        )
    return p


def build_train_instances(
    corpus: Corpus,
    table: EmbeddingTable,
    profiles: dict,
    hyper: Hyper,
    mode: VoteMode,
    question_ids=None,
):
    """Embed questions/candidates and fix positives; returns (instances, skipped).

    A question is skipped (and counted) when it has no pair of candidates
    with strictly different quality, or when its text embeds to zero tokens.
    The positive is the first candidate attaining the maximum vote measure.
    """
    wanted = None if question_ids is None else set(question_ids)
    instances = []
    skipped = 0
    for question in corpus.questions:
        if wanted is not None and question.id not in wanted:
            continue
        q_tokens = tokenize(question.text)
        candidates = [
            a for a in corpus.candidates(question.id) if tokenize(a.text)
        ]
        if not q_tokens or len(candidates) < 2:
            skipped += 1
            continue
        measures = [vote_measure(a, mode) for a in candidates]
        best = max(measures)
        best_index = measures.index(best)
        worse = [i for i, v in enumerate(measures) if v < best]
        if not worse:
            skipped += 1
            continue
        instances.append(
            TrainInstance(
                question_id=question.id,
                q_seq=embed(q_tokens, table, hyper.max_question_len),
                answer_ids=[a.id for a in candidates],
                a_seqs=[
                    embed(tokenize(a.text), table, hyper.max_answer_len)
                    for a in candidates
                ],
                profiles=[
                    _profile_for(a.id, profiles, hyper.profile_rank)
                    for a in candidates
                ],
                best_index=best_index,
                worse_indices=worse,
            )
        )
    return instances, skipped


def sample_triplets(instances, rng, batch_size: int, negatives_per_question: int):
    """One epoch of shuffled triplet batches.

    Each instance contributes negatives_per_question triplets whose negative
    is drawn uniformly (with replacement) from its strictly worse candidates.
    Returns a list of batches; a batch is a list of (instance_index,
    negative_candidate_index) pairs.
    """
    if batch_size < 1 or negatives_per_question < 1:
        raise ValueError("batch size and negatives per question must be positive")
    flat = []
    for idx, inst in enumerate(instances):
        worse = inst.worse_indices
        for _ in range(negatives_per_question):
            flat.append((idx, worse[int(rng.integers(len(worse)))]))
    order = rng.permutation(len(flat))
    flat = [flat[i] for i in order]
    return [flat[i : i + batch_size] for i in range(0, len(flat), batch_size)]


def _batch_forward_backward(batch, instances, params: ModelParams):
    """Mean hinge loss and its gradient over one triplet batch."""
    q_rows = {}
    pair_rows = {}
    for inst_idx, neg_idx in batch:
        q_rows.setdefault(inst_idx, len(q_rows))
        inst = instances[inst_idx]
        pair_rows.setdefault((inst_idx, inst.best_index), len(pair_rows))
        pair_rows.setdefault((inst_idx, neg_idx), len(pair_rows))

    q_order = sorted(q_rows, key=q_rows.get)
    pair_order = sorted(pair_rows, key=pair_rows.get)
    qx = np.stack([instances[i].q_seq.matrix for i in q_order])
    q_lens = np.array([instances[i].q_seq.length for i in q_order])
    ax = np.stack([instances[i].a_seqs[j].matrix for i, j in pair_order])
    a_lens = np.array([instances[i].a_seqs[j].length for i, j in pair_order])
    # drop columns every batch member pads; masking makes this exact, not approximate
    qx = qx[:, : int(q_lens.max())]
    ax = ax[:, : int(a_lens.max())]

    q_hidden, q_cache = encoder.encode_batch(qx, q_lens, params.fwd, params.bwd)
    a_hidden, a_cache = encoder.encode_batch(ax, a_lens, params.fwd, params.bwd)

    traces = []
    scores = np.empty(len(pair_order))
    for row, (inst_idx, ans_idx) in enumerate(pair_order):
        inst = instances[inst_idx]
        q_enc = encoder.EncodedSequence(
            hidden=q_hidden[q_rows[inst_idx]],
            length=inst.q_seq.length,
            mask=inst.q_seq.mask[: q_hidden.shape[1]],
        )
        a_enc = encoder.EncodedSequence(
            hidden=a_hidden[row],
            length=inst.a_seqs[ans_idx].length,
            mask=inst.a_seqs[ans_idx].mask[: a_hidden.shape[1]],
        )
        trace = attention.attention_forward(
            q_enc, a_enc, inst.profiles[ans_idx], params.inter
        )
        traces.append(trace)
        scores[row] = trace.score

    n = len(batch)
    margin = params.hyper.margin
    d_scores = np.zeros(len(pair_order))
    total = 0.0
    active = 0
    for inst_idx, neg_idx in batch:
        inst = instances[inst_idx]
        pos_row = pair_rows[(inst_idx, inst.best_index)]
        neg_row = pair_rows[(inst_idx, neg_idx)]
        loss = hinge_loss(scores[pos_row], scores[neg_row], margin)
        total += loss
        if loss > 0.0:
            active += 1
            d_scores[pos_row] -= 1.0 / n
            d_scores[neg_row] += 1.0 / n

    grads = Grads.zeros_like(params)
    d_q_hidden = np.zeros_like(q_hidden)
    d_a_hidden = np.zeros_like(a_hidden)
    for row, (inst_idx, ans_idx) in enumerate(pair_order):
        if d_scores[row] == 0.0:
            continue
        inter_g, d_hq, d_ha = attention.attention_backward(traces[row], d_scores[row])
        grads.inter.w1 += inter_g.w1
        grads.inter.b1 += inter_g.b1
        grads.inter.w2 += inter_g.w2
        grads.inter.w3 += inter_g.w3
        grads.inter.w4 += inter_g.w4
        grads.inter.w5 += inter_g.w5
        grads.inter.b2 += inter_g.b2
        grads.inter.u_r += inter_g.u_r
        d_q_hidden[q_rows[inst_idx]] += d_hq
        d_a_hidden[row] += d_ha

    for cache, d_hid in ((q_cache, d_q_hidden), (a_cache, d_a_hidden)):
        g_fwd, g_bwd, _ = encoder.encoder_backward(cache, d_hid)
        grads.fwd.w += g_fwd.w
        grads.fwd.u += g_fwd.u
        grads.fwd.b += g_fwd.b
        grads.bwd.w += g_bwd.w
        grads.bwd.u += g_bwd.u
        grads.bwd.b += g_bwd.b

    return float(total / n), grads, active


@dataclass
class TrainResult:
    params: ModelParams
    batch_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    skipped_questions: int = 0
    epochs_run: int = 0
    stopped_early: bool = False


def train(
    corpus: Corpus,
    table: EmbeddingTable,
    profiles: dict,
    hyper: Hyper,
    mode: VoteMode = None,
    seed: int = 0,
    question_ids=None,
    params: ModelParams = None,
    log_fn=None,
) -> TrainResult:
    """Full training loop; deterministic for a fixed seed in single-worker mode.

    Model initialization derives from the seed directly; triplet sampling uses
    an independent child stream so changing epoch count never changes init.
    Raises TrainingError naming the batch if the loss or update goes
    non-finite, and when no question yields a usable triplet.
    """
    if mode is None:
        mode = corpus.vote_mode()
    if params is None:
        params = model_mod.init_model(table, hyper, seed)
    instances, skipped = build_train_instances(
        corpus, table, profiles, hyper, mode, question_ids
    )
    if not instances:
        raise TrainingError("no question provides a (better, worse) answer pair")
    sampler = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=SAMPLER_SPAWN_KEY)
    )
    result = TrainResult(params=params, skipped_questions=skipped)
    prev_epoch_loss = None
    stall = 0
    for epoch in range(hyper.epochs):
        batches = sample_triplets(
            instances, sampler, hyper.batch_size, hyper.negatives_per_question
        )
        epoch_total = 0.0
        for batch_index, batch in enumerate(batches):
            try:
                loss, grads, _ = _batch_forward_backward(batch, instances, params)
            except ValueError as exc:
                raise TrainingError(
                    f"forward pass failed at epoch {epoch}, batch {batch_index}: {exc}"
                ) from exc
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch {batch_index}"
                )
            norm = grads.clip_(hyper.clip_norm)
            if not np.isfinite(norm):
                raise TrainingError(
                    f"non-finite gradient at epoch {epoch}, batch {batch_index}"
                )
            model_mod.sgd_step(params, grads, hyper.learning_rate)
            result.batch_losses.append(loss)
            epoch_total += loss
        epoch_loss = epoch_total / len(batches)
        result.epoch_losses.append(epoch_loss)
        result.epochs_run = epoch + 1
        if log_fn is not None:
            log_fn(epoch, epoch_loss)
        if prev_epoch_loss is not None:
            if prev_epoch_loss - epoch_loss < hyper.early_stop_delta:
                stall += 1
            else:
                stall = 0
            if stall >= hyper.early_stop_patience:
                result.stopped_early = True
                break
        prev_epoch_loss = epoch_loss
    return result


CHECKPOINT_MAGIC = b"CQARANK\x00"
CHECKPOINT_VERSION = 1


def _tensor_manifest(params: ModelParams):
    inter = params.inter
    return [
        ("embedding", params.table.vectors),
        ("fwd_w", params.fwd.w),
        ("fwd_u", params.fwd.u),
        ("fwd_b", params.fwd.b),
        ("bwd_w", params.bwd.w),
        ("bwd_u", params.bwd.u),
        ("bwd_b", params.bwd.b),
        ("inter_w1", inter.w1),
        ("inter_w3", inter.w3),
        ("inter_w4", inter.w4),
        ("inter_w5", inter.w5),
        ("inter_u_r", inter.u_r),
    ]


def save_checkpoint(params: ModelParams, path) -> None:
    """Write a versioned, checksummed binary checkpoint."""
    tensors = _tensor_manifest(params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "hyper": params.hyper.to_dict(),
        "scalars": {
            "b1": params.inter.b1,
            "w2": params.inter.w2,
            "b2": params.inter.b2,
        },
        "tensors": [[name, list(arr.shape)] for name, arr in tensors],
        "vocab": params.table.vocab.tokens,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += struct.pack("<Q", len(header_bytes))
    blob += header_bytes
    for _, arr in tensors:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    blob += hashlib.sha256(bytes(blob)).digest()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_checkpoint(path, expect: Hyper = None) -> ModelParams:
    """Read a checkpoint back; bitwise inverse of save_checkpoint.

    Raises CheckpointError on bad magic, unsupported version, checksum
    failure (truncation or corruption), malformed headers, or, when `expect`
    is given, any hyperparameter mismatch with the stored configuration.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    base = len(CHECKPOINT_MAGIC) + 4 + 8
    if len(blob) < base + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", blob, len(CHECKPOINT_MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version} "
            f"(expected {CHECKPOINT_VERSION})"
        )
    digest = hashlib.sha256(blob[:-32]).digest()
    if digest != blob[-32:]:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    (header_len,) = struct.unpack_from("<Q", blob, len(CHECKPOINT_MAGIC) + 4)
    header_end = base + header_len
    try:
        header = json.loads(blob[base:header_end].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    try:
        hyper = Hyper.from_dict(header["hyper"])
        scalars = header["scalars"]
        manifest = header["tensors"]
        vocab_tokens = header["vocab"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed header ({exc})") from exc
    if expect is not None and hyper.to_dict() != expect.to_dict():
        diffs = [
            name
            for name, val in hyper.to_dict().items()
            if expect.to_dict()[name] != val
        ]
        raise CheckpointError(
            f"{path}: stored hyperparameters differ from expected ({', '.join(diffs)})"
        )
    arrays = {}
    offset = header_end
    for name, shape in manifest:
        size = int(np.prod(shape)) if shape else 1
        end = offset + 8 * size
        if end > len(blob) - 32:
            raise CheckpointError(f"{path}: tensor data out of bounds for {name}")
        arrays[name] = (
            np.frombuffer(blob[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        )
        offset = end
    if offset != len(blob) - 32:
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    expected_names = [
        "embedding", "fwd_w", "fwd_u", "fwd_b", "bwd_w", "bwd_u", "bwd_b",
        "inter_w1", "inter_w3", "inter_w4", "inter_w5", "inter_u_r",
    ]
    if [name for name, _ in manifest] != expected_names:
        raise CheckpointError(f"{path}: unexpected tensor manifest")

    h = hyper.hidden_size
    d = hyper.embed_dim
    shape_contract = {
        "fwd_w": (4 * h, d), "fwd_u": (4 * h, h), "fwd_b": (4 * h,),
        "bwd_w": (4 * h, d), "bwd_u": (4 * h, h), "bwd_b": (4 * h,),
        "inter_w1": (4 * h,),
        "inter_w3": (hyper.profile_rank,),
        "inter_w4": (hyper.profile_rank,),
        "inter_w5": (hyper.profile_rank,),
        "inter_u_r": (2 * h, 2 * h),
    }
    for name, want in shape_contract.items():
        if arrays[name].shape != want:
            raise CheckpointError(
                f"{path}: tensor {name} has shape {arrays[name].shape}, "
                f"expected {want} for the stored hyperparameters"
            )
    vocab = Vocabulary(list(vocab_tokens))
    if arrays["embedding"].shape != (len(vocab.tokens), d):
        raise CheckpointError(f"{path}: embedding shape disagrees with vocabulary")
    table = EmbeddingTable(vocab=vocab, vectors=arrays["embedding"])
    inter = attention.InteractionParams(
        w1=arrays["inter_w1"],
        b1=float(scalars["b1"]),
        w2=float(scalars["w2"]),
        w3=arrays["inter_w3"],
        w4=arrays["inter_w4"],
        w5=arrays["inter_w5"],
        b2=float(scalars["b2"]),
        u_r=arrays["inter_u_r"],
    )
    return ModelParams(
        table=table,
        fwd=encoder.LstmParams(w=arrays["fwd_w"], u=arrays["fwd_u"], b=arrays["fwd_b"]),
        bwd=encoder.LstmParams(w=arrays["bwd_w"], u=arrays["bwd_u"], b=arrays["bwd_b"]),
        inter=inter,
        hyper=hyper,
    )
