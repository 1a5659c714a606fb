"""Command-line pipeline: generate | embed | train | eval | sweep | ablate.

Every option resolves as: explicit flag, then CQARANK_<NAME> environment
variable, then the built-in default. The fully resolved configuration is
echoed as JSON next to every artifact a command writes, so any output file
can be traced back to the exact run that produced it.

All commands are deterministic for a fixed resolved config and seed in
single-worker mode; --workers only parallelizes evaluation scoring, which
is order-independent.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import community, eval as eval_mod, synth, training
from .corpus import CorpusError, load_corpus
from .embedding import load_embeddings, save_embeddings, train_skipgram
from .linalg import ConvergenceError
from .model import Hyper
from .training import CheckpointError, TrainingError

ENV_PREFIX = "CQARANK_"
CHECKPOINT_NAME = "model.ckpt"
EMBEDDINGS_NAME = "embeddings.txt"
_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in _TRUE_WORDS:
        return True
    if low in _FALSE_WORDS:
        return False
    raise ValueError(f"cannot read {text!r} as a boolean")


def _parse_int_list(text: str):
    values = [int(part) for part in text.split(",") if part.strip()]
    if not values:
        raise ValueError("expected a comma-separated list of integers")
    return values


class _Option:
    def __init__(self, name, default, cast, help_text, flag=False):
        self.name = name  # kebab-case
        self.dest = name.replace("-", "_")
        self.default = default
        self.cast = cast
        self.help = help_text
        self.flag = flag  # boolean switch

    def env_key(self) -> str:
        return ENV_PREFIX + self.dest.upper()


def _add_options(parser: argparse.ArgumentParser, options) -> None:
    for opt in options:
        if opt.flag:
            parser.add_argument(
                f"--{opt.name}", dest=opt.dest, action="store_true", default=None,
                help=opt.help,
            )
        else:
            parser.add_argument(
                f"--{opt.name}", dest=opt.dest, type=str, default=None, help=opt.help
            )


def _resolve(args, options) -> dict:
    out = {}
    for opt in options:
        raw = getattr(args, opt.dest)
        if raw is not None:
            out[opt.dest] = raw if opt.flag else opt.cast(raw)
            continue
        env = os.environ.get(opt.env_key())
        if env is not None:
            out[opt.dest] = _parse_bool(env) if opt.flag else opt.cast(env)
            continue
        out[opt.dest] = opt.default
    return out


def _echo_config(command: str, config: dict, out_dir: Path) -> None:
    payload = {"command": command}
    payload.update(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{command}_config.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


_SEED = _Option("seed", 0, int, "random seed")
_WORKERS = _Option("workers", 1, int, "evaluation scoring threads")
_FOLDS = _Option("folds", 1, int, "cross-validation folds (1 = no split)")
_FOLD = _Option("fold", 0, int, "which fold is held out for evaluation")
_POOL = _Option("pool-size", 20, int, "candidates per evaluation pool")

_HYPER_OPTIONS = [
    _Option("hidden", 128, int, "biLSTM hidden units per direction"),
    _Option("margin", 0.05, float, "hinge margin"),
    _Option("lr", 0.01, float, "SGD learning rate"),
    _Option("batch", 256, int, "triplets per batch"),
    _Option("max-q", 40, int, "question token cap"),
    _Option("max-a", 80, int, "answer token cap"),
    _Option("rank", 8, int, "community profile rank"),
    _Option("epochs", 20, int, "maximum training epochs"),
    _Option("clip", 5.0, float, "global gradient-norm clip"),
    _Option("negatives-per-question", 4, int, "sampled negatives per question per epoch"),
    _Option("early-stop-delta", 1e-4, float, "minimum epoch-loss improvement"),
    _Option("early-stop-patience", 3, int, "stalled epochs before stopping"),
]


def _hyper_from(config: dict, embed_dim: int) -> Hyper:
    return Hyper(
        hidden_size=config["hidden"],
        embed_dim=embed_dim,
        margin=config["margin"],
        learning_rate=config["lr"],
        batch_size=config["batch"],
        max_question_len=config["max_q"],
        max_answer_len=config["max_a"],
        profile_rank=config["rank"],
        epochs=config["epochs"],
        clip_norm=config["clip"],
        negatives_per_question=config["negatives_per_question"],
        early_stop_delta=config["early_stop_delta"],
        early_stop_patience=config["early_stop_patience"],
    )


def _split_ids(corpus, config: dict):
    """(train_ids, eval_ids); with folds=1 both are every question."""
    ids = [q.id for q in corpus.questions]
    folds = config["folds"]
    if folds <= 1:
        return ids, ids
    assignments = eval_mod.kfold_split(ids, folds=folds, seed=config["seed"])
    fold = config["fold"]
    if not 0 <= fold < folds:
        raise ValueError(f"fold {fold} out of range for {folds} folds")
    eval_ids = assignments[fold]
    train_ids = [qid for i, part in enumerate(assignments) if i != fold for qid in part]
    return train_ids, eval_ids


# ---------------------------------------------------------------------------
# commands


_GENERATE_OPTIONS = [
    _Option("out", None, str, "output directory (required)"),
    _SEED,
    _Option("questions", 100, int, "number of questions"),
    _Option("candidates", 20, int, "answers per question"),
    _Option("answerers", 30, int, "community size"),
    _Option("tags", 12, int, "raw tag count"),
    _Option("vocab", 600, int, "vocabulary size"),
    _Option("topics", 6, int, "latent topic count"),
    _Option("signal", 0.9, float, "planted signal strength in [0, 1]"),
    _Option("noise", 0.1, float, "expertise noise in [0, 1]"),
    _Option("label-style", False, _parse_bool, "categorical labels instead of votes",
            flag=True),
    _Option("followers-min", 2, int, "minimum followers per answerer"),
    _Option("followers-max", 6, int, "maximum followers per answerer"),
]


def _cmd_generate(config: dict) -> int:
    if not config["out"]:
        raise ValueError("--out is required")
    out_dir = Path(config["out"])
    synth_config = synth.SynthConfig(
        seed=config["seed"],
        num_questions=config["questions"],
        candidates_per_question=config["candidates"],
        num_answerers=config["answerers"],
        num_tags=config["tags"],
        vocab_size=config["vocab"],
        topic_count=config["topics"],
        signal_strength=config["signal"],
        expertise_noise=config["noise"],
        label_style=config["label_style"],
        follower_count_range=(config["followers_min"], config["followers_max"]),
    )
    summary = synth.generate(synth_config, out_dir)
    _echo_config("generate", config, out_dir)
    for key in sorted(summary):
        print(f"{key}\t{summary[key]}")
    return 0


_EMBED_OPTIONS = [
    _Option("corpus", None, str, "corpus directory (required)"),
    _Option("out", None, str, "output directory (required)"),
    _SEED,
    _Option("dim", 100, int, "embedding dimension"),
    _Option("window", 5, int, "skip-gram context window"),
    _Option("negatives", 5, int, "negative samples per position"),
    _Option("epochs", 5, int, "embedding training epochs"),
    _Option("lr", 0.025, float, "embedding learning rate"),
]


def _cmd_embed(config: dict) -> int:
    if not config["corpus"] or not config["out"]:
        raise ValueError("--corpus and --out are required")
    corpus = load_corpus(config["corpus"])
    table = train_skipgram(
        corpus.all_texts(),
        dim=config["dim"],
        window=config["window"],
        negatives=config["negatives"],
        epochs=config["epochs"],
        learning_rate=config["lr"],
        seed=config["seed"],
    )
    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    save_embeddings(table, out_dir / EMBEDDINGS_NAME)
    _echo_config("embed", config, out_dir)
    print(f"vocabulary\t{len(table.vocab.tokens)}")
    print(f"dimension\t{table.dim}")
    return 0


_TRAIN_OPTIONS = [
    _Option("corpus", None, str, "corpus directory (required)"),
    _Option("embeddings", None, str, "embeddings file (required)"),
    _Option("out", None, str, "output directory (required)"),
    _SEED, _FOLDS, _FOLD, _WORKERS,
] + _HYPER_OPTIONS


def _train_once(corpus, table, config: dict, train_ids):
    hyper = _hyper_from(config, table.dim)
    mode = corpus.vote_mode()
    profiles = community.compute_profiles(corpus, mode, hyper.profile_rank)
    result = training.train(
        corpus, table, profiles, hyper,
        mode=mode, seed=config["seed"], question_ids=train_ids,
    )
    return result, profiles, mode


def _write_train_artifacts(result, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    training.save_checkpoint(result.params, out_dir / CHECKPOINT_NAME)
    # the triplet count per epoch is fixed, so batches divide evenly
    per_epoch = len(result.batch_losses) // len(result.epoch_losses)
    lines = ["kind\tepoch\tindex\tloss"]
    seen = 0
    for epoch, epoch_loss in enumerate(result.epoch_losses):
        for i in range(per_epoch):
            lines.append(f"batch\t{epoch}\t{i}\t{result.batch_losses[seen]!r}")
            seen += 1
        lines.append(f"epoch\t{epoch}\t-\t{epoch_loss!r}")
    (out_dir / "loss_log.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_train(config: dict) -> int:
    for key in ("corpus", "embeddings", "out"):
        if not config[key]:
            raise ValueError(f"--{key} is required")
    corpus = load_corpus(config["corpus"])
    table = load_embeddings(config["embeddings"])
    train_ids, _ = _split_ids(corpus, config)
    result, _, _ = _train_once(corpus, table, config, train_ids)
    out_dir = Path(config["out"])
    _write_train_artifacts(result, out_dir)
    _echo_config("train", config, out_dir)
    print(f"epochs_run\t{result.epochs_run}")
    print(f"stopped_early\t{result.stopped_early}")
    print(f"skipped_questions\t{result.skipped_questions}")
    print(f"final_epoch_loss\t{result.epoch_losses[-1]!r}")
    return 0


_EVAL_OPTIONS = [
    _Option("corpus", None, str, "corpus directory (required)"),
    _Option("checkpoint", None, str, "trained checkpoint (required)"),
    _Option("out", None, str, "output directory (required)"),
    _SEED, _FOLDS, _FOLD, _POOL, _WORKERS,
]


def _evaluate(corpus, params, config: dict, train_ids, eval_ids, profiles=None):
    mode = corpus.vote_mode()
    if profiles is None:
        profiles = community.compute_profiles(
            corpus, mode, params.hyper.profile_rank
        )
    pools, skipped = eval_mod.build_pools(
        corpus, question_ids=eval_ids, mode=mode,
        pool_size=config["pool_size"], seed=config["seed"],
    )
    eval_mod.score_pools(pools, params, profiles, workers=config["workers"])
    threshold = None
    if corpus.label_based and train_ids != eval_ids:
        held_in, _ = eval_mod.build_pools(
            corpus, question_ids=train_ids, mode=mode,
            pool_size=config["pool_size"], seed=config["seed"],
        )
        eval_mod.score_pools(held_in, params, profiles, workers=config["workers"])
        threshold = eval_mod.choose_score_threshold(held_in)
    report = eval_mod.evaluate_pools(pools, threshold=threshold)
    report["pools_skipped"] = skipped
    return report


def _write_metrics(report: dict, config: dict, out_dir: Path, stem: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}\t{report[key]!r}" for key in sorted(report)]
    (out_dir / f"{stem}.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    payload = {"config": config, "metrics": report}
    (out_dir / f"{stem}.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _cmd_eval(config: dict) -> int:
    for key in ("corpus", "checkpoint", "out"):
        if not config[key]:
            raise ValueError(f"--{key} is required")
    corpus = load_corpus(config["corpus"])
    params = training.load_checkpoint(config["checkpoint"])
    train_ids, eval_ids = _split_ids(corpus, config)
    report = _evaluate(corpus, params, config, train_ids, eval_ids)
    out_dir = Path(config["out"])
    _write_metrics(report, config, out_dir, "metrics")
    _echo_config("eval", config, out_dir)
    for key in sorted(report):
        print(f"{key}\t{report[key]}")
    return 0


_SWEEP_OPTIONS = [
    _Option("corpus", None, str, "corpus directory (required)"),
    _Option("embeddings", None, str, "embeddings file (required)"),
    _Option("out", None, str, "output directory (required)"),
    _Option("sizes", [32, 64, 128, 256, 512], _parse_int_list,
            "comma-separated hidden sizes"),
    _SEED, _FOLDS, _FOLD, _POOL, _WORKERS,
] + [opt for opt in _HYPER_OPTIONS if opt.name != "hidden"]


def _cmd_sweep(config: dict) -> int:
    for key in ("corpus", "embeddings", "out"):
        if not config[key]:
            raise ValueError(f"--{key} is required")
    corpus = load_corpus(config["corpus"])
    table = load_embeddings(config["embeddings"])
    train_ids, eval_ids = _split_ids(corpus, config)
    out_dir = Path(config["out"])
    rows = []
    for size in config["sizes"]:
        sub = dict(config)
        sub["hidden"] = size
        result, profiles, _ = _train_once(corpus, table, sub, train_ids)
        size_dir = out_dir / f"h{size}"
        _write_train_artifacts(result, size_dir)
        report = _evaluate(corpus, result.params, sub, train_ids, eval_ids, profiles)
        _write_metrics(report, sub, size_dir, "metrics")
        rows.append({"hidden": size, **report})
    header = sorted({key for row in rows for key in row} - {"hidden"})
    lines = ["hidden\t" + "\t".join(header)]
    for row in rows:
        lines.append(
            str(row["hidden"]) + "\t" + "\t".join(repr(row.get(k, "")) for k in header)
        )
    (out_dir / "sweep.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / "sweep.json").write_text(
        json.dumps({"config": config, "rows": rows}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    _echo_config("sweep", config, out_dir)
    for row in rows:
        print(f"hidden={row['hidden']}\tp_at_1={row['p_at_1']}")
    return 0


_ABLATE_OPTIONS = [
    _Option("corpus", None, str, "corpus directory (required)"),
    _Option("embeddings", None, str, "embeddings file (required)"),
    _Option("out", None, str, "output directory (required)"),
    _Option("seeds", [0, 1, 2], _parse_int_list, "comma-separated seeds"),
    _FOLDS, _FOLD, _POOL, _WORKERS,
] + _HYPER_OPTIONS


def _cmd_ablate(config: dict) -> int:
    for key in ("corpus", "embeddings", "out"):
        if not config[key]:
            raise ValueError(f"--{key} is required")
    corpus = load_corpus(config["corpus"])
    table = load_embeddings(config["embeddings"])
    mode = corpus.vote_mode()
    hyper = _hyper_from(config, table.dim)
    full_profiles = community.compute_profiles(corpus, mode, hyper.profile_rank)
    rows = []
    for seed in config["seeds"]:
        split_config = dict(config)
        split_config["seed"] = seed
        train_ids, eval_ids = _split_ids(corpus, split_config)
        rows.extend(
            eval_mod.run_ablation(
                corpus, table, full_profiles, hyper, train_ids, eval_ids,
                mode=mode, seed=seed, pool_size=config["pool_size"],
                workers=config["workers"],
            )
        )
    out_dir = Path(config["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    header = sorted({key for row in rows for key in row} - {"config", "seed"})
    lines = ["config\tseed\t" + "\t".join(header)]
    for row in rows:
        lines.append(
            f"{row['config']}\t{row['seed']}\t"
            + "\t".join(repr(row.get(k, "")) for k in header)
        )
    (out_dir / "ablation.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out_dir / "ablation.json").write_text(
        json.dumps({"config": config, "rows": rows}, sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )
    _echo_config("ablate", config, out_dir)
    for row in rows:
        print(f"{row['config']}\tseed={row['seed']}\tp_at_1={row['p_at_1']}")
    return 0


_COMMANDS = {
    "generate": (_GENERATE_OPTIONS, _cmd_generate, "write a synthetic corpus"),
    "embed": (_EMBED_OPTIONS, _cmd_embed, "train word embeddings on a corpus"),
    "train": (_TRAIN_OPTIONS, _cmd_train, "train the answer-selection model"),
    "eval": (_EVAL_OPTIONS, _cmd_eval, "score pools and report metrics"),
    "sweep": (_SWEEP_OPTIONS, _cmd_sweep, "train/evaluate across hidden sizes"),
    "ablate": (_ABLATE_OPTIONS, _cmd_ablate, "run the 8-row community ablation"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqarank",
        description="community answer selection: data, embeddings, training, evaluation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (options, _, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        _add_options(p, options)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    options, handler, _ = _COMMANDS[args.command]
    try:
        config = _resolve(args, options)
        return handler(config)
    except (
        CorpusError,
        TrainingError,
        CheckpointError,
        ConvergenceError,
        ValueError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
