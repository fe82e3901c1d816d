"""Command-line entry point: data synthesis, training, evaluation, ablation
and feature export.

Exit codes: 0 success, 2 usage or configuration error, 3 non-finite loss.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from moegan import checkpoint as ckpt
from moegan import tensor as T
from moegan.config import ConfigError, RunConfig, load_config
from moegan.data import DataError, Vocab, read_corpus, read_vocab, write_corpus, write_vocab
from moegan.evaluation import Evaluator, MetricsRow, OracleModel, build_oracle, csv_header, oracle_generate
from moegan.features import copy_to_auxiliary, features
from moegan.generator import generate_hard
from moegan.rng import make_generator
from moegan.training import NonFiniteLossError, Trainer, TrainConfig, models_from_entries

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
CHECKPOINT_NAME = "latest.moeg"
VARIANTS = ("base", "n_g1", "no_fsa")


class UsageError(Exception):
    pass


def _fail(message: str) -> int:
    print(f"moegan: error: {message}", file=sys.stderr)
    return EXIT_USAGE


# ---------------------------------------------------------------- shared helpers


def metrics_csv(rows) -> str:
    return csv_header() + "\n" + "".join(",".join(r.csv_fields()) + "\n" for r in rows)


def _require_file(path: Path | None, what: str) -> Path:
    if path is None or not path.is_file():
        raise UsageError(f"{what} not found: {path}")
    return path


def load_oracle(path) -> OracleModel:
    return OracleModel.from_entries(ckpt.load(_require_file(Path(path), "oracle checkpoint")))


@dataclass
class RunInputs:
    vocab: Vocab
    corpus: np.ndarray
    test_corpus: np.ndarray
    oracle: OracleModel | None


def load_inputs(cfg: RunConfig) -> RunInputs:
    """Read and cross-check every input file; creates nothing."""
    vocab = read_vocab(_require_file(cfg.path("vocab"), "vocabulary"))
    corpus = read_corpus(_require_file(cfg.path("corpus"), "corpus"), vocab)
    test = read_corpus(_require_file(cfg.path("test_corpus"), "test corpus"), vocab)
    oracle = None
    if cfg.oracle:
        oracle = load_oracle(cfg.path("oracle"))
        if oracle.vocab_size != len(vocab):
            raise DataError(f"oracle vocabulary size {oracle.vocab_size} != vocabulary file size {len(vocab)}")
    if len(corpus) < cfg.train.batch_size:
        raise DataError(f"corpus has {len(corpus)} sentences, fewer than batch_size {cfg.train.batch_size}")
    return RunInputs(vocab, corpus, test, oracle)


def checkpoint_entries(trainer: Trainer, vocab: Vocab, state: dict | None = None) -> dict:
    entries = dict(state if state is not None else trainer.state_entries())
    entries["meta.vocab"] = ckpt.encode_text(vocab.text())
    return entries


def run_training(train_cfg: TrainConfig, inputs: RunInputs, out_dir: Path, resume: Path | None = None,
                 config_text: str | None = None, log=print) -> Trainer:
    """Train into ``out_dir``: metrics.csv, effective_config.txt and
    checkpoints/latest.moeg (rewritten at every evaluation)."""
    evaluator = Evaluator(inputs.test_corpus, inputs.corpus.shape[1], oracle=inputs.oracle,
                          n_samples=train_cfg.eval_samples, seed=train_cfg.seed)
    trainer = Trainer(train_cfg, inputs.corpus, len(inputs.vocab), evaluator)
    if resume is not None:
        entries = ckpt.load(_require_file(resume, "checkpoint"))
        trainer.load_entries(entries)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    if config_text is not None:
        (out_dir / "effective_config.txt").write_text(config_text, encoding="utf-8")
    metrics_path = out_dir / "metrics.csv"
    metrics_path.write_text(metrics_csv(trainer.history), encoding="utf-8")
    snapshot: dict = {}

    def on_start(tr: Trainer) -> None:
        snapshot["state"] = tr.state_entries()

    def on_eval(row: MetricsRow | None, tr: Trainer) -> None:
        metrics_path.write_text(metrics_csv(tr.history), encoding="utf-8")
        ckpt.save(ckpt_dir / CHECKPOINT_NAME, checkpoint_entries(tr, inputs.vocab))
        if row is not None:
            oracle = "-" if row.nll_oracle is None else f"{row.nll_oracle:.4f}"
            log(f"iter {row.iteration:5d}  nll_oracle {oracle}  nll_gen {row.nll_gen:.4f}  bleu4 {row.bleu4:.4f}")

    try:
        trainer.run(on_eval=on_eval, on_iteration_start=on_start)
    except NonFiniteLossError:
        if "state" in snapshot:
            ckpt.save(ckpt_dir / CHECKPOINT_NAME, checkpoint_entries(trainer, inputs.vocab, snapshot["state"]))
        raise
    return trainer


def variant_config(base: TrainConfig, variant: str) -> TrainConfig:
    if variant == "base":
        return base
    if variant == "n_g1":
        return dataclasses.replace(base, n_experts=1)
    if variant == "no_fsa":
        return dataclasses.replace(base, fsa_weight=0.0)
    raise ValueError(f"unknown variant {variant!r}")


def mean_rows(per_seed: list[list[MetricsRow]]) -> list[MetricsRow]:
    """Element-wise mean over seeds of rows on a shared iteration grid."""
    grids = {tuple(r.iteration for r in rows) for rows in per_seed}
    if len(grids) != 1:
        raise ValueError("seed runs have different evaluation grids")
    out = []
    for rows in zip(*per_seed):
        values = np.array([r.as_floats() for r in rows], dtype=np.float64)
        mean = [rows[0].iteration] + [float(v) for v in values[:, 1:].mean(axis=0)]
        out.append(MetricsRow.from_values(mean))
    return out


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    if args.vocab < 1 or args.len < 1 or args.count < 1:
        return _fail("--vocab, --len and --count must be >= 1")
    out = Path(args.out)
    oracle = build_oracle(args.vocab, args.hidden, seed=args.seed)
    train = oracle_generate(oracle, args.count, args.len, seed=args.seed, stream="oracle-train")
    test = oracle_generate(oracle, args.test_count or args.count, args.len, seed=args.seed, stream="oracle-test")
    vocab = Vocab.synthetic(args.vocab)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_corpus(out / "train.txt", train, vocab)
        write_corpus(out / "test.txt", test, vocab)
        write_vocab(out / "vocab.txt", vocab)
        ckpt.save(out / "oracle.moeg", oracle.to_entries())
    except OSError as exc:
        return _fail(f"cannot write to {out}: {exc.strerror or exc}")
    print(f"wrote {args.count} training and {len(test)} test sentences to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    inputs = load_inputs(cfg)
    resume = Path(args.resume) if args.resume else None
    if resume is not None:
        _require_file(resume, "checkpoint")
    run_training(cfg.train, inputs, cfg.path("out_dir"), resume=resume, config_text=cfg.text())
    return EXIT_OK


def cmd_eval(args) -> int:
    entries = ckpt.load(_require_file(Path(args.ckpt), "checkpoint"))
    config, gen, _ = models_from_entries(entries)
    if "meta.vocab" not in entries:
        raise ckpt.CheckpointError("checkpoint carries no vocabulary")
    vocab = Vocab(ckpt.decode_text(entries["meta.vocab"]).split("\n")[:-1])
    test = read_corpus(_require_file(Path(args.test), "test corpus"), vocab)
    oracle = load_oracle(args.oracle) if args.oracle else None
    seq_len = int(entries["meta.seq_len"][0])
    iteration = int(entries["meta.iteration"][0])
    evaluator = Evaluator(test, seq_len, oracle=oracle, n_samples=args.samples or config.eval_samples,
                          seed=config.seed if args.seed is None else args.seed)
    row = evaluator(gen, iteration)
    text = metrics_csv([row])
    sys.stdout.write(text)
    if args.samples_out:
        write_corpus(args.samples_out, evaluator.samples(gen, iteration), vocab)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = load_config(args.config)
    inputs = load_inputs(cfg)
    out = cfg.path("out_dir")
    finals: dict[str, list[MetricsRow]] = {}
    for variant in VARIANTS:
        per_seed = []
        for seed in cfg.ablation_seeds:
            train_cfg = dataclasses.replace(variant_config(cfg.train, variant), seed=seed)
            run_cfg = dataclasses.replace(cfg, train=train_cfg)
            print(f"[{variant} seed {seed}]")
            trainer = run_training(train_cfg, inputs, out / variant / f"seed{seed}", config_text=run_cfg.text())
            per_seed.append(trainer.history)
        mean = mean_rows(per_seed)
        (out / f"{variant}.csv").write_text(metrics_csv(mean), encoding="utf-8")
        finals[variant] = [rows[-1] for rows in per_seed]
    lines = ["variant,seeds,mean_final_nll_oracle,mean_final_nll_gen"]
    for variant, rows in finals.items():
        oracle_vals = [r.nll_oracle for r in rows if r.nll_oracle is not None]
        mean_oracle = repr(float(np.mean(oracle_vals))) if oracle_vals else ""
        lines.append(f"{variant},{' '.join(str(s) for s in cfg.ablation_seeds)},{mean_oracle},"
                     f"{float(np.mean([r.nll_gen for r in rows]))!r}")
    (out / "summary.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return EXIT_OK


def cmd_dump_features(args) -> int:
    entries = ckpt.load(_require_file(Path(args.ckpt), "checkpoint"))
    config, gen, disc = models_from_entries(entries)
    if "meta.vocab" not in entries:
        raise ckpt.CheckpointError("checkpoint carries no vocabulary")
    vocab = Vocab(ckpt.decode_text(entries["meta.vocab"]).split("\n")[:-1])
    real = read_corpus(_require_file(Path(args.corpus), "corpus"), vocab)
    seq_len = int(entries["meta.seq_len"][0])
    encoder = copy_to_auxiliary(disc)
    fake = generate_hard(gen, seq_len, make_generator(config.seed if args.seed is None else args.seed,
                                                      "dump-features"), batch_size=len(real))
    lines = []
    with T.no_grad():
        for label, batch in (("real", real), ("fake", fake)):
            for start in range(0, len(batch), 256):
                feats = features(encoder, batch[start:start + 256]).data
                lines.extend(label + "," + ",".join(repr(float(v)) for v in row) for row in feats)
    try:
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        return _fail(f"cannot write {args.out}: {exc.strerror or exc}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moegan", description="Mixture-of-experts text GAN with feature alignment.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesise an oracle, corpora and a vocabulary")
    p.add_argument("--vocab", type=int, required=True, help="vocabulary size")
    p.add_argument("--len", type=int, required=True, help="sentence length")
    p.add_argument("--count", type=int, required=True, help="training sentences")
    p.add_argument("--test-count", type=int, default=None, help="test sentences (default: --count)")
    p.add_argument("--hidden", type=int, default=32, help="oracle hidden size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="pretrain and run the adversarial loop")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--test", required=True, help="reference corpus")
    p.add_argument("--oracle", default=None, help="oracle checkpoint for nll_oracle")
    p.add_argument("--out", default=None, help="also write the row to this CSV")
    p.add_argument("--samples", type=int, default=None, help="generated samples (default: eval_samples)")
    p.add_argument("--samples-out", default=None, help="write the generated samples here")
    p.add_argument("--seed", type=int, default=None, help="sampling seed (default: training seed)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="full model, single expert and no-alignment variants over seeds")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("dump-features", help="export frozen-encoder features of real and generated text")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_dump_features)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, DataError, ckpt.CheckpointError) as exc:
        return _fail(str(exc))
    except NonFiniteLossError as exc:
        print(f"moegan: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        return _fail(f"{exc.filename or ''}: {exc.strerror or exc}")


if __name__ == "__main__":
    sys.exit(main())
