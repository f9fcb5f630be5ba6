"""Command-line pipeline: gen-data, train-codec, train-model, generate, evaluate, inspect.

Every subcommand reads ``--config`` (JSON) plus ``--set key=value`` overrides and
works inside the configured ``workdir``::

    workdir/data/{train,test}/   synthetic corpora
    workdir/codec/               codec checkpoint
    workdir/model/               model checkpoint
    workdir/generated/           generated corpus (test music, generated motion, true beats)
    workdir/metrics.csv          evaluate output
    workdir/inspect/             attention heatmaps

Exit codes: 0 success, 2 usage, 3 config, 4 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import kernels
from .codec import CodeSequence, codec_state, decode, encode, load_codec, train_codec
from .config import ConfigError, ExperimentConfig
from .data import (
    PairedSample,
    TensorFileError,
    joint_split,
    load_checkpoint,
    read_corpus,
    save_checkpoint,
    synth_dataset,
    write_corpus,
    write_tensor,
)
from .metrics import CSV_HEADER, evaluate_corpus, per_sequence_rows
from .model import attention_maps, generate, init_model, load_model, make_tokens, model_state, train

log = logging.getLogger("rhythmdance")

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _paths(cfg: ExperimentConfig) -> dict[str, Path]:
    w = cfg.workdir
    return {"train": w / "data" / "train", "test": w / "data" / "test", "codec": w / "codec",
            "model": w / "model", "generated": w / "generated", "metrics": w / "metrics.csv",
            "inspect": w / "inspect"}


def _corpus(cfg: ExperimentConfig, which: str) -> list[PairedSample]:
    return read_corpus(_paths(cfg)[which], cfg.synth.fps, cfg.codec.lam)


def _codec(cfg: ExperimentConfig):
    return load_codec(cfg.codec_config(), joint_split(), load_checkpoint(_paths(cfg)["codec"]))


# subcommands -------------------------------------------------------------------
def cmd_gen_data(cfg: ExperimentConfig, args) -> int:
    paths = _paths(cfg)
    for which, test in (("train", False), ("test", True)):
        samples = synth_dataset(cfg.synth_config(test), cfg.codec.lam)
        write_corpus(paths[which], samples)
        log.info("wrote %d %s samples to %s", len(samples), which, paths[which])
    return EXIT_OK


def cmd_train_codec(cfg: ExperimentConfig, args) -> int:
    samples = _corpus(cfg, "train")
    codec, curve = train_codec([s.motion for s in samples], cfg.codec_config())
    save_checkpoint(_paths(cfg)["codec"], codec_state(codec))
    print(f"codec loss {curve[0]:.6f} -> {curve[-1]:.6f}")
    return EXIT_OK


def cmd_train_model(cfg: ExperimentConfig, args) -> int:
    samples = _corpus(cfg, "train")
    codec = _codec(cfg)
    codes = [encode(s.motion, codec) for s in samples]
    tokens = make_tokens([s.music.values for s in samples], [u.codes for u, _ in codes],
                         [l.codes for _, l in codes], cfg.stft_config())
    params = init_model(cfg.model_config(), np.random.default_rng(cfg.seed))
    curve = train(tokens, params, cfg.train_config())
    out = _paths(cfg)["model"]
    save_checkpoint(out, model_state(params))
    write_tensor(out.parent / "loss_curve.dbt", np.asarray(curve))
    print(f"model loss {curve[0]:.6f} -> {curve[-1]:.6f}")
    return EXIT_OK


def cmd_generate(cfg: ExperimentConfig, args) -> int:
    samples = _corpus(cfg, "test")[: cfg.generate.n_pieces]
    codec = _codec(cfg)
    params = load_model(cfg.model_config(), load_checkpoint(_paths(cfg)["model"]))
    rng = np.random.default_rng(cfg.seed)
    lam = cfg.codec.lam
    out, all_codes = [], []
    for s in samples:
        up, low = encode(s.motion, codec)  # only the first code of each half seeds generation
        cu, cl = generate(s.music.values, int(up.codes[0]), int(low.codes[0]), params,
                          cfg.generate.temperature, rng)
        motion = decode(CodeSequence(cu, "upper", lam), CodeSequence(cl, "lower", lam), codec, cfg.synth.fps)
        out.append(PairedSample(s.music, motion, s.true_beats))
        all_codes.append(np.stack([cu, cl]))
    gen_dir = _paths(cfg)["generated"]
    write_corpus(gen_dir, out)
    write_tensor(gen_dir / "codes.dbt", np.stack(all_codes).astype(np.float64))
    print(f"generated {len(out)} pieces in {gen_dir}")
    return EXIT_OK


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    gen_dir = Path(args.generated) if args.generated else _paths(cfg)["generated"]
    generated = read_corpus(gen_dir, cfg.synth.fps, cfg.codec.lam)
    reference = _corpus(cfg, "train")
    sigma, gap = cfg.metrics.sigma, cfg.metrics.min_gap
    music = [g.music for g in generated]
    report = evaluate_corpus([g.motion for g in generated], [r.motion for r in reference], music, sigma, gap)
    text = f"{CSV_HEADER}\n{report.csv_line()}\n"
    sys.stdout.write(text)
    print(report.table())
    out = Path(args.out) if args.out else _paths(cfg)["metrics"]
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    if args.per_sequence:
        rows = per_sequence_rows([g.motion for g in generated], music, sigma, gap)
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()} for r in rows)
        Path(args.per_sequence).write_text(buf.getvalue())
    return EXIT_OK


def cmd_inspect(cfg: ExperimentConfig, args) -> int:
    samples = _corpus(cfg, "test")
    if not 0 <= args.index < len(samples):
        raise UsageError(f"--index must be in [0, {len(samples)})")
    s = samples[args.index]
    up, low = encode(s.motion, _codec(cfg))
    params = load_model(cfg.model_config(), load_checkpoint(_paths(cfg)["model"]))
    # the model sees music frames 1..T' against codes 0..T'-1
    maps = attention_maps(s.music.values[1:], up.codes[:-1], low.codes[:-1], params)
    if args.block >= len(maps):
        raise UsageError(f"--block must be in [0, {len(maps)})")
    heat = maps[args.block]
    out = _paths(cfg)["inspect"]
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "heatmap.dbt", heat)
    np.savetxt(out / "heatmap.csv", heat, delimiter=",", fmt="%.8f")
    print(f"heatmap {heat.shape[0]}x{heat.shape[1]} (block {args.block}) written to {out}")
    return EXIT_OK


COMMANDS = {
    "gen-data": (cmd_gen_data, "write the synthetic train/test corpora"),
    "train-codec": (cmd_train_codec, "fit the half-body pose codec"),
    "train-model": (cmd_train_model, "train the token model on codec codes"),
    "generate": (cmd_generate, "generate motion for the test music"),
    "evaluate": (cmd_evaluate, "print FID/diversity/BAS for a generated corpus"),
    "inspect": (cmd_inspect, "dump an attention heatmap"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhythmdance", description="Rhythm-aware music-to-dance toy pipeline.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field, e.g. train.steps=100 (repeatable)")
        if name == "evaluate":
            p.add_argument("--generated", help="generated corpus directory (default: workdir/generated)")
            p.add_argument("--out", help="CSV output path (default: workdir/metrics.csv)")
            p.add_argument("--per-sequence", metavar="PATH", help="also write per-sequence rows as CSV")
        if name == "inspect":
            p.add_argument("--index", type=int, default=0, help="test sample index")
            p.add_argument("--block", type=int, default=0, help="attention block index")
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help and 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(stream=sys.stderr, level=args.log_level, format="%(levelname)s %(name)s: %(message)s",
                        force=True)
    try:
        cfg = config_mod.load(args.config, args.set)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("scan backend: %s", kernels.BACKEND)
    log.info("resolved config:\n%s", cfg.dumps())
    func = COMMANDS[args.command][0]
    try:
        if args.command == "inspect" and args.block < 0:
            raise UsageError("--block must be >= 0")
        return func(cfg, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TensorFileError, FileNotFoundError, ValueError, IndexError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
