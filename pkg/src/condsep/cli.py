"""Command-line interface.

Subcommands:

    gen                generate a shard of mixtures
    train completion   train the metadata-completion classifier
    train separation   train a separation model in any mode
    eval completion    accuracy matrix of a completion checkpoint
    eval separation    per-condition SI-SDR report of a separation checkpoint

Relative --out paths are resolved under CONDSEP_DATA_ROOT when that variable
is set; sources come from --corpus/--rirs manifests or --synthetic.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import datagen
from .completion import CompletionTrainConfig, completion_accuracy_matrix, train_completion
from .conditioning import ATTRIBUTES
from .datagen import MixSpec, dataset_stream, load_corpus, load_rir_bank, write_shard
from .harness import (
    ExperimentConfig,
    checkpoint_save,
    experiment_config_from_dict,
    load_completion_model,
    load_separation_model,
    train_separation,
)
from .report import emit_reports, evaluate_separation

MODE_CHOICES = [
    "hct",
    "completed",
    "completion-oracle",
    "single:G",
    "single:E",
    "single:O",
    "single:S",
    "pit",
]


def data_root() -> Path:
    return Path(os.environ.get("CONDSEP_DATA_ROOT", "."))


def resolve_out(path: str) -> Path:
    """Relative output paths land under CONDSEP_DATA_ROOT (default: cwd)."""
    p = Path(path)
    return p if p.is_absolute() else data_root() / p


def _load_sources(args):
    if args.synthetic:
        return datagen.synthetic_corpus(seed=0), datagen.synthetic_rir_bank(seed=0)
    if not args.corpus or not args.rirs:
        raise SystemExit(
            "either --synthetic or both --corpus and --rirs must be given"
        )
    return load_corpus(args.corpus), load_rir_bank(args.rirs)


def _add_source_args(p):
    p.add_argument("--corpus", help="corpus manifest (JSON-lines)")
    p.add_argument("--rirs", help="RIR manifest (JSON-lines)")
    p.add_argument(
        "--synthetic",
        action="store_true",
        help="use the built-in synthetic corpus and RIR bank",
    )


def cmd_gen(args) -> int:
    corpus, rirs = _load_sources(args)
    spec = MixSpec.for_partition(args.partition)
    samples = list(
        dataset_stream(corpus, rirs, spec, epoch_seed=args.seed, n=args.n, split="test")
    )
    manifest = write_shard(samples, resolve_out(args.out))
    print(f"wrote {len(samples)} samples to {manifest.parent}")
    return 0


def cmd_train_completion(args) -> int:
    corpus, rirs = _load_sources(args)
    if args.scale == "paper":
        cfg = CompletionTrainConfig.paper(args.partition, seed=args.seed)
    else:
        cfg = CompletionTrainConfig.desk(args.partition, seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if args.n_train is not None:
        cfg = replace(cfg, n_train=args.n_train, n_val=max(32, args.n_train // 8))
    model, history = train_completion(corpus, rirs, cfg)
    out = resolve_out(args.out)
    checkpoint_save(
        out,
        kind="completion",
        model=model,
        train_config=cfg,
        epoch=cfg.epochs,
        history=history,
    )
    print(f"saved completion checkpoint to {out}")
    print(f"final val loss {history['val_loss'][-1]:.4f}")
    return 0


def cmd_train_separation(args) -> int:
    corpus, rirs = _load_sources(args)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = experiment_config_from_dict(json.load(fh))
    elif args.scale == "paper":
        cfg = ExperimentConfig.paper(
            args.mode, args.partition, seed=args.seed, completion_ckpt=args.completion_ckpt
        )
    else:
        cfg = ExperimentConfig.desk(
            args.mode, args.partition, seed=args.seed, completion_ckpt=args.completion_ckpt
        )
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    if args.n_train is not None:
        cfg = replace(cfg, n_train=args.n_train)
    if args.select:
        cfg = replace(cfg, select=args.select)
    model, history = train_separation(cfg, corpus, rirs)
    out = resolve_out(args.out)
    checkpoint_save(
        out,
        kind="separation",
        model=model,
        train_config=cfg,
        epoch=cfg.epochs,
        history=history,
    )
    print(f"saved separation checkpoint to {out}")
    print(f"final val loss {history['val_loss'][-1]:.4f}")
    return 0


def cmd_eval_completion(args) -> int:
    corpus, rirs = _load_sources(args)
    model, payload = load_completion_model(args.ckpt)
    spec = MixSpec.for_partition(args.partition)
    stream = dataset_stream(
        corpus, rirs, spec, epoch_seed=args.seed, n=args.n, split="test"
    )
    matrix = completion_accuracy_matrix(model, stream)
    out = resolve_out(args.out)
    from .report import emit_accuracy_matrix

    paths = emit_accuracy_matrix(
        matrix, out.parent if out.suffix else out, args.seed,
        meta={"ckpt": str(args.ckpt), "model_config": payload["model_config"]},
    )
    if out.suffix == ".json":
        out.write_text(paths["json"].read_text())
        paths["json"] = out
    print(f"accuracy matrix written to {paths['json']}")
    for gi, given in enumerate(ATTRIBUTES):
        cells = [
            f"{matrix[gi, pi] * 100:5.1f}%" if gi != pi else "  -  "
            for pi in range(4)
        ]
        print(f"given {given:<8} " + "  ".join(cells))
    return 0


def cmd_eval_separation(args) -> int:
    corpus, rirs = _load_sources(args)
    model, payload = load_separation_model(args.ckpt)
    mode = (payload.get("train_config") or {}).get("mode")
    if mode is None:
        mode = "pit" if model.config.condition_width == 0 else "hct"
    completion_model = None
    if args.completion_ckpt:
        completion_model, _ = load_completion_model(args.completion_ckpt)

    spec = MixSpec.for_partition(
        args.partition, model_clip_len(payload) or datagen.CLIP_LEN
    )
    samples = list(
        dataset_stream(corpus, rirs, spec, epoch_seed=args.seed, n=args.n, split="test")
    )
    report = evaluate_separation(
        model, mode, samples, completion_model, checkpoint_id=str(args.ckpt)
    )
    reports = [report]
    scatter_pair = None
    if args.compare:
        other, other_payload = load_separation_model(args.compare)
        other_mode = (other_payload.get("train_config") or {}).get("mode")
        if other_mode is None:
            other_mode = "pit" if other.config.condition_width == 0 else "hct"
        other_completion = completion_model if other_mode == "completed" else None
        other_report = evaluate_separation(
            other, other_mode, samples, other_completion, checkpoint_id=str(args.compare)
        )
        reports.append(other_report)
        scatter_pair = (report, other_report)

    out = resolve_out(args.out)
    emit_reports(reports, out, args.seed, scatter_pair=scatter_pair)
    print(f"evaluation artifacts in {out}")
    for r in reports:
        print(
            f"{r.mode}: overall {r.overall_mean_sisdr:.2f} dB, "
            f"SI-SDRi {r.mean_sisdri:.2f} dB, negative {r.n_negative_sisdr}/{r.n_samples}"
        )
    return 0


def model_clip_len(payload) -> int | None:
    tc = payload.get("train_config") or {}
    return tc.get("clip_len_samples")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="condsep",
        description="Conditional target-source extraction with metadata completion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a shard of mixtures")
    p_gen.add_argument("--partition", choices=["easy", "hard"], required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    _add_source_args(p_gen)
    p_gen.set_defaults(func=cmd_gen)

    p_train = sub.add_parser("train", help="train a model")
    train_sub = p_train.add_subparsers(dest="target", required=True)

    p_tc = train_sub.add_parser("completion")
    p_tc.add_argument("--partition", choices=["easy", "hard"], default="easy")
    p_tc.add_argument("--epochs", type=int)
    p_tc.add_argument("--n-train", type=int)
    p_tc.add_argument("--seed", type=int, default=0)
    p_tc.add_argument("--scale", choices=["paper", "desk"], default="desk")
    p_tc.add_argument("--out", required=True)
    _add_source_args(p_tc)
    p_tc.set_defaults(func=cmd_train_completion)

    p_ts = train_sub.add_parser("separation")
    p_ts.add_argument("--mode", choices=MODE_CHOICES, default="hct")
    p_ts.add_argument("--partition", choices=["easy", "hard"], default="easy")
    p_ts.add_argument("--scale", choices=["paper", "desk"], default="desk")
    p_ts.add_argument("--seed", type=int, default=0)
    p_ts.add_argument("--epochs", type=int)
    p_ts.add_argument("--n-train", type=int)
    p_ts.add_argument("--select", choices=["best", "last"])
    p_ts.add_argument("--completion-ckpt")
    p_ts.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    p_ts.add_argument("--out", required=True)
    _add_source_args(p_ts)
    p_ts.set_defaults(func=cmd_train_separation)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    eval_sub = p_eval.add_subparsers(dest="target", required=True)

    p_ec = eval_sub.add_parser("completion")
    p_ec.add_argument("--ckpt", required=True)
    p_ec.add_argument("--partition", choices=["easy", "hard"], default="easy")
    p_ec.add_argument("--n", type=int, default=256)
    p_ec.add_argument("--seed", type=int, default=0)
    p_ec.add_argument("--out", required=True)
    _add_source_args(p_ec)
    p_ec.set_defaults(func=cmd_eval_completion)

    p_es = eval_sub.add_parser("separation")
    p_es.add_argument("--ckpt", required=True)
    p_es.add_argument("--completion-ckpt")
    p_es.add_argument("--partition", choices=["easy", "hard"], default="easy")
    p_es.add_argument("--n", type=int, default=100)
    p_es.add_argument("--seed", type=int, default=0)
    p_es.add_argument("--out", required=True)
    p_es.add_argument("--compare", help="second checkpoint for a paired scatter")
    _add_source_args(p_es)
    p_es.set_defaults(func=cmd_eval_separation)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
