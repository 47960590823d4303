"""Command-line entry point.

Subcommands: train, eval, sweep-k, synth, split-captions. Every config
key can come from a `key = value` file (--config) and be overridden by
a --key flag; flags win. ITERMATCH_VERBOSITY (quiet|info|debug) controls
log output. Exit codes: 0 ok, 1 usage/config error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields

from .config import RunConfig, apply_overrides, load_config
from .data import (split_caption, synth_dataset, write_embeddings,
                   write_manifest)
from .errors import ConfigError, DataError, NumericalError
from .train import format_sweep_table, k_sweep, run_eval, run_train

log = logging.getLogger("itermatch")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="key = value config file")
    type_map = {"int": int, "float": float, "str": str}
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            parser.add_argument(flag, default=None, type=_parse_bool,
                                metavar="BOOL")
        else:
            parser.add_argument(flag, default=None, type=type_map[f.type])


def _parse_bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {raw!r}")


def _build_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    apply_overrides(cfg, overrides)
    cfg.validate()
    return cfg


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    result = run_train(cfg)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def _cmd_eval(args) -> int:
    cfg = _build_config(args)
    metrics = run_eval(cfg, args.checkpoint)
    for direction in ("text_retrieval", "image_retrieval"):
        m = metrics[direction]
        values = " ".join(f"R@{k}={m.r_at[k]:.1f}" for k in sorted(m.r_at))
        print(f"{direction}: {values}")
    print(f"r_sum: {metrics['r_sum']:.1f}")
    return 0


def _cmd_sweep_k(args) -> int:
    cfg = _build_config(args)
    k_values = [int(v) for v in args.k_values.split(",") if v.strip()]
    rows = k_sweep(cfg, k_values)
    table = format_sweep_table(rows)
    print(table, end="")
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(os.path.join(cfg.out_dir, "sweep.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(table)
    return 0


def _cmd_synth(args) -> int:
    images, texts, records, _ = synth_dataset(
        args.seed, args.n_pairs, args.t_img, args.t_txt, args.d_raw,
        args.noise)
    if args.val_frac > 0 or args.test_frac > 0:
        n = len(records)
        n_test = int(n * args.test_frac)
        n_val = int(n * args.val_frac)
        for r in records[n - n_test:]:
            r.split = "test"
        for r in records[n - n_test - n_val:n - n_test]:
            r.split = "val"
    os.makedirs(args.out_dir, exist_ok=True)
    write_embeddings(os.path.join(args.out_dir, "images.bin"),
                     list(images.values()), "image")
    write_embeddings(os.path.join(args.out_dir, "texts.bin"),
                     list(texts.values()), "text")
    write_manifest(os.path.join(args.out_dir, "manifest.tsv"), records)
    print(f"wrote {len(records)} pairs to {args.out_dir}")
    return 0


def _cmd_split_captions(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    out = sys.stdout if args.out is None else open(args.out, "w",
                                                   encoding="utf-8")
    try:
        for line in lines:
            for derived in split_caption(line):
                out.write(derived + "\n")
    finally:
        if args.out is not None:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="itermatch",
                     description="cross-modal matching: train, evaluate, sweep")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_config_flags(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    _add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.set_defaults(func=_cmd_eval)

    p_sweep = sub.add_parser("sweep-k", help="train/eval across K values")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--k-values", default="1,2,3,4")
    p_sweep.set_defaults(func=_cmd_sweep_k)

    p_synth = sub.add_parser("synth", help="generate a synthetic paired dataset")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--n-pairs", type=int, default=64)
    p_synth.add_argument("--t-img", type=int, default=8)
    p_synth.add_argument("--t-txt", type=int, default=8)
    p_synth.add_argument("--d-raw", type=int, default=32)
    p_synth.add_argument("--noise", type=float, default=0.05)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--val-frac", type=float, default=0.0)
    p_synth.add_argument("--test-frac", type=float, default=0.0)
    p_synth.set_defaults(func=_cmd_synth)

    p_split = sub.add_parser("split-captions",
                             help="derive uniform captions from descriptions")
    p_split.add_argument("--input", required=True,
                         help="text file, one description per line")
    p_split.add_argument("--out", default=None)
    p_split.set_defaults(func=_cmd_split_captions)

    return parser


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO,
             "debug": logging.DEBUG}.get(
        os.environ.get("ITERMATCH_VERBOSITY", "info"), logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
