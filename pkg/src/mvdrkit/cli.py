"""Command line: ``mvdrkit {simulate,train,infer,eval}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .metrics import evaluate_set, format_table

log = logging.getLogger("mvdrkit")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvdrkit", description="Neural MVDR beamforming toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic multi-channel dataset")
    s.add_argument("--config", help="TOML/JSON file with a [dataset] table")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-scenes", type=int)
    s.add_argument("--workers", type=int, default=1)

    t = sub.add_parser("train", help="train a separation system")
    t.add_argument("--config", help="TOML/JSON file with [system] and [train] tables")
    t.add_argument("--out", help="run directory (checkpoints and train_log.jsonl)")
    t.add_argument("--seed", type=int)
    t.add_argument("--train-manifest")
    t.add_argument("--val-manifest")
    t.add_argument("--variant", help="override system.variant")
    t.add_argument("--max-steps", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)

    i = sub.add_parser("infer", help="enhance one mixture or every mixture of a manifest")
    i.add_argument("--checkpoint", required=True)
    src = i.add_mutually_exclusive_group(required=True)
    src.add_argument("--mixture", help="multi-channel mixture WAV")
    src.add_argument("--manifest", help="enhance every row into --out/<id>.wav")
    i.add_argument("--doa", type=float, help="target direction in radians (required with --mixture)")
    i.add_argument("--out", required=True, help="output WAV (single mixture) or directory (manifest)")

    e = sub.add_parser("eval", help="score enhanced WAVs against manifest references")
    e.add_argument("--manifest", required=True)
    e.add_argument("--enhanced", required=True, help="directory holding <id>.wav files")
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--filter-len", type=int, default=512)
    e.add_argument("--system", default="", help="row label for the table")
    return p


def _load(path):
    return cfgmod.load_config(path) if path else {}


def cmd_simulate(args):
    from .simulate import generate_dataset
    spec = cfgmod.dataset_spec(_load(args.config), seed=args.seed, n_scenes=args.n_scenes)
    path = generate_dataset(spec, args.out, workers=args.workers)
    print(f"wrote {spec.n_scenes} scenes; manifest {path}")


def cmd_train(args):
    from .system import ConfigError
    from .train import train
    cfg = _load(args.config)
    if args.variant:
        cfg = dict(cfg)
        system = dict(cfg.get("system", {}))
        system["variant"] = args.variant
        cfg["system"] = system
    tc = cfgmod.train_config(cfg, out_dir=args.out, seed=args.seed, train_manifest=args.train_manifest,
                             val_manifest=args.val_manifest, max_steps=args.max_steps, epochs=args.epochs,
                             lr=args.lr)
    if not tc.train_manifest:
        raise ConfigError("no training manifest: pass --train-manifest or set train.train_manifest")
    summary = train(tc)
    print(json.dumps(summary, indent=1, sort_keys=True))


def cmd_infer(args):
    from .train import enhance_manifest, infer
    if args.mixture is not None:
        if args.doa is None:
            log.info("no --doa given; models using the directional feature will refuse to run")
        path = infer(args.checkpoint, args.mixture, args.doa, args.out)
        print(f"wrote {path}")
    else:
        out = enhance_manifest(args.checkpoint, args.manifest, args.out)
        print(f"wrote enhanced files to {out}")


def cmd_eval(args):
    report = evaluate_set(args.manifest, args.enhanced, args.filter_len, args.system)
    print(format_table(report))
    if args.out:
        Path(args.out).write_text(report.to_json())
    if report.skipped:
        print(f"skipped (missing): {', '.join(report.skipped)}", file=sys.stderr)


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "infer": cmd_infer, "eval": cmd_eval}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .system import ConfigError
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"mvdrkit {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # surfaced as a one-line message, not a traceback
        if args.verbose:
            log.exception("command failed")
        print(f"mvdrkit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
