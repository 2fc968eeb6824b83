"""Command line entry point: ermv gen-data|train|edit|rollout|eval|serve."""

from __future__ import annotations

import argparse
import json
import sys

import torch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ermv", description=__doc__)
    parser.add_argument("command", choices=["gen-data", "train", "edit", "rollout", "eval", "serve"])
    parser.add_argument("--config", help="JSON run configuration", default=None)
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="dot-path config override, e.g. --set train.lr=1e-3",
    )
    parser.add_argument("--checkpoint", default=None, help="checkpoint path for edit/rollout/serve")
    parser.add_argument("--candidate", default=None, help="eval: candidate dataset dir")
    parser.add_argument("--reference", default=None, help="eval: reference dataset dir")
    parser.add_argument("--port", type=int, default=None, help="serve: port override")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .config import load_config

    cfg = load_config(args.config, args.overrides)
    torch.set_num_threads(max(1, torch.get_num_threads()))

    if args.command == "gen-data":
        from .pipeline import cmd_gen_data

        root = cmd_gen_data(cfg)
        print(f"dataset written to {root}")
    elif args.command == "train":
        from .pipeline import cmd_train

        ckpt = cmd_train(cfg)
        print(f"checkpoint written to {ckpt}")
    elif args.command == "edit":
        from .editor import cmd_edit

        result = cmd_edit(cfg, checkpoint=args.checkpoint)
        print(json.dumps({k: v for k, v in result.items() if k != "store"}, indent=1))
    elif args.command == "rollout":
        from .editor import cmd_rollout

        result = cmd_rollout(cfg, checkpoint=args.checkpoint)
        print(json.dumps(result, indent=1))
    elif args.command == "eval":
        if not args.candidate or not args.reference:
            print("eval requires --candidate and --reference", file=sys.stderr)
            return 2
        from .pipeline import cmd_eval

        print(json.dumps(cmd_eval(cfg, args.candidate, args.reference), indent=1))
    elif args.command == "serve":
        from .service import serve_review

        serve_review(cfg, port=args.port, checkpoint=args.checkpoint)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
