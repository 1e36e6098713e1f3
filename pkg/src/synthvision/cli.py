"""Command-line entry point.

    synthvision <command> --config path [--profile paper|desk] [--seed N]
                [--overwrite] [--print-config]

Commands: seed-data, finetune, generate, curate, build-dataset, train,
evaluate, pipeline. Exit codes: 0 success, 2 usage or config error,
1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ConfigError, print_config, resolve_config
from .pipeline import (
    StageAlreadyDone, StageError, curation_service, run_lock, run_pipeline,
    stage_build_dataset, stage_curate_auto, stage_evaluate, stage_finetune,
    stage_generate, stage_seed_data, stage_train,
)

COMMANDS = ("seed-data", "finetune", "generate", "curate", "build-dataset",
            "train", "evaluate", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthvision",
        description="guide images -> fine-tuned diffusion -> curated synthetic "
                    "dataset -> classifier -> evaluation report",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--profile", choices=("paper", "desk"), default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--overwrite", action="store_true",
                       help="redo the stage even if state.json marks it complete")
        p.add_argument("--print-config", action="store_true",
                       help="emit the fully resolved config JSON and exit")
        if name == "curate":
            p.add_argument("--host", default="127.0.0.1")
            p.add_argument("--auto", action="store_true",
                           help="run the scripted quality oracle instead of serving")
    return parser


def _cmd_curate(config: dict, args) -> int:
    if args.auto:
        summary = stage_curate_auto(config, args.overwrite)
        print(json.dumps(summary))
        return 0
    service = curation_service(config)
    if service.state().total == 0:
        print("error: manifest holds no synthetic records to review", file=sys.stderr)
        return 2
    from .server import make_app, serve

    app = make_app(service, config["data_root"],
                   target_accepted=config["curation"]["target_accepted"])
    print(f"serving review queue on http://{args.host}:{config['curation']['port']}")
    serve(app, host=args.host, port=int(config["curation"]["port"]))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args.config, args.profile, args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.print_config:
        print(print_config(config))
        return 0

    try:
        with run_lock(config["run_dir"]):
            if args.command == "seed-data":
                path = stage_seed_data(config, args.overwrite)
                print(f"wrote {path}")
            elif args.command == "finetune":
                path = stage_finetune(config, args.overwrite)
                print(f"final checkpoint: {path}")
            elif args.command == "generate":
                path = stage_generate(config, args.overwrite)
                print(f"manifest updated: {path}")
            elif args.command == "curate":
                return _cmd_curate(config, args)
            elif args.command == "build-dataset":
                path = stage_build_dataset(config, args.overwrite)
                print(f"built dataset: {path}")
            elif args.command == "train":
                path = stage_train(config, args.overwrite)
                print(f"model: {path}")
            elif args.command == "evaluate":
                summary = stage_evaluate(config, args.overwrite)
                print(json.dumps(summary, indent=2))
            elif args.command == "pipeline":
                results = run_pipeline(config, args.overwrite)
                print(json.dumps(results, indent=2))
                if results.get("paused_at"):
                    print(results["message"], file=sys.stderr)
    except (ConfigError, StageAlreadyDone) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # runtime failures keep exit code 1
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
