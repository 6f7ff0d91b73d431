"""
Command line front end.

    discredibility <subcommand> [--config experiment.toml] [section.key=value ...]

Exit status is 0 on success, 2 on configuration errors and 3 on any other
failure. Failures also leave an ``error.json`` in the output directory.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback
from pathlib import Path
from typing import List, Optional, Sequence

import emoji

from discredibility import ConfigError
from discredibility.config import (
    OUTPUT_ROOT_ENV,
    RunSettings,
    load_config,
    write_config_template,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

SUBCOMMANDS = (
    "init",
    "gen-data",
    "train",
    "attack",
    "discredit",
    "fprfpr",
    "audit",
    "hypotheses",
    "domain-shift",
)

_HELP = {
    "init": "write the default experiment config and stop",
    "gen-data": "generate or ingest the dataset and split it",
    "train": "train the victim, the shadow models and the generator",
    "attack": "score the evaluation split with every configured attack",
    "discredit": "build discrediting datasets around the claimed members",
    "fprfpr": "compare auditor and discrediting false positive rates",
    "audit": "run one audit case from claim to verdict",
    "hypotheses": "score transfer, distance and sweep experiments",
    "domain-shift": "use the unfiltered public pool as discrediting set",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discredibility",
        description="Membership inference audits and the datasets that discredit them.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help=" | ".join(f"{k}: {v}" for k, v in _HELP.items()))
    parser.add_argument("overrides", nargs="*", help="config overrides as section.key=value")
    parser.add_argument("--config", default="experiment.toml", help="experiment config toml")
    parser.add_argument("--workers", type=int, default=None, help="worker processes, 0 uses every core")
    parser.add_argument("--plots", action="store_true", help="render curve CSVs to SVG")
    parser.add_argument("--quiet", action="store_true", help="silence progress output")
    return parser


def _flag_overrides(args: argparse.Namespace) -> List[str]:
    overrides = list(args.overrides)
    if args.workers is not None:
        overrides.append(f"run.workers={args.workers}")
    if args.plots:
        overrides.append("run.render_plots=true")
    if args.quiet:
        overrides.append("run.quiet=true")
    return overrides


def _write_error(output_dir: Path, subcommand: str, error: BaseException) -> None:
    output_dir.mkdir(parents=True, exist_ok=True)
    with open(output_dir / "error.json", "w") as fh:
        json.dump(
            {
                "error": type(error).__name__,
                "message": str(error),
                "subcommand": subcommand,
            },
            fh,
            indent=1,
            sort_keys=True,
        )


def _fallback_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV) or RunSettings().output_dir)


def run(subcommand: str, config_path: Optional[str], overrides: Sequence[str] = ()) -> int:
    """
    Execute one subcommand and return its exit status.

    :param config_path: experiment config. When it does not exist, the
        default template is written there and nothing else happens.
    """
    if subcommand == "init" or (config_path is not None and not Path(config_path).exists()):
        if config_path is None:
            config_path = "experiment.toml"
        if Path(config_path).exists():
            print(f"{config_path} exists already, leaving it untouched.")
            return EXIT_OK
        write_config_template(config_path)
        print(f"I created a default configuration file {config_path}")
        print("Please edit this file as needed and run me again.")
        return EXIT_OK

    try:
        config = load_config(config_path, overrides)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        _write_error(_fallback_output_dir(), subcommand, e)
        return EXIT_CONFIG

    from discredibility.experiments import RECIPES
    from discredibility.project import Project

    started = time.time()
    project = None
    try:
        project = Project(config)
        project.print(
            f"discredibility {subcommand}",
            line_above=True,
            emoji_alias="mag",
        )
        RECIPES[subcommand](project)
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        _write_error(config.output_dir, subcommand, e)
        if project is not None:
            project.storyteller.log_run(subcommand, started, "config error")
        return EXIT_CONFIG
    except Exception as e:
        traceback.print_exc()
        _write_error(config.output_dir, subcommand, e)
        if project is not None:
            project.storyteller.log_run(subcommand, started, "failed")
        return EXIT_RUNTIME
    project.storyteller.log_run(subcommand, started, "ok")
    project.print(f"Finished {subcommand}", emoji_alias="white_check_mark", line_below=True)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> None:
    args = build_parser().parse_args(argv)
    if not args.quiet:
        print(emoji.emojize("\n :scales: | discredibility | :scales: \n", language="alias"))
    sys.exit(run(args.subcommand, args.config, _flag_overrides(args)))


if __name__ == "__main__":
    main()
