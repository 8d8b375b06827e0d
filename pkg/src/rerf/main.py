"""
rerf Main Module

Command-line surface of the benchmark:

    bench run --config <file>
    bench scenarios --list
    bench concrete --csv <path> --split EXT1 [EXT2 ...]
    bench intro-figure --out <dir>
    bench config {validate|show} <file>
"""

import argparse
import logging
import pathlib
import sys
import traceback
from dataclasses import dataclass, fields, replace
from typing import List, Optional, Sequence, Type

from .bench import Experiment, summarize
from .checkpoint import CheckpointError
from .config import (
    DEFAULT_OUTPUT_DIR,
    DEFAULT_REPLICATES,
    ConfigCommand,
    ConfigError,
    ConfigMain,
    ExperimentConfig,
    ExperimentKind,
    Method,
)
from .dataset import CONCRETE_RESPONSE, DatasetError, concrete_split_rules
from .report import ReportStyle, get_reporter
from .simgen import INTRO_COLUMN, SCENARIOS, MeanModel
from .tuning import SearchMethod
from .utils.logger import enable_default_logger, enable_rich_logger


def get_version() -> str:
    """Get the package version."""
    try:
        from . import __version__
        return __version__
    except ImportError:
        return "unknown"


@dataclass(frozen=True)
class Command:
    RUN          :str = 'run'
    SCENARIOS    :str = 'scenarios'
    CONCRETE     :str = 'concrete'
    INTRO_FIGURE :str = 'intro-figure'
    CONFIG       :str = 'config'


@dataclass
class MainArgs:
    # Subcommands
    command       :str = None
    config_action :str = None
    config_file   :str = None

    # Shared options
    plain      :bool = False
    verbose    :bool = False
    no_resume  :bool = False
    output_dir :str  = None

    # run
    config :str = None

    # scenarios
    list :bool = False

    # concrete / intro-figure
    csv        :str = None
    split      :List[str] = None
    replicates :int = None
    search     :str = None
    seed       :int = 0
    out        :str = None

    @classmethod
    def from_args(cls, argv: Optional[Sequence[str]] = None) -> "MainArgs":
        parser = argparse.ArgumentParser(prog='bench', description='Lasso / random forest / RERF benchmark')
        parser.add_argument('--version', action='version', version=f"%(prog)s {get_version()}")

        shared = argparse.ArgumentParser(add_help=False)
        shared.add_argument("--plain", action="store_true", help="Plain console output instead of rich")
        shared.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
        shared.add_argument("--no-resume", action="store_true", dest="no_resume",
                            help="Start from an empty run directory instead of resuming")
        shared.add_argument("-o", "--output-dir", dest="output_dir", default=None,
                            help=f"Parent directory of run directories (default: {DEFAULT_OUTPUT_DIR})")

        subparsers = parser.add_subparsers(dest='command', help='Available commands')

        parser_run = subparsers.add_parser(Command.RUN, parents=[shared], help='Run an experiment config')
        parser_run.add_argument("-c", "--config", required=True, help="Path to a YAML or JSON experiment config")

        parser_scenarios = subparsers.add_parser(Command.SCENARIOS, parents=[shared], help='Simulation scenarios')
        parser_scenarios.add_argument("--list", action="store_true", help="List registered scenarios")

        parser_concrete = subparsers.add_parser(Command.CONCRETE, parents=[shared],
                                                help='Concrete compressive strength splits')
        parser_concrete.add_argument("--csv", required=True, help="Path to the concrete strength CSV")
        parser_concrete.add_argument("--split", nargs='+', required=True,
                                     choices=list(concrete_split_rules().keys()), help="Split label(s)")
        parser_concrete.add_argument("--replicates", type=int, default=None, help="Replicates per split")
        parser_concrete.add_argument("--search", default=SearchMethod.EXHAUSTIVE,
                                     choices=SearchMethod.values(), help="RERF tuning search")
        parser_concrete.add_argument("--seed", type=int, default=cls.seed, help="Master seed")

        parser_intro = subparsers.add_parser(Command.INTRO_FIGURE, parents=[shared],
                                             help='Pointwise errors of the introductory example')
        parser_intro.add_argument("--out", required=True, help="Parent directory of the intro run directory")
        parser_intro.add_argument("--search", default=SearchMethod.APPROXIMATE,
                                  choices=SearchMethod.values(), help="RERF tuning search")
        parser_intro.add_argument("--seed", type=int, default=cls.seed, help="Master seed")

        parser_config = subparsers.add_parser(Command.CONFIG, help='Experiment config checks')
        subparsers_for_config = parser_config.add_subparsers(dest='config_action', help='Config actions')
        parser_validate = subparsers_for_config.add_parser(ConfigCommand.VALIDATE, help='Validate a config file')
        parser_validate.add_argument('config_file', help='Path to configuration file')
        parser_show = subparsers_for_config.add_parser(ConfigCommand.SHOW, help='Show the resolved config')
        parser_show.add_argument('config_file', help='Path to configuration file')

        args = parser.parse_args(argv)

        # Only pass arguments that are fields of the dataclass
        field_names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in args.__dict__.items() if k in field_names})


class Main:
    args: Type[MainArgs] = MainArgs

    @classmethod
    def run(cls, argv: Optional[Sequence[str]] = None) -> int:
        args = cls.args.from_args(argv)

        match args.command:
            case Command.CONFIG:
                return cls.run_config(args)
            case Command.SCENARIOS:
                return cls.run_scenarios(args)
            case Command.RUN:
                return cls.run_from_file(args)
            case Command.CONCRETE:
                return cls.run_concrete(args)
            case Command.INTRO_FIGURE:
                return cls.run_intro_figure(args)
            case _:
                print("Usage: bench {run|scenarios|concrete|intro-figure|config} ...")
                return 1

    @staticmethod
    def _logger(args: MainArgs, directory: pathlib.Path) -> logging.Logger:
        level = logging.DEBUG if args.verbose else logging.INFO
        if args.plain:
            return enable_default_logger(level=level, directory=directory)
        return enable_rich_logger(level=level, directory=directory)

    @classmethod
    def execute(cls, args: MainArgs, config: ExperimentConfig) -> int:
        """Run one experiment, print its summary and map the outcome to an exit code."""
        experiment = Experiment(config, resume=not args.no_resume)
        try:
            checkpoint = experiment.open_checkpoint()
        except CheckpointError as e:
            print(f"❌ {e}")
            return 1
        logger = cls._logger(args, checkpoint.logs_dir)
        experiment.logger = logger

        try:
            records = experiment.run()
        except (ConfigError, DatasetError, CheckpointError, FileNotFoundError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            return 1
        except Exception as e:
            logger.exception(f"Experiment failed: {e}")
            logger.debug(f"Full traceback:\n{traceback.format_exc()}")
            return 1

        reporter = get_reporter(ReportStyle.SIMPLE if args.plain else ReportStyle.RICH)
        reporter.report_summary(summarize(records), title=f"{config.name}: validation RMSE")
        logger.info(f"Results written to {experiment.run_dir}")

        if not experiment.completed:
            logger.error(f"{len(experiment.failures)} unit(s) failed; see failures.json")
            return 1
        return 0

    @classmethod
    def run_from_file(cls, args: MainArgs) -> int:
        try:
            config = ExperimentConfig.from_file(args.config)
        except (ConfigError, FileNotFoundError) as e:
            print(f"❌ {e}")
            return 1
        if args.output_dir:
            config = replace(config, output_dir=args.output_dir)
        return cls.execute(args, config)

    @classmethod
    def run_concrete(cls, args: MainArgs) -> int:
        rules = concrete_split_rules(seed=args.seed)
        try:
            config = ExperimentConfig(
                name=f"concrete_{'_'.join(args.split)}",
                kind=ExperimentKind.DATASET,
                methods=tuple(Method.values()),
                csv=args.csv,
                preset='concrete',
                response_column=CONCRETE_RESPONSE,
                splits=tuple(rules[label] for label in args.split),
                replicates=args.replicates or DEFAULT_REPLICATES,
                search=args.search,
                seed=args.seed,
                output_dir=args.output_dir or DEFAULT_OUTPUT_DIR,
            )
        except ConfigError as e:
            print(f"❌ {e}")
            return 1
        return cls.execute(args, config)

    @classmethod
    def run_intro_figure(cls, args: MainArgs) -> int:
        config = ExperimentConfig(
            name='intro',
            kind=ExperimentKind.SIMULATION,
            methods=(Method.RF, Method.RERF),
            scenario=SCENARIOS[MeanModel.INTRO],
            replicates=1,
            search=args.search,
            seed=args.seed,
            output_dir=args.out,
            pointwise_column=INTRO_COLUMN,
        )
        return cls.execute(args, config)

    @classmethod
    def run_scenarios(cls, args: MainArgs) -> int:
        if not args.list:
            print("Usage: bench scenarios --list")
            return 1
        get_reporter(ReportStyle.SIMPLE if args.plain else ReportStyle.RICH).report_scenarios(SCENARIOS)
        return 0

    @classmethod
    def run_config(cls, args: MainArgs) -> int:
        """Handle config subcommands"""
        match args.config_action:
            case ConfigCommand.VALIDATE:
                return ConfigMain.validate(args.config_file)
            case ConfigCommand.SHOW:
                return ConfigMain.show(args.config_file)
            case _:
                # No logger available in config subcommands, fallback to print
                print("Usage: bench config {validate|show} <file>")
                return 1


def main() -> int:
    """CLI entry point function for setuptools console_scripts."""
    return Main.run()


if __name__ == "__main__":
    sys.exit(main())
