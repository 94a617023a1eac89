"""
Command-line entry point for the NAFD cell-free mmWave lab.

Verbs:
    nmse-sweep  inter-AP estimation NMSE per RF-chain count and SNR
    train       one MATD3/MADDPG run, a gamma/lr sweep, or a resumed run
    compare     learned policies against the baseline power schemes
    validate    invariant suites, written as a JSON report
    serve       HTTP job server

Every verb is a pure function of (config, master seed) to its output files.
Domain errors exit with code 2; failed validation suites exit with code 1.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config import settings
from models.experiment_models import ExperimentConfig
from utils.errors import NafdError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION_FAILED = 1
EXIT_ERROR = 2


def configure_logging() -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log_level),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(settings.log_file),
            logging.StreamHandler()
        ]
    )


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    Build the experiment configuration from --config and the override flags.

    Flags that were not given leave the file (or default) value untouched.
    """
    config = ExperimentConfig.from_json_file(args.config) if args.config else ExperimentConfig.default()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.out is not None:
        config = config.model_copy(update={"out_dir": args.out})

    train_updates = {}
    if getattr(args, "algorithm", None):
        train_updates["algorithm"] = args.algorithm
    if args.episodes is not None and args.command == "train":
        train_updates["episodes"] = args.episodes
    if train_updates:
        config = config.model_copy(update={"train": config.train.model_copy(update=train_updates)})

    updates = {}
    if args.episodes is not None and args.command == "compare":
        updates["eval_episodes"] = args.episodes
    if args.trials is not None:
        if args.command == "nmse-sweep":
            updates["nmse_trials"] = args.trials
        elif args.command == "validate":
            updates["mc_trials"] = args.trials
    for item in getattr(args, "checkpoint", None) or []:
        scheme, _, path = item.partition("=")
        if not path:
            raise ValueError(f"--checkpoint expects SCHEME=PATH, got '{item}'")
        updates.setdefault("checkpoints", dict(config.checkpoints))[scheme] = path
    if updates:
        config = config.model_copy(update=updates)

    # Re-run validators on the merged result
    return ExperimentConfig.model_validate(config.model_dump())


# ---------------------------------------------------------------------- commands

def cmd_nmse_sweep(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from services.experiment_service import nmse_sweep

    path, rows = nmse_sweep(config)
    logger.info(f"Wrote {len(rows)} NMSE rows to {path}")
    return EXIT_OK


def cmd_train(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from services.experiment_service import run_training, run_training_sweep

    if args.sweep:
        path, rows = run_training_sweep(config, args.sweep)
        logger.info(f"{args.sweep} sweep finished {len(rows)} runs; summary in {path}")
        return EXIT_OK

    log, path = run_training(config, resume_from=args.resume)
    logger.info(f"{log.algorithm} trained for {log.n_episodes} episodes; curve in {path}")
    return EXIT_OK


def cmd_compare(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from services.experiment_service import compare_schemes

    path, rows = compare_schemes(config)
    for row in rows:
        logger.info(f"{row[0]:>10}: reward {row[2]:.4f} +- {row[3]:.4f}, "
                    f"weighted rate {row[4]:.4f} +- {row[5]:.4f}")
    logger.info(f"Comparison table written to {path}")
    return EXIT_OK


def cmd_validate(config: ExperimentConfig, args: argparse.Namespace) -> int:
    from services.checkpoint_service import write_json
    from services.validation_service import run_validation

    dee_scale = -1.0 if args.inject_fault else 1.0
    report = run_validation(config, args.suites, dee_scale=dee_scale)
    path = write_json(Path(config.out_dir) / "validation_report.json", report.model_dump())
    failed = [suite.name for suite in report.suites if not suite.passed]
    if failed:
        logger.error(f"Validation failed for suites {failed}; report in {path}")
        return EXIT_VALIDATION_FAILED
    logger.info(f"All {len(report.suites)} suites passed; report in {path}")
    return EXIT_OK


def cmd_serve(config: ExperimentConfig, args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("app:app", host=args.host or settings.host, port=args.port or settings.port,
                reload=settings.debug)
    return EXIT_OK


COMMANDS = {
    "nmse-sweep": cmd_nmse_sweep,
    "train": cmd_train,
    "compare": cmd_compare,
    "validate": cmd_validate,
    "serve": cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Experiment config JSON; built-in defaults when omitted")
    common.add_argument("--seed", type=int, help="Master seed override")
    common.add_argument("--out", help="Output directory override")
    common.add_argument("--trials", type=int, help="Trial count (NMSE trials or Monte Carlo trials)")
    common.add_argument("--episodes", type=int, help="Training episodes or evaluation episodes per seed")

    parser = argparse.ArgumentParser(prog="nafd-lab", description=settings.app_name)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("nmse-sweep", parents=[common], help="Inter-AP estimation NMSE sweep")

    train = sub.add_parser("train", parents=[common], help="Train a power-allocation learner")
    train.add_argument("--algorithm", choices=["matd3", "maddpg"])
    train.add_argument("--sweep", choices=["gamma", "lr"], help="Run a hyperparameter sweep")
    train.add_argument("--resume", help="Checkpoint JSON to continue from")

    compare = sub.add_parser("compare", parents=[common], help="Compare learned and baseline schemes")
    compare.add_argument("--checkpoint", action="append", metavar="SCHEME=PATH",
                         help="Checkpoint of a learned scheme; repeatable")

    validate = sub.add_parser("validate", parents=[common], help="Run the invariant suites")
    validate.add_argument("--suites", nargs="+", help="Subset of suites to run")
    validate.add_argument("--inject-fault", action="store_true",
                          help="Flip the sign of the downlink estimation-error term (test hook)")

    serve = sub.add_parser("serve", parents=[common], help="Start the HTTP job server")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging()

    try:
        config = load_config(args)
    except (OSError, ValueError, ValidationError) as e:
        logger.error(f"Invalid configuration: {str(e)}")
        return EXIT_ERROR

    try:
        if args.command == "train" and args.sweep and args.resume:
            raise ValueError("--resume cannot be combined with --sweep")
        return COMMANDS[args.command](config, args)
    except NafdError as e:
        logger.error(f"{e.error_code}: {e.message} {e.details}")
        return EXIT_ERROR
    except ValueError as e:
        logger.error(f"Invalid arguments: {str(e)}")
        return EXIT_ERROR
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
