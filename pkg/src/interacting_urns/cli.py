"""
Command line entry points: ``analyze``, ``simulate``, ``verify`` and ``limits``.

Exit status is 0 on success, 1 when a verification fails and 2 on invalid
input or I/O problems.
"""
import argparse
import inspect
import logging
import sys
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from . import config
from . import report_writer
from .common_utils import log_duration, require_dir
from .config import Parameter
from .dynamics import run_batch, sampling_grid
from .errors import NotApplicable, UrnsError, ValidationError
from .experiment_config import ExperimentConfig, load_config
from .harness import (
    VerificationReport,
    hierarchy_residuals,
    run_ensemble,
    verify_against_prediction,
)

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_ERROR = 2

COMMANDS = {
    "analyze": "Print classes, levels, drift diagnostics and limit predictions.",
    "simulate": "Write one trajectory file per run plus a manifest.",
    "verify": "Run the ensemble and check every class against its prediction.",
    "limits": "Print the forced and hierarchical limit solves.",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="interacting-urns",
        description="Analyse and simulate interacting reinforced urn systems.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, doc in COMMANDS.items():
        config.register_with(commands.add_parser(name, help=doc, description=doc))
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Loads the experiment file and applies flag and environment overrides."""
    path = config.get_value(Parameter.CONFIG, args)
    if path is None:
        raise ValidationError("config", "no experiment file given (--config)")
    experiment = load_config(path)
    return experiment.with_overrides(
        seed=config.get_value(Parameter.SEED, args, experiment.seed),
        n_runs=config.get_value(Parameter.RUNS, args, experiment.n_runs),
        n_steps=config.get_value(Parameter.STEPS, args, experiment.n_steps),
        n_jobs=config.get_value(Parameter.N_JOBS, args, experiment.n_jobs),
        output_dir=config.get_value(Parameter.OUT, args, experiment.output_dir),
        output_format=config.get_value(
            Parameter.FORMAT, args, experiment.output_format
        ).value,
    )


def cmd_analyze(experiment: ExperimentConfig) -> Dict[str, Any]:
    logger.debug(f"Entered {inspect.currentframe().f_code.co_name}")
    return report_writer.structure_report(experiment.to_system())


def cmd_limits(experiment: ExperimentConfig) -> Dict[str, Any]:
    """
    Deterministic limits of every class that has one. Affine classes always
    report their map; their value is added when every class they depend on
    has a deterministic limit.
    """
    logger.debug(f"Entered {inspect.currentframe().f_code.co_name}")
    system = experiment.to_system()
    known: Dict = {}
    classes: List[Dict[str, Any]] = []
    for key, _ in system.decomposition.classes():
        prediction = system.predictions[key]
        entry = report_writer.prediction_dict(prediction)
        if prediction.kind.is_random:
            entry["value"] = None
        else:
            try:
                known[key] = prediction.evaluate(known)
                entry["value"] = [float(v) for v in known[key]]
            except (KeyError, NotApplicable):
                entry["value"] = None
        classes.append(entry)
    return {"classes": classes}


@log_duration
def cmd_simulate(experiment: ExperimentConfig) -> List[str]:
    logger.debug(f"Entered {inspect.currentframe().f_code.co_name}")
    out_dir = require_dir(experiment.output_dir)
    system = experiment.to_system()
    trajectories = run_batch(
        system,
        experiment.schedule,
        experiment.seed,
        range(experiment.n_runs),
        experiment.n_steps,
        sampling_grid(experiment.n_steps),
    )
    files = [
        report_writer.write_trajectory(t, out_dir, experiment.output_format)
        for t in trajectories
    ]
    files.append(
        report_writer.write_manifest(
            report_writer.manifest(
                experiment.content_hash, experiment.seed, experiment.n_runs, files
            ),
            out_dir,
        )
    )
    logger.info(f"Wrote {len(files)} files to {out_dir}")
    return files


@log_duration
def cmd_verify(experiment: ExperimentConfig) -> VerificationReport:
    logger.debug(f"Entered {inspect.currentframe().f_code.co_name}")
    out_dir = require_dir(experiment.output_dir)
    system = experiment.to_system()
    stats = run_ensemble(
        system,
        experiment.schedule,
        experiment.seed,
        experiment.n_runs,
        experiment.n_steps,
        n_jobs=experiment.n_jobs,
    )
    report = verify_against_prediction(
        stats, system.predictions, experiment.thresholds
    )
    data = report.to_dict()
    data["config_hash"] = experiment.content_hash
    data["hierarchy_residuals"] = {
        f"{key[0]}.{key[1]}": {"mean": summary.mean, "max": summary.max}
        for key, summary in hierarchy_residuals(stats).items()
    }
    report_writer.write_json(data, out_dir, "report.json")
    report_writer.write_ensemble(stats, out_dir, experiment.output_format)
    return report


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    try:
        logging.basicConfig(
            format=LOG_FORMAT,
            level=config.get_value(Parameter.LOG_LEVEL, args),
        )
        experiment = resolve_config(args)
        if args.command == "analyze":
            print(report_writer.to_json(cmd_analyze(experiment)), end="")
        elif args.command == "limits":
            print(report_writer.to_json(cmd_limits(experiment)), end="")
        elif args.command == "simulate":
            cmd_simulate(experiment)
        else:
            report = cmd_verify(experiment)
            if not report.passed:
                failed = [v.class_id() for v in report.verdicts if not v.passed]
                logger.error(f"Verification failed for classes {failed}")
                return EXIT_VERIFICATION_FAILED
    except (UrnsError, OSError, ValueError) as e:
        logger.error(str(e))
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
