import argparse
import os
from enum import Enum
from typing import Any, Mapping, Optional

import logging


logger = logging.getLogger(__name__)
logger.info("Loaded " + __file__)


class OutputFormat(Enum):
    CSV = "csv"
    JSON = "json"


class Parameter(Enum):
    CONFIG = "config"
    SEED = "seed"
    RUNS = "runs"
    STEPS = "steps"
    OUT = "out"
    FORMAT = "format"
    N_JOBS = "n_jobs"
    LOG_LEVEL = "log_level"


__env_prefix = "URNS_"

__params: Mapping[Parameter, Mapping[str, Any]] = {
    Parameter.CONFIG: {
        "metavar": "PATH",
        "doc": "Experiment file (INI) describing the model and the run.",
    },
    Parameter.SEED: {
        "metavar": "U64",
        "cast_to": int,
        "doc": "Master seed; run i draws from SeedSequence(seed, spawn_key=(i,)).",
    },
    Parameter.RUNS: {
        "metavar": "N",
        "cast_to": int,
        "doc": "Number of independent runs in the ensemble.",
    },
    Parameter.STEPS: {
        "metavar": "N",
        "cast_to": int,
        "doc": "Number of steps of every run.",
    },
    Parameter.OUT: {
        "default_value": ".",
        "metavar": "DIR",
        "doc": "Existing directory the output files are written to.",
    },
    Parameter.FORMAT: {
        "allowed_values": ["csv", "json"],
        "cast_to": OutputFormat,
        "doc": "File format of trajectories and ensembles.",
    },
    Parameter.N_JOBS: {
        "metavar": "N",
        "cast_to": int,
        "doc": "Parallel workers for ensembles (-1 uses every core).",
    },
    Parameter.LOG_LEVEL: {
        "default_value": "WARNING",
        "allowed_values": ["DEBUG", "INFO", "WARNING", "ERROR"],
        "doc": "Logging level of the command line tool.",
    },
}


def env_var(parameter: Parameter) -> str:
    return f"{__env_prefix}{parameter.value}".upper()


def register_with(parser: argparse.ArgumentParser):
    """Adds the command line arguments to the parser"""
    for parameter, details in __params.items():

        # Generate the docstring for the argument
        docstring: str = details.get("doc", "No docstring for this argument")
        if "default_value" in details:
            docstring += f""" Default value - '{details["default_value"]}'."""
        if "allowed_values" in details:
            allowed = "', '".join(details["allowed_values"])
            docstring += f" Allowed values: '{allowed}'."
        docstring += f" Environment variable - {env_var(parameter)}."

        parser.add_argument(
            f"--{parameter.value.replace('_', '-')}",
            dest=parameter.value,
            metavar=details.get("metavar"),
            choices=details.get("allowed_values"),
            default=None,
            help=docstring,
        )


def get_value(
    parameter: Parameter,
    args: Optional[argparse.Namespace] = None,
    file_value: Any = None,
):
    """Gets the value for a specified option.
    Looks for the option in the following order:
    1. Command line argument
    2. Environment variable
    3. Value from the experiment file
    4. Default value
    """
    details = __params[parameter]
    value = getattr(args, parameter.value, None) if args is not None else None
    if value is None:
        value = os.getenv(env_var(parameter))
    if value is None:
        value = file_value
    if value is None:
        value = details.get("default_value")
    if value is None:
        return None

    allowed = details.get("allowed_values")
    if allowed is not None and value not in allowed:
        raise ValueError(
            f"invalid value {value!r} for --{parameter.value}, "
            f"expected one of {allowed}"
        )

    # Cast the value to the specified type, if needed
    if "cast_to" in details and not isinstance(value, details["cast_to"]):
        try:
            value = details["cast_to"](value)
        except ValueError:
            raise ValueError(f"invalid value {value!r} for --{parameter.value}")
    return value
