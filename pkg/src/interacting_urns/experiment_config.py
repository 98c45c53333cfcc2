"""
Experiment files: a sectioned INI text describing the model, the schedule,
the run sizes, the output location and the verification tolerances.

    [matrix]
    rows =
        0 1 0
        0 0 1
        1 0 0

    [attitudes]
    auto = competitive

    [run]
    n_steps = 200000
    n_runs = 50
    seed = 0
"""
import configparser
import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .common_utils import content_hash
from .dynamics import (
    Forcing,
    ForcingKind,
    InteractionSystem,
    PowerLaw,
    StepSchedule,
    UrnDefault,
    system_problems,
)
from .errors import ConfigErrors, ParseError, UrnsError, ValidationError
from .graph_core import InteractionMatrix, read_matrix_text, validate_matrix
from .harness import Thresholds
from .spectral import Attitude

logger = logging.getLogger(__name__)

DEFAULT_N_STEPS = 200_000
DEFAULT_N_RUNS = 50
DEFAULT_SEED = 0
OUTPUT_FORMATS = ("csv", "json")
# smallest accepted value of the integer run options
RUN_MINIMUMS = {"n_steps": 0, "n_runs": 1, "seed": 0}

_KNOWN_KEYS = {
    "matrix": {"rows", "file"},
    "attitudes": {"auto", "competitive", "cooperative"},
    "forcing": None,
    "stubborn": None,
    "schedule": {"kind", "m", "gamma", "scale"},
    "run": {"n_steps", "n_runs", "seed", "n_jobs", "initial"},
    "output": {"dir", "format"},
    "tolerances": {"tol", "var_min", "pass_fraction"},
}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    matrix: InteractionMatrix
    # either one attitude for every agent or an explicit per-agent table
    auto_attitude: Optional[Attitude] = None
    attitudes: Dict[int, Attitude] = field(default_factory=dict)
    forcing: Dict[int, Forcing] = field(default_factory=dict)
    stubborn: Dict[int, float] = field(default_factory=dict)
    schedule: StepSchedule = UrnDefault(1)
    n_steps: int = DEFAULT_N_STEPS
    n_runs: int = DEFAULT_N_RUNS
    seed: int = DEFAULT_SEED
    n_jobs: int = 1
    initial: Optional[Tuple[float, ...]] = None
    output_dir: Optional[str] = None
    output_format: str = "csv"
    thresholds: Thresholds = Thresholds()
    matrix_file: Optional[str] = None

    @property
    def attitude_spec(self):
        return self.auto_attitude if self.auto_attitude else self.attitudes

    def to_system(self) -> InteractionSystem:
        return InteractionSystem.build(
            self.matrix,
            self.attitude_spec,
            forcing=self.forcing,
            stubborn=self.stubborn,
            initial=self.initial,
        )

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """
        Copy with the non-None keyword arguments replaced. The run options
        are checked the same way parse_config checks them.
        """
        updated = dataclasses.replace(
            self, **{k: v for k, v in changes.items() if v is not None}
        )
        errors = run_value_problems(
            n_steps=updated.n_steps,
            n_runs=updated.n_runs,
            seed=updated.seed,
            n_jobs=updated.n_jobs,
        )
        if updated.output_format not in OUTPUT_FORMATS:
            errors.append(
                ValidationError(
                    "format",
                    f"expected one of {OUTPUT_FORMATS}, "
                    f"got {updated.output_format!r}",
                )
            )
        if errors:
            raise ConfigErrors(errors)
        return updated

    @property
    def content_hash(self) -> str:
        return content_hash(format_config(self))


def run_value_problems(**values) -> List[ValidationError]:
    """Range problems of the integer run options among ``values``."""
    errors = []
    for name, value in values.items():
        minimum = RUN_MINIMUMS.get(name)
        if minimum is not None and value < minimum:
            errors.append(
                ValidationError(name, f"must be >= {minimum}, got {value}")
            )
        elif name == "n_jobs" and value == 0:
            errors.append(ValidationError(name, "must not be 0"))
    return errors


# region Value parsers
def _agents(text: str) -> List[int]:
    return [int(token) for token in text.replace(",", " ").split()]


def _matrix_rows(text: str) -> List[List[float]]:
    rows = []
    for line in text.replace(";", "\n").splitlines():
        if line.strip():
            rows.append([float(token) for token in line.split()])
    return rows


def _forcing(text: str) -> Forcing:
    tokens = text.split()
    if not tokens:
        raise ValueError("empty forcing spec")
    kind = tokens[0]
    if kind == ForcingKind.CONSTANT.value:
        if len(tokens) != 2:
            raise ValueError("expected 'constant <q>'")
        return Forcing.constant(float(tokens[1]))
    if kind == ForcingKind.PIECEWISE.value:
        if len(tokens) < 3 or tokens[-2] != "limit":
            raise ValueError("expected 'piecewise <value>@<until> ... limit <q>'")
        segments = []
        for token in tokens[1:-2]:
            value, _, until = token.partition("@")
            if not until:
                raise ValueError(f"segment {token!r} is not <value>@<until>")
            segments.append((float(value), int(until)))
        return Forcing.piecewise(segments, float(tokens[-1]))
    raise ValueError(f"unknown forcing kind {kind!r}")


def _schedule(section) -> StepSchedule:
    kind = section.get("kind", "urn")
    if kind == "urn":
        return UrnDefault(int(section.get("m", "1")))
    if kind == "power":
        return PowerLaw(
            gamma=float(section.get("gamma", "1")),
            scale=float(section.get("scale", "0.5")),
        )
    raise ValueError(f"unknown schedule kind {kind!r}")


# endregion


def _read_parser(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigErrors([ParseError(e.lineno, "text before the first section")])
    except configparser.ParsingError as e:
        raise ConfigErrors(
            [
                ParseError(line, f"cannot parse {content!r}")
                for line, content in e.errors
            ]
        )
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as e:
        raise ConfigErrors([ParseError(e.lineno or 0, e.message)])
    return parser


def parse_config(text: str, base_dir: Optional[str] = None) -> ExperimentConfig:
    """
    Parses and validates an experiment file.
    @param text: The file content.
    @param base_dir: Directory relative matrix file paths are resolved against.
    @return: The validated ExperimentConfig.
    @raise ConfigErrors: Carrying every ParseError and ValidationError found.
    """
    parser = _read_parser(text)
    errors: List[UrnsError] = []
    values = {}

    def attempt(field_name: str, fn, *args):
        try:
            return fn(*args)
        except UrnsError as e:
            errors.append(e)
        except (ValueError, TypeError) as e:
            errors.append(ValidationError(field_name, str(e)))
        return None

    for section in parser.sections():
        known = _KNOWN_KEYS.get(section, set())
        if section not in _KNOWN_KEYS:
            errors.append(ValidationError(section, "unknown section"))
        elif known is not None:
            for key in parser[section]:
                if key not in known:
                    errors.append(ValidationError(section, f"unknown key {key!r}"))

    # matrix
    matrix = None
    if not parser.has_section("matrix"):
        errors.append(ValidationError("matrix", "missing section"))
    else:
        section = parser["matrix"]
        if ("rows" in section) == ("file" in section):
            errors.append(ValidationError("matrix", "give exactly one of rows, file"))
        elif "rows" in section:
            matrix = attempt(
                "matrix", lambda: validate_matrix(_matrix_rows(section["rows"]))
            )
        else:
            path = section["file"]
            values["matrix_file"] = path
            if base_dir and not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            try:
                with open(path, encoding="utf-8") as f:
                    matrix = attempt("matrix", read_matrix_text, f.read())
            except OSError as e:
                errors.append(ValidationError("matrix", f"cannot read {path}: {e}"))

    # attitudes
    auto, table = None, {}
    if not parser.has_section("attitudes"):
        errors.append(ValidationError("attitudes", "missing section"))
    else:
        section = parser["attitudes"]
        if "auto" in section:
            if len(section) > 1:
                errors.append(
                    ValidationError("attitudes", "auto excludes explicit agent lists")
                )
            auto = attempt("attitudes", Attitude, section["auto"].strip())
        else:
            for name in ("competitive", "cooperative"):
                for agent in attempt("attitudes", _agents, section.get(name, "")) or []:
                    if agent in table:
                        errors.append(
                            ValidationError(
                                "attitudes", f"agent {agent} assigned twice"
                            )
                        )
                    table[agent] = Attitude(name)

    forcing = {}
    if parser.has_section("forcing"):
        for key, spec in parser["forcing"].items():
            agent = attempt("forcing", int, key)
            parsed = attempt("forcing", _forcing, spec)
            if agent is not None and parsed is not None:
                forcing[agent] = parsed

    stubborn = {}
    if parser.has_section("stubborn"):
        for key, value in parser["stubborn"].items():
            agent = attempt("stubborn", int, key)
            q = attempt("stubborn", float, value)
            if agent is not None and q is not None:
                stubborn[agent] = q

    if parser.has_section("schedule"):
        schedule = attempt("schedule", _schedule, parser["schedule"])
        if schedule is not None:
            values["schedule"] = schedule

    run = parser["run"] if parser.has_section("run") else {}
    for name in ("n_steps", "n_runs", "seed", "n_jobs"):
        if name in run:
            value = attempt(name, int, run[name])
            if value is None:
                continue
            problems = run_value_problems(**{name: value})
            errors.extend(problems)
            if not problems:
                values[name] = value
    if "initial" in run:
        initial = attempt(
            "initial",
            lambda t: tuple(float(x) for x in t.split()),
            run["initial"],
        )
        if initial is not None:
            if any(not 0 <= x <= 1 for x in initial):
                errors.append(ValidationError("initial", "values must lie in [0, 1]"))
            elif matrix is not None and len(initial) not in (1, matrix.n_agents):
                errors.append(
                    ValidationError(
                        "initial",
                        f"expected 1 or {matrix.n_agents} values, "
                        f"got {len(initial)}",
                    )
                )
            else:
                values["initial"] = initial

    if parser.has_section("output"):
        output = parser["output"]
        if "dir" in output:
            values["output_dir"] = output["dir"]
        if "format" in output:
            if output["format"] in OUTPUT_FORMATS:
                values["output_format"] = output["format"]
            else:
                errors.append(
                    ValidationError("format", f"expected one of {OUTPUT_FORMATS}")
                )

    if parser.has_section("tolerances"):
        section = parser["tolerances"]
        tolerances = {}
        for name in ("tol", "var_min", "pass_fraction"):
            if name in section:
                value = attempt(name, float, section[name])
                if value is not None:
                    tolerances[name] = value
        thresholds = dataclasses.replace(Thresholds(), **tolerances)
        if thresholds.tol <= 0:
            errors.append(ValidationError("tol", "must be positive"))
        if thresholds.var_min < 0:
            errors.append(ValidationError("var_min", "must be nonnegative"))
        if not 0 < thresholds.pass_fraction <= 1:
            errors.append(ValidationError("pass_fraction", "must lie in (0, 1]"))
        values["thresholds"] = thresholds

    if matrix is not None and (auto is not None or table):
        errors.extend(
            system_problems(matrix, auto if auto else table, forcing, stubborn)
        )

    if errors:
        raise ConfigErrors(errors)

    config = ExperimentConfig(
        matrix=matrix,
        auto_attitude=auto,
        attitudes=table,
        forcing=forcing,
        stubborn=stubborn,
        **values,
    )
    logger.debug(f"Parsed experiment config {config.content_hash[:12]}")
    return config


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _format_forcing(forcing: Forcing) -> str:
    if forcing.kind is ForcingKind.CONSTANT:
        return f"constant {forcing.limit!r}"
    if forcing.kind is ForcingKind.PIECEWISE:
        segments = " ".join(f"{v!r}@{u}" for v, u in forcing.segments)
        return f"piecewise {segments} limit {forcing.limit!r}"
    raise ValidationError("forcing", "callback forcing cannot be written to a file")


def format_config(config: ExperimentConfig) -> str:
    """Canonical text of a config; parse_config reads it back unchanged."""
    lines = ["[matrix]", "rows ="]
    lines += [
        "    " + " ".join(repr(float(x)) for x in row)
        for row in config.matrix.weights
    ]

    lines += ["", "[attitudes]"]
    if config.auto_attitude:
        lines.append(f"auto = {config.auto_attitude.value}")
    else:
        for attitude in Attitude:
            agents = sorted(a for a, t in config.attitudes.items() if t is attitude)
            if agents:
                lines.append(f"{attitude.value} = {' '.join(map(str, agents))}")

    if config.forcing:
        lines += ["", "[forcing]"]
        lines += [
            f"{agent} = {_format_forcing(config.forcing[agent])}"
            for agent in sorted(config.forcing)
        ]
    if config.stubborn:
        lines += ["", "[stubborn]"]
        lines += [f"{a} = {config.stubborn[a]!r}" for a in sorted(config.stubborn)]

    lines += ["", "[schedule]"]
    if isinstance(config.schedule, UrnDefault):
        lines += ["kind = urn", f"m = {config.schedule.m}"]
    elif isinstance(config.schedule, PowerLaw):
        lines += [
            "kind = power",
            f"gamma = {config.schedule.gamma!r}",
            f"scale = {config.schedule.scale!r}",
        ]
    else:
        raise ValidationError(
            "schedule", "custom schedules cannot be written to a file"
        )

    lines += [
        "",
        "[run]",
        f"n_steps = {config.n_steps}",
        f"n_runs = {config.n_runs}",
        f"seed = {config.seed}",
        f"n_jobs = {config.n_jobs}",
    ]
    if config.initial is not None:
        lines.append("initial = " + " ".join(repr(float(x)) for x in config.initial))

    lines += ["", "[output]", f"format = {config.output_format}"]
    if config.output_dir is not None:
        lines.append(f"dir = {config.output_dir}")

    thresholds = config.thresholds
    lines += [
        "",
        "[tolerances]",
        f"tol = {thresholds.tol!r}",
        f"var_min = {thresholds.var_min!r}",
        f"pass_fraction = {thresholds.pass_fraction!r}",
    ]
    return "\n".join(lines) + "\n"
