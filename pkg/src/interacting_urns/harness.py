"""
Seeded ensembles of runs and their verification against predicted limits.
"""
import inspect
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed, effective_n_jobs

from .common_utils import log_duration
from .dynamics import InteractionSystem, StepSchedule, run_batch, sampling_grid
from .errors import (
    MismatchedShapes,
    NotApplicable,
    TooFewRuns,
    ValidationError,
)
from .graph_core import ClassKey
from .spectral import LimitKind, LimitPrediction, hierarchical_limit

logger = logging.getLogger(__name__)
logger.info("Loaded " + __file__)

MIN_NONDEGENERACY_RUNS = 30
HISTOGRAM_BINS = 10


# region Diagnostics
def sync_gap(states: np.ndarray, members: Sequence[int]) -> np.ndarray:
    """max_i Z(i) - min_i Z(i) over the class, per run."""
    block = states[..., list(members)]
    return block.max(axis=-1) - block.min(axis=-1)


def antisync_residual(
    states: np.ndarray, partition: Tuple[Sequence[int], Sequence[int]]
) -> np.ndarray:
    """max over i in I, j in J of |Z(i) + Z(j) - 1|, per run."""
    side_i = states[..., list(partition[0])]
    side_j = states[..., list(partition[1])]
    pairs = side_i[..., :, None] + side_j[..., None, :] - 1.0
    return np.abs(pairs).max(axis=(-2, -1))


def half_distance(states: np.ndarray, members: Sequence[int]) -> np.ndarray:
    return np.abs(states[..., list(members)] - 0.5).max(axis=-1)


@dataclass(frozen=True, eq=False)
class ClassDiagnostics:
    sync_gap: np.ndarray
    half_distance: np.ndarray
    antisync_residual: Optional[np.ndarray] = None


# endregion


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """
    Sampled states of every run, shape (runs, samples, agents), with the
    sample steps they were taken at.
    """

    system: InteractionSystem
    master_seed: int
    n_steps: int
    sample_steps: np.ndarray
    samples: np.ndarray

    @property
    def n_runs(self) -> int:
        return self.samples.shape[0]

    @property
    def finals(self) -> np.ndarray:
        return self.samples[:, -1, :]

    @cached_property
    def mean(self) -> np.ndarray:
        return self.finals.mean(axis=0)

    @cached_property
    def variance(self) -> np.ndarray:
        if self.n_runs < 2:
            return np.zeros(self.samples.shape[-1])
        return self.finals.var(axis=0, ddof=1)

    def states_at(self, step: int) -> np.ndarray:
        idx = np.searchsorted(self.sample_steps, step)
        if idx >= len(self.sample_steps) or self.sample_steps[idx] != step:
            raise KeyError(f"step {step} was not sampled")
        return self.samples[:, idx, :]

    def diagnostics_at(
        self, step: Optional[int] = None
    ) -> Dict[ClassKey, ClassDiagnostics]:
        states = self.finals if step is None else self.states_at(step)
        result = {}
        for key, prediction in self.system.predictions.items():
            result[key] = ClassDiagnostics(
                sync_gap=sync_gap(states, prediction.members),
                half_distance=half_distance(states, prediction.members),
                antisync_residual=(
                    antisync_residual(states, prediction.partition)
                    if prediction.partition is not None
                    else None
                ),
            )
        return result

    @cached_property
    def class_diagnostics(self) -> Dict[ClassKey, ClassDiagnostics]:
        return self.diagnostics_at()


def _batches(n_runs: int, n_batches: int) -> List[List[int]]:
    size = math.ceil(n_runs / max(1, n_batches))
    return [list(range(s, min(s + size, n_runs))) for s in range(0, n_runs, size)]


@log_duration
def run_ensemble(
    system: InteractionSystem,
    schedule: StepSchedule,
    master_seed: int,
    n_runs: int,
    n_steps: int,
    checkpoints: Sequence[int] = (),
    n_jobs: int = 1,
) -> EnsembleStats:
    """
    Runs ``n_runs`` independent seeded runs. Runs are split in one batch per
    job; results are reassembled by run index, so the statistics do not
    depend on ``n_jobs``.
    """
    logger.debug(f"Entered {inspect.currentframe().f_code.co_name}")
    if n_runs < 1:
        raise TooFewRuns(n_runs, 1)
    if n_steps < 0:
        raise ValidationError("n_steps", f"must be nonnegative, got {n_steps}")
    grid = sampling_grid(n_steps, checkpoints)
    batches = _batches(n_runs, min(n_runs, effective_n_jobs(n_jobs)))
    logger.info(
        f"Ensemble of {n_runs} runs x {n_steps} steps, seed {master_seed}, "
        f"{len(batches)} batch(es)"
    )
    results = Parallel(n_jobs=n_jobs)(
        delayed(run_batch)(system, schedule, master_seed, batch, n_steps, grid)
        for batch in batches
    )
    trajectories = sorted(
        (t for batch in results for t in batch), key=lambda t: t.run_index
    )
    return EnsembleStats(
        system=system,
        master_seed=master_seed,
        n_steps=n_steps,
        sample_steps=grid,
        samples=np.stack([t.states for t in trajectories]),
    )


# region Verification
@dataclass(frozen=True)
class Thresholds:
    tol: float = 0.02
    var_min: float = 1e-3
    # share of runs that must satisfy a per-run check
    pass_fraction: float = 1.0


@dataclass(frozen=True)
class NondegeneracyEvidence:
    agent: int
    variance: float
    var_min: float
    passed: bool
    histogram: Tuple[int, ...]
    bin_edges: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "agent": self.agent,
            "variance": self.variance,
            "var_min": self.var_min,
            "pass": self.passed,
            "histogram": list(self.histogram),
            "bin_edges": list(self.bin_edges),
        }


@dataclass(frozen=True)
class ClassVerdict:
    class_key: ClassKey
    members: Tuple[int, ...]
    kind: LimitKind
    statistic_name: str
    statistic: float
    threshold: float
    structure_passed: bool
    nondegeneracy: Optional[NondegeneracyEvidence] = None

    @property
    def passed(self) -> bool:
        if self.nondegeneracy is not None and not self.nondegeneracy.passed:
            return False
        return self.structure_passed

    def class_id(self) -> str:
        return f"{self.class_key[0]}.{self.class_key[1]}"


@dataclass(frozen=True)
class VerificationReport:
    verdicts: Tuple[ClassVerdict, ...]
    n_steps: int
    n_runs: int
    seed: int
    thresholds: Thresholds

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pass": self.passed,
            "n_runs": self.n_runs,
            "n_steps": self.n_steps,
            "seed": self.seed,
            "thresholds": {
                "tol": self.thresholds.tol,
                "var_min": self.thresholds.var_min,
                "pass_fraction": self.thresholds.pass_fraction,
                "var_min_note": "var_min is a calibration convention, "
                "not a proven bound on the limit variance",
            },
            "classes": [
                {
                    "class_id": v.class_id(),
                    "members": list(v.members),
                    "kind": v.kind.value,
                    "statistic_name": v.statistic_name,
                    "statistic": v.statistic,
                    "threshold": v.threshold,
                    "pass": v.passed,
                    "structure_pass": v.structure_passed,
                    "nondegeneracy": (
                        v.nondegeneracy.to_dict() if v.nondegeneracy else None
                    ),
                    "n_runs": self.n_runs,
                    "n_steps": self.n_steps,
                    "seed": self.seed,
                }
                for v in self.verdicts
            ],
        }


def _order_statistic(values: np.ndarray, pass_fraction: float) -> float:
    """Value that a ``pass_fraction`` share of runs stays at or below."""
    ordered = np.sort(values)
    rank = max(1, math.ceil(pass_fraction * len(ordered) - 1e-9))
    return float(ordered[rank - 1])


def _predicted_per_run(
    stats: EnsembleStats, predictions: Mapping[ClassKey, LimitPrediction]
) -> Dict[ClassKey, np.ndarray]:
    """
    Predicted limits of deterministic and affine classes, per run. Level-0
    classes keep their own prediction; affine classes are evaluated on the
    run's realised level-0 states.
    """
    system = stats.system
    level0 = [key for key in predictions if key[0] == 0]
    per_run: Dict[ClassKey, List[np.ndarray]] = {key: [] for key in predictions}
    for finals in stats.finals:
        realised = {
            key: finals[list(predictions[key].members)] for key in level0
        }
        values = hierarchical_limit(
            system.decomposition,
            system.class_attitudes,
            realised,
            predictions=predictions,
        )
        for key, value in values.items():
            if key[0] == 0:
                value = predictions[key].value
            per_run[key].append(value)
    return {
        key: np.stack(v)
        for key, v in per_run.items()
        if v and all(x is not None for x in v)
    }


def verify_against_prediction(
    stats: EnsembleStats,
    predictions: Mapping[ClassKey, LimitPrediction],
    thresholds: Thresholds = Thresholds(),
) -> VerificationReport:
    """Pure function of its inputs: one verdict per predicted class."""
    logger.debug(f"Entered {inspect.currentframe().f_code.co_name}")
    n_agents = stats.samples.shape[-1]
    expected = {key for key, _ in stats.system.decomposition.classes()}
    if set(predictions) != expected or any(
        max(p.members) >= n_agents for p in predictions.values()
    ):
        raise MismatchedShapes(
            f"predictions cover {sorted(predictions)} but the ensemble has "
            f"classes {sorted(expected)} over {n_agents} agents"
        )

    finals = stats.finals
    affine = None
    verdicts = []
    for key in sorted(predictions):
        prediction = predictions[key]
        members = list(prediction.members)
        kind = prediction.kind
        nondegeneracy = None

        if kind is LimitKind.DETERMINISTIC_HALF:
            name, values = "half_distance", half_distance(finals, members)
        elif kind is LimitKind.RANDOM_SYNCHRONIZED:
            name, values = "sync_gap", sync_gap(finals, members)
        elif kind is LimitKind.RANDOM_ANTI_SYNCHRONIZED:
            name = "antisync_residual"
            values = antisync_residual(finals, prediction.partition)
        else:
            if affine is None:
                affine = _predicted_per_run(stats, predictions)
            name = "limit_distance"
            values = np.abs(finals[:, members] - affine[key]).max(axis=-1)

        if kind.is_random:
            if stats.n_runs >= MIN_NONDEGENERACY_RUNS:
                nondegeneracy = nondegeneracy_test(stats, key, thresholds)
            else:
                logger.warning(
                    f"Class {key}: {stats.n_runs} runs are too few for a "
                    f"nondegeneracy check (need {MIN_NONDEGENERACY_RUNS})"
                )

        statistic = _order_statistic(values, thresholds.pass_fraction)
        verdicts.append(
            ClassVerdict(
                class_key=key,
                members=prediction.members,
                kind=kind,
                statistic_name=name,
                statistic=statistic,
                threshold=thresholds.tol,
                structure_passed=statistic <= thresholds.tol,
                nondegeneracy=nondegeneracy,
            )
        )
        logger.info(
            f"Class {key} {kind.value}: {name} = {statistic:.6g} "
            f"(tol {thresholds.tol}) -> {'pass' if verdicts[-1].passed else 'FAIL'}"
        )

    return VerificationReport(
        verdicts=tuple(verdicts),
        n_steps=stats.n_steps,
        n_runs=stats.n_runs,
        seed=stats.master_seed,
        thresholds=thresholds,
    )


def nondegeneracy_test(
    stats: EnsembleStats,
    key: ClassKey,
    thresholds: Thresholds = Thresholds(),
) -> NondegeneracyEvidence:
    """
    Cross-run sample variance of the class representative coordinate
    (its smallest agent) at the final step.
    """
    prediction = stats.system.predictions[key]
    if not prediction.kind.is_random:
        raise NotApplicable(
            f"class {prediction.members} has a deterministic limit "
            f"({prediction.kind.value})"
        )
    if stats.n_runs < MIN_NONDEGENERACY_RUNS:
        raise TooFewRuns(stats.n_runs, MIN_NONDEGENERACY_RUNS)

    agent = prediction.representative_agent
    values = stats.finals[:, agent]
    variance = float(values.var(ddof=1))
    counts, edges = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return NondegeneracyEvidence(
        agent=agent,
        variance=variance,
        var_min=thresholds.var_min,
        passed=variance >= thresholds.var_min,
        histogram=tuple(int(c) for c in counts),
        bin_edges=tuple(float(e) for e in edges),
    )


@dataclass(frozen=True)
class ResidualSummary:
    mean: float
    max: float
    per_run: Tuple[float, ...]


def hierarchy_residuals(
    stats: EnsembleStats, at_step: Optional[int] = None
) -> Dict[ClassKey, ResidualSummary]:
    """
    For each class of level >= 1: plugs every run's realised level-0 states
    into the recursive limit formula and measures the sup-distance of the
    class state to the result.
    """
    system = stats.system
    predictions = system.predictions
    states = stats.finals if at_step is None else stats.states_at(at_step)
    upper = [key for key, _ in system.decomposition.classes() if key[0] > 0]
    if not upper:
        return {}

    residuals: Dict[ClassKey, List[float]] = {key: [] for key in upper}
    for run_states in states:
        realised = {
            key: run_states[list(p.members)]
            for key, p in predictions.items()
            if key[0] == 0
        }
        values = hierarchical_limit(
            system.decomposition,
            system.class_attitudes,
            realised,
            predictions=predictions,
        )
        for key in upper:
            members = list(predictions[key].members)
            residuals[key].append(
                float(np.abs(run_states[members] - values[key]).max())
            )
    return {
        key: ResidualSummary(
            mean=float(np.mean(r)), max=float(np.max(r)), per_run=tuple(r)
        )
        for key, r in residuals.items()
    }


def median_half_distance(
    stats: EnsembleStats, key: ClassKey, steps: Sequence[int]
) -> List[float]:
    """Median over runs of the class half_distance at each listed step."""
    members = stats.system.predictions[key].members
    return [
        float(np.median(half_distance(stats.states_at(s), members)))
        for s in steps
    ]


# endregion
