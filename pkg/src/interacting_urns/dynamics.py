"""
Exact simulation of the interacting reinforced recursion

    Z_{n+1}(i) = (1 - r_n) Z_n(i) + r_n Y_{n+1}(i)

with ``P(Y_{n+1}(i) = 1 | F_n) = p_i(Z_n)``. Given the past, the draws of the
agents are independent. Each step consumes one uniform per agent, in
ascending agent order, from the run's own generator.
"""
import copy
import enum
import inspect
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import (
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .common_utils import log_duration
from .errors import ProbabilityOutOfRange, StateOutOfRange, ValidationError
from .graph_core import (
    ClassKey,
    HierarchyDecomposition,
    InteractionMatrix,
    hierarchy_decomposition,
    validate_matrix,
)
from .spectral import Attitude, LimitPrediction, predict_limits

logger = logging.getLogger(__name__)

PROBABILITY_TOL = 1e-12
STATE_TOL = 1e-12
# steps of uniforms drawn per generator call
CHUNK_STEPS = 4096
DENSE_SAMPLING_STEPS = 100
SAMPLING_GROWTH = 1.1


# region Step schedules
class StepSchedule(ABC):
    """Gain sequence r_n with divergent sum and summable squares."""

    def rate(self, n: int) -> float:
        return float(self.rates(n, 1)[0])

    @abstractmethod
    def rates(self, start: int, count: int) -> np.ndarray:
        """r_n for n in [start, start + count)"""


@dataclass(frozen=True)
class UrnDefault(StepSchedule):
    """``r_n = 1 / (m + n + 1)``, m being the initial number of balls."""

    m: int = 1

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or self.m < 1:
            raise ValidationError(
                "schedule", f"m must be a positive integer, got {self.m!r}"
            )

    def rates(self, start: int, count: int) -> np.ndarray:
        n = np.arange(start, start + count, dtype=float)
        return 1.0 / (self.m + n + 1.0)


@dataclass(frozen=True)
class PowerLaw(StepSchedule):
    """``r_n = scale / (n + 1) ** gamma``"""

    gamma: float
    scale: float = 0.5

    def __post_init__(self):
        if not 0.5 < self.gamma <= 1:
            raise ValidationError(
                "schedule", f"gamma must lie in (0.5, 1], got {self.gamma!r}"
            )
        if not 0 < self.scale < 1:
            raise ValidationError(
                "schedule", f"scale must lie in (0, 1), got {self.scale!r}"
            )

    def rates(self, start: int, count: int) -> np.ndarray:
        n = np.arange(start, start + count, dtype=float)
        return self.scale / (n + 1.0) ** self.gamma


# endregion


# region Forcing inputs
class ForcingKind(enum.Enum):
    CONSTANT = "constant"
    PIECEWISE = "piecewise"
    CALLBACK = "callback"


@dataclass(frozen=True)
class Forcing:
    """
    Exogenous sequence q_n(i) of a substochastic agent. ``limit`` is the
    declared limit q(i) used for predictions; convergence of callback
    sequences is the caller's responsibility.
    """

    kind: ForcingKind
    limit: float
    # (value, until): value is used while n < until
    segments: Tuple[Tuple[float, int], ...] = ()
    callback: Optional[Callable[[int], float]] = field(default=None, compare=False)

    def __post_init__(self):
        values = [self.limit] + [value for value, _ in self.segments]
        if any(not 0 <= v <= 1 for v in values):
            raise ValidationError("forcing", f"values must lie in [0, 1], got {values}")
        ends = [until for _, until in self.segments]
        if any(b <= a for a, b in zip(ends, ends[1:])) or any(e < 0 for e in ends):
            raise ValidationError("forcing", f"segment ends must increase, got {ends}")
        if self.kind is ForcingKind.CALLBACK and self.callback is None:
            raise ValidationError("forcing", "callback forcing needs a callable")

    @classmethod
    def constant(cls, q: float) -> "Forcing":
        return cls(ForcingKind.CONSTANT, float(q))

    @classmethod
    def piecewise(
        cls, segments: Iterable[Tuple[float, int]], limit: float
    ) -> "Forcing":
        return cls(
            ForcingKind.PIECEWISE,
            float(limit),
            tuple((float(v), int(u)) for v, u in segments),
        )

    @classmethod
    def from_callback(cls, fn: Callable[[int], float], limit: float) -> "Forcing":
        return cls(ForcingKind.CALLBACK, float(limit), callback=fn)

    def values(self, start: int, count: int) -> np.ndarray:
        n = np.arange(start, start + count)
        if self.kind is ForcingKind.CONSTANT:
            return np.full(count, self.limit)
        if self.kind is ForcingKind.PIECEWISE:
            q = np.full(count, self.limit)
            # later segments first so earlier ones win on overlap
            for value, until in reversed(self.segments):
                q[n < until] = value
            return q
        q = np.array([float(self.callback(int(k))) for k in n])
        if np.any(q < 0) or np.any(q > 1):
            raise ValidationError("forcing", "callback produced a value outside [0, 1]")
        return q


# endregion


# region Interaction system
AttitudeSpec = Union[Attitude, Mapping[int, Attitude], Sequence[Attitude]]


def _per_agent_attitudes(
    spec: AttitudeSpec, n_agents: int, stubborn: Mapping[int, float]
) -> Tuple[List[Optional[Attitude]], List[ValidationError]]:
    if isinstance(spec, Attitude):
        return [spec] * n_agents, []
    if isinstance(spec, Mapping):
        outside = sorted(a for a in spec if not 0 <= a < n_agents)
        if outside:
            return [], [
                ValidationError("attitudes", f"agent {a} out of range")
                for a in outside
            ]
        agents = [spec.get(i) for i in range(n_agents)]
    else:
        agents = list(spec)
        if len(agents) != n_agents:
            return [], [
                ValidationError(
                    "attitudes", f"expected {n_agents} entries, got {len(agents)}"
                )
            ]
    problems = [
        ValidationError("attitudes", f"agent {i} unassigned")
        for i, attitude in enumerate(agents)
        if attitude is None and i not in stubborn
    ]
    return agents, problems


def effective_matrix(
    matrix: InteractionMatrix, stubborn: Mapping[int, float]
) -> InteractionMatrix:
    """The interaction matrix with every stubborn row replaced by e_i."""
    if not stubborn:
        return matrix
    weights = np.array(matrix.weights)
    for agent in stubborn:
        dropped = weights[agent].sum() - weights[agent, agent]
        if dropped > 0:
            logger.warning(
                f"Stubborn agent {agent}: dropping off-diagonal weight {dropped:.6g}"
            )
        weights[agent] = 0.0
        weights[agent, agent] = 1.0
    return validate_matrix(weights)


def system_problems(
    matrix: InteractionMatrix,
    attitudes: AttitudeSpec,
    forcing: Optional[Mapping[int, Forcing]] = None,
    stubborn: Optional[Mapping[int, float]] = None,
) -> List[ValidationError]:
    """
    Every consistency problem of a model description, not just the first.
    An empty list means InteractionSystem.build will succeed.
    """
    forcing = forcing or {}
    stubborn = stubborn or {}
    n = matrix.n_agents
    problems: List[ValidationError] = []

    for agent, q in stubborn.items():
        if not 0 <= agent < n:
            problems.append(ValidationError("stubborn", f"agent {agent} out of range"))
        elif not 0 <= q <= 1:
            problems.append(
                ValidationError("stubborn", f"agent {agent} value {q!r} outside [0, 1]")
            )
    for agent in forcing:
        if not 0 <= agent < n:
            problems.append(ValidationError("forcing", f"agent {agent} out of range"))
        elif agent in stubborn:
            problems.append(ValidationError("forcing", f"agent {agent} is stubborn"))
        elif matrix.is_stochastic(agent):
            problems.append(ValidationError("forcing", f"row {agent} has α_i = 1"))
    for agent in range(n):
        if (
            not matrix.is_stochastic(agent)
            and agent not in forcing
            and agent not in stubborn
        ):
            problems.append(
                ValidationError("forcing", f"row {agent} has α_i < 1 but no forcing")
            )

    per_agent, attitude_problems = _per_agent_attitudes(attitudes, n, stubborn)
    problems.extend(attitude_problems)
    if problems:
        return problems

    decomposition = hierarchy_decomposition(effective_matrix(matrix, stubborn))
    for key, cls in decomposition.classes():
        seen = {per_agent[a] for a in cls.members if a not in stubborn}
        if len(seen) > 1:
            problems.append(
                ValidationError(
                    "attitudes", f"class {list(cls.members)} mixes attitudes"
                )
            )
    return problems


@dataclass(frozen=True, eq=False)
class InteractionSystem:
    """
    A validated model: effective matrix (stubborn rows replaced), its
    hierarchy, one attitude per agent (uniform within every class), forcing
    inputs and stubborn values, plus the initial state Z_0.
    """

    matrix: InteractionMatrix
    decomposition: HierarchyDecomposition
    attitudes: Tuple[Attitude, ...]
    forcing: Mapping[int, Forcing]
    stubborn: Mapping[int, float]
    initial: np.ndarray

    @classmethod
    def build(
        cls,
        matrix: InteractionMatrix,
        attitudes: AttitudeSpec,
        forcing: Optional[Mapping[int, Forcing]] = None,
        stubborn: Optional[Mapping[int, float]] = None,
        initial=None,
    ) -> "InteractionSystem":
        forcing = dict(forcing or {})
        stubborn = {int(a): float(q) for a, q in (stubborn or {}).items()}
        problems = system_problems(matrix, attitudes, forcing, stubborn)
        if problems:
            raise problems[0]

        n = matrix.n_agents
        per_agent, _ = _per_agent_attitudes(attitudes, n, stubborn)
        # a stubborn singleton only needs a tag for bookkeeping
        resolved = tuple(a or Attitude.COOPERATIVE for a in per_agent)

        z0 = np.full(n, 0.5) if initial is None else np.array(initial, dtype=float)
        if z0.shape == ():
            z0 = np.full(n, float(z0))
        if z0.shape != (n,) or np.any(z0 < 0) or np.any(z0 > 1):
            raise ValidationError("initial", f"need {n} values in [0, 1]")
        for agent, q in stubborn.items():
            z0[agent] = q
        z0.setflags(write=False)

        effective = effective_matrix(matrix, stubborn)
        return cls(
            matrix=effective,
            decomposition=hierarchy_decomposition(effective),
            attitudes=resolved,
            forcing=forcing,
            stubborn=stubborn,
            initial=z0,
        )

    @property
    def n_agents(self) -> int:
        return self.matrix.n_agents

    @cached_property
    def class_attitudes(self) -> Dict[ClassKey, Attitude]:
        return {
            key: self.attitudes[cls.members[0]]
            for key, cls in self.decomposition.classes()
        }

    @cached_property
    def forcing_limits(self) -> np.ndarray:
        q = np.zeros(self.n_agents)
        for agent, forcing in self.forcing.items():
            q[agent] = forcing.limit
        return q

    @cached_property
    def predictions(self) -> Dict[ClassKey, LimitPrediction]:
        return predict_limits(
            self.decomposition,
            self.class_attitudes,
            row_sums=self.matrix.row_sums,
            forcing_limits=self.forcing_limits,
            stubborn=self.stubborn,
        )

    @cached_property
    def _coefficients(self):
        weights = self.matrix.weights
        diagonal = np.diag(weights).copy()
        off = weights - np.diag(diagonal)
        alpha = weights.sum(axis=1)
        competitive = np.array(
            [a is Attitude.COMPETITIVE for a in self.attitudes]
        )
        sign = np.where(competitive, -1.0, 1.0)
        # competitive rows: sum_j a_ij (1 - z_j) = (alpha_i - a_ii) - sum_j a_ij z_j
        base = np.where(competitive, alpha - diagonal, 0.0)
        stubborn = np.zeros(self.n_agents, dtype=bool)
        stubborn[list(self.stubborn)] = True
        return diagonal, off, sign, base, 1.0 - alpha, stubborn

    def forcing_values(self, start: int, count: int) -> np.ndarray:
        """q_n for n in [start, start + count), shape (count, N)."""
        q = np.zeros((count, self.n_agents))
        for agent, forcing in self.forcing.items():
            q[:, agent] = forcing.values(start, count)
        return q

    def probabilities(self, z, q=None, check: bool = True) -> np.ndarray:
        """
        Bernoulli parameters for a state (shape (N,)) or a batch of states
        (shape (R, N)) given the current forcing values ``q``.
        """
        z = np.asarray(z, dtype=float)
        diagonal, off, sign, base, forced_weight, stubborn = self._coefficients
        # elementwise product and row sum instead of a matmul so that each
        # run's result does not depend on the batch it is computed in
        neighbours = (off * z[..., None, :]).sum(axis=-1)
        p = diagonal * z + sign * neighbours + base
        if q is not None:
            p = p + forced_weight * q
        p = np.where(stubborn, z, p)
        if check:
            bad = np.argwhere((p < -PROBABILITY_TOL) | (p > 1 + PROBABILITY_TOL))
            if bad.size:
                agent = int(bad[0][-1])
                raise ProbabilityOutOfRange(agent, float(p[tuple(bad[0])]))
        return p

    def advance(self, z, u, rate: float, q=None, check_bounds: bool = False):
        """
        One step of the recursion for a state or a batch of states.
        @param u: Uniforms of the same shape as ``z``; Y = 1 where u < p.
        @return: (next state, Y - p)
        """
        z = np.asarray(z, dtype=float)
        p = self.probabilities(z, q)
        y = (np.asarray(u) < p).astype(float)
        _, _, _, _, _, stubborn = self._coefficients
        z_next = np.where(stubborn, z, z + rate * (y - z))
        if check_bounds:
            bad = np.argwhere((z_next < -STATE_TOL) | (z_next > 1 + STATE_TOL))
            if bad.size:
                raise StateOutOfRange(int(bad[0][-1]), float(z_next[tuple(bad[0])]))
        return z_next, y - p


# endregion


# region Single steps
@dataclass(frozen=True, eq=False)
class SimulationState:
    """
    State after ``step`` steps. step() advances a copy of ``rng``, so a
    retained state always continues the same way.
    """

    step: int
    z: np.ndarray
    rng: np.random.Generator


def run_seed_sequence(master_seed: int, run_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(run_index,))


def run_generator(master_seed: int, run_index: int) -> np.random.Generator:
    """Independent stream of one ensemble run."""
    return np.random.Generator(
        np.random.PCG64(run_seed_sequence(master_seed, run_index))
    )


def initial_state(
    system: InteractionSystem, master_seed: int, run_index: int = 0
) -> SimulationState:
    return SimulationState(
        step=0,
        z=np.array(system.initial),
        rng=run_generator(master_seed, run_index),
    )


def bernoulli_probabilities(
    state: SimulationState, system: InteractionSystem
) -> np.ndarray:
    return system.probabilities(state.z, system.forcing_values(state.step, 1)[0])


def step(
    state: SimulationState,
    system: InteractionSystem,
    schedule: StepSchedule,
    check_bounds: bool = False,
) -> SimulationState:
    rng = copy.deepcopy(state.rng)
    u = rng.random(system.n_agents)
    z, _ = system.advance(
        state.z,
        u,
        schedule.rate(state.step),
        system.forcing_values(state.step, 1)[0],
        check_bounds,
    )
    return SimulationState(step=state.step + 1, z=z, rng=rng)


def bipartite_reflection(
    z, partition: Tuple[Sequence[int], Sequence[int]]
) -> np.ndarray:
    """Identity on I, x -> 1 - x on J. Works on trailing agent axis."""
    reflected = np.array(z, dtype=float)
    side_j = list(partition[1])
    reflected[..., side_j] = 1.0 - reflected[..., side_j]
    return reflected


# endregion


# region Trajectories
def sampling_grid(n_steps: int, extra: Iterable[int] = ()) -> np.ndarray:
    """
    Every step up to 100, then geometric growth by 1.1, always including
    0 and ``n_steps`` plus any requested checkpoints within range.
    """
    steps = set(range(min(n_steps, DENSE_SAMPLING_STEPS) + 1))
    t = float(DENSE_SAMPLING_STEPS)
    while t < n_steps:
        t *= SAMPLING_GROWTH
        steps.add(min(int(math.ceil(t)), n_steps))
    steps.add(n_steps)
    steps.update(int(e) for e in extra if 0 <= e <= n_steps)
    return np.array(sorted(steps), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Trajectory:
    steps: np.ndarray
    states: np.ndarray
    seed: int
    run_index: int = 0
    # Y - p of the step that produced each sample; NaN at step 0
    increments: Optional[np.ndarray] = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def n_steps(self) -> int:
        return int(self.steps[-1])

    def state_at(self, step: int) -> np.ndarray:
        idx = np.searchsorted(self.steps, step)
        if idx >= len(self.steps) or self.steps[idx] != step:
            raise KeyError(f"step {step} was not sampled")
        return self.states[idx]


def run_batch(
    system: InteractionSystem,
    schedule: StepSchedule,
    master_seed: int,
    run_indices: Sequence[int],
    n_steps: int,
    sample_steps: np.ndarray,
    record_increments: bool = False,
    check_bounds: bool = False,
) -> List[Trajectory]:
    """
    Simulates several runs side by side on (runs, agents) arrays. Every run
    reads only its own generator, so results do not depend on batching.
    """
    logger.debug(f"Entered {inspect.currentframe().f_code.co_name}")
    if n_steps < 0:
        raise ValidationError("n_steps", f"must be nonnegative, got {n_steps}")
    if len(run_indices) == 0:
        raise ValidationError("n_runs", "a batch needs at least one run")
    outside = [int(s) for s in sample_steps if not 0 <= s <= n_steps]
    if outside:
        raise ValidationError(
            "sampling", f"steps {outside} lie outside [0, {n_steps}]"
        )
    if np.any(np.diff(np.asarray(sample_steps)) <= 0):
        raise ValidationError("sampling", "sample steps must strictly increase")
    generators = [run_generator(master_seed, i) for i in run_indices]
    n_runs, n_agents = len(generators), system.n_agents
    z = np.tile(np.asarray(system.initial, dtype=float), (n_runs, 1))
    increments = np.full((n_runs, n_agents), np.nan)

    sample_steps = np.asarray(sample_steps, dtype=np.int64)
    states = np.empty((n_runs, len(sample_steps), n_agents))
    recorded = (
        np.full((n_runs, len(sample_steps), n_agents), np.nan)
        if record_increments
        else None
    )
    next_sample = 0

    def record(n: int):
        nonlocal next_sample
        while next_sample < len(sample_steps) and sample_steps[next_sample] == n:
            states[:, next_sample] = z
            if recorded is not None:
                recorded[:, next_sample] = increments
            next_sample += 1

    record(0)
    n = 0
    while n < n_steps:
        count = min(CHUNK_STEPS, n_steps - n)
        rates = schedule.rates(n, count)
        q = system.forcing_values(n, count)
        u = np.stack([g.random((count, n_agents)) for g in generators])
        for t in range(count):
            z, increments = system.advance(z, u[:, t], rates[t], q[t], check_bounds)
            record(n + t + 1)
        n += count

    return [
        Trajectory(
            steps=sample_steps,
            states=states[k],
            seed=master_seed,
            run_index=int(run_index),
            increments=None if recorded is None else recorded[k],
        )
        for k, run_index in enumerate(run_indices)
    ]


@log_duration
def simulate(
    system: InteractionSystem,
    schedule: StepSchedule,
    seed: int,
    n_steps: int,
    sampling: Optional[Sequence[int]] = None,
    run_index: int = 0,
    record_increments: bool = False,
    check_bounds: bool = False,
) -> Trajectory:
    """
    One run from Z_0. ``sampling`` lists the steps to keep (default: the
    geometric grid); the final step is always kept.
    """
    if n_steps < 0:
        raise ValidationError("n_steps", f"must be nonnegative, got {n_steps}")
    grid = (
        sampling_grid(n_steps)
        if sampling is None
        else np.array(sorted({0, n_steps, *(s for s in sampling if 0 <= s <= n_steps)}))
    )
    return run_batch(
        system,
        schedule,
        seed,
        [run_index],
        n_steps,
        grid,
        record_increments=record_increments,
        check_bounds=check_bounds,
    )[0]


# endregion
