"""
Drift matrices of the mean dynamics and the limits they imply.

For a class with weight block ``A`` the conditional mean increment is
``r_n (K Z_n + c_n)`` with ``K = 2 diag(A) - I - A`` for competitive agents
and ``K = A - I`` for cooperative ones.
"""
import enum
import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Tuple

import networkx as nx
import numpy as np
import scipy.linalg

from .errors import (
    InconsistentClassification,
    NotApplicable,
    PositiveEntry,
    SingularBlock,
    SingularK,
)
from .graph_core import (
    ROW_SUM_TOL,
    BipartitenessReport,
    ClassKey,
    CommunicationClass,
    HierarchyDecomposition,
    bipartiteness,
)

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
RANGE_TOL = 1e-9


class Attitude(enum.Enum):
    COMPETITIVE = "competitive"
    COOPERATIVE = "cooperative"


class LimitKind(enum.Enum):
    DETERMINISTIC_HALF = "deterministic_half"
    RANDOM_SYNCHRONIZED = "random_synchronized"
    RANDOM_ANTI_SYNCHRONIZED = "random_anti_synchronized"
    AFFINE_OF_LOWER_LEVELS = "affine_of_lower_levels"
    FORCED = "forced"
    STUBBORN = "stubborn"

    @property
    def is_random(self) -> bool:
        return self in (
            LimitKind.RANDOM_SYNCHRONIZED,
            LimitKind.RANDOM_ANTI_SYNCHRONIZED,
        )


@dataclass(frozen=True)
class GershgorinReport:
    diagonally_dominant: bool
    strictly_dominant_rows: Tuple[int, ...]
    # nonzero eigenvalues have strictly negative real part
    stability_certificate: bool
    # dominance + irreducible + at least one strict row
    invertibility_certificate: bool


def gershgorin_report(K) -> GershgorinReport:
    K = np.asarray(K, dtype=float)
    positive = np.argwhere(K > 0)
    if positive.size:
        i, j = (int(k) for k in positive[0])
        raise PositiveEntry(i, j, float(K[i, j]))

    diag = np.abs(np.diag(K))
    off = np.abs(K).sum(axis=1) - diag
    dominant = bool(np.all(diag >= off - ROW_SUM_TOL))
    strict = tuple(int(i) for i in np.flatnonzero(diag > off + ROW_SUM_TOL))

    support = nx.DiGraph()
    support.add_nodes_from(range(K.shape[0]))
    support.add_edges_from(
        (int(i), int(j)) for i, j in np.argwhere(K != 0) if i != j
    )
    irreducible = nx.is_strongly_connected(support)

    return GershgorinReport(
        diagonally_dominant=dominant,
        strictly_dominant_rows=strict,
        stability_certificate=dominant,
        invertibility_certificate=dominant and irreducible and bool(strict),
    )


def is_singular(K) -> bool:
    """Partial-pivot LU test: smallest pivot below PIVOT_TOL relative to max |K|."""
    K = np.asarray(K, dtype=float)
    scale = np.abs(K).max()
    if scale == 0:
        return True
    _, _, upper = scipy.linalg.lu(K)
    return bool(np.abs(np.diag(upper)).min() < PIVOT_TOL * scale)


def invertibility(K, bipartite: BipartitenessReport) -> bool:
    """
    Invertibility of the drift matrix of an irreducible competitive closed
    class. The numeric verdict must match the structural one (invertible
    exactly when the class is not bipartite).
    """
    numeric = not is_singular(K)
    structural = not bipartite.is_bipartite
    if numeric != structural:
        raise InconsistentClassification(
            f"LU says invertible={numeric}, bipartiteness says {structural}"
        )
    return numeric


def drift_matrix(block, attitude: Attitude) -> np.ndarray:
    block = np.asarray(block, dtype=float)
    identity = np.eye(block.shape[0])
    if attitude is Attitude.COMPETITIVE:
        return 2 * np.diag(np.diag(block)) - identity - block
    return block - identity


def drift_offset(
    block, attitude: Attitude, row_sums=None, forcing=None
) -> np.ndarray:
    """
    Time-invariant offset ``c`` of a class. ``row_sums`` are the full-matrix
    row sums alpha_i of the class agents and ``forcing`` the (limit) forcing
    values q(i); both default to a closed class without forcing.
    """
    block = np.asarray(block, dtype=float)
    alpha = block.sum(axis=1) if row_sums is None else np.asarray(row_sums)
    q = np.zeros(block.shape[0]) if forcing is None else np.asarray(forcing)
    forced = (1 - alpha) * q
    if attitude is Attitude.COMPETITIVE:
        return alpha - np.diag(block) + forced
    return forced


@dataclass(frozen=True)
class DriftDiagnostics:
    diagonally_dominant: bool
    strictly_dominant_rows: Tuple[int, ...]
    stability_certificate: bool
    invertibility_certificate: bool
    invertible: bool
    bipartite_singular: bool
    # competitive only: invertibility of 2 diag(A) + I - A
    table_variant_invertible: Optional[bool] = None

    @property
    def sign_discrepancy(self) -> bool:
        return (
            self.table_variant_invertible is not None
            and self.table_variant_invertible != self.invertible
        )


@dataclass(frozen=True, eq=False)
class DriftSystem:
    class_key: Optional[ClassKey]
    attitude: Attitude
    K: np.ndarray
    c: np.ndarray
    diagnostics: DriftDiagnostics

    def residual(self, x) -> np.ndarray:
        return self.K @ np.asarray(x, dtype=float) + self.c

    @property
    def equilibrium(self) -> Optional[np.ndarray]:
        if not self.diagnostics.invertible:
            return None
        return forced_limit(self.K, self.c)


def _block_class(block: np.ndarray) -> CommunicationClass:
    n = block.shape[0]
    return CommunicationClass(
        members=tuple(range(n)),
        internal_edges=frozenset(
            (int(i), int(j)) for i, j in np.argwhere(block > 0) if i != j
        ),
    )


def drift_system(
    block,
    attitude: Attitude,
    row_sums=None,
    forcing=None,
    bipartite: Optional[BipartitenessReport] = None,
    class_key: Optional[ClassKey] = None,
) -> DriftSystem:
    block = np.asarray(block, dtype=float)
    alpha = block.sum(axis=1) if row_sums is None else np.asarray(row_sums)
    K = drift_matrix(block, attitude)
    c = drift_offset(block, attitude, alpha, forcing)

    # dominance only depends on magnitudes, so the cooperative sign pattern is
    # folded onto the nonpositive one
    gershgorin = gershgorin_report(
        K if attitude is Attitude.COMPETITIVE else -np.abs(K)
    )

    competitive = attitude is Attitude.COMPETITIVE
    stochastic = bool(np.all(np.abs(alpha - 1) <= ROW_SUM_TOL))
    cls = _block_class(block)
    if (
        bipartite is None
        and competitive
        and cls.has_edges
        and gershgorin.stability_certificate
    ):
        if nx.is_strongly_connected(cls.induced_digraph()):
            bipartite = bipartiteness(cls)

    if competitive and stochastic and bipartite is not None and cls.has_edges:
        invertible = invertibility(K, bipartite)
    else:
        invertible = not is_singular(K)

    table_variant = None
    # the printed table variant only concerns blocks that leak to lower
    # levels; on a closed stochastic class it is I - A, always singular
    leaking = bool(np.any(block.sum(axis=1) < 1 - ROW_SUM_TOL))
    if competitive and leaking:
        table_k = 2 * np.diag(np.diag(block)) + np.eye(len(block)) - block
        table_variant = not is_singular(table_k)
        if table_variant != invertible:
            logger.warning(
                f"Class {class_key}: 2diag(A)+I-A invertible={table_variant} "
                f"but 2diag(A)-I-A invertible={invertible}"
            )

    return DriftSystem(
        class_key=class_key,
        attitude=attitude,
        K=K,
        c=c,
        diagnostics=DriftDiagnostics(
            diagonally_dominant=gershgorin.diagonally_dominant,
            strictly_dominant_rows=gershgorin.strictly_dominant_rows,
            stability_certificate=gershgorin.stability_certificate,
            invertibility_certificate=gershgorin.invertibility_certificate,
            invertible=invertible,
            bipartite_singular=bool(
                competitive
                and stochastic
                and bipartite is not None
                and bipartite.is_bipartite
            ),
            table_variant_invertible=table_variant,
        ),
    )


def forced_limit(K, c) -> np.ndarray:
    """Solves ``K x = -c``; the limit of a forced class."""
    K = np.asarray(K, dtype=float)
    if is_singular(K):
        raise SingularK("drift matrix is singular, no unique forced limit")
    x = scipy.linalg.lu_solve(
        scipy.linalg.lu_factor(K), -np.asarray(c, dtype=float)
    )
    if np.any(x < -RANGE_TOL) or np.any(x > 1 + RANGE_TOL):
        logger.warning(f"Forced limit {x} leaves [0, 1]; model inconsistent")
    return x


@dataclass(frozen=True, eq=False)
class LimitPrediction:
    class_key: ClassKey
    members: Tuple[int, ...]
    kind: LimitKind
    attitude: Optional[Attitude] = None
    partition: Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]] = None
    value: Optional[np.ndarray] = None
    # affine classes: limit = constant + k_inverse_applied @ sum(B~ @ lower)
    k_inverse_applied: Optional[np.ndarray] = None
    constant: Optional[np.ndarray] = None
    dependencies: Tuple[Tuple[ClassKey, np.ndarray], ...] = ()

    @property
    def representative_agent(self) -> int:
        return self.members[0]

    def evaluate(self, lower: Mapping[ClassKey, np.ndarray]) -> np.ndarray:
        if self.kind is LimitKind.AFFINE_OF_LOWER_LEVELS:
            drive = np.zeros(len(self.members))
            for source, coupling in self.dependencies:
                drive = drive + coupling @ np.asarray(lower[source], dtype=float)
            return self.constant + self.k_inverse_applied @ drive
        if self.value is not None:
            return self.value.copy()
        raise NotApplicable(
            f"class {self.members} has a random limit ({self.kind.value})"
        )


def closed_class_limit(
    cls: CommunicationClass,
    attitude: Attitude,
    bipartite: BipartitenessReport,
    class_key: ClassKey = (0, 0),
) -> LimitPrediction:
    """Limit structure of an irreducible closed class with stochastic rows."""
    if not cls.has_edges:
        # alpha_ii = 1: a plain Polya urn whatever the attitude
        kind = LimitKind.RANDOM_SYNCHRONIZED
    elif attitude is Attitude.COOPERATIVE:
        kind = LimitKind.RANDOM_SYNCHRONIZED
    elif bipartite.is_bipartite:
        return LimitPrediction(
            class_key=class_key,
            members=cls.members,
            kind=LimitKind.RANDOM_ANTI_SYNCHRONIZED,
            attitude=attitude,
            partition=bipartite.partition,
        )
    else:
        return LimitPrediction(
            class_key=class_key,
            members=cls.members,
            kind=LimitKind.DETERMINISTIC_HALF,
            attitude=attitude,
            value=np.full(cls.size, 0.5),
        )
    return LimitPrediction(
        class_key=class_key, members=cls.members, kind=kind, attitude=attitude
    )


def affine_prediction(
    decomposition: HierarchyDecomposition,
    key: ClassKey,
    attitude: Attitude,
    row_sums=None,
    forcing_limits=None,
) -> LimitPrediction:
    """
    Limit of a class of level >= 1 as an affine map of the limits of the
    lower-level classes feeding it.
    """
    members = list(decomposition.class_at(key).members)
    alpha = _row_sums(decomposition, row_sums)[members]
    q = _forcing(decomposition, forcing_limits)[members]
    drift = drift_system(
        decomposition.diagonal_block(key),
        attitude,
        row_sums=alpha,
        forcing=q,
        class_key=key,
    )
    if not drift.diagnostics.invertible:
        raise SingularBlock(*key)

    k_inverse_applied = -scipy.linalg.lu_solve(
        scipy.linalg.lu_factor(drift.K), np.eye(len(members))
    )
    sign = -1.0 if attitude is Attitude.COMPETITIVE else 1.0
    return LimitPrediction(
        class_key=key,
        members=tuple(members),
        kind=LimitKind.AFFINE_OF_LOWER_LEVELS,
        attitude=attitude,
        k_inverse_applied=k_inverse_applied,
        constant=k_inverse_applied @ drift.c,
        dependencies=tuple(
            (source, sign * decomposition.coupling_block(key, source))
            for source in decomposition.sources(key)
        ),
    )


def _row_sums(decomposition: HierarchyDecomposition, row_sums) -> np.ndarray:
    if row_sums is None:
        return decomposition.weights.sum(axis=1)
    return np.asarray(row_sums, dtype=float)


def _forcing(decomposition: HierarchyDecomposition, forcing) -> np.ndarray:
    if forcing is None:
        return np.zeros(decomposition.weights.shape[0])
    return np.asarray(forcing, dtype=float)


def predict_limits(
    decomposition: HierarchyDecomposition,
    attitudes: Mapping[ClassKey, Attitude],
    row_sums=None,
    forcing_limits=None,
    stubborn: Optional[Mapping[int, float]] = None,
) -> Dict[ClassKey, LimitPrediction]:
    """Limit descriptor of every class, level by level."""
    alpha = _row_sums(decomposition, row_sums)
    q = _forcing(decomposition, forcing_limits)
    stubborn = stubborn or {}
    predictions: Dict[ClassKey, LimitPrediction] = {}

    for key, cls in decomposition.classes():
        attitude = attitudes[key]
        members = list(cls.members)
        if key[0] > 0:
            predictions[key] = affine_prediction(
                decomposition, key, attitude, alpha, q
            )
        elif cls.size == 1 and cls.members[0] in stubborn:
            predictions[key] = LimitPrediction(
                class_key=key,
                members=cls.members,
                kind=LimitKind.STUBBORN,
                value=np.array([stubborn[cls.members[0]]], dtype=float),
            )
        elif np.all(np.abs(alpha[members] - 1) <= ROW_SUM_TOL):
            predictions[key] = closed_class_limit(
                cls, attitude, bipartiteness(cls), key
            )
        else:
            drift = drift_system(
                decomposition.diagonal_block(key),
                attitude,
                row_sums=alpha[members],
                forcing=q[members],
                class_key=key,
            )
            predictions[key] = LimitPrediction(
                class_key=key,
                members=cls.members,
                kind=LimitKind.FORCED,
                attitude=attitude,
                value=forced_limit(drift.K, drift.c),
            )
        logger.debug(f"Class {key} {cls.members}: {predictions[key].kind.value}")
    return predictions


def hierarchical_limit(
    decomposition: HierarchyDecomposition,
    attitudes: Mapping[ClassKey, Attitude],
    level0_values: Mapping[ClassKey, np.ndarray],
    row_sums=None,
    forcing_limits=None,
    predictions: Optional[Mapping[ClassKey, LimitPrediction]] = None,
) -> Dict[ClassKey, np.ndarray]:
    """
    Evaluates the recursive limit formula: given (realised or representative)
    limits of the level-0 classes, returns the limit vector of every class.
    """
    values: Dict[ClassKey, np.ndarray] = {}
    for key, cls in decomposition.classes():
        if key[0] == 0:
            if key not in level0_values:
                raise ValueError(f"no level-0 value for class {key}")
            value = np.asarray(level0_values[key], dtype=float)
            if value.shape != (cls.size,):
                value = np.broadcast_to(value, (cls.size,)).astype(float)
            values[key] = value
            continue
        prediction = (
            predictions[key]
            if predictions is not None
            else affine_prediction(
                decomposition, key, attitudes[key], row_sums, forcing_limits
            )
        )
        values[key] = prediction.evaluate(values)
    return values
