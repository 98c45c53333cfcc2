"""
Interaction matrices, their support digraph and its hierarchical structure.

Agents are the vertices ``0..N-1``; an edge ``(i, j)`` means agent ``i`` is
influenced by agent ``j`` (``alpha_ij > 0``, ``i != j``). Diagonal weights
(self-reinforcement) never produce edges.
"""
import enum
import logging
import math
from dataclasses import dataclass
from functools import cached_property, reduce
from typing import Dict, FrozenSet, Iterator, List, Optional, Tuple

import networkx as nx
import numpy as np

from .errors import (
    InconsistentClassification,
    NegativeEntry,
    NonSquare,
    ParseError,
    RowSumExceedsOne,
    ValidationError,
)

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12

# (level, index of the class within its level)
ClassKey = Tuple[int, int]


class RowKind(enum.Enum):
    STOCHASTIC = "stochastic"
    SUBSTOCHASTIC = "substochastic"


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    weights: np.ndarray
    row_kinds: Tuple[RowKind, ...]

    @property
    def n_agents(self) -> int:
        return self.weights.shape[0]

    @property
    def row_sums(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def is_stochastic(self, i: int) -> bool:
        return self.row_kinds[i] is RowKind.STOCHASTIC


def validate_matrix(raw) -> InteractionMatrix:
    """
    Checks a raw square array of weights and tags every row.
    @param raw: N x N nested sequence or array of finite reals.
    @return: A read-only InteractionMatrix.
    """
    try:
        weights = np.array(raw, dtype=float)
    except ValueError:
        raise NonSquare("ragged")
    if (
        weights.ndim != 2
        or weights.shape[0] != weights.shape[1]
        or weights.shape[0] < 1
    ):
        raise NonSquare(weights.shape)
    if not np.all(np.isfinite(weights)):
        raise ValidationError("matrix", "entries must be finite")

    negative = np.argwhere(weights < 0)
    if negative.size:
        i, j = (int(k) for k in negative[0])
        raise NegativeEntry(i, j, float(weights[i, j]))

    sums = weights.sum(axis=1)
    over = np.flatnonzero(sums > 1 + ROW_SUM_TOL)
    if over.size:
        raise RowSumExceedsOne(int(over[0]), float(sums[over[0]]))

    kinds = tuple(
        RowKind.STOCHASTIC
        if abs(total - 1.0) <= ROW_SUM_TOL
        else RowKind.SUBSTOCHASTIC
        for total in sums
    )
    weights.setflags(write=False)
    return InteractionMatrix(weights=weights, row_kinds=kinds)


def read_matrix_text(text: str) -> InteractionMatrix:
    """
    Parses the plain-text matrix format: first line N, then N rows of N decimals.
    """
    lines = [
        (number, line.split())
        for number, line in enumerate(text.splitlines(), start=1)
        if line.strip()
    ]
    if not lines:
        raise ParseError(1, "empty matrix text")
    first_line, first = lines[0]
    if len(first) != 1:
        raise ParseError(first_line, "first line must hold only N")
    try:
        n = int(first[0])
    except ValueError:
        raise ParseError(first_line, f"N must be an integer, got {first[0]!r}")

    rows = lines[1:]
    if len(rows) != n:
        raise ParseError(
            rows[-1][0] if rows else first_line,
            f"expected {n} rows, found {len(rows)}",
        )
    values = []
    for number, tokens in rows:
        if len(tokens) != n:
            raise ParseError(number, f"expected {n} values, found {len(tokens)}")
        try:
            values.append([float(token) for token in tokens])
        except ValueError as e:
            raise ParseError(number, str(e))
    return validate_matrix(values)


def format_matrix_text(matrix: InteractionMatrix) -> str:
    rows = [" ".join(repr(float(x)) for x in row) for row in matrix.weights]
    return "\n".join([str(matrix.n_agents)] + rows) + "\n"


@dataclass(frozen=True)
class AgentGraph:
    digraph: nx.DiGraph

    @property
    def n_vertices(self) -> int:
        return self.digraph.number_of_nodes()

    @property
    def edges(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset(self.digraph.edges())

    def weight(self, i: int, j: int) -> float:
        return self.digraph[i][j]["weight"]


def build_graph(matrix: InteractionMatrix) -> AgentGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(matrix.n_agents))
    rows, cols = np.nonzero(matrix.weights)
    graph.add_weighted_edges_from(
        (int(i), int(j), float(matrix.weights[i, j]))
        for i, j in zip(rows, cols)
        if i != j
    )
    return AgentGraph(nx.freeze(graph))


@dataclass(frozen=True)
class CommunicationClass:
    members: Tuple[int, ...]
    internal_edges: FrozenSet[Tuple[int, int]]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def has_edges(self) -> bool:
        return bool(self.internal_edges)

    def induced_digraph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.members)
        graph.add_edges_from(self.internal_edges)
        return graph


def communication_classes(graph: AgentGraph) -> List[CommunicationClass]:
    """Strongly connected components, ordered by smallest member."""
    components = sorted(
        (
            tuple(sorted(component))
            for component in nx.strongly_connected_components(graph.digraph)
        ),
        key=lambda members: members[0],
    )
    return [
        CommunicationClass(
            members=members,
            internal_edges=frozenset(graph.digraph.subgraph(members).edges()),
        )
        for members in components
    ]


@dataclass(frozen=True)
class BipartitenessReport:
    is_bipartite: bool
    partition: Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]]
    # 0 when the class has no edge (period undefined)
    period: int


def class_period(cls: CommunicationClass) -> int:
    """
    Period of the class digraph from breadth-first levels: the gcd of
    ``level(u) + 1 - level(v)`` over all edges ``(u, v)``.
    """
    if not cls.has_edges:
        return 0
    graph = cls.induced_digraph()
    levels = nx.single_source_shortest_path_length(graph, cls.members[0])
    return reduce(
        math.gcd,
        (abs(levels[u] + 1 - levels[v]) for u, v in cls.internal_edges),
        0,
    )


def bipartiteness(cls: CommunicationClass) -> BipartitenessReport:
    """
    Two-colours the class and cross-checks the verdict against its period
    (even period if and only if bipartite).
    """
    if not cls.has_edges:
        return BipartitenessReport(is_bipartite=False, partition=None, period=0)

    period = class_period(cls)
    undirected = cls.induced_digraph().to_undirected()
    if nx.is_bipartite(undirected):
        colors = nx.bipartite.color(undirected)
        anchor = colors[cls.members[0]]
        side_i = tuple(v for v in cls.members if colors[v] == anchor)
        side_j = tuple(v for v in cls.members if colors[v] != anchor)
        report = BipartitenessReport(True, (side_i, side_j), period)
    else:
        report = BipartitenessReport(False, None, period)

    if report.is_bipartite != (period % 2 == 0):
        raise InconsistentClassification(
            f"class {cls.members}: 2-colouring says bipartite="
            f"{report.is_bipartite} but period is {period}"
        )
    return report


@dataclass(frozen=True)
class BlockIndex:
    level: int
    index: int
    # position of the agent inside its class
    position: int


@dataclass(frozen=True, eq=False)
class HierarchyDecomposition:
    weights: np.ndarray
    levels: Tuple[Tuple[CommunicationClass, ...], ...]
    block_index: Tuple[BlockIndex, ...]
    agent_order: Tuple[int, ...]

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def classes(self) -> Iterator[Tuple[ClassKey, CommunicationClass]]:
        for level, classes in enumerate(self.levels):
            for index, cls in enumerate(classes):
                yield (level, index), cls

    def class_at(self, key: ClassKey) -> CommunicationClass:
        return self.levels[key[0]][key[1]]

    def class_key_of(self, agent: int) -> ClassKey:
        placement = self.block_index[agent]
        return placement.level, placement.index

    def diagonal_block(self, key: ClassKey) -> np.ndarray:
        members = list(self.class_at(key).members)
        return self.weights[np.ix_(members, members)]

    def coupling_block(self, key: ClassKey, source: ClassKey) -> np.ndarray:
        """How the agents of class ``key`` are influenced by class ``source``."""
        if source[0] >= key[0]:
            raise ValueError(
                f"source class {source} is not on a lower level than {key}"
            )
        rows = list(self.class_at(key).members)
        cols = list(self.class_at(source).members)
        return self.weights[np.ix_(rows, cols)]

    @cached_property
    def diagonal_blocks(self) -> Dict[ClassKey, np.ndarray]:
        return {key: self.diagonal_block(key) for key, _ in self.classes()}

    @cached_property
    def coupling_blocks(self) -> Dict[Tuple[ClassKey, ClassKey], np.ndarray]:
        blocks = {}
        for key, _ in self.classes():
            for source, _ in self.classes():
                if source[0] < key[0]:
                    blocks[key, source] = self.coupling_block(key, source)
        return blocks

    def sources(self, key: ClassKey) -> List[ClassKey]:
        """Lower-level classes with at least one positive weight into ``key``."""
        return [
            source
            for (target, source), block in self.coupling_blocks.items()
            if target == key and np.any(block > 0)
        ]

    def permuted_weights(self) -> np.ndarray:
        order = list(self.agent_order)
        return self.weights[np.ix_(order, order)]

    def level_bounds(self) -> List[Tuple[int, int]]:
        """Start/stop offsets of every level inside ``agent_order``."""
        bounds, start = [], 0
        for classes in self.levels:
            stop = start + sum(cls.size for cls in classes)
            bounds.append((start, stop))
            start = stop
        return bounds


def hierarchy_decomposition(matrix: InteractionMatrix) -> HierarchyDecomposition:
    """
    Assigns every communication class a level: closed classes are level 0 and
    any other class sits one level above the highest class it depends on.
    """
    graph = build_graph(matrix)
    classes = communication_classes(graph)
    owner = {v: idx for idx, cls in enumerate(classes) for v in cls.members}

    condensed = nx.DiGraph()
    condensed.add_nodes_from(range(len(classes)))
    condensed.add_edges_from(
        (owner[i], owner[j]) for i, j in graph.edges if owner[i] != owner[j]
    )

    class_level: Dict[int, int] = {}
    for node in reversed(list(nx.topological_sort(condensed))):
        below = [class_level[s] for s in condensed.successors(node)]
        class_level[node] = 1 + max(below) if below else 0

    n_levels = max(class_level.values()) + 1
    levels = tuple(
        tuple(
            cls for idx, cls in enumerate(classes) if class_level[idx] == level
        )
        for level in range(n_levels)
    )

    placements: Dict[int, BlockIndex] = {}
    order: List[int] = []
    for level, level_classes in enumerate(levels):
        for index, cls in enumerate(level_classes):
            for position, agent in enumerate(cls.members):
                placements[agent] = BlockIndex(level, index, position)
                order.append(agent)

    logger.debug(
        "Hierarchy: "
        + "; ".join(
            f"level {level}: {[cls.members for cls in level_classes]}"
            for level, level_classes in enumerate(levels)
        )
    )
    return HierarchyDecomposition(
        weights=matrix.weights,
        levels=levels,
        block_index=tuple(placements[a] for a in range(matrix.n_agents)),
        agent_order=tuple(order),
    )
