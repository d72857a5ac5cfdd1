"""
Intervention semantics for the Chemistry and Social Network environments.

Both environments are pure state transitions; :class:`Oracle` owns the hidden
graph for one episode and applies interventions on the agent's behalf.
"""

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

try:
    from .graph_core import AdjacencyMatrix, generate_graph, graphs_equivalent, reachability_closure
    from .models import (EnvKind, EpisodeConfig, GraphKind, InvalidConfigurationError,
                         InvalidInterventionError, ObservationRow)
    from .utils import RandomStream, make_stream
except ImportError:
    from graph_core import AdjacencyMatrix, generate_graph, graphs_equivalent, reachability_closure
    from models import (EnvKind, EpisodeConfig, GraphKind, InvalidConfigurationError,
                        InvalidInterventionError, ObservationRow)
    from utils import RandomStream, make_stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChemistryState:
    states: Tuple[int, ...]
    s: int
    graph: AdjacencyMatrix

    @property
    def n(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class SocialState:
    states: Tuple[int, ...]
    graph: AdjacencyMatrix

    @property
    def n(self) -> int:
        return len(self.states)


def _check_node(node, n: int):
    if isinstance(node, bool) or not isinstance(node, (int, np.integer)) or not 0 <= node < n:
        raise InvalidInterventionError(f"intervention target {node!r} outside 0..{n - 1}")


def chem_init(graph: AdjacencyMatrix, s: int, rng: RandomStream) -> ChemistryState:
    if graph.kind is not GraphKind.DIRECTED_ACYCLIC:
        raise InvalidConfigurationError("chemistry requires a directed acyclic graph")
    if s < 2:
        raise InvalidConfigurationError(f"chemistry needs at least 2 states, got {s}")
    states = rng.integers(0, s, size=graph.n)
    return ChemistryState(tuple(int(v) for v in states), s, graph)


def chem_intervene(state: ChemistryState, node: int, rng: RandomStream,
                   allow_same_state: bool = False) -> ChemistryState:
    """Resample every descendant of ``node``; the node itself keeps its state.

    Descendants draw uniformly from the alphabet minus their current value, so
    each one visibly changes. ``allow_same_state`` draws from the full alphabet.
    """
    _check_node(node, state.n)
    descendants = np.flatnonzero(reachability_closure(state.graph)[node])
    new_states = list(state.states)
    for j in descendants:
        if allow_same_state:
            new_states[j] = int(rng.integers(0, state.s))
        else:
            draw = int(rng.integers(0, state.s - 1))
            new_states[j] = draw if draw < state.states[j] else draw + 1
    return replace(state, states=tuple(new_states))


def social_init(n: int, graph: Optional[AdjacencyMatrix] = None,
                initial_states: Optional[Sequence[int]] = None) -> SocialState:
    if n < 1:
        raise InvalidConfigurationError(f"node count must be positive, got {n}")
    if graph is None:
        graph = AdjacencyMatrix.zeros(n, GraphKind.UNDIRECTED_SYMMETRIC)
    if initial_states is None:
        states = (0,) * n
    else:
        states = tuple(int(v) for v in initial_states)
        if len(states) != n or any(v < 0 for v in states):
            raise InvalidConfigurationError(f"initial social states must be {n} non-negative integers")
    return SocialState(states, graph)


def social_intervene(state: SocialState, person: int) -> SocialState:
    """Add 1 to the person and to each of their neighbours"""
    _check_node(person, state.n)
    bump = state.graph.entries[person].astype(np.int64)
    bump[person] += 1
    new_states = np.asarray(state.states, dtype=np.int64) + bump
    return replace(state, states=tuple(int(v) for v in new_states))


class Oracle:
    """Knows the hidden graph of one episode and executes interventions."""

    def __init__(self, config: EpisodeConfig, rng: Optional[RandomStream] = None):
        self.config = config
        self.rng = rng if rng is not None else make_stream(config.seed)
        self.truth = generate_graph(config.n, config.env_kind.graph_kind, config.edge_density, self.rng)
        if config.env_kind is EnvKind.CHEMISTRY:
            self.state = chem_init(self.truth, config.s, self.rng)
            if config.initial_states is not None:
                if any(not 0 <= v < config.s for v in config.initial_states):
                    raise InvalidConfigurationError(f"initial chemistry states must lie in 0..{config.s - 1}")
                self.state = replace(self.state, states=config.initial_states)
        else:
            self.state = social_init(config.n, self.truth, config.initial_states)
        logger.debug(f"Oracle ready: {config.label}, truth edges {self.truth.edges()}")

    def observe(self) -> Tuple[int, ...]:
        return self.state.states

    def intervene(self, node: int) -> ObservationRow:
        if self.config.env_kind is EnvKind.CHEMISTRY:
            self.state = chem_intervene(self.state, node, self.rng, self.config.allow_same_state)
        else:
            self.state = social_intervene(self.state, node)
        return ObservationRow(self.state.states, int(node))

    def matches(self, hypothesis: AdjacencyMatrix) -> bool:
        return graphs_equivalent(hypothesis, self.truth)
