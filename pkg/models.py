"""
Data models, enums and exceptions for the discovery harness.
"""

from typing import Dict, List, Optional, Tuple
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

TOOL_VERSION = "1.0.0"
SCHEMA_VERSION = 1


class HarnessError(Exception):
    """Base class for harness errors"""


class InvalidConfigurationError(HarnessError, ValueError):
    pass


class InvalidComparisonError(HarnessError, ValueError):
    pass


class InvalidInterventionError(HarnessError, ValueError):
    pass


class MissingCredentialError(InvalidConfigurationError):
    pass


class TransportError(HarnessError):
    pass


class BudgetExceededError(HarnessError):
    pass


class MalformedTurnError(HarnessError):
    """The agent could not produce a usable turn within its retry budget"""

    def __init__(self, message: str, last_reply: str = ""):
        super().__init__(message)
        self.last_reply = last_reply


class GraphKind(Enum):
    DIRECTED_ACYCLIC = "dag"
    UNDIRECTED_SYMMETRIC = "sym"


class EnvKind(Enum):
    CHEMISTRY = "chemistry"
    SOCIAL = "social"

    @property
    def graph_kind(self) -> GraphKind:
        if self is EnvKind.CHEMISTRY:
            return GraphKind.DIRECTED_ACYCLIC
        return GraphKind.UNDIRECTED_SYMMETRIC


class Termination(Enum):
    HYPOTHESIS_MATCHED = "hypothesis_matched"
    CYCLE_LIMIT = "cycle_limit"
    AGENT_FAILURE = "agent_failure"


class BudgetDecision(Enum):
    PROCEED = "proceed"
    HALT = "halt"


STOP = "stop"


@dataclass
class EpisodeConfig:
    env_kind: EnvKind
    n: int
    s: int = 3
    edge_density: float = 0.5
    cycle_limit: Optional[int] = None
    seed: int = 0
    allow_same_state: bool = False
    initial_states: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        self.env_kind = EnvKind(self.env_kind)
        if self.n < 1:
            raise InvalidConfigurationError(f"node count must be positive, got {self.n}")
        if self.env_kind is EnvKind.CHEMISTRY and self.s < 2:
            raise InvalidConfigurationError(f"chemistry needs at least 2 states, got {self.s}")
        if not 0.0 <= self.edge_density <= 1.0:
            raise InvalidConfigurationError(f"edge density must lie in [0, 1], got {self.edge_density}")
        if self.cycle_limit is None:
            self.cycle_limit = 2 * self.n
        if self.cycle_limit < 1:
            raise InvalidConfigurationError(f"cycle limit must be at least 1, got {self.cycle_limit}")
        if self.initial_states is not None:
            self.initial_states = tuple(int(v) for v in self.initial_states)
            if len(self.initial_states) != self.n:
                raise InvalidConfigurationError(
                    f"initial_states has {len(self.initial_states)} entries, expected {self.n}")

    def to_dict(self) -> Dict:
        return {
            'env_kind': self.env_kind.value,
            'n': self.n,
            's': self.s,
            'edge_density': self.edge_density,
            'cycle_limit': self.cycle_limit,
            'seed': self.seed,
            'allow_same_state': self.allow_same_state,
            'initial_states': list(self.initial_states) if self.initial_states is not None else None,
        }

    @property
    def label(self) -> str:
        if self.env_kind is EnvKind.CHEMISTRY:
            return f"Chemistry (Nodes: {self.n}; States: {self.s})"
        return f"Social Network (Persons: {self.n})"


@dataclass(frozen=True)
class ObservationRow:
    snapshot: Tuple[int, ...]
    intervened_node: Optional[int] = None  # None for the initial row and no-op cycles

    def __post_init__(self):
        object.__setattr__(self, 'snapshot', tuple(int(v) for v in self.snapshot))


@dataclass
class AgentTurn:
    hypothesis: "AdjacencyMatrix"  # noqa: F821 - defined in graph_core
    intervention: object  # node index or STOP
    rationale: Optional[str] = None

    @property
    def stops(self) -> bool:
        return self.intervention == STOP


@dataclass
class EpisodeStep:
    cycle: int
    hypothesis: Optional[List[List[int]]]
    intervention: Optional[int]
    observation: Optional[ObservationRow]
    rationale: Optional[str] = None
    malformed: bool = False

    def to_dict(self) -> Dict:
        return {
            'cycle': self.cycle,
            'hypothesis': self.hypothesis,
            'intervention': self.intervention,
            'observation': list(self.observation.snapshot) if self.observation else None,
            'rationale': self.rationale,
            'malformed': self.malformed,
        }


@dataclass
class EpisodeTranscript:
    initial: ObservationRow
    steps: List[EpisodeStep] = field(default_factory=list)

    @property
    def rows(self) -> List[ObservationRow]:
        """Observation matrix G: the initial row plus one row per consumed cycle"""
        return [self.initial] + [s.observation for s in self.steps if s.observation is not None]

    @property
    def interventions(self) -> List[Optional[int]]:
        return [s.observation.intervened_node for s in self.steps if s.observation is not None]

    def replay_records(self) -> List[Dict]:
        records = [{'cycle': 0, 'intervention': None, 'observation': list(self.initial.snapshot)}]
        for step in self.steps:
            if step.observation is not None:
                records.append({
                    'cycle': step.cycle,
                    'intervention': step.observation.intervened_node,
                    'observation': list(step.observation.snapshot),
                })
        return records


@dataclass
class EpisodeView:
    """Machine-readable mirror of the prompt, consumed by scripted agents"""
    env_kind: EnvKind
    n: int
    s: Optional[int]
    cycle: int
    cycle_limit: int
    interventions: List[Optional[int]]
    observations: List[Tuple[int, ...]]


@dataclass
class AgentContext:
    prompt: str
    view: EpisodeView


@dataclass
class EpisodeResult:
    success: bool
    iterations_used: int
    termination: Termination
    transcript: EpisodeTranscript
    trial: int = 0
    seed: int = 0
    truth: Optional[Dict] = None

    def to_record(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'trial': self.trial,
            'seed': self.seed,
            'success': self.success,
            'iterations_used': self.iterations_used,
            'termination': self.termination.value,
            'truth': self.truth,
            'initial': list(self.transcript.initial.snapshot),
            'steps': [s.to_dict() for s in self.transcript.steps],
        }


@dataclass
class RunSummary:
    trials: int
    successes: int
    success_rate: float
    avg_iterations: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'trials': self.trials,
            'successes': self.successes,
            'success_rate': self.success_rate,
            'avg_iterations': self.avg_iterations,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "RunSummary":
        return cls(
            trials=data['trials'],
            successes=data['successes'],
            success_rate=data['success_rate'],
            avg_iterations=data.get('avg_iterations'),
        )


@dataclass(frozen=True)
class TrajectoryInstance:
    x: np.ndarray
    p: int

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]


@dataclass
class TrajectoryScores:
    oa_acc: float
    at_acc: Tuple[float, ...]
    t: np.ndarray

    def to_dict(self) -> Dict:
        return {'oa_acc': self.oa_acc, 'at_acc': list(self.at_acc)}


@dataclass
class CallRecord:
    request: Dict
    response: Optional[Dict]
    latency_s: float
    attempt: int = 1
    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None
    cost: Optional[float] = None
    status: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunManifest:
    command: str
    config: Dict
    seed: int
    started_at: str
    finished_at: Optional[str] = None
    outputs: List[str] = field(default_factory=list)
    status: str = "running"
    tool_version: str = TOOL_VERSION

    def to_dict(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'command': self.command,
            'tool_version': self.tool_version,
            'seed': self.seed,
            'config': self.config,
            'started_at': self.started_at,
            'finished_at': self.finished_at,
            'status': self.status,
            'outputs': list(self.outputs),
        }
