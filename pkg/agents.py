"""
Agents for the discovery and trajectory tasks.

Scripted agents (random, sweep, oracle, zeros) read the structured view of an
episode and need no network; the LLM agents talk to a chat-completions
endpoint through :class:`llm_client.ChatClient`.
"""

import json
import logging
from abc import ABC, abstractmethod

import numpy as np

try:
    from .graph_core import DEFAULT_EDGE_DENSITY, AdjacencyMatrix, generate_graph, validate
    from .models import (STOP, AgentContext, AgentTurn, EnvKind, GraphKind, MalformedTurnError,
                         TrajectoryInstance, TransportError)
    from .trajectory import ground_truth
    from .utils import RandomStream, derive_seed, extract_json_objects, make_stream
except ImportError:
    from graph_core import DEFAULT_EDGE_DENSITY, AdjacencyMatrix, generate_graph, validate
    from models import (STOP, AgentContext, AgentTurn, EnvKind, GraphKind, MalformedTurnError,
                        TrajectoryInstance, TransportError)
    from trajectory import ground_truth
    from utils import RandomStream, derive_seed, extract_json_objects, make_stream

logger = logging.getLogger(__name__)

DEFAULT_RETRY_BUDGET = 3

SYSTEM_PROMPT = """You are an autonomous scientist. You run experiments (interventions) on a hidden system, \
observe the results, and refine a hypothesis about its structure until it is correct. \
Think step by step, then give your answer in the required JSON block."""

REASK_PROMPT = """Your previous reply could not be used: {error}
Reply again, ending with a single fenced JSON block of the form
```json
{{"hypothesis": [[...], ...], "intervention": <node index or "stop">, "reason": "..."}}
```"""


class Agent(ABC):
    """One discovery agent instance serves exactly one episode."""

    name = "agent"

    @abstractmethod
    def act(self, context: AgentContext) -> AgentTurn:
        ...


def random_agent(context: AgentContext, rng: RandomStream) -> AgentTurn:
    """Random valid hypothesis of the right kind and a random intervention"""
    view = context.view
    hypothesis = generate_graph(view.n, view.env_kind.graph_kind, DEFAULT_EDGE_DENSITY, rng)
    return AgentTurn(hypothesis=hypothesis, intervention=int(rng.integers(0, view.n)))


class RandomAgent(Agent):
    name = "random"

    def __init__(self, seed: int):
        self.rng = make_stream(seed)

    def act(self, context: AgentContext) -> AgentTurn:
        return random_agent(context, self.rng)


def sweep_agent(context: AgentContext) -> AgentTurn:
    """Intervene on 0, 1, ..., n-1 and read edges straight off the observation diffs.

    Chemistry: every node that changed after intervening i is downstream of i.
    Social: every other person whose state moved after intervening p is p's friend.
    Nodes not yet intervened on contribute zero rows.
    """
    view = context.view
    symmetric = view.env_kind is EnvKind.SOCIAL
    entries = np.zeros((view.n, view.n), dtype=np.uint8)

    for k, node in enumerate(view.interventions):
        if node is None:
            continue
        before = np.asarray(view.observations[k])
        after = np.asarray(view.observations[k + 1])
        changed = np.flatnonzero(before != after)
        changed = changed[changed != node]
        entries[node, changed] = 1
        if symmetric:
            entries[changed, node] = 1

    done = sum(1 for node in view.interventions if node is not None)
    hypothesis = AdjacencyMatrix(entries, view.env_kind.graph_kind)
    return AgentTurn(hypothesis=hypothesis, intervention=done % view.n,
                     rationale=f"sweep step {done + 1}: reading diffs of {done} interventions")


class SweepAgent(Agent):
    name = "sweep"

    def act(self, context: AgentContext) -> AgentTurn:
        return sweep_agent(context)


def _as_binary_matrix(value, n: int) -> np.ndarray:
    if not isinstance(value, list) or len(value) != n:
        raise ValueError(f"hypothesis must be a list of {n} rows")
    for row in value:
        if not isinstance(row, list) or len(row) != n:
            raise ValueError(f"every hypothesis row must have {n} entries")
        if any(isinstance(v, bool) or v not in (0, 1) for v in row):
            raise ValueError("hypothesis entries must be 0 or 1")
    return np.array(value, dtype=np.uint8)


def parse_turn(reply: str, n: int, kind: GraphKind) -> AgentTurn:
    """Parse the last well-formed answer block of a reply into an AgentTurn.

    Raises ValueError with a message suitable for re-asking the model.
    """
    candidates = [(obj, span) for obj, span in extract_json_objects(reply, ("hypothesis",))
                  if "hypothesis" in obj]
    if not candidates:
        raise ValueError("no JSON block with a \"hypothesis\" field was found")

    errors = []
    for obj, span in reversed(candidates):
        try:
            hypothesis = AdjacencyMatrix(_as_binary_matrix(obj["hypothesis"], n), kind)
            violations = validate(hypothesis)
            if violations:
                raise ValueError("invalid hypothesis: " + "; ".join(violations))

            intervention = obj.get("intervention")
            if isinstance(intervention, str) and intervention.strip().lower() == STOP:
                intervention = STOP
            elif isinstance(intervention, bool) or not isinstance(intervention, int):
                raise ValueError(f"intervention must be an integer node index or \"stop\", got {intervention!r}")
            elif not 0 <= intervention < n:
                raise ValueError(f"intervention {intervention} is outside 0..{n - 1}")
        except ValueError as e:
            errors.append(str(e))
            continue

        reason = obj.get("reason")
        if not isinstance(reason, str) or not reason.strip():
            reason = (reply[:span[0]] + reply[span[1]:]).strip() or None
        return AgentTurn(hypothesis=hypothesis, intervention=intervention, rationale=reason)

    raise ValueError(errors[0])


class LLMAgent(Agent):
    """Chat-model agent; re-asks on unusable replies up to ``retry_budget`` times."""

    def __init__(self, client, retry_budget: int = DEFAULT_RETRY_BUDGET, system_prompt: str = SYSTEM_PROMPT):
        self.client = client
        self.retry_budget = retry_budget
        self.system_prompt = system_prompt

    @property
    def name(self) -> str:
        return self.client.config.model_id

    def act(self, context: AgentContext) -> AgentTurn:
        view = context.view
        kind = view.env_kind.graph_kind
        messages = [
            {"role": "system", "content": self.system_prompt},
            {"role": "user", "content": context.prompt},
        ]
        reply = ""
        for attempt in range(self.retry_budget + 1):
            try:
                reply = self.client.complete(messages)
            except TransportError as e:
                raise MalformedTurnError(f"transport failure: {e}", reply) from e
            try:
                return parse_turn(reply, view.n, kind)
            except ValueError as e:
                logger.warning(f"Unusable reply at cycle {view.cycle} (attempt {attempt + 1}/"
                               f"{self.retry_budget + 1}): {e}")
                messages = messages + [
                    {"role": "assistant", "content": reply},
                    {"role": "user", "content": REASK_PROMPT.format(error=e)},
                ]
        raise MalformedTurnError(f"no usable reply after {self.retry_budget} re-asks", reply)


def llm_agent(context: AgentContext, client, retry_budget: int = DEFAULT_RETRY_BUDGET) -> AgentTurn:
    return LLMAgent(client, retry_budget).act(context)


class TrajectoryAgent(ABC):
    """Answers a trajectory prompt with reply text; the harness parses it."""

    name = "trajectory-agent"

    @abstractmethod
    def respond(self, prompt: str, instance: TrajectoryInstance) -> str:
        ...


def _fenced(matrix: np.ndarray) -> str:
    return "```json\n" + json.dumps({"trajectory_matrix": matrix.tolist()}) + "\n```"


class OracleTrajectoryAgent(TrajectoryAgent):
    name = "oracle"

    def respond(self, prompt: str, instance: TrajectoryInstance) -> str:
        return _fenced(ground_truth(instance))


class ZerosTrajectoryAgent(TrajectoryAgent):
    """Always predicts that nothing changes"""

    name = "zeros"

    def respond(self, prompt: str, instance: TrajectoryInstance) -> str:
        return _fenced(np.zeros((instance.m - 1, instance.n), dtype=np.uint8))


class LLMTrajectoryAgent(TrajectoryAgent):

    def __init__(self, client):
        self.client = client

    @property
    def name(self) -> str:
        return self.client.config.model_id

    def respond(self, prompt: str, instance: TrajectoryInstance) -> str:
        try:
            return self.client.complete([{"role": "user", "content": prompt}])
        except TransportError as e:
            logger.error(f"Trajectory query failed: {e}")
            return ""


def build_trajectory_agent(name: str, client=None) -> TrajectoryAgent:
    if name == "oracle":
        return OracleTrajectoryAgent()
    if name == "zeros":
        return ZerosTrajectoryAgent()
    if name == "llm":
        if client is None:
            raise ValueError("the llm trajectory agent needs a chat client")
        return LLMTrajectoryAgent(client)
    raise ValueError(f"unknown trajectory agent: {name}")


def discovery_agent_factory(name: str, client=None, retry_budget: int = DEFAULT_RETRY_BUDGET):
    """Factory building a fresh agent per trial config (random agents seed off the trial)"""
    if name == "random":
        return lambda cfg: RandomAgent(derive_seed(cfg.seed, "random-agent"))
    if name == "sweep":
        return lambda cfg: SweepAgent()
    if name == "llm":
        if client is None:
            raise ValueError("the llm agent needs a chat client")
        return lambda cfg: LLMAgent(client, retry_budget)
    raise ValueError(f"unknown agent: {name}")


def agent_label(name: str, client=None) -> str:
    return client.config.model_id if name == "llm" and client is not None else name
