import json

import numpy as np
import pytest

from agents import (LLMAgent, OracleTrajectoryAgent, RandomAgent, SweepAgent, ZerosTrajectoryAgent,
                    agent_label, build_trajectory_agent, discovery_agent_factory, parse_turn)
from environments import Oracle
from graph_core import validate
from llm_client import ChatClient, ClientConfig
from models import (STOP, AgentContext, EnvKind, EpisodeConfig, EpisodeView, GraphKind,
                    MalformedTurnError, Termination, TransportError)
from protocol import build_context, run_episode
from models import EpisodeTranscript, ObservationRow
from stub_server import StubChatServer
from trajectory import generate_instance, ground_truth, parse_prediction
from utils import make_stream

DAG = GraphKind.DIRECTED_ACYCLIC
SYM = GraphKind.UNDIRECTED_SYMMETRIC


def answer(hypothesis, intervention, reason=None):
    payload = {"hypothesis": hypothesis, "intervention": intervention}
    if reason is not None:
        payload["reason"] = reason
    return "```json\n" + json.dumps(payload) + "\n```"


def context(env=EnvKind.CHEMISTRY, n=3):
    config = EpisodeConfig(env, n=n, s=3, seed=0)
    return build_context(EpisodeTranscript(initial=ObservationRow((0,) * n)), config)


class FakeClient:
    """Hands out scripted replies; a TransportError entry is raised"""

    def __init__(self, replies):
        self.replies = list(replies)
        self.calls = []
        self.config = ClientConfig(model_id="fake/model")

    def complete(self, messages):
        self.calls.append(messages)
        reply = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(reply, Exception):
            raise reply
        return reply


ZEROS = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
CHAIN = [[0, 1, 0], [0, 0, 1], [0, 0, 0]]


def test_parse_turn_reads_fenced_block():
    turn = parse_turn("Thinking...\n" + answer(CHAIN, 2, "chain"), 3, DAG)
    assert turn.hypothesis.to_list() == CHAIN
    assert turn.intervention == 2
    assert turn.rationale == "chain"


def test_parse_turn_last_block_wins():
    reply = answer(ZEROS, 0) + "\nOn reflection:\n" + answer(CHAIN, 1)
    assert parse_turn(reply, 3, DAG).hypothesis.to_list() == CHAIN


def test_parse_turn_unfenced_json_and_prose_rationale():
    reply = 'The chain explains it. {"hypothesis": %s, "intervention": 0}' % json.dumps(CHAIN)
    turn = parse_turn(reply, 3, DAG)
    assert turn.intervention == 0
    assert turn.rationale == "The chain explains it."


def test_parse_turn_fenced_scratch_does_not_hide_unfenced_answer():
    reply = ('Working notes:\n```json\n{"observed_changes": [1, 2]}\n```\n'
             'Final: {"hypothesis": %s, "intervention": 2}' % json.dumps(CHAIN))
    turn = parse_turn(reply, 3, DAG)
    assert turn.hypothesis.to_list() == CHAIN
    assert turn.intervention == 2


@pytest.mark.parametrize("value", ["stop", "STOP", " Stop "])
def test_parse_turn_accepts_stop(value):
    assert parse_turn(answer(ZEROS, value), 3, DAG).intervention == STOP


@pytest.mark.parametrize("reply", [
    "no json here",
    answer([[0, 1], [0, 0]], 0),
    answer([[0, 1, 0], [1, 0, 0], [0, 0, 0]], 0),
    answer([[1, 0, 0], [0, 0, 0], [0, 0, 0]], 0),
    answer([[0, 2, 0], [0, 0, 0], [0, 0, 0]], 0),
    answer(ZEROS, 3),
    answer(ZEROS, -1),
    answer(ZEROS, "1"),
    answer(ZEROS, True),
    answer(ZEROS, None),
])
def test_parse_turn_rejects_unusable_replies(reply):
    with pytest.raises(ValueError):
        parse_turn(reply, 3, DAG)


def test_parse_turn_requires_symmetry_for_social():
    with pytest.raises(ValueError, match="asymmetric"):
        parse_turn(answer(CHAIN, 0), 3, SYM)


def test_random_agent_is_reproducible_and_valid():
    ctx = context()
    a, b = RandomAgent(5), RandomAgent(5)
    for _ in range(10):
        ta, tb = a.act(ctx), b.act(ctx)
        assert ta.hypothesis == tb.hypothesis and ta.intervention == tb.intervention
        assert validate(ta.hypothesis) == []
        assert 0 <= ta.intervention < 3


def test_sweep_agent_starts_with_empty_hypothesis():
    turn = SweepAgent().act(context(EnvKind.SOCIAL, 4))
    assert not turn.hypothesis.entries.any()
    assert turn.hypothesis.kind is SYM
    assert turn.intervention == 0


def test_sweep_agent_reads_diffs_from_view():
    view = EpisodeView(env_kind=EnvKind.SOCIAL, n=3, s=None, cycle=3, cycle_limit=6,
                       interventions=[0, None], observations=[(0, 0, 0), (1, 1, 0), (1, 1, 0)])
    turn = SweepAgent().act(AgentContext(prompt="", view=view))
    assert turn.hypothesis.to_list() == [[0, 1, 0], [1, 0, 0], [0, 0, 0]]
    assert turn.intervention == 1


def test_llm_agent_parses_reply_and_sends_prompt():
    client = FakeClient([answer(CHAIN, 1, "because")])
    ctx = context()
    turn = LLMAgent(client).act(ctx)
    assert turn.intervention == 1
    assert client.calls[0][-1]["content"] == ctx.prompt
    assert client.calls[0][0]["role"] == "system"


def test_llm_agent_reasks_then_gives_up():
    client = FakeClient(["nonsense"])
    with pytest.raises(MalformedTurnError) as info:
        LLMAgent(client, retry_budget=3).act(context())
    assert len(client.calls) == 4
    assert info.value.last_reply == "nonsense"
    # each re-ask carries the conversation so far
    assert len(client.calls[-1]) == 2 + 2 * 3


def test_llm_agent_recovers_after_reask():
    client = FakeClient(["nonsense", answer(ZEROS, 0)])
    assert LLMAgent(client).act(context()).intervention == 0
    assert len(client.calls) == 2


def test_llm_agent_transport_failure_is_malformed_turn():
    client = FakeClient([TransportError("down")])
    with pytest.raises(MalformedTurnError):
        LLMAgent(client).act(context())


def test_llm_episode_end_to_end_against_stub_server(monkeypatch):
    monkeypatch.setenv("OPENROUTER_API_KEY", "sk-test")
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=3, s=3, seed=12)
    truth = Oracle(config).truth.to_list()
    server = StubChatServer([answer(ZEROS if truth != ZEROS else CHAIN, 0), "garbage", answer(truth, 2)],
                            cost=0.001)
    client = ChatClient(ClientConfig(base_url="http://stub.local/v1", base_delay=0.0),
                        http_client=server.http_client())
    result = run_episode(config, LLMAgent(client))
    assert result.success
    assert result.iterations_used == 2
    assert len(client.records) == 3
    assert result.transcript.steps[0].intervention == 0


def test_llm_episode_malformed_replies_consume_cycles(monkeypatch):
    monkeypatch.setenv("OPENROUTER_API_KEY", "sk-test")
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=3, s=3, seed=1, cycle_limit=2)
    server = StubChatServer(["I am not sure."])
    client = ChatClient(ClientConfig(base_url="http://stub.local/v1", base_delay=0.0),
                        http_client=server.http_client())
    result = run_episode(config, LLMAgent(client, retry_budget=3))
    assert not result.success
    assert result.termination is Termination.CYCLE_LIMIT
    assert len(server.requests) == 8
    assert all(step.malformed for step in result.transcript.steps)
    assert len(result.transcript.rows) == 3


def test_trajectory_agents():
    inst = generate_instance(6, 4, 3, make_stream(0))
    oracle = OracleTrajectoryAgent().respond("", inst)
    assert np.array_equal(parse_prediction(oracle, 6, 4), ground_truth(inst))
    zeros = ZerosTrajectoryAgent().respond("", inst)
    assert not parse_prediction(zeros, 6, 4).any()


def test_agent_builders():
    assert isinstance(build_trajectory_agent("oracle"), OracleTrajectoryAgent)
    with pytest.raises(ValueError):
        build_trajectory_agent("llm")
    with pytest.raises(ValueError):
        discovery_agent_factory("psychic")
    client = FakeClient(["x"])
    assert agent_label("llm", client) == "fake/model"
    assert agent_label("sweep") == "sweep"


def test_llm_agent_function_form():
    from agents import llm_agent
    turn = llm_agent(context(), FakeClient([answer(CHAIN, "stop")]))
    assert turn.stops
