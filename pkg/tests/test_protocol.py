import threading

import numpy as np
import pytest

from agents import SweepAgent, discovery_agent_factory
from graph_core import AdjacencyMatrix
from models import (STOP, AgentTurn, BudgetExceededError, EnvKind, EpisodeConfig, EpisodeResult,
                    InvalidConfigurationError, MalformedTurnError, Termination)
from protocol import build_prompt, run_batch, run_episode, summarize, trial_config
from environments import Oracle
from models import EpisodeTranscript, ObservationRow


class NeverCorrect:
    """All-ones hypothesis: self-loops mean it can never match a valid truth"""

    def act(self, context):
        view = context.view
        ones = AdjacencyMatrix(np.ones((view.n, view.n), dtype=np.uint8), view.env_kind.graph_kind)
        return AgentTurn(hypothesis=ones, intervention=0)


class Scripted:
    """Replays a fixed list of turns; a MalformedTurnError entry is raised instead"""

    def __init__(self, turns):
        self.turns = list(turns)
        self.contexts = []

    def act(self, context):
        self.contexts.append(context)
        turn = self.turns.pop(0)
        if isinstance(turn, Exception):
            raise turn
        return turn


def truth_of(config):
    return Oracle(config).truth


@pytest.mark.parametrize("env", [EnvKind.CHEMISTRY, EnvKind.SOCIAL])
def test_never_correct_agent_hits_cycle_limit_at_twice_n(env):
    for seed in range(20):
        config = EpisodeConfig(env, n=3, s=3, seed=seed)
        result = run_episode(config, NeverCorrect())
        assert not result.success
        assert result.iterations_used == 6
        assert result.termination is Termination.CYCLE_LIMIT
        assert len(result.transcript.rows) == 7


def test_summary_of_all_failures_has_no_average():
    results = [run_episode(EpisodeConfig(EnvKind.SOCIAL, n=3, seed=s), NeverCorrect()) for s in range(3)]
    summary = summarize(results)
    assert summary.success_rate == 0.0
    assert summary.avg_iterations is None


def test_correct_first_hypothesis_succeeds_in_one_cycle():
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=4, s=3, seed=5)
    agent = Scripted([AgentTurn(truth_of(config), 0)])
    result = run_episode(config, agent)
    assert result.success
    assert result.iterations_used == 1
    assert result.termination is Termination.HYPOTHESIS_MATCHED
    # the matching cycle applies no intervention
    assert result.transcript.rows == [result.transcript.initial]


def test_equivalent_hypothesis_terminates_chemistry_episode():
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=5, s=3, seed=8, edge_density=0.7)
    from graph_core import reachability_closure
    closure = AdjacencyMatrix(reachability_closure(truth_of(config)), config.env_kind.graph_kind)
    wrong = AdjacencyMatrix.zeros(5, config.env_kind.graph_kind)
    if closure == wrong:
        pytest.skip("empty truth")
    result = run_episode(config, Scripted([AgentTurn(wrong, 1), AgentTurn(closure, 2)]))
    assert result.success and result.iterations_used == 2


def test_malformed_turn_consumes_cycle_as_no_op():
    config = EpisodeConfig(EnvKind.SOCIAL, n=3, seed=1)
    truth = truth_of(config)
    agent = Scripted([MalformedTurnError("bad", "garbage"), AgentTurn(truth, 0)])
    result = run_episode(config, agent)
    assert result.success and result.iterations_used == 2
    step = result.transcript.steps[0]
    assert step.malformed and step.intervention is None
    assert step.observation.intervened_node is None
    assert step.observation.snapshot == result.transcript.initial.snapshot
    assert "no intervention" in agent.contexts[1].prompt


def test_stop_without_match_is_agent_failure():
    config = EpisodeConfig(EnvKind.SOCIAL, n=3, seed=2)
    truth = truth_of(config)
    wrong = AdjacencyMatrix(np.ones((3, 3), dtype=np.uint8), truth.kind)
    result = run_episode(config, Scripted([AgentTurn(wrong, 1), AgentTurn(wrong, STOP)]))
    assert not result.success
    assert result.termination is Termination.AGENT_FAILURE
    assert result.iterations_used == 2


def test_stop_with_match_still_succeeds():
    config = EpisodeConfig(EnvKind.SOCIAL, n=3, seed=2)
    result = run_episode(config, Scripted([AgentTurn(truth_of(config), STOP)]))
    assert result.success


def test_custom_cycle_limit():
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=3, s=3, seed=0, cycle_limit=2)
    assert run_episode(config, NeverCorrect()).iterations_used == 2
    with pytest.raises(InvalidConfigurationError):
        EpisodeConfig(EnvKind.CHEMISTRY, n=3, cycle_limit=0)


def test_sweep_agent_recovers_chemistry_graphs():
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=10, s=5, edge_density=0.5)
    for trial in range(100):
        result = run_episode(trial_config(config, trial), SweepAgent(), trial)
        assert result.success
        assert result.iterations_used <= config.n + 1


def test_sweep_agent_recovers_social_graphs():
    config = EpisodeConfig(EnvKind.SOCIAL, n=10, edge_density=0.5)
    for trial in range(100):
        result = run_episode(trial_config(config, trial), SweepAgent(), trial)
        assert result.success
        assert result.iterations_used <= config.n + 1


@pytest.mark.parametrize("density", [0.0, 1.0])
def test_sweep_agent_at_density_extremes(density):
    for env in (EnvKind.CHEMISTRY, EnvKind.SOCIAL):
        config = EpisodeConfig(env, n=6, s=3, edge_density=density, seed=4)
        assert run_episode(config, SweepAgent()).success


def test_single_node_episode_succeeds_immediately():
    result = run_episode(EpisodeConfig(EnvKind.CHEMISTRY, n=1, s=2, seed=0), SweepAgent())
    assert result.success and result.iterations_used == 1


def test_prompt_is_deterministic_and_lists_history():
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=3, s=4, seed=0)
    transcript = EpisodeTranscript(initial=ObservationRow((1, 2, 3)))
    first = build_prompt(transcript, config)
    assert first == build_prompt(transcript, config)
    assert "(none yet)" in first
    assert "row 0 (initial): 1 2 3" in first
    assert "this is turn 1" in first and "at most 6 turns" in first
    assert "{0, ..., 3}" in first


def test_social_prompt_mentions_symmetry():
    config = EpisodeConfig(EnvKind.SOCIAL, n=4, seed=0)
    prompt = build_prompt(EpisodeTranscript(initial=ObservationRow((0, 0, 0, 0))), config)
    assert "symmetric" in prompt
    assert "at most 8 turns" in prompt


def test_batch_is_deterministic_and_ordered_across_workers():
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=4, s=3, seed=17)
    factory = discovery_agent_factory("random")
    serial, parallel = [], []
    run_batch(config, factory, 8, max_workers=1, on_result=serial.append)
    run_batch(config, factory, 8, max_workers=4, on_result=parallel.append)
    assert [r.to_record() for r in serial] == [r.to_record() for r in parallel]
    assert [r.trial for r in serial] == list(range(8))


def test_batch_summary_counts():
    config = EpisodeConfig(EnvKind.SOCIAL, n=3, seed=0)
    summary = run_batch(config, discovery_agent_factory("sweep"), 5)
    assert summary.trials == 5 and summary.successes == 5
    assert summary.success_rate == 1.0
    assert 1 <= summary.avg_iterations <= 4


def test_batch_rejects_zero_trials():
    with pytest.raises(ValueError):
        run_batch(EpisodeConfig(EnvKind.SOCIAL, n=3), discovery_agent_factory("sweep"), 0)


def test_result_record_has_no_timestamps():
    result = run_episode(EpisodeConfig(EnvKind.SOCIAL, n=3, seed=0), SweepAgent())
    record = result.to_record()
    assert "started_at" not in record and "finished_at" not in record
    assert record['truth']['kind'] == 'sym'


def test_prompt_after_two_cycles_lists_both_interventions():
    config = EpisodeConfig(EnvKind.CHEMISTRY, n=3, s=3, seed=9, cycle_limit=3)
    wrong = AdjacencyMatrix(np.ones((3, 3), dtype=np.uint8), config.env_kind.graph_kind)
    agent = Scripted([AgentTurn(wrong, 0), AgentTurn(wrong, 2), AgentTurn(wrong, 1)])
    run_episode(config, agent)
    prompt = agent.contexts[2].prompt
    assert "turn 1: intervened on 0" in prompt
    assert "turn 2: intervened on 2" in prompt
    assert "row 1 (after intervening on 0)" in prompt
    assert "row 2 (after intervening on 2)" in prompt
    assert "row 3" not in prompt
    assert "this is turn 3" in prompt
    assert agent.contexts[2].view.observations[0] == agent.contexts[0].view.observations[0]


def test_summary_averages_successful_trials_only():
    transcript = EpisodeTranscript(initial=ObservationRow((0,)))
    wins = [2, 2, 3, 3, 3, 4, 4]
    results = [EpisodeResult(True, k, Termination.HYPOTHESIS_MATCHED, transcript, trial=t)
               for t, k in enumerate(wins)]
    results += [EpisodeResult(False, 6, Termination.CYCLE_LIMIT, transcript, trial=t) for t in range(7, 10)]
    summary = summarize(results)
    assert summary.trials == 10 and summary.successes == 7
    assert summary.success_rate == pytest.approx(0.7)
    assert summary.avg_iterations == pytest.approx(3.0)


class Halting:
    """Waits until another trial has started, then runs out of budget"""

    def __init__(self, started):
        self.started = started

    def act(self, context):
        assert self.started.wait(timeout=10)
        raise BudgetExceededError("spent 1.0000 of budget 1.0000")


class SignalingSolver:
    def __init__(self, config, started):
        self.truth = truth_of(config)
        self.started = started

    def act(self, context):
        self.started.set()
        return AgentTurn(self.truth, 0)


def test_budget_halt_keeps_trials_that_already_finished():
    config = EpisodeConfig(EnvKind.SOCIAL, n=3, seed=4)
    first, second = trial_config(config, 0).seed, trial_config(config, 1).seed
    started = threading.Event()

    def factory(cfg):
        if cfg.seed == first:
            return Halting(started)
        if cfg.seed == second:
            return SignalingSolver(cfg, started)
        return SweepAgent()

    seen = []
    with pytest.raises(BudgetExceededError):
        run_batch(config, factory, 4, max_workers=2, on_result=seen.append)
    trials = [r.trial for r in seen]
    assert 1 in trials and 0 not in trials
    assert trials == sorted(trials)


class Recording:
    def __init__(self, inner):
        self.inner = inner
        self.contexts = []

    def act(self, context):
        self.contexts.append(context)
        return self.inner.act(context)


def test_seeded_sweep_episode_matches_golden_file(golden):
    expected = golden("episode_chemistry_n3_s3_seed7_sweep.json")
    agent = Recording(SweepAgent())
    result = run_episode(EpisodeConfig(EnvKind.CHEMISTRY, n=3, s=3, seed=7), agent)
    assert result.truth == expected['truth']
    assert result.success is expected['success']
    assert result.iterations_used == expected['iterations_used']
    assert result.termination.value == expected['termination']
    assert result.transcript.replay_records() == expected['replay']
    assert [step.hypothesis for step in result.transcript.steps] == expected['hypotheses']
    assert agent.contexts[1].prompt + "\n" == golden("chemistry_n3_s3_seed7_turn2_prompt.txt")
