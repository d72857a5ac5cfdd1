"""
The autonomous discovery cycle: prompt assembly, agent turns, oracle steps,
termination and batch aggregation.
"""

import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Callable, List, Optional

try:
    from .environments import Oracle
    from .models import (AgentContext, BudgetExceededError, EnvKind, EpisodeConfig,
                         EpisodeResult, EpisodeStep, EpisodeTranscript, EpisodeView,
                         MalformedTurnError, ObservationRow, RunSummary, Termination)
    from .utils import derive_seed
except ImportError:
    from environments import Oracle
    from models import (AgentContext, BudgetExceededError, EnvKind, EpisodeConfig,
                        EpisodeResult, EpisodeStep, EpisodeTranscript, EpisodeView,
                        MalformedTurnError, ObservationRow, RunSummary, Termination)
    from utils import derive_seed

logger = logging.getLogger(__name__)

# (config for one trial) -> fresh agent; agents keep per-episode state
AgentFactory = Callable[[EpisodeConfig], "Agent"]  # noqa: F821

CHEMISTRY_RULES = """You are a chemist studying a hidden reaction network of {n} molecules, indexed 0 to {last}.
The molecules are linked by directed edges that form a directed acyclic graph (no cycles, no self-loops).
Every molecule has a state in {{0, ..., {top}}}.
When you intervene on a molecule, every molecule downstream of it (reachable along directed edges, not only direct children) changes to a new random state.
The intervened molecule keeps its state, and every molecule that is not downstream of it is unaffected.
GOAL: recover the adjacency matrix H, where H[i][j] = 1 means a directed edge from molecule i to molecule j.
Any matrix with exactly the same downstream (reachability) structure as the hidden graph counts as correct."""

SOCIAL_RULES = """You are a sociologist studying a hidden social network of {n} persons, indexed 0 to {last}.
Friendships are undirected: if i is a friend of j then j is a friend of i, and nobody is their own friend.
Every person has a non-negative integer state.
When you intervene on a person, that person's state increases by 1 and the state of each of their friends increases by 1.
Nobody else is affected.
GOAL: recover the symmetric adjacency matrix H, where H[i][j] = H[j][i] = 1 means persons i and j are friends.
Only the exact friendship matrix counts as correct."""

OUTPUT_CONTRACT = """Each turn, state your current hypothesis and choose the next intervention.
End your reply with a fenced JSON block of exactly this form:
```json
{{"hypothesis": {example}, "intervention": 0, "reason": "short justification"}}
```
"hypothesis" must be a {n}x{n} matrix of 0/1 integers with zeros on the diagonal.
"intervention" must be an integer node index from 0 to {last}, or "stop" to end the experiment.
The experiment ends as soon as your hypothesis is correct. You have at most {limit} turns; this is turn {cycle}."""


def _example_matrix(n: int) -> str:
    row = "[" + ", ".join(["0"] * n) + "]"
    return "[" + ", ".join([row] * n) + "]"


def _render_row(snapshot) -> str:
    return " ".join(str(v) for v in snapshot)


def build_prompt(transcript: EpisodeTranscript, config: EpisodeConfig) -> str:
    """Deterministic prompt: rules, output contract, intervention history, observation matrix."""
    n = config.n
    if config.env_kind is EnvKind.CHEMISTRY:
        rules = CHEMISTRY_RULES.format(n=n, last=n - 1, top=config.s - 1)
    else:
        rules = SOCIAL_RULES.format(n=n, last=n - 1)

    cycle = len(transcript.steps) + 1
    contract = OUTPUT_CONTRACT.format(example=_example_matrix(n), n=n, last=n - 1,
                                      limit=config.cycle_limit, cycle=cycle)

    history = ["PREVIOUS INTERVENTIONS:"]
    if not transcript.steps:
        history.append("  (none yet)")
    for step in transcript.steps:
        if step.intervention is None:
            history.append(f"  turn {step.cycle}: no intervention")
        else:
            history.append(f"  turn {step.cycle}: intervened on {step.intervention}")

    observations = ["OBSERVATION MATRIX (one row per turn; columns are nodes 0 to {}):".format(n - 1)]
    for index, row in enumerate(transcript.rows):
        if index == 0:
            label = "initial"
        elif row.intervened_node is None:
            label = "no intervention"
        else:
            label = f"after intervening on {row.intervened_node}"
        observations.append(f"  row {index} ({label}): {_render_row(row.snapshot)}")

    return "\n\n".join([rules, "\n".join(history), "\n".join(observations), contract])


def build_context(transcript: EpisodeTranscript, config: EpisodeConfig) -> AgentContext:
    view = EpisodeView(
        env_kind=config.env_kind,
        n=config.n,
        s=config.s if config.env_kind is EnvKind.CHEMISTRY else None,
        cycle=len(transcript.steps) + 1,
        cycle_limit=config.cycle_limit,
        interventions=transcript.interventions,
        observations=[row.snapshot for row in transcript.rows],
    )
    return AgentContext(prompt=build_prompt(transcript, config), view=view)


def run_episode(config: EpisodeConfig, agent, trial: int = 0) -> EpisodeResult:
    """Run one episode: check each hypothesis before applying its intervention."""
    oracle = Oracle(config)
    transcript = EpisodeTranscript(initial=ObservationRow(oracle.observe()))

    for cycle in range(1, config.cycle_limit + 1):
        context = build_context(transcript, config)
        try:
            turn = agent.act(context)
        except MalformedTurnError as e:
            logger.warning(f"Trial {trial} cycle {cycle}: malformed turn, consumed as no-op ({e})")
            transcript.steps.append(EpisodeStep(
                cycle=cycle, hypothesis=None, intervention=None,
                observation=ObservationRow(oracle.observe()), malformed=True))
            continue

        if oracle.matches(turn.hypothesis):
            transcript.steps.append(EpisodeStep(cycle, turn.hypothesis.to_list(), None, None, turn.rationale))
            return _result(True, cycle, Termination.HYPOTHESIS_MATCHED, transcript, oracle, config, trial)

        if turn.stops:
            transcript.steps.append(EpisodeStep(cycle, turn.hypothesis.to_list(), None, None, turn.rationale))
            logger.info(f"Trial {trial}: agent stopped at cycle {cycle} without a matching hypothesis")
            return _result(False, cycle, Termination.AGENT_FAILURE, transcript, oracle, config, trial)

        row = oracle.intervene(turn.intervention)
        transcript.steps.append(EpisodeStep(cycle, turn.hypothesis.to_list(), int(turn.intervention),
                                            row, turn.rationale))

    return _result(False, config.cycle_limit, Termination.CYCLE_LIMIT, transcript, oracle, config, trial)


def _result(success, iterations, termination, transcript, oracle, config, trial) -> EpisodeResult:
    return EpisodeResult(success=success, iterations_used=iterations, termination=termination,
                         transcript=transcript, trial=trial, seed=config.seed, truth=oracle.truth.to_dict())


def summarize(results: List[EpisodeResult]) -> RunSummary:
    """Success rate over all trials; average iterations over successful trials only"""
    trials = len(results)
    wins = [r.iterations_used for r in results if r.success]
    return RunSummary(
        trials=trials,
        successes=len(wins),
        success_rate=len(wins) / trials if trials else 0.0,
        avg_iterations=sum(wins) / len(wins) if wins else None,
    )


def trial_config(config: EpisodeConfig, trial: int) -> EpisodeConfig:
    return replace(config, seed=derive_seed(config.seed, trial))


def run_batch(config: EpisodeConfig, agent_factory: AgentFactory, trials: int, max_workers: int = 1,
              on_result: Optional[Callable[[EpisodeResult], None]] = None) -> RunSummary:
    """Run independent trials; results are delivered to ``on_result`` in trial order."""
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    start_time = time.time()
    configs = [trial_config(config, t) for t in range(trials)]
    results: List[EpisodeResult] = []

    def _run(trial: int) -> EpisodeResult:
        cfg = configs[trial]
        return run_episode(cfg, agent_factory(cfg), trial=trial)

    def _record(result: EpisodeResult):
        results.append(result)
        status = "✓" if result.success else "✗"
        print(f"  trial {result.trial + 1}/{trials}: {status} {result.termination.value} "
              f"after {result.iterations_used} cycles")
        if on_result:
            on_result(result)
        if len(results) % 10 == 0 or len(results) == trials:
            rate = sum(1 for r in results if r.success) / len(results)
            logger.info(f"Progress: {len(results)}/{trials} - Success: {rate:.1%} - "
                        f"Elapsed: {time.time() - start_time:.1f}s")

    if max_workers == 1:
        for trial in range(trials):
            _record(_run(trial))
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as executor:
            futures = [executor.submit(_run, trial) for trial in range(trials)]
            for index, future in enumerate(futures):
                try:
                    _record(future.result())
                except BudgetExceededError:
                    for later in futures[index + 1:]:
                        later.cancel()
                    # trials already running may still finish; keep them
                    for later in futures[index + 1:]:
                        if not later.cancelled() and later.exception() is None:
                            _record(later.result())
                    raise

    return summarize(results)
