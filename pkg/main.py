"""
Main entry point for the discovery harness.
"""

import sys
import logging
import argparse
from pathlib import Path
from typing import Dict, List

from dotenv import load_dotenv

try:
    from .agents import agent_label, build_trajectory_agent, discovery_agent_factory
    from .config import client_config, discover_cells, load_config, trajectory_settings
    from .llm_client import ChatClient
    from .models import BudgetExceededError, HarnessError, InvalidConfigurationError, RunManifest
    from .protocol import run_batch
    from .results import (DiscoverWriter, TrajectoryWriter, discover_dirname, save_report,
                          trajectory_dirname, utc_now)
    from .trajectory import round_seed, run_sweep
    from .utils import setup_logging
except ImportError:
    from agents import agent_label, build_trajectory_agent, discovery_agent_factory
    from config import client_config, discover_cells, load_config, trajectory_settings
    from llm_client import ChatClient
    from models import BudgetExceededError, HarnessError, InvalidConfigurationError, RunManifest
    from protocol import run_batch
    from results import (DiscoverWriter, TrajectoryWriter, discover_dirname, save_report,
                         trajectory_dirname, utc_now)
    from trajectory import round_seed, run_sweep
    from utils import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BUDGET = 3


def build_chat_client(config, budget):
    return ChatClient(config, budget=budget)


def _llm_client(raw: Dict, args):
    """Chat client for llm agents; credentials are checked before anything is written"""
    config, budget = client_config(raw, args)
    client = build_chat_client(config, budget)
    client.api_key()
    return client


def run_discover(args) -> int:
    raw = load_config(args.config) if args.config else {}
    cells = discover_cells(raw, args)
    client = _llm_client(raw, args) if any(c.agent == "llm" for c in cells) else None
    factories = []
    for cell in cells:
        try:
            factories.append(discovery_agent_factory(cell.agent, client))
        except ValueError as e:
            raise InvalidConfigurationError(str(e)) from e

    labels = [agent_label(cell.agent, client) for cell in cells]
    dirnames = [discover_dirname(cell.episode, label) for cell, label in zip(cells, labels)]
    clashes = sorted({name for name in dirnames if dirnames.count(name) > 1})
    if clashes:
        raise InvalidConfigurationError(f"grid cells would share a run directory: {', '.join(clashes)}")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"Running {len(cells)} discovery configuration(s) into {out_dir}")

    for cell, factory, label, dirname in zip(cells, factories, labels, dirnames):
        print(f"\n{cell.episode.label} - agent: {label} - {cell.trials} trials")
        config = {**cell.episode.to_dict(), 'trials': cell.trials, 'agent': cell.agent, 'agent_label': label}
        if client is not None:
            config['llm'] = client.config.to_dict()
        manifest = RunManifest(command="discover", config=config, seed=cell.episode.seed, started_at=utc_now())
        writer = DiscoverWriter(out_dir / dirname, manifest)
        calls_before = len(client.records) if client is not None else 0

        def calls():
            return client.record_dicts()[calls_before:] if client is not None else None

        try:
            run_batch(cell.episode, factory, cell.trials, max_workers=args.jobs, on_result=writer.on_result)
        except BudgetExceededError as e:
            summary = writer.finish(cell.episode.label, label, cell.episode, status="halted", calls=calls())
            logger.error(f"Budget exhausted, halting: {e}")
            print(f"\n✗ Budget halt after {summary.trials}/{cell.trials} trials; partial results in {writer.run_dir}")
            return EXIT_BUDGET

        summary = writer.finish(cell.episode.label, label, cell.episode, calls=calls())
        avg = f"{summary.avg_iterations:.1f}" if summary.avg_iterations is not None else "∞"
        print(f"✓ {cell.episode.label}: success {summary.success_rate:.0%}, avg iterations {avg}")

    print(f"\n✅ Complete! Results saved to: {out_dir}")
    return EXIT_OK


def run_trajectory(args) -> int:
    raw = load_config(args.config) if args.config else {}
    settings = trajectory_settings(raw, args)
    client = _llm_client(raw, args) if settings.agent == "llm" else None
    try:
        agent = build_trajectory_agent(settings.agent, client)
    except ValueError as e:
        raise InvalidConfigurationError(str(e)) from e
    label = agent_label(settings.agent, client)

    run_dir = Path(args.out) / trajectory_dirname(label, settings.cot)
    config = {**settings.to_dict(), 'agent_label': label}
    if client is not None:
        config['llm'] = client.config.to_dict()
    manifest = RunManifest(command="trajectory", config=config, seed=settings.seed, started_at=utc_now())
    writer = TrajectoryWriter(run_dir, manifest, resume=args.resume)

    # only rounds generated from this run's seeds are reusable
    reusable = [rec for rec in writer.completed
                if rec.m in settings.m_values and rec.round < settings.rounds and rec.cot == settings.cot
                and rec.n == settings.nodes and rec.p == settings.colors
                and rec.seed == round_seed(settings.seed, rec.m, rec.round)]
    writer.keep(reusable, list(settings.m_values))

    print(f"Trajectory tracking with {label} ({'with' if settings.cot else 'without'} CoT), "
          f"M in {list(settings.m_values)}, {settings.rounds} rounds")
    try:
        scores = run_sweep(agent, settings.m_values, settings.nodes, settings.colors, settings.rounds,
                           settings.cot, settings.seed, max_workers=args.jobs,
                           completed=writer.completed, on_round=writer.on_round)
    except BudgetExceededError as e:
        writer.finish({}, label, settings.cot, status="halted",
                      calls=client.record_dicts() if client is not None else None)
        logger.error(f"Budget exhausted, halting: {e}")
        print(f"\n✗ Budget halt; completed rounds kept in {run_dir} (rerun with --resume)")
        return EXIT_BUDGET

    writer.finish(scores, label, settings.cot, calls=client.record_dicts() if client is not None else None)
    print(f"\n✅ Complete! Results saved to: {run_dir}")
    return EXIT_OK


def run_report(args) -> int:
    try:
        report_dir = save_report(Path(args.results_dir))
    except FileNotFoundError as e:
        logger.error(str(e))
        print(f"✗ {e}")
        return EXIT_ERROR
    print(f"✅ Report saved to: {report_dir}")
    return EXIT_OK


def _m_values(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_llm_arguments(parser: argparse.ArgumentParser):
    parser.add_argument('--model', default=None, help='Model id for the llm agent (default: openai/gpt-4o)')
    parser.add_argument('--base-url', dest='base_url', default=None, help='Chat-completions endpoint base URL')
    parser.add_argument('--budget', type=float, default=None, help='Spend limit in USD; halts the run when reached')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Causal discovery and trajectory tracking harness')
    parser.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    discover = sub.add_parser('discover', help='Run causal discovery episodes')
    discover.add_argument('--config', default=None, help='TOML experiment grid')
    discover.add_argument('--env', choices=['chemistry', 'social'], default=None,
                          help='Run a single configuration instead of the grid')
    discover.add_argument('--nodes', type=int, default=None, help='Number of molecules')
    discover.add_argument('--persons', type=int, default=None, help='Number of persons (social)')
    discover.add_argument('--states', type=int, default=None, help='States per molecule (chemistry)')
    discover.add_argument('--density', type=float, default=None, help='Edge density of hidden graphs')
    discover.add_argument('--trials', type=int, default=None, help='Episodes per configuration')
    discover.add_argument('--cycle-limit', dest='cycle_limit', type=int, default=None,
                          help='Cycles per episode (default: 2n)')
    discover.add_argument('--allow-same-state', dest='allow_same_state', action='store_true',
                          help='Let resampled molecules keep their state')
    discover.add_argument('--agent', choices=['random', 'sweep', 'llm'], default=None,
                          help='Agent to evaluate (default: sweep)')
    discover.add_argument('--seed', type=int, default=None, help='Master seed (default: 0)')
    discover.add_argument('--jobs', type=int, default=1, help='Parallel episodes (default: 1)')
    discover.add_argument('--out', default='results', help='Output directory')
    _add_llm_arguments(discover)

    trajectory = sub.add_parser('trajectory', help='Run the trajectory tracking sweep')
    trajectory.add_argument('--config', default=None, help='TOML experiment grid')
    trajectory.add_argument('--m-values', dest='m_values', type=_m_values, default=None,
                            help='Comma-separated trajectory lengths (default: 3,5,10,15,20,25,30)')
    trajectory.add_argument('--nodes', type=int, default=None, help='Nodes per state row (default: 5)')
    trajectory.add_argument('--colors', type=int, default=None, help='Color states (default: 3)')
    trajectory.add_argument('--rounds', type=int, default=None, help='Rounds per length (default: 100)')
    trajectory.add_argument('--cot', action='store_true', help='Ask for a reason with every answer')
    trajectory.add_argument('--agent', choices=['oracle', 'zeros', 'llm'], default=None,
                            help='Agent to evaluate (default: oracle)')
    trajectory.add_argument('--seed', type=int, default=None, help='Master seed (default: 0)')
    trajectory.add_argument('--jobs', type=int, default=1, help='Parallel rounds (default: 1)')
    trajectory.add_argument('--resume', action='store_true', help='Reuse rounds already on disk')
    trajectory.add_argument('--out', default='results', help='Output directory')
    _add_llm_arguments(trajectory)

    report = sub.add_parser('report', help='Summarise persisted runs')
    report.add_argument('results_dir', help='Directory holding discover/trajectory runs')

    return parser


def main(argv=None) -> int:
    """Main function to run the discovery harness"""
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(logging.DEBUG if args.verbose else logging.INFO)

    if getattr(args, 'jobs', 1) < 1:
        print("✗ --jobs must be at least 1")
        return EXIT_ERROR

    commands = {'discover': run_discover, 'trajectory': run_trajectory, 'report': run_report}
    try:
        return commands[args.command](args)
    except InvalidConfigurationError as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"✗ {e}")
        return EXIT_ERROR
    except HarnessError as e:
        logger.error(f"Run failed: {e}")
        print(f"✗ {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
