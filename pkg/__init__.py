"""
Discovery Harness - seedable causal-discovery and trajectory-tracking benchmarks.

This package runs agents (scripted baselines or chat-completion models) against
hidden causal graphs in simulated chemistry and social-network environments,
and scores long-horizon state-change tracking.
"""

from .models import (EnvKind, EpisodeConfig, EpisodeResult, GraphKind, RunSummary, Termination,
                     TOOL_VERSION)
from .graph_core import AdjacencyMatrix, generate_graph, graphs_equivalent, reachability_closure, validate
from .environments import Oracle
from .protocol import run_batch, run_episode
from .agents import LLMAgent, RandomAgent, SweepAgent
from .trajectory import run_sweep, score
from .llm_client import ChatClient, ClientConfig, budget_guard
from .utils import retry_with_exponential_backoff, setup_logging

__version__ = TOOL_VERSION

__all__ = [
    "AdjacencyMatrix",
    "ChatClient",
    "ClientConfig",
    "EnvKind",
    "EpisodeConfig",
    "EpisodeResult",
    "GraphKind",
    "LLMAgent",
    "Oracle",
    "RandomAgent",
    "RunSummary",
    "SweepAgent",
    "Termination",
    "budget_guard",
    "generate_graph",
    "graphs_equivalent",
    "reachability_closure",
    "retry_with_exponential_backoff",
    "run_batch",
    "run_episode",
    "run_sweep",
    "score",
    "setup_logging",
    "validate",
]
