"""
Experiment-grid configuration: TOML files merged with command-line overrides.

A grid file looks like::

    [defaults]
    seed = 0
    agent = "sweep"

    [[discover]]
    env = "chemistry"
    nodes = 3
    states = 3
    trials = 20

    [trajectory]
    m_values = [3, 5, 10]
    rounds = 100

    [llm]
    model = "openai/gpt-4o"
    budget = 25.0
"""

import logging
import tomllib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

try:
    from .llm_client import ClientConfig
    from .models import EnvKind, EpisodeConfig, InvalidConfigurationError
    from .trajectory import DEFAULT_COLORS, DEFAULT_M_VALUES, DEFAULT_NODES, DEFAULT_ROUNDS
except ImportError:
    from llm_client import ClientConfig
    from models import EnvKind, EpisodeConfig, InvalidConfigurationError
    from trajectory import DEFAULT_COLORS, DEFAULT_M_VALUES, DEFAULT_NODES, DEFAULT_ROUNDS

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = {EnvKind.CHEMISTRY: 20, EnvKind.SOCIAL: 10}

# the published comparison grid
PUBLISHED_GRID: Tuple[Dict, ...] = (
    {'env': 'social', 'nodes': 3},
    {'env': 'social', 'nodes': 5},
    {'env': 'social', 'nodes': 10},
    {'env': 'chemistry', 'nodes': 3, 'states': 3},
    {'env': 'chemistry', 'nodes': 3, 'states': 5},
    {'env': 'chemistry', 'nodes': 10, 'states': 5},
)

_CELL_KEYS = {'env', 'nodes', 'persons', 'states', 'density', 'trials', 'cycle_limit', 'seed', 'agent',
              'allow_same_state', 'initial_states'}


@dataclass
class DiscoverCell:
    episode: EpisodeConfig
    trials: int
    agent: str


@dataclass
class TrajectorySettings:
    m_values: Tuple[int, ...] = DEFAULT_M_VALUES
    nodes: int = DEFAULT_NODES
    colors: int = DEFAULT_COLORS
    rounds: int = DEFAULT_ROUNDS
    seed: int = 0
    cot: bool = False
    agent: str = "oracle"

    def to_dict(self) -> Dict:
        return {
            'm_values': list(self.m_values), 'nodes': self.nodes, 'colors': self.colors,
            'rounds': self.rounds, 'seed': self.seed, 'cot': self.cot, 'agent': self.agent,
        }


def load_config(path) -> Dict:
    """Parse a TOML grid file; any problem becomes an InvalidConfigurationError."""
    path = Path(path)
    if not path.is_file():
        raise InvalidConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise InvalidConfigurationError(f"cannot read config {path}: {e}") from e
    unknown = set(raw) - {'defaults', 'discover', 'trajectory', 'llm'}
    if unknown:
        raise InvalidConfigurationError(f"unknown config sections: {sorted(unknown)}")
    logger.info(f"Loaded config {path}")
    return raw


def _override(values: Dict, args, mapping: Dict[str, str]) -> Dict:
    merged = dict(values)
    for key, attr in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            merged[key] = value
    return merged


def discover_cells(raw: Dict, args) -> List[DiscoverCell]:
    """Grid cells from the file (or the published grid), with CLI flags applied to each."""
    defaults = raw.get('defaults', {})
    cells = raw.get('discover')
    if getattr(args, 'env', None) is not None:
        cells = [{}]
    elif not cells:
        cells = list(PUBLISHED_GRID)

    result = []
    for index, cell in enumerate(cells):
        unknown = set(cell) - _CELL_KEYS
        if unknown:
            raise InvalidConfigurationError(f"discover cell {index}: unknown keys {sorted(unknown)}")
        merged = {**{k: v for k, v in defaults.items() if k in _CELL_KEYS}, **cell}
        merged = _override(merged, args, {
            'env': 'env', 'nodes': 'nodes', 'states': 'states', 'density': 'density',
            'trials': 'trials', 'cycle_limit': 'cycle_limit', 'seed': 'seed', 'agent': 'agent',
        })
        if getattr(args, 'persons', None) is not None:
            merged['nodes'] = args.persons
        if getattr(args, 'allow_same_state', False):
            merged['allow_same_state'] = True
        if 'persons' in merged and 'nodes' not in merged:
            merged['nodes'] = merged['persons']

        try:
            env = EnvKind(merged.get('env', 'chemistry'))
        except ValueError as e:
            raise InvalidConfigurationError(f"discover cell {index}: unknown env {merged.get('env')!r}") from e
        if 'nodes' not in merged:
            raise InvalidConfigurationError(f"discover cell {index}: node count missing (--nodes/--persons)")

        episode = EpisodeConfig(
            env_kind=env,
            n=int(merged['nodes']),
            s=int(merged.get('states', 3)),
            edge_density=float(merged.get('density', 0.5)),
            cycle_limit=merged.get('cycle_limit'),
            seed=int(merged.get('seed', 0)),
            allow_same_state=bool(merged.get('allow_same_state', False)),
            initial_states=merged.get('initial_states'),
        )
        trials = int(merged.get('trials', DEFAULT_TRIALS[env]))
        if trials < 1:
            raise InvalidConfigurationError(f"discover cell {index}: trials must be at least 1")
        result.append(DiscoverCell(episode=episode, trials=trials, agent=merged.get('agent', 'sweep')))
    return result


def trajectory_settings(raw: Dict, args) -> TrajectorySettings:
    defaults = raw.get('defaults', {})
    section = {**{k: v for k, v in defaults.items() if k == 'seed'}, **raw.get('trajectory', {})}
    section = _override(section, args, {
        'm_values': 'm_values', 'nodes': 'nodes', 'colors': 'colors', 'rounds': 'rounds',
        'seed': 'seed', 'agent': 'agent',
    })
    if getattr(args, 'cot', False):
        section['cot'] = True
    settings = TrajectorySettings(
        m_values=tuple(int(m) for m in section.get('m_values', DEFAULT_M_VALUES)),
        nodes=int(section.get('nodes', DEFAULT_NODES)),
        colors=int(section.get('colors', DEFAULT_COLORS)),
        rounds=int(section.get('rounds', DEFAULT_ROUNDS)),
        seed=int(section.get('seed', 0)),
        cot=bool(section.get('cot', False)),
        agent=section.get('agent', 'oracle'),
    )
    if any(m < 2 for m in settings.m_values) or settings.nodes < 1 or settings.colors < 2 or settings.rounds < 1:
        raise InvalidConfigurationError(f"invalid trajectory settings: {settings.to_dict()}")
    return settings


def client_config(raw: Dict, args) -> Tuple[ClientConfig, Optional[float]]:
    """Client settings and the spend budget (None means unlimited)"""
    section = _override(raw.get('llm', {}), args, {
        'model': 'model', 'base_url': 'base_url', 'budget': 'budget',
    })
    budget = section.pop('budget', None)
    renames = {'model': 'model_id'}
    allowed = {'base_url', 'model_id', 'temperature', 'max_tokens', 'api_key_env', 'timeout',
               'max_retries', 'max_in_flight', 'base_delay', 'max_delay'}
    kwargs = {}
    for key, value in section.items():
        key = renames.get(key, key)
        if key not in allowed:
            raise InvalidConfigurationError(f"unknown [llm] key: {key}")
        kwargs[key] = value
    if budget is not None and budget <= 0:
        raise InvalidConfigurationError(f"budget must be positive, got {budget}")
    return ClientConfig(**kwargs), budget
