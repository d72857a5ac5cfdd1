"""
Results persistence and reporting for the discovery harness.
"""

import re
import json
import shutil
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import pandas as pd

try:
    from .graph_core import DEFAULT_EDGE_DENSITY
    from .models import SCHEMA_VERSION, EnvKind, EpisodeConfig, EpisodeResult, RunManifest, RunSummary
    from .protocol import summarize
    from .trajectory import RoundRecord, sweep_tables
    from .utils import append_jsonl, read_jsonl, write_json
except ImportError:
    from graph_core import DEFAULT_EDGE_DENSITY
    from models import SCHEMA_VERSION, EnvKind, EpisodeConfig, EpisodeResult, RunManifest, RunSummary
    from protocol import summarize
    from trajectory import RoundRecord, sweep_tables
    from utils import append_jsonl, read_jsonl, write_json

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
RESULTS = "results.jsonl"
SUMMARY = "summary.json"
CALLS = "calls.jsonl"
ROUNDS = "rounds.jsonl"
SCORES = "scores.json"
OA_CSV = "oa_acc.csv"
AT_CSV = "at_acc.csv"
REPORT_DIR = "report"
REPORT_TXT = "report.txt"
AT_SERIES_CSV = "at_acc_series.csv"

INFINITY = "∞"


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "-", text).strip("-") or "run"


def cell_variant(config: EpisodeConfig) -> List[str]:
    """Markers for the cell parameters that differ from their defaults"""
    parts = []
    if config.edge_density != DEFAULT_EDGE_DENSITY:
        parts.append(f"d{config.edge_density:g}")
    if config.cycle_limit != 2 * config.n:
        parts.append(f"c{config.cycle_limit}")
    if config.seed:
        parts.append(f"seed{config.seed}")
    if config.allow_same_state:
        parts.append("same")
    if config.initial_states is not None:
        parts.append("init" + "-".join(str(v) for v in config.initial_states))
    return parts


def discover_dirname(config: EpisodeConfig, agent_label: str) -> str:
    parts = [f"discover_{config.env_kind.value}_n{config.n}"]
    if config.env_kind is EnvKind.CHEMISTRY:
        parts.append(f"s{config.s}")
    return "_".join(parts + cell_variant(config) + [safe_name(agent_label)])


def trajectory_dirname(agent_label: str, cot: bool) -> str:
    return f"trajectory_{safe_name(agent_label)}_{'cot' if cot else 'nocot'}"


def fresh_dir(path: Path) -> Path:
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    return path


def write_manifest(run_dir: Path, manifest: RunManifest):
    manifest.outputs = sorted(set(manifest.outputs))
    write_json(run_dir / MANIFEST, manifest.to_dict())


def write_replay(run_dir: Path, result: EpisodeResult) -> str:
    """Per-episode replay file, one JSON object per cycle; returns its relative path."""
    relative = f"replays/trial_{result.trial:03d}.jsonl"
    path = run_dir / relative
    path.parent.mkdir(exist_ok=True)
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in result.transcript.replay_records()),
                    encoding="utf-8")
    return relative


class DiscoverWriter:
    """Streams one grid cell's episode results to disk as they finish"""

    def __init__(self, run_dir: Path, manifest: RunManifest):
        self.run_dir = fresh_dir(Path(run_dir))
        self.manifest = manifest
        self.results: List[EpisodeResult] = []
        (self.run_dir / RESULTS).touch()
        self.manifest.outputs.append(RESULTS)
        write_manifest(self.run_dir, self.manifest)

    def on_result(self, result: EpisodeResult):
        self.results.append(result)
        append_jsonl(self.run_dir / RESULTS, [result.to_record()])
        self.manifest.outputs.append(write_replay(self.run_dir, result))

    def finish(self, label: str, agent_label: str, config: EpisodeConfig, status: str = "complete",
               calls: Optional[List[Dict]] = None) -> RunSummary:
        summary = summarize(self.results)
        payload = summary.to_dict()
        payload.update({
            'kind': 'discover',
            'label': label,
            'env': config.env_kind.value,
            'n': config.n,
            's': config.s if config.env_kind.value == "chemistry" else None,
            'agent': agent_label,
            'variant': ' '.join(cell_variant(config)),
            'complete': status == "complete",
        })
        write_json(self.run_dir / SUMMARY, payload)
        self.manifest.outputs.append(SUMMARY)
        if calls is not None:
            append_jsonl(self.run_dir / CALLS, calls)
            self.manifest.outputs.append(CALLS)
        self.manifest.status = status
        self.manifest.finished_at = utc_now()
        write_manifest(self.run_dir, self.manifest)
        return summary


class TrajectoryWriter:
    """Streams raw rounds; on resume, keeps the already-persisted rounds"""

    def __init__(self, run_dir: Path, manifest: RunManifest, resume: bool = False):
        self.run_dir = Path(run_dir)
        self.manifest = manifest
        self.completed: List[RoundRecord] = []
        if resume and (self.run_dir / ROUNDS).exists():
            self.completed = [RoundRecord.from_record(r) for r in read_jsonl(self.run_dir / ROUNDS)]
            logger.info(f"Resuming from {len(self.completed)} persisted rounds in {self.run_dir}")
        else:
            fresh_dir(self.run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)

    def keep(self, records: List[RoundRecord], order: List[int]):
        """Rewrite the rounds file with only the reusable records, in canonical order"""
        rank = {m: i for i, m in enumerate(order)}
        self.completed = sorted(records, key=lambda rec: (rank.get(rec.m, len(rank)), rec.round))
        path = self.run_dir / ROUNDS
        path.write_text("", encoding="utf-8")
        append_jsonl(path, [rec.to_record() for rec in self.completed])
        self.manifest.outputs.append(ROUNDS)
        write_manifest(self.run_dir, self.manifest)

    def on_round(self, record: RoundRecord):
        append_jsonl(self.run_dir / ROUNDS, [record.to_record()])

    def finish(self, scores: Dict, model: str, cot: bool, status: str = "complete",
               calls: Optional[List[Dict]] = None):
        if scores:
            oa_rows, at_rows = sweep_tables(scores, model, cot)
            write_json(self.run_dir / SCORES, {
                'schema_version': SCHEMA_VERSION,
                'kind': 'trajectory',
                'model': model,
                'cot': cot,
                'scores': {str(m): s.to_dict() for m, s in sorted(scores.items())},
            })
            pd.DataFrame(oa_rows, columns=['M', 'model', 'cot', 'oa_acc']).to_csv(self.run_dir / OA_CSV, index=False)
            pd.DataFrame(at_rows, columns=['M', 'trajectory_index', 'model', 'cot', 'at_acc']).to_csv(
                self.run_dir / AT_CSV, index=False)
            self.manifest.outputs.extend([SCORES, OA_CSV, AT_CSV])
        if calls is not None:
            append_jsonl(self.run_dir / CALLS, calls)
            self.manifest.outputs.append(CALLS)
        self.manifest.status = status
        self.manifest.finished_at = utc_now()
        write_manifest(self.run_dir, self.manifest)


def format_cell(avg_iterations: Optional[float], success_rate: float) -> str:
    """Table cell "(average iterations, success rate)"; no successes renders as infinity"""
    if avg_iterations is None:
        avg = INFINITY
    else:
        avg = f"{avg_iterations:.1f}".rstrip("0").rstrip(".")
    return f"({avg}, {success_rate:.0%})"


def _format_pair(without: Optional[float], with_cot: Optional[float]) -> str:
    def pct(v):
        return "-" if v is None else f"{v:.0%}"
    return f"({pct(without)}, {pct(with_cot)})"


def _load_runs(results_dir: Path) -> Tuple[List[Dict], List[Dict]]:
    discover, trajectory = [], []
    for manifest_path in sorted(results_dir.rglob(MANIFEST)):
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Skipping unreadable manifest {manifest_path}: {e}")
            continue
        run_dir = manifest_path.parent
        if manifest.get('command') == 'discover' and (run_dir / SUMMARY).exists():
            discover.append(json.loads((run_dir / SUMMARY).read_text(encoding="utf-8")))
        elif manifest.get('command') == 'trajectory' and (run_dir / SCORES).exists():
            scores = json.loads((run_dir / SCORES).read_text(encoding="utf-8"))
            scores['run_dir'] = run_dir
            trajectory.append(scores)
    return discover, trajectory


def discover_table(summaries: List[Dict]) -> pd.DataFrame:
    """One row per configuration, one column per agent"""
    rows = []
    for s in summaries:
        summary = RunSummary.from_dict(s)
        setting = f"{s['label']} [{s['variant']}]" if s.get('variant') else s['label']
        rows.append({
            'env': s['env'], 'n': s['n'], 's': s.get('s') or 0, 'Setting': setting,
            'agent': s['agent'], 'cell': format_cell(summary.avg_iterations, summary.success_rate),
        })
    df = pd.DataFrame(rows).drop_duplicates(subset=['env', 'n', 's', 'Setting', 'agent'], keep='last')
    table = df.set_index(['env', 'n', 's', 'Setting', 'agent'])['cell'].unstack('agent')
    table = table.reset_index(level=['env', 'n', 's'], drop=True).fillna("-")
    table.columns.name = None
    return table


def trajectory_table(runs: List[Dict]) -> pd.DataFrame:
    """Overall accuracy per trajectory length, "(W/O CoT, With CoT)" per model"""
    cells: Dict[Tuple[int, str], Dict[bool, float]] = {}
    for run in runs:
        for m, s in run['scores'].items():
            cells.setdefault((int(m), run['model']), {})[bool(run['cot'])] = s['oa_acc']
    rows = [{'Trajectory Length': m, 'model': model, 'cell': _format_pair(v.get(False), v.get(True))}
            for (m, model), v in sorted(cells.items())]
    table = pd.DataFrame(rows).pivot(index='Trajectory Length', columns='model', values='cell').fillna("-")
    table.columns.name = None
    return table


def at_series(runs: List[Dict]) -> pd.DataFrame:
    frames = [pd.read_csv(run['run_dir'] / AT_CSV) for run in runs if (run['run_dir'] / AT_CSV).exists()]
    if not frames:
        return pd.DataFrame(columns=['M', 'trajectory_index', 'model', 'cot', 'at_acc'])
    series = pd.concat(frames, ignore_index=True)
    return series.sort_values(['model', 'cot', 'M', 'trajectory_index']).reset_index(drop=True)


def build_report(results_dir: Path) -> Tuple[str, pd.DataFrame]:
    """Render report text and the per-transition series; both depend only on persisted files."""
    results_dir = Path(results_dir)
    discover, trajectory = _load_runs(results_dir)
    if not discover and not trajectory:
        raise FileNotFoundError(f"no completed runs with manifests under {results_dir}")

    sections = []
    if discover:
        sections.append("Causal discovery (Average Iterations, Successful Rate)\n"
                        + discover_table(discover).to_string())
    if trajectory:
        sections.append("Trajectory tracking overall accuracy (W/O CoT, With CoT)\n"
                        + trajectory_table(trajectory).to_string())
    return "\n\n".join(sections) + "\n", at_series(trajectory)


def save_report(results_dir: Path) -> Path:
    results_dir = Path(results_dir)
    text, series = build_report(results_dir)
    report_dir = results_dir / REPORT_DIR
    report_dir.mkdir(exist_ok=True)
    started = utc_now()
    (report_dir / REPORT_TXT).write_text(text, encoding="utf-8")
    series.to_csv(report_dir / AT_SERIES_CSV, index=False)
    manifest = RunManifest(command="report", config={'results_dir': str(results_dir)}, seed=0,
                           started_at=started, finished_at=utc_now(), status="complete",
                           outputs=[REPORT_TXT, AT_SERIES_CSV])
    write_manifest(report_dir, manifest)
    print(text)
    return report_dir
