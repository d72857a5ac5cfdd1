"""
Long-horizon trajectory tracking: given a state matrix X, predict the binary
change matrix Y between consecutive rows, scored by overall and per-transition
accuracy.
"""

import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

try:
    from .models import (BudgetExceededError, InvalidComparisonError, InvalidConfigurationError,
                         SCHEMA_VERSION, TrajectoryInstance, TrajectoryScores)
    from .utils import RandomStream, derive_seed, extract_json_objects, make_stream
except ImportError:
    from models import (BudgetExceededError, InvalidComparisonError, InvalidConfigurationError,
                        SCHEMA_VERSION, TrajectoryInstance, TrajectoryScores)
    from utils import RandomStream, derive_seed, extract_json_objects, make_stream

logger = logging.getLogger(__name__)

# (m-1) x n binary matrix
ChangeMatrix = np.ndarray

DEFAULT_M_VALUES = (3, 5, 10, 15, 20, 25, 30)
DEFAULT_NODES = 5
DEFAULT_COLORS = 3
DEFAULT_ROUNDS = 100

COT_SENTENCE = "Please also include the reason for your answer."

TRAJECTORY_PROMPT = """You are given an observation matrix X with {m} rows and {n} columns.
Row i is the state of the system at time step i; column j tracks node j.
Each entry is a color state, an integer from 0 to {top}.

TASK: compute the color trajectory matrix Y with {rows} rows and {n} columns, where
Y[i][j] = 1 if X[i][j] != X[i+1][j] (node j changed color between time steps i and i+1), and
Y[i][j] = 0 otherwise.

X =
{matrix}

Answer with a JSON object containing only the color trajectory matrix, in exactly this form:
```json
{{"trajectory_matrix": [[0, 1, ...], ...]}}
```"""


def generate_instance(m: int, n: int, p: int, rng: RandomStream) -> TrajectoryInstance:
    """Entries i.i.d. uniform over {0..p-1}"""
    if m < 2:
        raise InvalidConfigurationError(f"trajectory length must be at least 2, got {m}")
    if n < 1:
        raise InvalidConfigurationError(f"node count must be positive, got {n}")
    if p < 2:
        raise InvalidConfigurationError(f"at least 2 colors are needed, got {p}")
    x = rng.integers(0, p, size=(m, n))
    return TrajectoryInstance(x=x.astype(np.int64), p=p)


def ground_truth(inst: TrajectoryInstance) -> ChangeMatrix:
    return (inst.x[:-1] != inst.x[1:]).astype(np.uint8)


def score(predictions: Sequence[ChangeMatrix], truths: Sequence[ChangeMatrix]) -> TrajectoryScores:
    """Overall accuracy (whole-matrix matches) and per-transition accuracy over R rounds."""
    if len(predictions) != len(truths):
        raise InvalidComparisonError(f"{len(predictions)} predictions for {len(truths)} rounds")
    if not truths:
        raise InvalidComparisonError("nothing to score")

    shape = np.shape(truths[0])
    rows = []
    for r, (pred, truth) in enumerate(zip(predictions, truths)):
        pred, truth = np.asarray(pred), np.asarray(truth)
        if pred.shape != truth.shape or truth.shape != shape:
            raise InvalidComparisonError(f"round {r}: prediction {pred.shape} vs truth {truth.shape}")
        rows.append((pred == truth).all(axis=1))

    t = np.array(rows, dtype=np.uint8).reshape(len(truths), shape[0])
    at_acc = t.mean(axis=0)
    oa_acc = float(t.all(axis=1).mean())
    return TrajectoryScores(oa_acc=oa_acc, at_acc=tuple(float(v) for v in at_acc), t=t)


def render_matrix(x: np.ndarray) -> str:
    return "\n".join("[" + ", ".join(str(int(v)) for v in row) + "]" for row in x)


def build_trajectory_prompt(inst: TrajectoryInstance, cot: bool = False) -> str:
    prompt = TRAJECTORY_PROMPT.format(m=inst.m, n=inst.n, top=inst.p - 1, rows=inst.m - 1,
                                      matrix=render_matrix(inst.x))
    if cot:
        prompt += "\n" + COT_SENTENCE
    return prompt


def parse_prediction(reply: str, m: int, n: int) -> Optional[ChangeMatrix]:
    """Last usable (m-1) x n binary matrix in the reply, or None."""
    for obj, _ in reversed(extract_json_objects(reply or "", ("trajectory_matrix", "Y"))):
        matrix = obj.get("trajectory_matrix", obj.get("Y"))
        if matrix is None:
            continue
        try:
            y = np.array(matrix)
        except (TypeError, ValueError):
            continue
        if y.shape != (m - 1, n) or y.dtype.kind not in "biuf" or not np.isin(y, (0, 1)).all():
            continue
        return y.astype(np.uint8)
    return None


@dataclass
class RoundRecord:
    m: int
    round: int
    cot: bool
    seed: int
    p: int
    x: np.ndarray
    truth: ChangeMatrix
    prediction: Optional[ChangeMatrix]
    reply: str
    prompt: str = ""

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def parsed(self) -> bool:
        return self.prediction is not None

    def scored_prediction(self) -> ChangeMatrix:
        # an unusable reply counts as wrong in every row
        return self.prediction if self.prediction is not None else 1 - self.truth

    def to_record(self) -> Dict:
        return {
            'schema_version': SCHEMA_VERSION,
            'm': self.m,
            'round': self.round,
            'cot': self.cot,
            'seed': self.seed,
            'p': self.p,
            'x': self.x.tolist(),
            'truth': self.truth.tolist(),
            'prediction': self.prediction.tolist() if self.prediction is not None else None,
            'parsed': self.parsed,
            'reply': self.reply,
            'prompt': self.prompt,
        }

    @classmethod
    def from_record(cls, rec: Dict) -> "RoundRecord":
        prediction = rec.get('prediction')
        return cls(
            m=rec['m'], round=rec['round'], cot=rec['cot'], seed=rec['seed'], p=rec.get('p', 0),
            x=np.array(rec['x'], dtype=np.int64),
            truth=np.array(rec['truth'], dtype=np.uint8),
            prediction=np.array(prediction, dtype=np.uint8) if prediction is not None else None,
            reply=rec.get('reply', ''),
            prompt=rec.get('prompt', ''),
        )


def round_seed(seed: int, m: int, r: int) -> int:
    return derive_seed(seed, "trajectory", m, r)


def run_round(agent, m: int, n: int, p: int, r: int, cot: bool, seed: int) -> RoundRecord:
    rseed = round_seed(seed, m, r)
    inst = generate_instance(m, n, p, make_stream(rseed))
    prompt = build_trajectory_prompt(inst, cot)
    reply = agent.respond(prompt, inst)
    prediction = parse_prediction(reply, m, n)
    if prediction is None:
        logger.warning(f"M={m} round {r}: unparsable prediction, scored as all-wrong")
    return RoundRecord(m=m, round=r, cot=cot, seed=rseed, p=p, x=inst.x, truth=ground_truth(inst),
                       prediction=prediction, reply=reply, prompt=prompt)


def run_sweep(agent, m_values: Iterable[int] = DEFAULT_M_VALUES, n: int = DEFAULT_NODES,
              p: int = DEFAULT_COLORS, r: int = DEFAULT_ROUNDS, cot: bool = False, seed: int = 0,
              max_workers: int = 1, completed: Optional[Iterable[RoundRecord]] = None,
              on_round: Optional[Callable[[RoundRecord], None]] = None) -> Dict[int, TrajectoryScores]:
    """Score an agent over R rounds at every trajectory length M.

    Rounds in ``completed`` are reused instead of re-queried. New rounds reach
    ``on_round`` in (M, round) order whatever ``max_workers`` is.
    """
    if r < 1:
        raise InvalidConfigurationError(f"rounds must be at least 1, got {r}")
    m_values = list(m_values)
    done: Dict[Tuple[int, int], RoundRecord] = {
        (rec.m, rec.round): rec for rec in (completed or [])
        if rec.cot == cot and rec.n == n and rec.p == p
    }
    start_time = time.time()
    scores: Dict[int, TrajectoryScores] = {}

    for m in m_values:
        pending = [i for i in range(r) if (m, i) not in done]
        if pending:
            logger.info(f"M={m}: {len(pending)} rounds to run ({r - len(pending)} resumed)")
        if max_workers == 1:
            for i in pending:
                rec = run_round(agent, m, n, p, i, cot, seed)
                done[(m, i)] = rec
                if on_round:
                    on_round(rec)
        else:
            with ThreadPoolExecutor(max_workers=max_workers) as executor:
                futures = [executor.submit(run_round, agent, m, n, p, i, cot, seed) for i in pending]
                for index, (i, future) in enumerate(zip(pending, futures)):
                    try:
                        rec = future.result()
                    except BudgetExceededError:
                        for later in futures[index + 1:]:
                            later.cancel()
                        for j, later in zip(pending[index + 1:], futures[index + 1:]):
                            if not later.cancelled() and later.exception() is None:
                                done[(m, j)] = later.result()
                                if on_round:
                                    on_round(later.result())
                        raise
                    done[(m, i)] = rec
                    if on_round:
                        on_round(rec)

        records = [done[(m, i)] for i in range(r)]
        scores[m] = score([rec.scored_prediction() for rec in records], [rec.truth for rec in records])
        print(f"  M={m}: OA-Acc {scores[m].oa_acc:.1%} over {r} rounds")
        logger.info(f"Progress: M={m} done - OA-Acc: {scores[m].oa_acc:.1%} - "
                    f"Elapsed: {time.time() - start_time:.1f}s")

    return scores


def sweep_tables(scores: Dict[int, TrajectoryScores], model: str, cot: bool) -> Tuple[List[Dict], List[Dict]]:
    """Rows for the overall-accuracy table and the per-transition series"""
    oa_rows = [{'M': m, 'model': model, 'cot': cot, 'oa_acc': s.oa_acc} for m, s in sorted(scores.items())]
    at_rows = []
    for m, s in sorted(scores.items()):
        for index, acc in enumerate(s.at_acc, 1):
            at_rows.append({'M': m, 'trajectory_index': index, 'model': model, 'cot': cot, 'at_acc': acc})
    return oa_rows, at_rows
