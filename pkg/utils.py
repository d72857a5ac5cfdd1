"""
Utility functions for the discovery harness.
"""

import re
import json
import time
import random
import hashlib
import logging
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Sequence, Tuple, Type, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")

RandomStream = np.random.Generator


def retry_with_exponential_backoff(
    func: Callable[[], T],
    max_retries: int = 8,
    base_delay: float = 2.0,
    max_delay: float = 120.0,
    retryable: Tuple[Type[BaseException], ...] = (Exception,),
) -> T:
    """Retry function with exponential backoff on the given exception types"""
    for attempt in range(max_retries):
        try:
            return func()
        except retryable as e:
            if attempt == max_retries - 1:
                logger.error(f"Max retries ({max_retries}) reached: {e}")
                raise

            # Exponential backoff with jitter
            delay = min(base_delay * (2 ** attempt) + random.uniform(0, base_delay / 2), max_delay)
            logger.warning(f"Transient failure ({e.__class__.__name__}), retrying in {delay:.1f}s "
                           f"(attempt {attempt + 1}/{max_retries})")
            time.sleep(delay)


def setup_logging(level=logging.INFO):
    """Configure logging for the application"""
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    return logging.getLogger(__name__)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from any sequence of printable parts"""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def make_stream(seed: int) -> RandomStream:
    return np.random.default_rng(seed)


def write_json(path: Path, payload: Dict):
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    tmp.replace(path)


def append_jsonl(path: Path, records: Iterable[Dict]):
    with open(path, "a", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path: Path) -> List[Dict]:
    """Read a JSONL file, skipping blank and truncated lines"""
    records = []
    path = Path(path)
    if not path.exists():
        return records
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                logger.warning(f"Skipping unreadable line {line_no} in {path}")
    return records


_FENCED_BLOCK = re.compile(r"```(?:json|JSON)?\s*(.*?)```", re.DOTALL)


def extract_json_objects(reply: str, keys: Sequence[str] = ()) -> List[Tuple[Dict, Tuple[int, int]]]:
    """All JSON objects in a model reply with their spans.

    Fenced blocks win when one of them parses and carries any of ``keys``
    (any object at all when ``keys`` is empty); otherwise every top-level
    ``{...}`` that decodes is returned, in order of appearance.
    """
    found = []
    for match in _FENCED_BLOCK.finditer(reply):
        try:
            obj = json.loads(match.group(1).strip())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            found.append((obj, match.span()))
    if any(not keys or any(k in obj for k in keys) for obj, _ in found):
        return found

    found = []
    decoder = json.JSONDecoder()
    index = reply.find("{")
    while index != -1:
        try:
            obj, end = decoder.raw_decode(reply, index)
        except json.JSONDecodeError:
            index = reply.find("{", index + 1)
            continue
        if isinstance(obj, dict):
            found.append((obj, (index, end)))
        index = reply.find("{", end)
    return found
