"""
Chat-completions transport with retries, call records and a cost budget.
"""

import os
import time
import logging
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
from urllib.parse import urlparse

import openai

try:
    from .models import (BudgetDecision, BudgetExceededError, CallRecord, InvalidConfigurationError,
                         MissingCredentialError, TransportError)
    from .utils import retry_with_exponential_backoff
except ImportError:
    from models import (BudgetDecision, BudgetExceededError, CallRecord, InvalidConfigurationError,
                        MissingCredentialError, TransportError)
    from utils import retry_with_exponential_backoff

logger = logging.getLogger(__name__)

DEFAULT_BASE_URL = "https://openrouter.ai/api/v1"
DEFAULT_MODEL = "openai/gpt-4o"
DEFAULT_API_KEY_ENV = "OPENROUTER_API_KEY"

# 429, 5xx and connection/timeout failures are worth another attempt
RETRYABLE_ERRORS = (openai.RateLimitError, openai.InternalServerError, openai.APIConnectionError)


@dataclass
class ClientConfig:
    base_url: str = DEFAULT_BASE_URL
    model_id: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int = 2048
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 120.0
    max_retries: int = 5
    max_in_flight: int = 4
    base_delay: float = 2.0
    max_delay: float = 60.0

    def __post_init__(self):
        parsed = urlparse(self.base_url)
        if parsed.scheme not in ("http", "https") or not parsed.netloc:
            raise InvalidConfigurationError(f"base_url is not a valid http(s) URL: {self.base_url!r}")
        if self.timeout <= 0:
            raise InvalidConfigurationError(f"timeout must be positive, got {self.timeout}")
        if self.temperature < 0:
            raise InvalidConfigurationError(f"temperature must be non-negative, got {self.temperature}")
        if self.max_tokens < 1:
            raise InvalidConfigurationError(f"max_tokens must be positive, got {self.max_tokens}")
        if self.max_retries < 0 or self.max_in_flight < 1:
            raise InvalidConfigurationError("max_retries must be >= 0 and max_in_flight >= 1")

    def to_dict(self) -> Dict:
        return {
            'base_url': self.base_url,
            'model_id': self.model_id,
            'temperature': self.temperature,
            'max_tokens': self.max_tokens,
            'api_key_env': self.api_key_env,
            'timeout': self.timeout,
            'max_retries': self.max_retries,
            'max_in_flight': self.max_in_flight,
        }


@dataclass
class BudgetStatus:
    decision: BudgetDecision
    spent: float
    unpriced_calls: int = 0

    @property
    def warning(self) -> bool:
        return self.unpriced_calls > 0


def budget_guard(records: Sequence[CallRecord], limit: float) -> BudgetStatus:
    """Halt once reported spend reaches ``limit``; calls without a cost count as 0."""
    if limit <= 0:
        raise InvalidConfigurationError(f"budget limit must be positive, got {limit}")
    spent = sum(r.cost for r in records if r.cost is not None)
    unpriced = sum(1 for r in records if r.cost is None)
    decision = BudgetDecision.HALT if spent >= limit else BudgetDecision.PROCEED
    return BudgetStatus(decision=decision, spent=spent, unpriced_calls=unpriced)


def _usage(payload: Dict) -> Tuple[Optional[int], Optional[int], Optional[float]]:
    usage = payload.get('usage') or {}
    cost = usage.get('cost')
    return usage.get('prompt_tokens'), usage.get('completion_tokens'), float(cost) if cost is not None else None


class ChatClient:
    """Thread-safe chat-completions client; one CallRecord per HTTP attempt.

    The SDK's own retries are disabled so every attempt is visible here.
    """

    def __init__(self, config: ClientConfig, budget: Optional[float] = None, http_client=None):
        self.config = config
        self.budget = budget
        self.records: List[CallRecord] = []
        self._http_client = http_client
        self._client: Optional[openai.OpenAI] = None
        self._lock = threading.Lock()
        self._in_flight = threading.BoundedSemaphore(config.max_in_flight)
        self._warned_unpriced = False

    def api_key(self) -> str:
        key = os.getenv(self.config.api_key_env)
        if not key:
            raise MissingCredentialError(f"environment variable {self.config.api_key_env} is not set")
        return key

    def _openai(self) -> openai.OpenAI:
        with self._lock:
            if self._client is None:
                self._client = openai.OpenAI(
                    api_key=self.api_key(),
                    base_url=self.config.base_url,
                    timeout=self.config.timeout,
                    max_retries=0,
                    http_client=self._http_client,
                )
            return self._client

    def _record(self, record: CallRecord):
        with self._lock:
            self.records.append(record)

    def check_budget(self):
        if self.budget is None:
            return
        with self._lock:
            records = list(self.records)
        status = budget_guard(records, self.budget)
        if status.warning and not self._warned_unpriced:
            self._warned_unpriced = True
            logger.warning(f"{status.unpriced_calls} call(s) reported no cost; counted as 0 against the budget")
        if status.decision is BudgetDecision.HALT:
            raise BudgetExceededError(f"spent {status.spent:.4f} of budget {self.budget:.4f}")

    def complete(self, messages: List[Dict[str, str]]) -> str:
        """Send one chat request and return the assistant text of the first successful attempt."""
        self.api_key()
        self.check_budget()
        client = self._openai()
        request = {
            'model': self.config.model_id,
            'messages': list(messages),
            'temperature': self.config.temperature,
            'max_tokens': self.config.max_tokens,
        }
        attempt = 0

        def make_api_call() -> str:
            nonlocal attempt
            attempt += 1
            started = time.perf_counter()
            try:
                with self._in_flight:
                    response = client.chat.completions.create(**request)
            except openai.APIStatusError as e:
                self._record(CallRecord(request=request, response=_error_body(e),
                                        latency_s=time.perf_counter() - started, attempt=attempt,
                                        status=e.status_code, error=str(e)))
                raise
            except openai.APIError as e:
                self._record(CallRecord(request=request, response=None,
                                        latency_s=time.perf_counter() - started, attempt=attempt,
                                        error=str(e)))
                raise

            payload = response.model_dump()
            prompt_tokens, completion_tokens, cost = _usage(payload)
            self._record(CallRecord(request=request, response=payload,
                                    latency_s=time.perf_counter() - started, attempt=attempt,
                                    prompt_tokens=prompt_tokens, completion_tokens=completion_tokens,
                                    cost=cost, status=200))
            choices = payload.get('choices') or []
            if not choices:
                return ""
            return (choices[0].get('message') or {}).get('content') or ""

        try:
            return retry_with_exponential_backoff(
                make_api_call,
                max_retries=self.config.max_retries + 1,
                base_delay=self.config.base_delay,
                max_delay=self.config.max_delay,
                retryable=RETRYABLE_ERRORS,
            )
        except openai.APIError as e:
            raise TransportError(f"chat completion failed after {attempt} attempt(s): {e}") from e

    @property
    def total_cost(self) -> float:
        with self._lock:
            return sum(r.cost for r in self.records if r.cost is not None)

    def record_dicts(self) -> List[Dict]:
        with self._lock:
            records = list(self.records)
        return [_record_dict(r) for r in records]


def _error_body(e: openai.APIStatusError) -> Optional[Dict]:
    body = getattr(e, 'body', None)
    return body if isinstance(body, dict) else None


def _record_dict(record: CallRecord) -> Dict:
    return {
        'attempt': record.attempt,
        'request': record.request,
        'response': record.response,
        'latency_s': round(record.latency_s, 4),
        'prompt_tokens': record.prompt_tokens,
        'completion_tokens': record.completion_tokens,
        'cost': record.cost,
        'status': record.status,
        'error': record.error,
    }
