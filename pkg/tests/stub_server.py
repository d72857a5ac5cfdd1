"""
Loopback chat-completions stub built on httpx.MockTransport.
"""

import json
from typing import Callable, List, Optional, Union

import httpx

Reply = Union[str, int, Callable[[dict], str]]


def completion(text: str, cost: Optional[float] = None, model: str = "stub/model") -> dict:
    usage = {'prompt_tokens': 10, 'completion_tokens': 5, 'total_tokens': 15}
    if cost is not None:
        usage['cost'] = cost
    return {
        'id': 'chatcmpl-stub',
        'object': 'chat.completion',
        'created': 0,
        'model': model,
        'choices': [{'index': 0, 'finish_reason': 'stop',
                     'message': {'role': 'assistant', 'content': text}}],
        'usage': usage,
    }


class StubChatServer:
    """Serves scripted replies in order; an int entry is returned as that HTTP error status.

    Once the script runs out the last entry repeats.
    """

    def __init__(self, replies: List[Reply], cost: Optional[float] = None):
        self.replies = list(replies)
        self.cost = cost
        self.requests: List[dict] = []

    def handler(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        self.requests.append(body)
        reply = self.replies.pop(0) if len(self.replies) > 1 else self.replies[0]
        if isinstance(reply, int):
            return httpx.Response(reply, json={'error': {'message': f'stub status {reply}'}})
        if callable(reply):
            reply = reply(body)
        return httpx.Response(200, json=completion(reply, self.cost))

    def http_client(self) -> httpx.Client:
        return httpx.Client(transport=httpx.MockTransport(self.handler))
