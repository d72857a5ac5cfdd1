"""
Shared fixtures: flat imports from the package root, no network access and
committed golden files.
"""

import os
import sys
import json
import socket
import subprocess
from pathlib import Path

import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = Path(__file__).parent / "data"

sys.path.insert(0, ROOT)


@pytest.fixture(autouse=True)
def no_network(monkeypatch):
    """Any real socket connection fails the test"""
    def guarded_connect(self, address):
        raise RuntimeError(f"network access attempted: {address}")
    monkeypatch.setattr(socket.socket, "connect", guarded_connect)
    monkeypatch.setattr(socket.socket, "connect_ex", guarded_connect)


@pytest.fixture(autouse=True)
def no_backoff(monkeypatch):
    """Retries fire immediately"""
    import utils
    monkeypatch.setattr(utils.time, "sleep", lambda _: None)


@pytest.fixture
def golden():
    """Committed golden file from tests/data: JSON is decoded, text returned as is"""
    def load(name):
        path = DATA_DIR / name
        text = path.read_text(encoding="utf-8")
        return json.loads(text) if path.suffix == ".json" else text
    return load


@pytest.fixture
def fresh_interpreter():
    """Run a snippet in a new Python process at the repo root; it must print one JSON value"""
    def run(code):
        done = subprocess.run([sys.executable, "-c", code], cwd=ROOT, capture_output=True, text=True,
                              check=True, timeout=120)
        return json.loads(done.stdout)
    return run
