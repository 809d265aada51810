"""Backend selection: compiled kernel when importable, numpy fallback otherwise.

CIRBRIDGE_BACKEND=compiled|python forces a choice at import time;
CIRBRIDGE_THREADS sets the default worker count for the compiled kernel.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import _kernel_py

try:
    from . import _kernel
except ImportError:  # pure-python install (no compiler at build time)
    _kernel = None


def _select_initial():
    choice = os.environ.get("CIRBRIDGE_BACKEND", "").strip().lower()
    if choice == "python":
        return _kernel_py
    if choice == "compiled":
        if _kernel is None:
            raise ImportError(
                "CIRBRIDGE_BACKEND=compiled but the compiled kernel is not available"
            )
        return _kernel
    if choice:
        raise ValueError(f"unknown CIRBRIDGE_BACKEND {choice!r}")
    return _kernel if _kernel is not None else _kernel_py


_active = _select_initial()


def active():
    return _active


def backend_name() -> str:
    return _active.NAME


def available_backends() -> list[str]:
    names = []
    if _kernel is not None:
        names.append(_kernel.NAME)
    names.append(_kernel_py.NAME)
    return names


def get(name: str):
    if name == _kernel_py.NAME:
        return _kernel_py
    if _kernel is not None and name == _kernel.NAME:
        return _kernel
    raise ValueError(f"backend {name!r} not available (have {available_backends()})")


@contextmanager
def use(name: str):
    """Temporarily switch the active backend (tests and benchmarks)."""
    global _active
    previous = _active
    _active = get(name)
    try:
        yield _active
    finally:
        _active = previous


def default_threads() -> int:
    env = os.environ.get("CIRBRIDGE_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("CIRBRIDGE_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1
