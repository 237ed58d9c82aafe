"""Kernel backend selection.

The compiled extension (_native) is preferred when importable; the numpy
implementation (_pure) is the fallback and the semantic reference.  Set
MOSVOX_BACKEND=pure or =native to force one; tests use the ``use`` context
manager to swap backends in-process.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from . import _pure

_BACKENDS = {"pure": _pure}
try:
    from . import _native

    _BACKENDS["native"] = _native
except ImportError:
    _native = None

_requested = os.environ.get("MOSVOX_BACKEND", "auto").strip().lower() or "auto"
if _requested == "auto":
    _ACTIVE = _BACKENDS.get("native", _pure)
elif _requested in _BACKENDS:
    _ACTIVE = _BACKENDS[_requested]
else:
    raise ImportError(
        f"MOSVOX_BACKEND={_requested!r} not available; choose from "
        f"{sorted(_BACKENDS)} or 'auto'"
    )


def active():
    """The currently selected backend module."""
    return _ACTIVE


def active_name() -> str:
    return "native" if _ACTIVE is _BACKENDS.get("native") else "pure"


def available() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ImportError(f"backend {name!r} not available (have {sorted(_BACKENDS)})")


@contextmanager
def use(name: str):
    """Temporarily switch the active backend (single-threaded use only)."""
    global _ACTIVE
    previous = _ACTIVE
    _ACTIVE = get_backend(name)
    try:
        yield _ACTIVE
    finally:
        _ACTIVE = previous
