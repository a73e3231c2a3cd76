"""Backend switch for the compiled kernels.

Set ``XPOLAB_DISABLE_NUMBA=1`` (any of ``1/true/yes/on``) before importing
:mod:`xpolab` to force the pure-numpy kernels. If numba is not importable the
numpy path is used regardless.
"""

from __future__ import annotations

import os

_TRUTHY = {"1", "true", "yes", "on"}


def numba_requested() -> bool:
    return os.environ.get("XPOLAB_DISABLE_NUMBA", "").strip().lower() not in _TRUTHY


def numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:  # pragma: no cover - numba is a declared dependency
        return False
    return True


USE_NUMBA = numba_requested() and numba_available()
