"""Kernel backend selection.

The compiled extension is preferred when importable; the pure-numpy
fallback is always available.  Set ``CROSSTAG_BACKEND=pure`` to force the
fallback (or ``native`` to make a missing extension a hard error).
Per-backend results are deterministic; across backends they agree to
floating-point tolerance, not bitwise.
"""

from __future__ import annotations

import importlib
import os

from . import pure

_requested = os.environ.get("CROSSTAG_BACKEND", "").lower()
if _requested not in ("", "native", "pure"):
    raise RuntimeError(f"CROSSTAG_BACKEND must be 'native' or 'pure', got {_requested!r}")


def _load_native():
    try:
        return importlib.import_module("._native", __name__)
    except ImportError:
        if _requested == "native":
            raise
        return None


_native = None if _requested == "pure" else _load_native()

if _native is not None:
    name = "native"
    _impl = _native
else:
    name = "pure"
    _impl = pure

crf_forward = _impl.crf_forward
crf_backward = _impl.crf_backward
crf_viterbi = _impl.crf_viterbi
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward


def available_backends() -> list[str]:
    names = ["pure"]
    try:
        importlib.import_module("._native", __name__)
        names.insert(0, "native")
    except ImportError:
        pass
    return names
