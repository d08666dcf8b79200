"""Process-wide runtime knobs.

FRFL_THREADS caps the worker count handed to the FFT backend.  Results are
required to be independent of the thread count, so the default of 1 is only a
performance choice; scipy's pocketfft parallelizes over independent transform
lines and is deterministic for any worker count.
"""
from __future__ import annotations

import os

_ENV_VAR = "FRFL_THREADS"


def fft_workers() -> int:
    raw = os.environ.get(_ENV_VAR)
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)
