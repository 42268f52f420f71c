"""Worker-count plumbing shared by every FFT call."""

import os

ENV_VAR = "CORTEXLIFT_THREADS"


def fft_workers() -> int:
    """Number of workers handed to ``scipy.fft``; capped by CORTEXLIFT_THREADS."""
    raw = os.environ.get(ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {n}")
    return n
