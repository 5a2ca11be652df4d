"""Thread-count configuration shared by the learners and the CLI."""
import os

THREADS_ENV = "FAKEADS_THREADS"


def n_threads() -> int:
    """Worker threads for tree fitting; defaults to the available cores."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1
