"""Floating-point operation accounting.

A counter is activated for a scope; tensor ops report their cost into the
active counter. Counts are coarse engineering estimates (a transcendental
call counts as one flop per element, an FFT as 5*N*log2(N)) and exist to
drive the deterministic energy proxy, not to benchmark hardware.
"""

from __future__ import annotations

import threading
from collections import defaultdict
from contextlib import contextmanager

_state = threading.local()


class FlopCounter:
    """Monotone flop tally with a per-op-kind breakdown."""

    def __init__(self):
        self.flops = 0
        self.breakdown = defaultdict(int)

    def add(self, kind: str, n: int) -> None:
        if n < 0:
            raise ValueError("flop increments must be non-negative")
        self.flops += n
        self.breakdown[kind] += n


def active_counter() -> FlopCounter | None:
    return getattr(_state, "counter", None)


def count(kind: str, n: int) -> None:
    """Report `n` flops of `kind` to the active counter, if any."""
    counter = getattr(_state, "counter", None)
    if counter is not None:
        counter.add(kind, int(n))


@contextmanager
def count_flops(counter: FlopCounter | None = None):
    """Activate `counter` (or a fresh one) for the enclosed scope.

    Scopes may nest; the innermost counter receives the counts. Yields the
    active counter.
    """
    if counter is None:
        counter = FlopCounter()
    prev = getattr(_state, "counter", None)
    _state.counter = counter
    try:
        yield counter
    finally:
        _state.counter = prev
