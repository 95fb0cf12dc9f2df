"""Discrete-event core: integer-microsecond clock, ordered event queue, RNG streams."""

import heapq

import numpy as np

US_PER_S = 1_000_000
US_PER_MS = 1_000


def seconds(s):
    """Convert seconds to integer microseconds."""
    return int(round(s * US_PER_S))


def millis(ms):
    return int(round(ms * US_PER_MS))


class SchedulingError(ValueError):
    pass


class EventQueue:
    """Single-threaded event scheduler.

    Events are kept in a binary heap keyed on ``(fire_at, seq)`` so that
    events scheduled for the same instant run in insertion order. The
    handle returned by :meth:`schedule` is the heap entry itself; cancelling
    clears its callback slot and the entry is skipped when popped.
    """

    def __init__(self):
        self._heap = []
        self._seq = 0
        self.now = 0
        self.fired = 0

    def schedule(self, fire_at, fn, *args):
        fire_at = int(fire_at)
        if fire_at < self.now:
            raise SchedulingError(f"event at {fire_at}us is before clock {self.now}us")
        self._seq += 1
        entry = [fire_at, self._seq, fn, args]
        heapq.heappush(self._heap, entry)
        return entry

    def call_later(self, delay, fn, *args):
        return self.schedule(self.now + delay, fn, *args)

    @staticmethod
    def cancel(handle):
        if handle is None or handle[2] is None:
            return False
        handle[2] = None
        return True

    @staticmethod
    def is_pending(handle):
        return handle is not None and handle[2] is not None

    def __len__(self):
        return sum(1 for e in self._heap if e[2] is not None)

    def run_until(self, t_end):
        t_end = int(t_end)
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) is before clock {self.now}")
        heap = self._heap
        pop = heapq.heappop
        fired = 0
        while heap and heap[0][0] <= t_end:
            entry = pop(heap)
            fn = entry[2]
            if fn is None:
                continue
            entry[2] = None
            self.now = entry[0]
            fn(*entry[3])
            fired += 1
        self.fired += fired
        self.now = t_end
        return t_end


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Backed by numpy's PCG64 seeded through ``SeedSequence(seed,
    spawn_key=(stream_id,))``, so each consumer owns an independent stream
    and adding a consumer never perturbs the others. Uniform draws are
    buffered in blocks because the per-packet loss model calls
    :meth:`random` on the hot path.
    """

    BLOCK = 4096

    def __init__(self, seed, stream_id):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.PCG64(ss))
        self._buf = []
        self._pos = 0

    def random(self):
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self.BLOCK).tolist()
            self._pos = 0
        x = self._buf[self._pos]
        self._pos += 1
        return x

    def uniform(self, lo, hi):
        return lo + (hi - lo) * self.random()

    def randbelow(self, n):
        """Uniform integer in ``[0, n)``."""
        return min(int(self.random() * n), n - 1)
