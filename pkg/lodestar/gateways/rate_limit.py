"""Sliding-window rate limiting per service."""
from collections import deque
import threading
import time

# waits end this far past the window edge, so a dispatch never lands exactly on it
_TICK = 1e-3


class RateLimiter():
    """Allow at most ``limit`` dispatches in any closed window of ``period`` seconds.

    The lock is held while waiting, so dispatches through one limiter are serialized. ``clock`` and ``sleep`` can be
    replaced, e.g. by a virtual clock in tests. ``limit=None`` disables limiting.
    """

    def __init__(self, limit, period=1.0, clock=time.monotonic, sleep=time.sleep):
        if limit is not None and (isinstance(limit, bool) or limit < 1):
            raise ValueError(f'Rate limit must be >= 1 or None, got {limit}.')
        self.limit = limit
        self.period = period
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._window = deque()
        self.dispatch_log = deque(maxlen=10000)

    def acquire(self):
        """Block until a dispatch is allowed and record it."""
        with self._lock:
            now = self._clock()
            if self.limit is not None:
                self._expire(now)
                while len(self._window) >= self.limit:
                    self._sleep(self._window[0] + self.period - now + _TICK)
                    now = self._clock()
                    self._expire(now)
                self._window.append(now)
            self.dispatch_log.append(now)
            return now

    def _expire(self, now):
        while self._window and self._window[0] < now - self.period:
            self._window.popleft()
