"""Single-slot latest-value mailbox feeding each renderer worker.

One producer (the pose receiver) and one consumer (a renderer worker) per
mailbox. A put replaces whatever pose was waiting, so the consumer always
sees the freshest value and memory stays O(1) no matter how far rendering
falls behind. take() blocks until a value arrives or the mailbox closes;
the worker therefore renders exactly once per "fresh pose available"
instant, never spinning and never re-rendering a stale pose.
"""

from __future__ import annotations

import threading
from typing import Generic, Optional, TypeVar

T = TypeVar("T")


class MailboxClosed(Exception):
    """take() on a mailbox that was closed while empty."""


class ViewpointMailbox(Generic[T]):
    def __init__(self):
        self._lock = threading.Lock()
        self._available = threading.Condition(self._lock)
        self._slot: Optional[T] = None
        self._has_value = False
        self._generation = 0  # total puts, including overwrites
        self._overwrites = 0  # puts that replaced an untaken value
        self._closed = False

    @property
    def generation(self) -> int:
        with self._lock:
            return self._generation

    @property
    def overwrites(self) -> int:
        with self._lock:
            return self._overwrites

    def put(self, value: T) -> None:
        """Store `value`, replacing any pending one. Never blocks."""
        with self._lock:
            if self._closed:
                return
            if self._has_value:
                self._overwrites += 1
            self._slot = value
            self._has_value = True
            self._generation += 1
            self._available.notify()

    def try_take(self) -> tuple[bool, Optional[T]]:
        """Non-blocking take: (True, value) or (False, None) when empty."""
        with self._lock:
            if not self._has_value:
                return False, None
            value = self._slot
            self._slot = None
            self._has_value = False
            return True, value

    def take(self, timeout: Optional[float] = None) -> T:
        """Remove and return the pending value, blocking until one arrives.

        Raises MailboxClosed once the mailbox is closed and drained, and
        TimeoutError if `timeout` seconds elapse first.
        """
        with self._lock:
            while not self._has_value:
                if self._closed:
                    raise MailboxClosed
                if not self._available.wait(timeout):
                    raise TimeoutError("mailbox take timed out")
            value = self._slot
            self._slot = None
            self._has_value = False
            return value  # type: ignore[return-value]

    def close(self) -> None:
        """Wake any blocked take; a value already present can still be taken."""
        with self._lock:
            self._closed = True
            self._available.notify_all()

    @property
    def closed(self) -> bool:
        with self._lock:
            return self._closed
