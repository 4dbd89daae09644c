"""Deterministic network-condition injection between client and server.

Models, per direction: a base one-way delay, uniform jitter of configurable
half-width, periodic outages during which in-flight messages are held and
re-released at outage end, and an optional bytes-per-ms bandwidth cap.
Delivery order always equals send order (delivery times are clamped
non-decreasing per direction), and identical (profile, seed, send schedule)
yields identical deliveries, so benchmark logs are reproducible
byte-for-byte.

A NetworkSimulator is pure scheduling arithmetic over millisecond floats;
DelayedStream applies that schedule to a real byte-stream transport with a
background timer thread, for live client/server runs.
"""

from __future__ import annotations

import heapq
import random
import threading
import time
from dataclasses import dataclass, replace

UPLINK = 0  # client -> server
DOWNLINK = 1  # server -> client


class WallClock:
    """Monotonic wall time in float milliseconds (live-transport scheduling)."""

    @staticmethod
    def now_ms() -> float:
        return time.monotonic() * 1000.0


@dataclass(frozen=True)
class NetworkProfile:
    base_delay_up_ms: float = 0.0
    base_delay_down_ms: float = 0.0
    jitter_ms: float = 0.0  # uniform half-width, both directions
    outage_period_ms: float = 0.0  # 0 disables outages
    outage_duration_ms: float = 0.0
    drop_during_outage: bool = False  # held and re-released by default
    bandwidth_bytes_per_ms: float = 0.0  # 0 = uncapped
    seed: int = 0

    @classmethod
    def symmetric(cls, base_delay_ms: float, **kwargs) -> "NetworkProfile":
        return cls(base_delay_up_ms=base_delay_ms, base_delay_down_ms=base_delay_ms, **kwargs)

    @property
    def is_zero(self) -> bool:
        return (
            self.base_delay_up_ms == 0
            and self.base_delay_down_ms == 0
            and self.jitter_ms == 0
            and self.outage_period_ms == 0
            and self.bandwidth_bytes_per_ms == 0
        )

    def validate(self) -> None:
        if self.base_delay_up_ms < 0 or self.base_delay_down_ms < 0 or self.jitter_ms < 0:
            raise ValueError("delays and jitter must be >= 0")
        if self.outage_period_ms < 0 or self.outage_duration_ms < 0:
            raise ValueError("outage fields must be >= 0")
        if self.outage_period_ms > 0 and not self.outage_duration_ms < self.outage_period_ms:
            raise ValueError("outage_duration must be < outage_period")


def outage_active(profile: NetworkProfile, t_ms: float) -> bool:
    """True iff t falls inside an outage window [k*period, k*period+duration)."""
    if profile.outage_period_ms <= 0:
        return False
    return (t_ms % profile.outage_period_ms) < profile.outage_duration_ms


def _outage_end_after(profile: NetworkProfile, t_ms: float) -> float:
    k = t_ms // profile.outage_period_ms
    return k * profile.outage_period_ms + profile.outage_duration_ms


class NetworkSimulator:
    """Per-direction delivery scheduling under one NetworkProfile.

    Not shared across threads without external serialization per direction;
    the pose and frame paths normally each own their direction.
    """

    def __init__(self, profile: NetworkProfile):
        profile.validate()
        self.profile = profile
        self._rng = {
            UPLINK: random.Random(profile.seed * 2 + 1),
            DOWNLINK: random.Random(profile.seed * 2 + 2),
        }
        self._last_delivery = {UPLINK: 0.0, DOWNLINK: 0.0}

    def schedule_delivery(
        self, send_time_ms: float, direction: int, size_bytes: int = 0
    ) -> float | None:
        """Delivery time for a message sent at send_time_ms, or None if dropped.

        Base + jitter first; if the flight interval [send, delivery)
        intersects an outage window the message is held until outage end
        plus the base delay (or dropped when the profile says so); finally
        the time is clamped so per-direction order is preserved.
        """
        p = self.profile
        base = p.base_delay_up_ms if direction == UPLINK else p.base_delay_down_ms
        jitter = self._rng[direction].uniform(-p.jitter_ms, p.jitter_ms) if p.jitter_ms else 0.0
        delivery = send_time_ms + max(0.0, base + jitter)
        if p.outage_period_ms > 0:
            for _ in range(64):  # bounded: base < period in any sane profile
                window_start = (delivery // p.outage_period_ms) * p.outage_period_ms
                in_flight_hits = (
                    outage_active(p, send_time_ms)
                    or outage_active(p, delivery)
                    or (send_time_ms < window_start and window_start < delivery)
                )
                if not in_flight_hits:
                    break
                if p.drop_during_outage:
                    return None
                hold_from = send_time_ms if outage_active(p, send_time_ms) else max(
                    window_start, send_time_ms
                )
                delivery = _outage_end_after(p, hold_from) + base
                send_time_ms = delivery - base  # treat re-release as the new send
        if p.bandwidth_bytes_per_ms > 0 and size_bytes > 0:
            delivery = max(
                delivery, self._last_delivery[direction] + size_bytes / p.bandwidth_bytes_per_ms
            )
        delivery = max(delivery, self._last_delivery[direction])
        self._last_delivery[direction] = delivery
        return delivery

    def fork(self) -> "NetworkSimulator":
        """Fresh simulator with the same profile and reset RNG/state."""
        return NetworkSimulator(replace(self.profile))


class DelayedStream:
    """Applies a NetworkSimulator schedule to a real message transport.

    Wraps anything with send_message(bytes)/close(); sends are timestamped
    on a wall-clock millisecond axis and written by a timer thread at their
    scheduled delivery times. A zero profile writes through synchronously.
    """

    def __init__(self, inner, simulator: NetworkSimulator, direction: int, clock=WallClock()):
        self.inner = inner
        self.sim = simulator
        self.direction = direction
        self.clock = clock
        self._heap: list[tuple[float, int, bytes]] = []
        self._seq = 0
        self._cv = threading.Condition()
        self._closed = False
        self._thread: threading.Thread | None = None
        if not simulator.profile.is_zero:
            self._thread = threading.Thread(target=self._pump, daemon=True, name="netsim-pump")
            self._thread.start()

    def send_message(self, data: bytes) -> None:
        if self.sim.profile.is_zero:
            self.inner.send_message(data)
            return
        now = self.clock.now_ms()
        with self._cv:
            delivery = self.sim.schedule_delivery(now, self.direction, len(data))
            if delivery is None:
                return
            heapq.heappush(self._heap, (delivery, self._seq, data))
            self._seq += 1
            self._cv.notify()

    def recv_message(self):
        """Receives pass through; only the send direction is shaped."""
        return self.inner.recv_message()

    def _pump(self) -> None:
        while True:
            with self._cv:
                while not self._heap and not self._closed:
                    self._cv.wait(0.1)
                if self._closed and not self._heap:
                    return
                delivery, _, data = self._heap[0]
                wait_s = (delivery - self.clock.now_ms()) / 1000.0
                if wait_s > 0:
                    self._cv.wait(min(wait_s, 0.05))
                    continue
                heapq.heappop(self._heap)
            try:
                self.inner.send_message(data)
            except Exception:
                with self._cv:
                    self._closed = True
                    return

    def close(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()
        if self._thread is not None:
            self._thread.join(timeout=2.0)
        self.inner.close()
